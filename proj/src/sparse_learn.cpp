#include "polylogue/sparse_learn.hpp"

#include "polylogue/error.hpp"
#include "polylogue/parallel.hpp"
#include "polylogue/trace_store.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

namespace polylogue::learn {

// --- standardisation -------------------------------------------------------

Standardizer standardize_fit(const MatrixXd& X) {
  require(X.rows() >= 2, ErrorCode::insufficient_data, "standardisation needs at least 2 rows");
  require(X.allFinite(), ErrorCode::numeric, "features contain non-finite values");
  Standardizer s;
  s.means = X.colwise().mean().transpose();
  s.scales = ((X.rowwise() - s.means.transpose()).array().square().colwise().mean().sqrt())
                 .transpose()
                 .matrix();
  for (Index j = 0; j < s.scales.size(); ++j)
    if (!(s.scales(j) > 0)) s.scales(j) = 1.0;
  return s;
}

MatrixXd standardize_apply(const Standardizer& s, const MatrixXd& X) {
  require(X.cols() == s.means.size(), ErrorCode::dimension,
          "standardizer fitted on " + std::to_string(s.means.size()) + " features, got " +
              std::to_string(X.cols()));
  return ((X.rowwise() - s.means.transpose()).array().rowwise() / s.scales.transpose().array())
      .matrix();
}

// --- PCA -------------------------------------------------------------------

namespace {

void fix_sign(Eigen::Ref<VectorXd> v) {
  Index arg = 0;
  for (Index i = 1; i < v.size(); ++i)
    if (std::abs(v(i)) > std::abs(v(arg))) arg = i;
  if (v(arg) < 0) v = -v;
}

}  // namespace

PcaModel pca_fit(const MatrixXd& X, Index m) {
  const Index N = X.rows();
  const Index D = X.cols();
  require(N >= 2, ErrorCode::insufficient_data, "PCA needs at least 2 rows");
  require(m >= 1, ErrorCode::config, "PCA needs m >= 1");
  require(X.allFinite(), ErrorCode::numeric, "PCA input contains non-finite values");

  PcaModel pca;
  pca.requested = m;
  m = std::min({m, N - 1, D});
  pca.means = X.colwise().mean().transpose();
  const MatrixXd Xc = X.rowwise() - pca.means.transpose();

  pca.components.resize(m, D);
  pca.explained_variance.resize(m);
  if (D <= N) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig((Xc.transpose() * Xc) / static_cast<double>(N));
    require(eig.info() == Eigen::Success, ErrorCode::numeric, "covariance eigendecomposition failed");
    for (Index i = 0; i < m; ++i) {
      pca.components.row(i) = eig.eigenvectors().col(D - 1 - i).transpose();
      pca.explained_variance(i) = std::max(0.0, eig.eigenvalues()(D - 1 - i));
    }
  } else {
    // Wide data: eigenvectors of the N x N Gram matrix map onto components.
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig((Xc * Xc.transpose()) / static_cast<double>(N));
    require(eig.info() == Eigen::Success, ErrorCode::numeric, "Gram eigendecomposition failed");
    const double top = std::max(eig.eigenvalues()(N - 1), 0.0);
    for (Index i = 0; i < m; ++i) {
      const double lambda = eig.eigenvalues()(N - 1 - i);
      VectorXd v;
      if (lambda > 1e-12 * top && lambda > 0) {
        v = Xc.transpose() * eig.eigenvectors().col(N - 1 - i) /
            std::sqrt(static_cast<double>(N) * lambda);
      } else {
        // Null direction: any unit vector orthogonal to the components so far.
        for (Index e = 0; e < D; ++e) {
          v = VectorXd::Unit(D, e);
          for (int pass = 0; pass < 2; ++pass)
            for (Index r = 0; r < i; ++r)
              v -= pca.components.row(r).dot(v) * pca.components.row(r).transpose();
          if (v.norm() > 0.5) break;
        }
      }
      // Re-orthogonalise against rounding drift.
      for (Index r = 0; r < i; ++r)
        v -= pca.components.row(r).dot(v) * pca.components.row(r).transpose();
      pca.components.row(i) = v.normalized().transpose();
      pca.explained_variance(i) = std::max(0.0, lambda);
    }
  }
  for (Index i = 0; i < m; ++i) {
    VectorXd row = pca.components.row(i).transpose();
    fix_sign(row);
    pca.components.row(i) = row.transpose();
  }
  return pca;
}

MatrixXd pca_apply(const PcaModel& pca, const MatrixXd& X) {
  require(X.cols() == pca.means.size(), ErrorCode::dimension, "PCA input width mismatch");
  return (X.rowwise() - pca.means.transpose()) * pca.components.transpose();
}

MatrixXd pca_backproject(const PcaModel& pca, const MatrixXd& scores) {
  require(scores.cols() == pca.components.rows(), ErrorCode::dimension, "PCA score width mismatch");
  return scores * pca.components;
}

// --- random projection baseline -------------------------------------------

MatrixXd random_unit_vectors(Index K, Index d, std::uint64_t seed) {
  require(K >= 1 && d >= 1, ErrorCode::config, "random vectors need K, d >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd out(K, d);
  for (Index k = 0; k < K; ++k) {
    for (Index j = 0; j < d; ++j) out(k, j) = normal(rng);
    out.row(k).normalize();
  }
  return out;
}

// --- L1 logistic regression ------------------------------------------------

VectorXd SparseLogisticModel::decision(const MatrixXd& X) const {
  require(X.cols() == weights.size(), ErrorCode::dimension, "model/feature width mismatch");
  return (X * weights).array() + intercept;
}

VectorXd SparseLogisticModel::probability(const MatrixXd& X) const {
  return (1.0 / (1.0 + (-decision(X)).array().exp())).matrix();
}

Index SparseLogisticModel::nonzeros() const { return (weights.array() != 0.0).count(); }

namespace {

// log(1 + exp(-z)) without overflow.
double logistic_loss(double z) {
  return z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

struct Slope {
  double value;
  double curvature;
};

/// Root u > 0 of an increasing function with F(0) < 0, by Newton's method
/// kept inside a bracket that is grown geometrically until it closes.
template <typename Eval>
double positive_root(Eval&& eval, double start) {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  double u = std::max(start, 0.0);
  Slope s = eval(u);
  for (int iter = 0; iter < 200; ++iter) {
    if (s.value == 0.0) return u;
    if (s.value < 0) lo = std::max(lo, u);
    else hi = std::min(hi, u);
    double next = s.curvature > 0 ? u - s.value / s.curvature
                                  : std::numeric_limits<double>::quiet_NaN();
    // Sub-round-off Newton steps can land on a bracket end; u is the root.
    if (std::abs(next - u) <= 1e-13 * std::max(1.0, std::abs(u))) return next >= lo && next <= hi ? next : u;
    if (!(next > lo && next < hi)) next = std::isfinite(hi) ? 0.5 * (lo + hi) : std::max(2.0 * lo, 1.0);
    u = next;
    if (std::isfinite(hi) && hi - lo <= 1e-15 * std::max(1.0, hi)) break;
    s = eval(u);
  }
  return u;
}

class CoordinateDescent {
 public:
  CoordinateDescent(const MatrixXd& X, std::span<const int> labels, double C)
      : X_(X), y_(X.rows()), C_(C) {
    for (Index i = 0; i < X.rows(); ++i) y_(i) = labels[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
  }

  void start(VectorXd w, double b) {
    w_ = std::move(w);
    b_ = b;
    margin_ = (X_ * w_).array() + b_;
  }

  const VectorXd& weights() const { return w_; }
  double intercept() const { return b_; }

  double objective() const {
    double loss = 0;
    for (Index i = 0; i < y_.size(); ++i) loss += logistic_loss(y_(i) * margin_(i));
    return C_ * loss + w_.lpNorm<1>();
  }

  // Derivative and curvature of the smooth part along feature j, at w_j + delta.
  Slope slope_along(Index j, double delta) {
    const auto x = X_.col(j).array();
    p_ = 1.0 / (1.0 + (y_.array() * (margin_.array() + delta * x)).exp());
    return {-C_ * (y_.array() * x * p_).sum(), C_ * (x.square() * p_ * (1.0 - p_)).sum()};
  }

  Slope slope_intercept(double delta) {
    p_ = 1.0 / (1.0 + (y_.array() * (margin_.array() + delta)).exp());
    return {-C_ * (y_.array() * p_).sum(), C_ * (p_ * (1.0 - p_)).sum()};
  }

  double update_weight(Index j) {
    const double w = w_(j);
    const double g0 = slope_along(j, -w).value;
    double z = 0.0;
    if (g0 < -1.0) {
      z = positive_root(
          [&](double u) {
            const Slope s = slope_along(j, u - w);
            return Slope{s.value + 1.0, s.curvature};
          },
          w);
    } else if (g0 > 1.0) {
      z = -positive_root(
          [&](double u) {
            const Slope s = slope_along(j, -u - w);
            return Slope{1.0 - s.value, s.curvature};
          },
          -w);
    }
    const double delta = z - w;
    if (delta != 0.0) {
      margin_ += delta * X_.col(j);
      w_(j) = z;
    }
    return std::abs(delta);
  }

  double update_intercept() {
    const double f0 = slope_intercept(0.0).value;
    double delta = 0.0;
    if (f0 < 0) {
      delta = positive_root([&](double u) { return slope_intercept(u); }, 0.0);
    } else if (f0 > 0) {
      delta = -positive_root(
          [&](double u) {
            const Slope s = slope_intercept(-u);
            return Slope{-s.value, s.curvature};
          },
          0.0);
    }
    if (delta != 0.0) {
      margin_.array() += delta;
      b_ += delta;
    }
    return std::abs(delta);
  }

  // Largest violation of the optimality conditions at the current point.
  double kkt_violation() {
    p_ = 1.0 / (1.0 + (y_.array() * margin_.array()).exp());
    const Eigen::ArrayXd r = -C_ * (y_.array() * p_);
    const VectorXd g = X_.transpose() * r.matrix();
    double worst = std::abs(r.sum());
    for (Index j = 0; j < w_.size(); ++j) {
      const double w = w_(j);
      worst = std::max(worst, w == 0.0 ? std::abs(g(j)) - 1.0 : std::abs(g(j) + (w > 0 ? 1.0 : -1.0)));
    }
    return worst;
  }

  double sweep(bool active_only) {
    double largest = update_intercept();
    for (Index j = 0; j < w_.size(); ++j) {
      if (active_only && w_(j) == 0.0) continue;
      largest = std::max(largest, update_weight(j));
    }
    return largest;
  }

 private:
  const MatrixXd& X_;
  VectorXd y_;
  double C_;
  VectorXd w_;
  double b_ = 0;
  VectorXd margin_;
  Eigen::ArrayXd p_;
};

void check_labels(const MatrixXd& X, std::span<const int> labels) {
  require(static_cast<Index>(labels.size()) == X.rows(), ErrorCode::dimension,
          std::to_string(labels.size()) + " labels for " + std::to_string(X.rows()) + " rows");
  Index pos = 0;
  for (int l : labels) {
    require(l == 0 || l == 1, ErrorCode::validation, "labels must be 0 or 1");
    pos += l;
  }
  require(pos > 0 && pos < X.rows(), ErrorCode::degenerate_label,
          "labels contain a single class; logistic regression is undefined");
}

}  // namespace

double l1_logistic_objective(const MatrixXd& X, std::span<const int> labels, const VectorXd& w,
                             double b, double C) {
  const VectorXd margin = (X * w).array() + b;
  double loss = 0;
  for (Index i = 0; i < X.rows(); ++i)
    loss += logistic_loss((labels[static_cast<std::size_t>(i)] ? 1.0 : -1.0) * margin(i));
  return C * loss + w.lpNorm<1>();
}

SparseLogisticModel l1_logistic_fit(const MatrixXd& X, std::span<const int> labels, double C,
                                    const L1LogisticOptions& options) {
  check_labels(X, labels);
  require(C > 0 && std::isfinite(C), ErrorCode::config, "penalty C must be finite and > 0");
  require(X.allFinite(), ErrorCode::numeric, "features contain non-finite values");

  CoordinateDescent cd(X, labels, C);
  if (options.warm_start && options.warm_start->weights.size() == X.cols()) {
    cd.start(options.warm_start->weights, options.warm_start->intercept);
  } else {
    const double p = std::accumulate(labels.begin(), labels.end(), 0.0) / static_cast<double>(X.rows());
    cd.start(VectorXd::Zero(X.cols()), std::log(p / (1.0 - p)));
  }

  SparseLogisticModel model;
  model.C = C;
  auto record = [&] {
    ++model.sweeps;
    if (options.record_objective) model.objective_history.push_back(cd.objective());
  };
  if (options.record_objective) model.objective_history.push_back(cd.objective());

  // Full sweeps decide convergence; between them, sweeps over the non-zero
  // coordinates run until they settle. Small steps alone do not bound the
  // gradient when C * sum x^2 is large, so the subgradient test must pass too.
  while (model.sweeps < options.max_sweeps) {
    const double change = cd.sweep(false);
    record();
    if (change < options.tolerance && cd.kkt_violation() <= options.kkt_tolerance) {
      model.converged = true;
      break;
    }
    while (model.sweeps < options.max_sweeps) {
      const double active_change = cd.sweep(true);
      record();
      if (active_change < options.tolerance) break;
    }
  }
  model.weights = cd.weights();
  model.intercept = cd.intercept();
  require(model.weights.allFinite() && std::isfinite(model.intercept), ErrorCode::numeric,
          "coordinate descent diverged");
  return model;
}

// --- metrics ---------------------------------------------------------------

double auc(const VectorXd& scores, std::span<const int> labels) {
  const auto n = static_cast<std::size_t>(scores.size());
  require(labels.size() == n, ErrorCode::dimension, "AUC scores/labels length mismatch");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores(static_cast<Index>(a)) < scores(static_cast<Index>(b)); });
  // Mid-ranks for ties, then Mann-Whitney U.
  double rank_sum_pos = 0;
  double n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores(static_cast<Index>(order[j + 1])) == scores(static_cast<Index>(order[i]))) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]]) rank_sum_pos += mid;
    i = j + 1;
  }
  for (int l : labels) n_pos += l ? 1 : 0;
  const double n_neg = static_cast<double>(n) - n_pos;
  require(n_pos > 0 && n_neg > 0, ErrorCode::degenerate_label, "AUC needs both classes");
  return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg);
}

double accuracy(const VectorXd& probabilities, std::span<const int> labels) {
  const auto n = static_cast<std::size_t>(probabilities.size());
  require(labels.size() == n && n > 0, ErrorCode::dimension, "accuracy needs matching, non-empty inputs");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i)
    if ((probabilities(static_cast<Index>(i)) > 0.5) == (labels[i] != 0)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(n);
}

// --- cross-validation ------------------------------------------------------

std::vector<double> log_grid(double lo, double hi, int count) {
  require(lo > 0 && hi >= lo && count >= 1, ErrorCode::config, "invalid log grid");
  std::vector<double> grid;
  if (count == 1) return {lo};
  const double a = std::log10(lo), b = std::log10(hi);
  for (int i = 0; i < count; ++i) grid.push_back(std::pow(10.0, a + (b - a) * i / (count - 1)));
  return grid;
}

std::vector<int> stratified_folds(std::span<const int> labels, int folds, std::uint64_t seed) {
  require(folds >= 2, ErrorCode::config, "need at least 2 folds");
  std::vector<int> assignment(labels.size(), -1);
  std::mt19937_64 rng(seed);
  std::size_t rotation = 0;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if ((labels[i] != 0) == (cls == 1)) members.push_back(i);
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t idx : members) assignment[idx] = static_cast<int>(rotation++ % static_cast<std::size_t>(folds));
  }
  return assignment;
}

namespace {

struct Split {
  MatrixXd X;
  std::vector<int> y;
};

Split take(const MatrixXd& X, std::span<const int> y, const std::vector<int>& fold, int f, bool inside) {
  std::vector<Index> rows;
  for (std::size_t i = 0; i < fold.size(); ++i)
    if ((fold[i] == f) == inside) rows.push_back(static_cast<Index>(i));
  Split s;
  s.X.resize(static_cast<Index>(rows.size()), X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    s.X.row(static_cast<Index>(r)) = X.row(rows[r]);
    s.y.push_back(y[static_cast<std::size_t>(rows[r])]);
  }
  return s;
}

std::pair<Index, Index> class_counts(std::span<const int> y) {
  Index pos = 0;
  for (int l : y) pos += l ? 1 : 0;
  return {static_cast<Index>(y.size()) - pos, pos};
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double acc = 0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

// Index into the (ascending) grid with the best mean inner-CV AUC.
std::size_t select_c(const Split& train, const std::vector<double>& grid, const CvOptions& opt,
                     std::uint64_t seed) {
  const auto folds = stratified_folds(train.y, opt.inner_folds, seed);
  std::vector<double> auc_sum(grid.size(), 0.0);
  for (int g = 0; g < opt.inner_folds; ++g) {
    Split tr = take(train.X, train.y, folds, g, false);
    Split va = take(train.X, train.y, folds, g, true);
    const Standardizer s = standardize_fit(tr.X);
    tr.X = standardize_apply(s, tr.X);
    va.X = standardize_apply(s, va.X);
    SparseLogisticModel previous;
    L1LogisticOptions solver = opt.solver;
    solver.record_objective = false;
    for (std::size_t c = 0; c < grid.size(); ++c) {
      solver.warm_start = c > 0 ? &previous : nullptr;
      SparseLogisticModel m = l1_logistic_fit(tr.X, tr.y, grid[c], solver);
      auc_sum[c] += auc(m.decision(va.X), va.y);
      previous = std::move(m);
    }
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < grid.size(); ++c)
    if (auc_sum[c] > auc_sum[best]) best = c;
  return best;
}

}  // namespace

std::pair<FittedClassifier, CvReport> cv_fit(const MatrixXd& X, std::span<const int> labels,
                                             const CvOptions& opt) {
  check_labels(X, labels);
  require(!opt.c_grid.empty(), ErrorCode::config, "empty C grid");
  require(opt.outer_folds >= 2 && opt.inner_folds >= 2, ErrorCode::config, "need at least 2 folds");
  const auto [n_neg, n_pos] = class_counts(labels);
  require(std::min(n_neg, n_pos) >= opt.outer_folds, ErrorCode::insufficient_data,
          "too few samples to stratify: minority class has " + std::to_string(std::min(n_neg, n_pos)) +
              " samples for " + std::to_string(opt.outer_folds) + " folds");

  std::vector<double> grid = opt.c_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  const auto outer = stratified_folds(labels, opt.outer_folds, opt.seed);
  CvReport report;
  report.c_grid = grid;
  report.folds.resize(static_cast<std::size_t>(opt.outer_folds));

  parallel_for(static_cast<std::size_t>(opt.outer_folds), opt.threads, [&](std::size_t fi) {
    const int f = static_cast<int>(fi);
    Split train = take(X, labels, outer, f, false);
    Split test = take(X, labels, outer, f, true);
    const auto [tn, tp] = class_counts(train.y);
    require(std::min(tn, tp) >= opt.inner_folds, ErrorCode::insufficient_data,
            "too few samples to stratify the inner folds of outer fold " + std::to_string(f));
    const std::size_t c = select_c(train, grid, opt, opt.seed + 0x9E3779B97F4A7C15ULL * (fi + 1));

    const Standardizer s = standardize_fit(train.X);
    L1LogisticOptions solver = opt.solver;
    solver.record_objective = false;
    const auto m = l1_logistic_fit(standardize_apply(s, train.X), train.y, grid[c], solver);
    const VectorXd p = m.probability(standardize_apply(s, test.X));
    report.folds[fi] = {accuracy(p, test.y), auc(p, test.y), grid[c]};
  });

  std::vector<double> accs, aucs;
  std::map<double, int> votes;
  for (const auto& fr : report.folds) {
    accs.push_back(fr.accuracy);
    aucs.push_back(fr.auc);
    ++votes[fr.selected_c];
  }
  report.acc_mean = mean_of(accs);
  report.acc_std = std_of(accs);
  report.auc_mean = mean_of(aucs);
  report.auc_std = std_of(aucs);
  int best_votes = 0;
  for (const auto& [c, n] : votes)  // ascending C, so ties keep the smaller one
    if (n > best_votes) {
      best_votes = n;
      report.final_c = c;
    }

  FittedClassifier fitted;
  fitted.standardizer = standardize_fit(X);
  L1LogisticOptions solver = opt.solver;
  fitted.model = l1_logistic_fit(standardize_apply(fitted.standardizer, X), labels, report.final_c, solver);
  return {std::move(fitted), std::move(report)};
}

// --- reporting -------------------------------------------------------------

std::vector<Coefficient> ranked_coefficients(const VectorXd& weights, std::span<const std::string> names) {
  require(names.empty() || static_cast<Index>(names.size()) == weights.size(), ErrorCode::dimension,
          "coefficient names do not match the weight vector");
  std::vector<Coefficient> out;
  for (Index j = 0; j < weights.size(); ++j)
    if (weights(j) != 0.0)
      out.push_back({j, names.empty() ? "f" + std::to_string(j) : names[static_cast<std::size_t>(j)], weights(j)});
  std::stable_sort(out.begin(), out.end(), [](const Coefficient& a, const Coefficient& b) {
    return std::abs(a.value) > std::abs(b.value);
  });
  return out;
}

std::string coefficients_csv(std::span<const Coefficient> coefficients) {
  std::string out = "rank,feature,coef\n";
  int rank = 1;
  for (const auto& c : coefficients)
    out += std::to_string(rank++) + "," + c.name + "," + store::format_double(c.value) + "\n";
  return out;
}

std::string cv_report_json(const CvReport& report, const std::string& model,
                           const std::string& condition, double percent_correct) {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["condition"] = condition;
  j["percent_correct"] = percent_correct;
  j["acc_mean"] = report.acc_mean;
  j["acc_std"] = report.acc_std;
  j["auc_mean"] = report.auc_mean;
  j["auc_std"] = report.auc_std;
  j["final_C"] = report.final_c;
  j["C_grid"] = report.c_grid;
  nlohmann::ordered_json folds = nlohmann::ordered_json::array();
  for (std::size_t f = 0; f < report.folds.size(); ++f) {
    nlohmann::ordered_json fj;
    fj["fold"] = f;
    fj["accuracy"] = report.folds[f].accuracy;
    fj["auc"] = report.folds[f].auc;
    fj["C"] = report.folds[f].selected_c;
    folds.push_back(std::move(fj));
  }
  j["folds"] = std::move(folds);
  return j.dump(2) + "\n";
}

std::string classifier_json(const FittedClassifier& fitted, std::span<const std::string> names,
                            const std::string& layout_json) {
  const auto& m = fitted.model;
  auto vec = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::ordered_json j;
  j["magic"] = "PLYM1";
  j["C"] = m.C;
  j["intercept"] = m.intercept;
  j["converged"] = m.converged;
  j["sweeps"] = m.sweeps;
  j["feature_names"] = std::vector<std::string>(names.begin(), names.end());
  j["weights"] = vec(m.weights);
  j["standardizer"]["means"] = vec(fitted.standardizer.means);
  j["standardizer"]["scales"] = vec(fitted.standardizer.scales);
  j["layout"] = layout_json.empty() ? nlohmann::ordered_json(nullptr)
                                    : nlohmann::ordered_json::parse(layout_json);
  return j.dump(2) + "\n";
}

LoadedClassifier parse_classifier(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("model file: ") + e.what());
  }
  require(j.is_object() && j.value("magic", "") == "PLYM1", ErrorCode::format, "model file: bad magic");
  LoadedClassifier out;
  try {
    auto to_vec = [](const std::vector<double>& v) {
      return VectorXd(Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size())));
    };
    out.fitted.model.C = j.at("C").get<double>();
    out.fitted.model.intercept = j.at("intercept").get<double>();
    out.fitted.model.converged = j.at("converged").get<bool>();
    out.fitted.model.sweeps = j.at("sweeps").get<int>();
    out.fitted.model.weights = to_vec(j.at("weights").get<std::vector<double>>());
    out.fitted.standardizer.means = to_vec(j.at("standardizer").at("means").get<std::vector<double>>());
    out.fitted.standardizer.scales = to_vec(j.at("standardizer").at("scales").get<std::vector<double>>());
    out.names = j.at("feature_names").get<std::vector<std::string>>();
    if (j.contains("layout") && !j["layout"].is_null()) out.layout_json = j["layout"].dump();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("model file: ") + e.what());
  }
  const Index D = out.fitted.model.weights.size();
  require(out.fitted.standardizer.means.size() == D && out.fitted.standardizer.scales.size() == D &&
              (out.names.empty() || static_cast<Index>(out.names.size()) == D),
          ErrorCode::dimension, "model file: inconsistent feature counts");
  return out;
}

}  // namespace polylogue::learn
