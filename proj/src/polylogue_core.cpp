#include "polylogue/polylogue_core.hpp"

#include "polylogue/error.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>

namespace polylogue {

PolylogueMatrix project(const ActivationTrace& trace, const PersonaBank& bank) {
  require(trace.hidden_size() == bank.hidden_size(), ErrorCode::dimension,
          "trace '" + trace.trace_id + "' has hidden_size " + std::to_string(trace.hidden_size()) +
              " but bank has " + std::to_string(bank.hidden_size()));
  for (Index k = 0; k < bank.num_personas(); ++k)
    require(!bank.degenerate(k), ErrorCode::degenerate_persona,
            "persona '" + bank.names[static_cast<std::size_t>(k)] + "' has a zero direction");
  return {trace.trace_id, alignment_scores(trace.activations, bank.vectors), false};
}

MatrixXd pool_projections(std::span<const PolylogueMatrix> matrices) {
  require(!matrices.empty(), ErrorCode::empty_input, "no polylogue matrices to pool");
  const Index K = matrices.front().num_personas();
  Index N = 0;
  for (const auto& m : matrices) {
    require(m.num_personas() == K, ErrorCode::dimension, "pooled matrices differ in K");
    N += m.num_tokens();
  }
  MatrixXd rows(N, K);
  Index offset = 0;
  for (const auto& m : matrices) {
    rows.middleRows(offset, m.num_tokens()) = m.scores.transpose();
    offset += m.num_tokens();
  }
  return rows;
}

WhiteningModel fit_whitening(const MatrixXd& rows, double lambda, std::optional<double> eig_floor) {
  const Index N = rows.rows();
  const Index K = rows.cols();
  require(N >= 2, ErrorCode::insufficient_data, "whitening needs at least 2 rows, got " + std::to_string(N));
  require(K >= 1, ErrorCode::dimension, "whitening needs at least one column");
  require(rows.allFinite(), ErrorCode::numeric, "whitening input contains non-finite values");
  require(lambda >= 0 && lambda <= 1, ErrorCode::config, "shrinkage lambda must lie in [0, 1]");

  WhiteningModel model;
  model.lambda = lambda;
  model.mu = rows.colwise().mean().transpose();
  const MatrixXd centered = rows.rowwise() - model.mu.transpose();
  const MatrixXd sigma = (centered.transpose() * centered) / static_cast<double>(N);
  const double mean_var = sigma.diagonal().mean();

  model.shrunk_covariance = (1.0 - lambda) * sigma;
  model.shrunk_covariance.diagonal().array() += lambda * mean_var;
  model.eig_floor = eig_floor.value_or(std::max(1e-10 * mean_var, DBL_MIN));
  require(model.eig_floor > 0, ErrorCode::config, "eigenvalue floor must be positive");

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(model.shrunk_covariance);
  require(eig.info() == Eigen::Success, ErrorCode::numeric, "eigendecomposition failed");
  const VectorXd inv_sqrt =
      eig.eigenvalues().cwiseMax(model.eig_floor).cwiseSqrt().cwiseInverse();
  const MatrixXd& U = eig.eigenvectors();
  model.W = U * inv_sqrt.asDiagonal() * U.transpose();
  // Symmetric by construction; remove rounding asymmetry.
  model.W = 0.5 * (model.W + model.W.transpose()).eval();
  require(model.W.allFinite(), ErrorCode::numeric, "whitening matrix is not finite");
  return model;
}

PolylogueMatrix apply_whitening(const WhiteningModel& model, const PolylogueMatrix& scores) {
  require(model.num_personas() == scores.num_personas(), ErrorCode::dimension,
          "whitening model has K=" + std::to_string(model.num_personas()) + ", scores have K=" +
              std::to_string(scores.num_personas()));
  PolylogueMatrix out{scores.trace_id, {}, true};
  // Column form of (s - mu) W with W symmetric.
  out.scores = model.W.transpose() * (scores.scores.colwise() - model.mu);
  return out;
}

int count_separators(std::string_view text) {
  int count = 0;
  bool pending = false;
  for (char c : text) {
    if (c != '\n') {
      pending = false;
    } else if (pending) {
      ++count;
      pending = false;
    } else {
      pending = true;
    }
  }
  return count;
}

ParagraphSegmentation segment_tokens(std::span<const std::string> tokens) {
  ParagraphSegmentation seg;
  const Index T = static_cast<Index>(tokens.size());
  Index start = 0;
  bool pending = false;
  for (Index t = 0; t < T; ++t) {
    for (char c : tokens[static_cast<std::size_t>(t)]) {
      if (c != '\n') {
        pending = false;
      } else if (pending) {
        seg.ranges.emplace_back(start, t + 1);
        start = t + 1;
        pending = false;
      } else {
        pending = true;
      }
    }
  }
  seg.ranges.emplace_back(start, T);
  return seg;
}

ParagraphSegmentation segment_paragraphs(const ActivationTrace& trace) {
  require(!trace.tokens.empty(), ErrorCode::validation, "cannot segment a trace without tokens");
  auto seg = segment_tokens(trace.tokens);
  seg.trace_id = trace.trace_id;
  return seg;
}

std::vector<int> bin_paragraphs(int num_paragraphs, int n_bins) {
  require(num_paragraphs >= 1 && n_bins >= 1, ErrorCode::config,
          "binning needs P >= 1 and n_bins >= 1");
  std::vector<int> bins(static_cast<std::size_t>(num_paragraphs));
  for (int p = 0; p < num_paragraphs; ++p) {
    const auto b = static_cast<std::int64_t>(p) * n_bins / num_paragraphs;
    bins[static_cast<std::size_t>(p)] = static_cast<int>(std::min<std::int64_t>(b, n_bins - 1));
  }
  return bins;
}

DescriptorSet descriptors(const PolylogueMatrix& m) {
  const Index K = m.num_personas();
  const Index T = m.num_tokens();
  require(K >= 1 && T >= 1, ErrorCode::validation, "descriptors need K >= 1 and T >= 1");

  DescriptorSet d;
  d.mean = m.scores.rowwise().mean();
  d.volatility =
      ((m.scores.colwise() - d.mean).array().square().rowwise().sum() / static_cast<double>(T))
          .sqrt()
          .matrix();
  d.final_sim = m.scores.col(T - 1);

  d.dominant.resize(static_cast<std::size_t>(T));
  VectorXd counts = VectorXd::Zero(K);
  for (Index t = 0; t < T; ++t) {
    Index best = 0;
    for (Index k = 1; k < K; ++k)
      if (m.scores(k, t) > m.scores(best, t)) best = k;  // strict: ties keep lowest index
    d.dominant[static_cast<std::size_t>(t)] = static_cast<int>(best);
    counts(best) += 1.0;
  }
  d.dominance_share = counts / static_cast<double>(T);

  if (K > 1) {
    double h = 0;
    for (Index k = 0; k < K; ++k) {
      const double p = d.dominance_share(k);
      if (p > 0) h -= p * std::log(p);
    }
    d.dominance_entropy = std::clamp(h / std::log(static_cast<double>(K)), 0.0, 1.0);
  }

  if (T > 1) {
    Index switches = 0;
    for (Index t = 1; t < T; ++t)
      if (d.dominant[static_cast<std::size_t>(t)] != d.dominant[static_cast<std::size_t>(t - 1)])
        ++switches;
    d.switching_rate = static_cast<double>(switches) / static_cast<double>(T - 1);
  }
  return d;
}

Index feature_dimension(Index num_personas, int n_bins) {
  return static_cast<Index>(n_bins) * num_personas + 3 * num_personas + 2;
}

FeatureRow assemble_features(const PolylogueMatrix& scores, const ParagraphSegmentation& seg,
                             const FeatureConfig& config) {
  require(config.n_bins >= 1, ErrorCode::config, "n_bins must be >= 1");
  require(scores.trace_id == seg.trace_id, ErrorCode::consistency,
          "scores for '" + scores.trace_id + "' paired with segmentation of '" + seg.trace_id + "'");
  require(seg.count() >= 1 && seg.ranges.back().second == scores.num_tokens(),
          ErrorCode::dimension, "segmentation does not cover the scored tokens");

  const Index K = scores.num_personas();
  const int n_b = config.n_bins;
  const auto bins = bin_paragraphs(seg.count(), n_b);

  MatrixXd bin_sum = MatrixXd::Zero(K, n_b);
  std::vector<Index> bin_tokens(static_cast<std::size_t>(n_b), 0);
  for (int p = 0; p < seg.count(); ++p) {
    const auto [first, last] = seg.ranges[static_cast<std::size_t>(p)];
    const int b = bins[static_cast<std::size_t>(p)];
    if (last > first) bin_sum.col(b) += scores.scores.middleCols(first, last - first).rowwise().sum();
    bin_tokens[static_cast<std::size_t>(b)] += last - first;
  }

  const DescriptorSet desc = descriptors(scores);
  FeatureRow row;
  row.trace_id = scores.trace_id;
  row.values.reserve(static_cast<std::size_t>(feature_dimension(K, n_b)));
  for (int b = 0; b < n_b; ++b) {
    const Index n = bin_tokens[static_cast<std::size_t>(b)];
    for (Index k = 0; k < K; ++k)
      row.values.push_back(n > 0 ? bin_sum(k, b) / static_cast<double>(n) : 0.0);
  }
  for (Index k = 0; k < K; ++k) row.values.push_back(desc.volatility(k));
  for (Index k = 0; k < K; ++k) row.values.push_back(desc.final_sim(k));
  for (Index k = 0; k < K; ++k) row.values.push_back(desc.dominance_share(k));
  row.values.push_back(desc.dominance_entropy);
  row.values.push_back(desc.switching_rate);
  return row;
}

std::vector<std::string> feature_names(std::span<const std::string> personas, int n_bins) {
  std::vector<std::string> names;
  for (int b = 0; b < n_bins; ++b)
    for (const auto& p : personas) names.push_back("para " + std::to_string(b) + " " + p);
  for (const auto& p : personas) names.push_back("volatility " + p);
  for (const auto& p : personas) names.push_back("final sim " + p);
  for (const auto& p : personas) names.push_back("dominance share " + p);
  names.emplace_back("dominance entropy");
  names.emplace_back("switching rate");
  return names;
}

FeatureRow trace_features(const ActivationTrace& trace, const PersonaBank& bank,
                          const FeatureConfig& config) {
  auto row = assemble_features(project(trace, bank), segment_paragraphs(trace), config);
  row.label = trace.correct;
  return row;
}

}  // namespace polylogue
