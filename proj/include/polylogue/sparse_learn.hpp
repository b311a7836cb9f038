#pragma once

#include "polylogue/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace polylogue::learn {

// --- standardisation -------------------------------------------------------

/// Per-column mean and population std; constant columns keep scale 1.
struct Standardizer {
  VectorXd means;
  VectorXd scales;
};

Standardizer standardize_fit(const MatrixXd& X);
MatrixXd standardize_apply(const Standardizer& s, const MatrixXd& X);

// --- PCA -------------------------------------------------------------------

struct PcaModel {
  MatrixXd components;  // m x D, orthonormal rows, decreasing variance
  VectorXd means;
  VectorXd explained_variance;
  Index requested = 0;  // m asked for; > components.rows() when truncated

  bool truncated() const { return requested > components.rows(); }
};

/// Top-m eigenvectors of the population covariance. m is capped at
/// min(N - 1, D). Each component's largest-magnitude entry is positive.
PcaModel pca_fit(const MatrixXd& X, Index m);
MatrixXd pca_apply(const PcaModel& pca, const MatrixXd& X);
/// Maps component scores back to centred feature space.
MatrixXd pca_backproject(const PcaModel& pca, const MatrixXd& scores);

// --- random projection baseline -------------------------------------------

/// K x d rows drawn from N(0, 1) and scaled to unit length; fixed per seed.
MatrixXd random_unit_vectors(Index K, Index d, std::uint64_t seed);

// --- L1 logistic regression ------------------------------------------------

struct SparseLogisticModel {
  VectorXd weights;
  double intercept = 0;
  double C = 1;
  int sweeps = 0;
  bool converged = false;
  std::vector<double> objective_history;  // after each sweep, when requested

  VectorXd decision(const MatrixXd& X) const;
  VectorXd probability(const MatrixXd& X) const;
  Index nonzeros() const;
};

struct L1LogisticOptions {
  double tolerance = 1e-6;      // on the largest coordinate change in a sweep
  double kkt_tolerance = 1e-6;  // on the largest subgradient violation, checked with it
  int max_sweeps = 10000;
  bool record_objective = false;
  const SparseLogisticModel* warm_start = nullptr;
};

/// C * sum_i log(1 + exp(-y_i (x_i . w + b))) + |w|_1 with y in {-1, +1}.
/// `labels` holds 0/1.
double l1_logistic_objective(const MatrixXd& X, std::span<const int> labels, const VectorXd& w,
                             double b, double C);

/// Cyclic coordinate descent. Each coordinate (and the unpenalised
/// intercept) is minimised exactly: a soft-threshold test at zero followed by
/// a bracketed Newton solve on the signed half-line.
SparseLogisticModel l1_logistic_fit(const MatrixXd& X, std::span<const int> labels, double C,
                                    const L1LogisticOptions& options = {});

// --- metrics ---------------------------------------------------------------

/// P(score of a random positive > score of a random negative), ties count 1/2.
double auc(const VectorXd& scores, std::span<const int> labels);
/// Fraction of p > 0.5 predictions that match the labels.
double accuracy(const VectorXd& probabilities, std::span<const int> labels);

// --- cross-validation ------------------------------------------------------

std::vector<double> log_grid(double lo, double hi, int count);

/// Fold id per sample; each class is shuffled with `seed` and dealt out
/// round-robin, continuing the rotation across classes.
std::vector<int> stratified_folds(std::span<const int> labels, int folds, std::uint64_t seed);

struct CvOptions {
  int outer_folds = 5;
  int inner_folds = 5;
  std::vector<double> c_grid = log_grid(1e-4, 1e4, 10);
  std::uint64_t seed = 0;
  L1LogisticOptions solver;
  unsigned threads = 1;
};

struct FoldResult {
  double accuracy = 0;
  double auc = 0;
  double selected_c = 0;
};

struct CvReport {
  std::vector<FoldResult> folds;
  double acc_mean = 0, acc_std = 0;
  double auc_mean = 0, auc_std = 0;
  double final_c = 0;
  std::vector<double> c_grid;
};

/// Standardiser and model fitted together; predictions take raw features.
struct FittedClassifier {
  Standardizer standardizer;
  SparseLogisticModel model;

  VectorXd probability(const MatrixXd& X) const {
    return model.probability(standardize_apply(standardizer, X));
  }
};

/// Nested CV: outer stratified folds report held-out accuracy/AUC; inside
/// each training split an inner stratified CV picks C by mean AUC (ties to
/// the smaller C). The returned classifier is refitted on all rows with the
/// most frequently selected C (ties to the smaller C).
std::pair<FittedClassifier, CvReport> cv_fit(const MatrixXd& X, std::span<const int> labels,
                                             const CvOptions& options = {});

// --- reporting -------------------------------------------------------------

struct Coefficient {
  Index index = 0;
  std::string name;
  double value = 0;
};

/// Non-zero coefficients by decreasing magnitude (ties to the lower index).
std::vector<Coefficient> ranked_coefficients(const VectorXd& weights,
                                             std::span<const std::string> names);

std::string coefficients_csv(std::span<const Coefficient> coefficients);

std::string cv_report_json(const CvReport& report, const std::string& model,
                           const std::string& condition, double percent_correct);

std::string classifier_json(const FittedClassifier& fitted, std::span<const std::string> names,
                            const std::string& layout_json = {});
/// Inverse of classifier_json; names and the raw "layout" object (if any) are
/// returned alongside.
struct LoadedClassifier {
  FittedClassifier fitted;
  std::vector<std::string> names;
  std::string layout_json;
};
LoadedClassifier parse_classifier(std::string_view text);

}  // namespace polylogue::learn
