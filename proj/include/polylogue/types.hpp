#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace polylogue {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;
// On-disk width: row-major f32, so a bundle payload maps straight onto it.
using StorageMatrix = RowMatrix<float>;

/// Rows with Euclidean norm below this are degenerate directions.
inline constexpr double kDegenerateNorm = 1e-12;

struct ParagraphLabel {
  int paragraph = 0;  // 0-based
  int persona = 0;    // 0-based canonical index

  friend bool operator==(const ParagraphLabel&, const ParagraphLabel&) = default;
};

/// One response's hidden states at a monitored layer, one row per generated token.
struct ActivationTrace {
  std::string trace_id;
  std::string model_id;
  int layer = 0;
  Index response_start = 0;
  StorageMatrix activations;  // T x d
  std::vector<std::string> tokens;
  std::optional<bool> correct;
  std::optional<std::vector<ParagraphLabel>> paragraph_labels;

  Index num_tokens() const { return activations.rows(); }
  Index hidden_size() const { return activations.cols(); }

  /// Label for a paragraph, if the annotator produced one.
  std::optional<int> label_of(int paragraph) const;
};

/// Throws Error(validation|dimension) if any invariant is broken.
void validate(const ActivationTrace& trace);

struct PersonaBank {
  int layer = 0;
  std::vector<std::string> names;
  StorageMatrix vectors;  // K x d
  double default_alpha = 1.0;
  std::string provenance;

  Index num_personas() const { return vectors.rows(); }
  Index hidden_size() const { return vectors.cols(); }
  bool degenerate(Index k) const;
  bool any_degenerate() const;
  /// Row k widened to double.
  VectorXd direction(Index k) const { return vectors.row(k).transpose().cast<double>(); }
};

void validate(const PersonaBank& bank);

struct SteeringRule {
  int persona = 0;
  int start = 1;  // 1-based paragraph, inclusive
  int end = 1;    // 1-based paragraph, inclusive
  int direction = 1;

  friend bool operator==(const SteeringRule&, const SteeringRule&) = default;
};

struct SteeringSchedule {
  int layer = 0;
  double alpha = 1.0;
  std::vector<SteeringRule> rules;

  friend bool operator==(const SteeringSchedule&, const SteeringSchedule&) = default;
};

/// num_personas < 0 skips the persona-range check.
void validate(const SteeringSchedule& schedule, Index num_personas = -1);

struct FeatureRow {
  std::string trace_id;
  std::vector<double> values;
  std::optional<bool> label;

  friend bool operator==(const FeatureRow&, const FeatureRow&) = default;
};

}  // namespace polylogue
