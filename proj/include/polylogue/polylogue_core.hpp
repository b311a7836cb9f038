#pragma once

#include "polylogue/types.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace polylogue {

/// K x T alignment time series of one trace.
struct PolylogueMatrix {
  std::string trace_id;
  MatrixXd scores;  // row k = persona, column t = generation step
  bool whitened = false;

  Index num_personas() const { return scores.rows(); }
  Index num_tokens() const { return scores.cols(); }
};

/// s(k, t) = <v_k, a_t> / |v_k| for activations (T x d) and directions (K x d).
/// Directions must be non-degenerate; the caller checks.
template <typename Activations, typename Directions>
MatrixXd alignment_scores(const Eigen::MatrixBase<Activations>& activations,
                          const Eigen::MatrixBase<Directions>& directions) {
  MatrixXd unit = directions.template cast<double>();
  unit.rowwise().normalize();
  return unit * activations.template cast<double>().transpose();
}

PolylogueMatrix project(const ActivationTrace& trace, const PersonaBank& bank);

struct WhiteningModel {
  VectorXd mu;
  double lambda = 0.05;
  MatrixXd W;
  double eig_floor = 0;
  MatrixXd shrunk_covariance;  // the matrix W inverts the square root of

  Index num_personas() const { return mu.size(); }
};

/// Stacks the columns of several polylogue matrices into an N x K row matrix.
MatrixXd pool_projections(std::span<const PolylogueMatrix> matrices);

/// Shrinkage Mahalanobis whitening fitted on pooled per-token projections.
///
/// Covariances divide by N. The shrunk covariance is
///   (1 - lambda) * Sigma + lambda * mean(diag Sigma) * I
/// and W = U diag(max(e, floor))^(-1/2) U^T from its symmetric
/// eigendecomposition. Without an explicit floor, 1e-10 * mean(diag Sigma) is
/// used.
WhiteningModel fit_whitening(const MatrixXd& rows, double lambda = 0.05,
                             std::optional<double> eig_floor = std::nullopt);

/// Each column s_t becomes (s_t - mu) W.
PolylogueMatrix apply_whitening(const WhiteningModel& model, const PolylogueMatrix& scores);

/// Token ranges [first, second) that partition [0, T). A paragraph can be
/// empty only when one token completes several separators or the text ends
/// with a separator.
struct ParagraphSegmentation {
  std::string trace_id;
  std::vector<std::pair<Index, Index>> ranges;

  int count() const { return static_cast<int>(ranges.size()); }
};

/// Non-overlapping "\n\n" occurrences, scanned greedily left to right.
int count_separators(std::string_view text);

/// Splits on "\n\n" in the concatenated token text. The token that completes
/// a separator belongs to the paragraph it closes.
ParagraphSegmentation segment_tokens(std::span<const std::string> tokens);
ParagraphSegmentation segment_paragraphs(const ActivationTrace& trace);

/// Paragraph p of P goes to bin floor(p * n_bins / P), at most n_bins - 1.
std::vector<int> bin_paragraphs(int num_paragraphs, int n_bins);

struct DescriptorSet {
  VectorXd mean;
  VectorXd volatility;  // population std over steps
  VectorXd final_sim;
  VectorXd dominance_share;
  double dominance_entropy = 0;  // normalised to [0, 1]
  double switching_rate = 0;
  std::vector<int> dominant;  // argmax persona per step, ties to lowest index
};

DescriptorSet descriptors(const PolylogueMatrix& scores);

struct FeatureConfig {
  int n_bins = 20;
};

/// n_bins * K + 3 * K + 2
Index feature_dimension(Index num_personas, int n_bins);

/// Canonical order: per bin, per persona bin means; then volatilities, final
/// similarities, dominance shares; then dominance entropy and switching rate.
/// Bins without tokens are 0.
FeatureRow assemble_features(const PolylogueMatrix& scores,
                             const ParagraphSegmentation& segmentation,
                             const FeatureConfig& config = {});

/// Human-readable names in the canonical order ("para 3 solver", "final sim monitor", ...).
std::vector<std::string> feature_names(std::span<const std::string> personas, int n_bins);

/// project + segment + assemble on raw scores; label taken from trace.correct.
FeatureRow trace_features(const ActivationTrace& trace, const PersonaBank& bank,
                          const FeatureConfig& config = {});

}  // namespace polylogue
