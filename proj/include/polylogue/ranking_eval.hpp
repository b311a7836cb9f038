#pragma once

#include "polylogue/polylogue_core.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace polylogue::ranking {

struct ParagraphRanking {
  std::string paragraph_id;
  std::vector<int> ranks;  // ranks[k] = 1-based rank of persona k
  int label = 0;           // persona index assigned from the text
};

/// Descending score order, ties to the lower persona index.
std::vector<int> rank_personas(const VectorXd& scores);

/// Mean of 1 / rank(label).
double mrr(std::span<const ParagraphRanking> rankings);

/// Expected MRR of a uniformly random ranking over K personas.
double mrr_random(int num_personas);

/// MRR of one global ranking by label frequency (ties to the lower index).
double mrr_frequency(std::span<const int> labels, int num_personas);

/// Per-paragraph mean score (K x P). Columns of empty paragraphs are NaN.
MatrixXd paragraph_means(const PolylogueMatrix& scores, const ParagraphSegmentation& segmentation);

/// Rankings for the labelled, non-empty paragraphs of one trace.
std::vector<ParagraphRanking> rank_paragraphs(const PolylogueMatrix& scores,
                                              const ParagraphSegmentation& segmentation,
                                              const ActivationTrace& trace);

struct MrrReport {
  std::string model;
  double random = 0;
  std::optional<double> frequency;
  std::optional<double> polylogue;
  std::size_t paragraphs = 0;
};

/// {"model", "Rnd", "Frq", "Poly", "paragraphs"}; absent values are null.
std::string report_json(std::span<const MrrReport> rows);

}  // namespace polylogue::ranking
