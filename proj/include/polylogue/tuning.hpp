#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace polylogue::tuning {

/// Judge logits for the numeric answer tokens 0..100. Missing keys are -inf.
struct JudgeReadout {
  std::map<int, double> logits;
  double numeric_mass = 1.0;  // share of full-vocabulary probability on those tokens
};

inline constexpr double kDefaultMassThreshold = 0.25;
inline constexpr double kDefaultBeta = 0.7;

/// sum k exp(l_k) / sum exp(l_k), or nullopt (discarded) when the numeric
/// mass is below the threshold.
std::optional<double> expected_numeric_score(const JudgeReadout& readout,
                                             double mass_threshold = kDefaultMassThreshold);

/// score^beta * coherence^(1 - beta)
double objective(double score, double coherence, double beta = kDefaultBeta);

struct PromptScores {
  std::string prompt_id;
  std::optional<double> trait;      // nullopt = discarded
  std::optional<double> coherence;  // nullopt = discarded
};

struct Candidate {
  int layer = 0;
  double alpha = 0;
  std::vector<PromptScores> prompts;
};

struct TuningGrid {
  std::vector<Candidate> candidates;
  double beta = kDefaultBeta;
};

/// Mean objective over the prompts where neither score was discarded.
std::optional<double> mean_objective(const Candidate& candidate, double beta);

struct Selection {
  int layer = 0;
  double alpha = 0;
  double mean_objective = 0;
};

/// Highest mean objective; ties go to the lower layer, then the lower alpha.
Selection select_config(const TuningGrid& grid);

/// Groups adapter JSONL rows by (layer, alpha) after scoring each readout.
TuningGrid parse_grid_jsonl(std::string_view text, double mass_threshold = kDefaultMassThreshold,
                            double beta = kDefaultBeta);

/// {"model", "layer", "coef", "mean_objective"}
std::string selection_json(const Selection& selection, const std::string& model);

}  // namespace polylogue::tuning
