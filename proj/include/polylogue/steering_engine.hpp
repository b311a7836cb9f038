#pragma once

#include "polylogue/error.hpp"
#include "polylogue/sparse_learn.hpp"
#include "polylogue/types.hpp"

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace polylogue::steering {

struct StrategyConfig {
  int top_k = 5;
  int median_paragraphs = 20;  // M, from the training responses
  int n_bins = 20;
};

/// Median paragraph count, rounded half up.
int median_paragraph_count(std::vector<int> counts);

/// 1-based inclusive paragraph range that bin b covers out of M paragraphs.
std::pair<int, int> bin_paragraph_range(int bin, int n_bins, int median_paragraphs);

/// Top-k non-zero paragraph-bin coefficients by magnitude become rules:
/// positive weight amplifies the persona (+1), negative suppresses it (-1).
/// `weights` must follow the canonical feature order for the bank's K.
SteeringSchedule derive_strategy(const VectorXd& weights, const StrategyConfig& config,
                                 const PersonaBank& bank);

inline SteeringSchedule derive_strategy(const learn::SparseLogisticModel& model,
                                        const StrategyConfig& config, const PersonaBank& bank) {
  return derive_strategy(model.weights, config, bank);
}

struct ActiveRule {
  int persona = 0;
  int direction = 1;
};

/// h' = h + sum of direction * alpha * v_k over the active rules.
template <typename Derived>
Vector<typename Derived::Scalar> steer_step(const Eigen::MatrixBase<Derived>& hidden,
                                            std::span<const ActiveRule> active, double alpha,
                                            const PersonaBank& bank) {
  using Scalar = typename Derived::Scalar;
  require(hidden.size() == bank.hidden_size(), ErrorCode::dimension,
          "hidden state has " + std::to_string(hidden.size()) + " entries, bank has d=" +
              std::to_string(bank.hidden_size()));
  VectorXd shift = VectorXd::Zero(bank.hidden_size());
  for (const auto& r : active) {
    require(r.persona >= 0 && r.persona < bank.num_personas(), ErrorCode::validation,
            "active rule names persona " + std::to_string(r.persona) + " outside the bank");
    require(!bank.degenerate(r.persona), ErrorCode::degenerate_persona,
            "cannot steer along degenerate persona " + std::to_string(r.persona));
    shift += (r.direction * alpha) * bank.direction(r.persona);
  }
  return (hidden.template cast<double>() + shift).template cast<Scalar>();
}

/// Tracks the paragraph number of one sequence as tokens are decoded.
class ParagraphJudge {
 public:
  /// Consumes one decoded token; returns the paragraph number (1-based)
  /// after it.
  int feed(std::string_view token_text);

  int paragraph() const { return separators_ + 1; }
  int separators() const { return separators_; }

 private:
  int separators_ = 0;
  bool pending_newline_ = false;
};

/// Rule r is active iff start <= paragraph <= end.
std::vector<bool> active_mask(int paragraph, const SteeringSchedule& schedule);
std::vector<ActiveRule> active_rules(int paragraph, const SteeringSchedule& schedule);

struct MaskStep {
  int paragraph = 1;
  std::vector<bool> mask;
};

/// Mask history for a token sequence: step t uses the paragraph number
/// before token t is fed.
std::vector<MaskStep> replay_masks(std::span<const std::string> tokens,
                                   const SteeringSchedule& schedule);

/// One JSON object per step: {"t":int,"paragraph":int,"mask":[bool,...]}.
std::string mask_log_jsonl(std::span<const MaskStep> steps);

/// Adds the scheduled steering to every row of a stored trace, judging
/// paragraphs from its tokens.
ActivationTrace steer_trace(const ActivationTrace& trace, const SteeringSchedule& schedule,
                            const PersonaBank& bank, std::vector<MaskStep>* masks = nullptr);

}  // namespace polylogue::steering
