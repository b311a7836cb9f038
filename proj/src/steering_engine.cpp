#include "polylogue/steering_engine.hpp"

#include "polylogue/polylogue_core.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace polylogue::steering {

int median_paragraph_count(std::vector<int> counts) {
  require(!counts.empty(), ErrorCode::empty_input, "median of an empty paragraph-count list");
  std::sort(counts.begin(), counts.end());
  const std::size_t n = counts.size();
  if (n % 2 == 1) return counts[n / 2];
  const int sum = counts[n / 2 - 1] + counts[n / 2];
  return sum / 2 + (sum % 2);  // x.5 rounds up
}

std::pair<int, int> bin_paragraph_range(int bin, int n_bins, int M) {
  require(M >= 1, ErrorCode::config, "median paragraph count must be >= 1");
  require(n_bins >= 1 && bin >= 0 && bin < n_bins, ErrorCode::config, "bin outside 0..n_bins-1");
  const auto lo = static_cast<std::int64_t>(bin) * M / n_bins;
  const auto hi = (static_cast<std::int64_t>(bin) + 1) * M / n_bins;
  const int start = static_cast<int>(lo) + 1;
  return {start, std::max(start, static_cast<int>(hi))};
}

SteeringSchedule derive_strategy(const VectorXd& weights, const StrategyConfig& config,
                                 const PersonaBank& bank) {
  require(config.median_paragraphs >= 1, ErrorCode::config, "median paragraph count must be >= 1");
  require(config.top_k >= 1, ErrorCode::config, "top_k must be >= 1");
  require(config.n_bins >= 1, ErrorCode::config, "n_bins must be >= 1");
  const Index K = bank.num_personas();
  require(weights.size() == feature_dimension(K, config.n_bins), ErrorCode::dimension,
          "model has " + std::to_string(weights.size()) + " weights; K=" + std::to_string(K) +
              ", n_bins=" + std::to_string(config.n_bins) + " needs " +
              std::to_string(feature_dimension(K, config.n_bins)));

  std::vector<Index> candidates;
  const Index para_features = static_cast<Index>(config.n_bins) * K;
  for (Index i = 0; i < para_features; ++i)
    if (weights(i) != 0.0) candidates.push_back(i);
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](Index a, Index b) { return std::abs(weights(a)) > std::abs(weights(b)); });
  if (static_cast<int>(candidates.size()) > config.top_k) candidates.resize(static_cast<std::size_t>(config.top_k));

  SteeringSchedule schedule;
  schedule.layer = bank.layer;
  schedule.alpha = bank.default_alpha;
  for (Index i : candidates) {
    const int bin = static_cast<int>(i / K);
    const int persona = static_cast<int>(i % K);
    const auto [start, end] = bin_paragraph_range(bin, config.n_bins, config.median_paragraphs);
    schedule.rules.push_back({persona, start, end, weights(i) > 0 ? 1 : -1});
  }
  return schedule;
}

int ParagraphJudge::feed(std::string_view token_text) {
  for (char c : token_text) {
    if (c != '\n') {
      pending_newline_ = false;
    } else if (pending_newline_) {
      ++separators_;
      pending_newline_ = false;
    } else {
      pending_newline_ = true;
    }
  }
  return paragraph();
}

std::vector<bool> active_mask(int paragraph, const SteeringSchedule& schedule) {
  std::vector<bool> mask;
  mask.reserve(schedule.rules.size());
  for (const auto& r : schedule.rules) mask.push_back(r.start <= paragraph && paragraph <= r.end);
  return mask;
}

std::vector<ActiveRule> active_rules(int paragraph, const SteeringSchedule& schedule) {
  std::vector<ActiveRule> out;
  for (const auto& r : schedule.rules)
    if (r.start <= paragraph && paragraph <= r.end) out.push_back({r.persona, r.direction});
  return out;
}

std::vector<MaskStep> replay_masks(std::span<const std::string> tokens, const SteeringSchedule& schedule) {
  std::vector<MaskStep> steps;
  steps.reserve(tokens.size());
  ParagraphJudge judge;
  for (const auto& tok : tokens) {
    steps.push_back({judge.paragraph(), active_mask(judge.paragraph(), schedule)});
    judge.feed(tok);
  }
  return steps;
}

std::string mask_log_jsonl(std::span<const MaskStep> steps) {
  std::string out;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    nlohmann::ordered_json j;
    j["t"] = t;
    j["paragraph"] = steps[t].paragraph;
    j["mask"] = steps[t].mask;
    out += j.dump() + "\n";
  }
  return out;
}

ActivationTrace steer_trace(const ActivationTrace& trace, const SteeringSchedule& schedule,
                            const PersonaBank& bank, std::vector<MaskStep>* masks) {
  validate(schedule, bank.num_personas());
  require(trace.hidden_size() == bank.hidden_size(), ErrorCode::dimension,
          "trace and bank hidden sizes differ");
  ActivationTrace out = trace;
  out.trace_id = trace.trace_id + "-steered";
  const auto steps = replay_masks(trace.tokens, schedule);
  for (Index t = 0; t < trace.num_tokens(); ++t) {
    const auto rules = active_rules(steps[static_cast<std::size_t>(t)].paragraph, schedule);
    if (rules.empty()) continue;
    out.activations.row(t) =
        steer_step(trace.activations.row(t).transpose(), rules, schedule.alpha, bank).transpose();
  }
  if (masks) *masks = steps;
  return out;
}

}  // namespace polylogue::steering
