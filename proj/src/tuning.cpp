#include "polylogue/tuning.hpp"

#include "polylogue/error.hpp"

#include <json.hpp>

#include <cmath>
#include <limits>
#include <sstream>
#include <tuple>

namespace polylogue::tuning {

std::optional<double> expected_numeric_score(const JudgeReadout& readout, double mass_threshold) {
  require(readout.numeric_mass >= 0 && readout.numeric_mass <= 1, ErrorCode::validation,
          "numeric mass must lie in [0, 1]");
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& [k, l] : readout.logits) {
    require(k >= 0 && k <= 100, ErrorCode::validation, "judge score token outside 0..100");
    require(!std::isnan(l) && l != std::numeric_limits<double>::infinity(), ErrorCode::numeric,
            "judge logit is NaN or +inf");
    top = std::max(top, l);
  }
  require(std::isfinite(top), ErrorCode::numeric, "judge readout has no finite logit");
  if (readout.numeric_mass < mass_threshold) return std::nullopt;

  double num = 0, den = 0;
  for (const auto& [k, l] : readout.logits) {
    const double w = std::exp(l - top);
    num += k * w;
    den += w;
  }
  return num / den;
}

double objective(double score, double coherence, double beta) {
  require(score >= 0 && coherence >= 0, ErrorCode::validation, "scores must be non-negative");
  require(beta > 0 && beta < 1, ErrorCode::config, "beta must lie in (0, 1)");
  return std::pow(score, beta) * std::pow(coherence, 1.0 - beta);
}

std::optional<double> mean_objective(const Candidate& c, double beta) {
  double sum = 0;
  int n = 0;
  for (const auto& p : c.prompts) {
    if (!p.trait || !p.coherence) continue;
    sum += objective(*p.trait, *p.coherence, beta);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

Selection select_config(const TuningGrid& grid) {
  std::optional<Selection> best;
  for (const auto& c : grid.candidates) {
    const auto value = mean_objective(c, grid.beta);
    if (!value) continue;
    const bool better =
        !best || *value > best->mean_objective ||
        (*value == best->mean_objective &&
         std::tie(c.layer, c.alpha) < std::tie(best->layer, best->alpha));
    if (better) best = Selection{c.layer, c.alpha, *value};
  }
  require(best.has_value(), ErrorCode::no_valid_config,
          "every prompt of every candidate was discarded");
  return *best;
}

namespace {

JudgeReadout readout_from(const nlohmann::json& row, const char* logits_key, const char* mass_key) {
  JudgeReadout r;
  const auto& logits = row.at(logits_key);
  require(logits.is_object(), ErrorCode::format, std::string(logits_key) + " must be an object");
  for (const auto& [key, value] : logits.items()) {
    int k = 0;
    try {
      std::size_t used = 0;
      k = std::stoi(key, &used);
      require(used == key.size(), ErrorCode::format, "non-integer score key '" + key + "'");
    } catch (const std::logic_error&) {
      fail(ErrorCode::format, "non-integer score key '" + key + "'");
    }
    if (value.is_null()) continue;  // -inf
    r.logits[k] = value.get<double>();
  }
  r.numeric_mass = row.at(mass_key).get<double>();
  return r;
}

}  // namespace

TuningGrid parse_grid_jsonl(std::string_view text, double mass_threshold, double beta) {
  TuningGrid grid;
  grid.beta = beta;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto row = nlohmann::json::parse(line);
      const int layer = row.at("layer").get<int>();
      const double alpha = row.at("alpha").get<double>();
      PromptScores p;
      p.prompt_id = row.at("prompt_id").get<std::string>();
      p.trait = expected_numeric_score(readout_from(row, "trait_logits", "numeric_mass_trait"), mass_threshold);
      p.coherence = expected_numeric_score(
          readout_from(row, "coherence_logits", "numeric_mass_coherence"), mass_threshold);
      Candidate* slot = nullptr;
      for (auto& c : grid.candidates)
        if (c.layer == layer && c.alpha == alpha) slot = &c;
      if (!slot) {
        grid.candidates.push_back({layer, alpha, {}});
        slot = &grid.candidates.back();
      }
      slot->prompts.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::format, "grid line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), "grid line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  require(!grid.candidates.empty(), ErrorCode::empty_input, "tuning grid file has no rows");
  return grid;
}

std::string selection_json(const Selection& s, const std::string& model) {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["layer"] = s.layer;
  j["coef"] = s.alpha;
  j["mean_objective"] = s.mean_objective;
  return j.dump(2) + "\n";
}

}  // namespace polylogue::tuning
