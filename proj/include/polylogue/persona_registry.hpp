#pragma once

#include "polylogue/types.hpp"

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace polylogue::personas {

struct PersonaSpec {
  std::string name;
  std::string episode;  // problem-solving episode the persona stands for
  std::string description;
  std::string inducing_prompt;
  std::string inhibiting_prompt;
};

inline constexpr Index kNumPersonas = 8;

/// The eight reasoning personas in canonical order. Position is the
/// persona index used by every other module.
const std::array<PersonaSpec, kNumPersonas>& registry();
std::vector<std::string> canonical_names();
/// -1 when unknown.
int index_of(std::string_view name);

/// personas.json: canonical order with prompt pairs, for the model adapter.
std::string registry_json();

/// Y+ responses (inducing prompt) and Y- responses (inhibiting prompt).
struct ExtractionSet {
  std::span<const ActivationTrace> positive;
  std::span<const ActivationTrace> negative;
};

struct ExtractedDirection {
  VectorXd vector;
  bool degenerate = false;
};

/// Mean activation of one response over its post-marker tokens.
VectorXd response_mean(const ActivationTrace& trace);

/// Difference of means: each response is averaged over its tokens from
/// response_start on, then responses are averaged without weighting by
/// length, then Y- is subtracted from Y+.
ExtractedDirection extract_persona_vector(const ExtractionSet& set);

/// K vectors in canonical order -> bank. Requires exactly kNumPersonas
/// vectors unless `names` is supplied.
PersonaBank build_bank(std::span<const VectorXd> vectors, int layer, double alpha,
                       std::string provenance = {},
                       std::vector<std::string> names = {});

}  // namespace polylogue::personas
