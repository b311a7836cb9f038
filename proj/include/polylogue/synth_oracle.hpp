#pragma once

#include "polylogue/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace polylogue::synth {

/// Derives independent per-item seeds from a base seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

/// K x d orthonormal rows from a seeded QR of Gaussian samples.
MatrixXd gen_directions(Index K, Index d, std::uint64_t seed);

/// gen_directions rounded to the f32 bank layout. Names are the canonical
/// personas when K = 8.
PersonaBank gen_bank(Index K, Index d, std::uint64_t seed, int layer = 0, double alpha = 1.0);

struct Segment {
  int persona = 0;
  Index tokens = 1;
};

/// Label is true iff the mean alignment of `persona` over the tokens of the
/// paragraphs in `bin` exceeds `threshold`.
struct LabelRule {
  int bin = 0;
  int persona = 0;
  double threshold = 0.5;
};

struct PlantSpec {
  std::uint64_t seed = 0;
  std::string trace_id = "synth";
  std::vector<Segment> segments;  // one paragraph each
  double gain = 1.0;              // gamma
  double noise = 0.0;             // sigma
  std::optional<LabelRule> label_rule;
  int n_bins = 20;
  Index response_start = 0;       // leading tokens are planted like any other
};

/// a_t = gain * v_k + noise * eps_t for a token in a segment planted with
/// persona k; every segment but the last ends with "\n\n". Paragraph labels
/// are the planted personas.
ActivationTrace gen_trace(const PlantSpec& spec, const PersonaBank& bank);

struct DatasetSpec {
  std::uint64_t seed = 0;
  int num_traces = 200;
  double gain = 1.0;
  double noise = 0.1;
  int min_paragraphs = 20;
  int max_paragraphs = 20;
  Index min_tokens = 3;
  Index max_tokens = 8;
  int n_bins = 20;
  int target_bin = 0;
  int target_persona = 0;
  double plant_rate = 0.5;  // share of traces with the target planted
};

/// Labelled traces whose outcome depends only on whether `target_persona`
/// occupies `target_bin`: planted traces put it there, the rest put another
/// persona there.
std::vector<ActivationTrace> gen_dataset(const DatasetSpec& spec, const PersonaBank& bank);

struct ExtractionSpec {
  std::uint64_t seed = 0;
  int responses = 20;  // per condition
  Index prefix_tokens = 4;
  Index response_tokens = 16;
  double gain = 1.0;
  double noise = 0.1;
};

struct ExtractionTraces {
  std::vector<ActivationTrace> positive;
  std::vector<ActivationTrace> negative;
  /// gain * (v_persona - mean planted direction of the Y- responses), in
  /// double precision: what extraction should recover.
  VectorXd planted_contrast;
};

/// Y+ planted with `persona` after a reasoning prefix; Y- cycles through the
/// other personas. The prefix carries a random persona and sits before
/// response_start.
ExtractionTraces gen_extraction(const ExtractionSpec& spec, const PersonaBank& bank, int persona);

}  // namespace polylogue::synth
