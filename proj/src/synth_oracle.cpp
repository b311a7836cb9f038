#include "polylogue/synth_oracle.hpp"

#include "polylogue/error.hpp"
#include "polylogue/persona_registry.hpp"

#include <cstdio>
#include <random>

namespace polylogue::synth {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base ^ (index + 0x9E3779B97F4A7C15ULL + (base << 6) + (base >> 2));
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

MatrixXd gen_directions(Index K, Index d, std::uint64_t seed) {
  require(K >= 1, ErrorCode::config, "K must be >= 1");
  require(d >= K, ErrorCode::dimension,
          "need d >= K for orthonormal directions (d=" + std::to_string(d) + ", K=" + std::to_string(K) + ")");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  MatrixXd samples(d, K);
  for (Index k = 0; k < K; ++k)
    for (Index i = 0; i < d; ++i) samples(i, k) = normal(rng);
  Eigen::HouseholderQR<MatrixXd> qr(samples);
  MatrixXd Q = qr.householderQ() * MatrixXd::Identity(d, K);
  return Q.transpose();
}

PersonaBank gen_bank(Index K, Index d, std::uint64_t seed, int layer, double alpha) {
  const MatrixXd dirs = gen_directions(K, d, seed);
  PersonaBank bank;
  bank.layer = layer;
  bank.default_alpha = alpha;
  if (K == personas::kNumPersonas) {
    bank.names = personas::canonical_names();
  } else {
    for (Index k = 0; k < K; ++k) bank.names.push_back("persona_" + std::to_string(k));
  }
  bank.vectors = dirs.cast<float>();
  bank.provenance = "synthetic orthonormal bank, seed " + std::to_string(seed);
  return bank;
}

ActivationTrace gen_trace(const PlantSpec& spec, const PersonaBank& bank) {
  require(!spec.segments.empty(), ErrorCode::config, "plant spec has no segments");
  require(spec.gain > 0 && spec.noise >= 0, ErrorCode::config, "need gain > 0 and noise >= 0");
  const Index K = bank.num_personas();
  const Index d = bank.hidden_size();
  Index T = 0;
  for (const auto& s : spec.segments) {
    require(s.tokens >= 1, ErrorCode::config, "segment token counts must be >= 1");
    require(s.persona >= 0 && s.persona < K, ErrorCode::config, "segment persona outside bank");
    T += s.tokens;
  }
  if (spec.label_rule)
    require(spec.label_rule->bin >= 0 && spec.label_rule->bin < spec.n_bins &&
                spec.label_rule->persona >= 0 && spec.label_rule->persona < K,
            ErrorCode::config, "label rule outside bins/personas");

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal;

  ActivationTrace trace;
  trace.trace_id = spec.trace_id;
  trace.model_id = "synthetic";
  trace.layer = bank.layer;
  trace.response_start = spec.response_start;
  trace.activations.resize(T, d);
  trace.tokens.reserve(static_cast<std::size_t>(T));
  std::vector<ParagraphLabel> labels;

  // Per-token alignment with the label persona, for the label rule.
  const Index P = static_cast<Index>(spec.segments.size());
  VectorXd rule_sum = VectorXd::Zero(P);
  const VectorXd rule_dir =
      spec.label_rule ? VectorXd(bank.direction(spec.label_rule->persona).normalized()) : VectorXd();

  Index t = 0;
  VectorXd a(d);
  for (Index p = 0; p < P; ++p) {
    const Segment& seg = spec.segments[static_cast<std::size_t>(p)];
    const VectorXd v = bank.direction(seg.persona);
    for (Index i = 0; i < seg.tokens; ++i, ++t) {
      for (Index j = 0; j < d; ++j) a(j) = spec.gain * v(j) + spec.noise * normal(rng);
      trace.activations.row(t) = a.transpose().cast<float>();
      if (spec.label_rule)
        rule_sum(p) += trace.activations.row(t).cast<double>().dot(rule_dir.transpose());
      std::string text = (t + 1 == spec.response_start) ? "</think>" : " w" + std::to_string(t);
      if (i + 1 == seg.tokens && p + 1 < P) text += "\n\n";
      trace.tokens.push_back(std::move(text));
    }
    labels.push_back({static_cast<int>(p), seg.persona});
  }
  trace.paragraph_labels = std::move(labels);

  if (spec.label_rule) {
    const auto& rule = *spec.label_rule;
    double sum = 0;
    Index count = 0;
    for (Index p = 0; p < P; ++p) {
      const Index bin = std::min<Index>(p * spec.n_bins / P, spec.n_bins - 1);
      if (bin != rule.bin) continue;
      sum += rule_sum(p);
      count += spec.segments[static_cast<std::size_t>(p)].tokens;
    }
    trace.correct = count > 0 && sum / static_cast<double>(count) > rule.threshold;
  }
  validate(trace);
  return trace;
}

std::vector<ActivationTrace> gen_dataset(const DatasetSpec& spec, const PersonaBank& bank) {
  const int K = static_cast<int>(bank.num_personas());
  require(K >= 2, ErrorCode::config, "dataset needs at least two personas");
  require(spec.num_traces >= 1, ErrorCode::config, "dataset needs at least one trace");
  require(spec.min_paragraphs >= 1 && spec.max_paragraphs >= spec.min_paragraphs, ErrorCode::config,
          "invalid paragraph range");
  require(spec.min_tokens >= 1 && spec.max_tokens >= spec.min_tokens, ErrorCode::config,
          "invalid token range");
  require(spec.target_bin >= 0 && spec.target_bin < spec.n_bins && spec.target_persona >= 0 &&
              spec.target_persona < K,
          ErrorCode::config, "target bin/persona out of range");

  std::vector<ActivationTrace> traces;
  traces.reserve(static_cast<std::size_t>(spec.num_traces));
  for (int n = 0; n < spec.num_traces; ++n) {
    std::mt19937_64 rng(derive_seed(spec.seed, static_cast<std::uint64_t>(n)));
    std::uniform_int_distribution<int> paragraphs(spec.min_paragraphs, spec.max_paragraphs);
    std::uniform_int_distribution<int> persona(0, K - 1);
    std::uniform_int_distribution<int> other(0, K - 2);
    std::uniform_int_distribution<Index> tokens(spec.min_tokens, spec.max_tokens);
    std::bernoulli_distribution planted(spec.plant_rate);

    const int P = paragraphs(rng);
    const bool plant = planted(rng);
    PlantSpec ps;
    ps.seed = derive_seed(spec.seed ^ 0xA5A5A5A5ULL, static_cast<std::uint64_t>(n));
    char id[32];
    std::snprintf(id, sizeof id, "synth-%04d", n);
    ps.trace_id = id;
    ps.gain = spec.gain;
    ps.noise = spec.noise;
    ps.n_bins = spec.n_bins;
    ps.label_rule = LabelRule{spec.target_bin, spec.target_persona, 0.5 * spec.gain};
    for (int p = 0; p < P; ++p) {
      const int bin = std::min(static_cast<int>(static_cast<std::int64_t>(p) * spec.n_bins / P), spec.n_bins - 1);
      int k = persona(rng);
      if (bin == spec.target_bin) {
        if (plant) {
          k = spec.target_persona;
        } else {
          k = other(rng);
          if (k >= spec.target_persona) ++k;
        }
      }
      ps.segments.push_back({k, tokens(rng)});
    }
    traces.push_back(gen_trace(ps, bank));
  }
  return traces;
}

ExtractionTraces gen_extraction(const ExtractionSpec& spec, const PersonaBank& bank, int persona) {
  const int K = static_cast<int>(bank.num_personas());
  require(K >= 2, ErrorCode::config, "extraction needs at least two personas");
  require(persona >= 0 && persona < K, ErrorCode::config, "persona outside bank");
  require(spec.responses >= 1 && spec.response_tokens >= 1 && spec.prefix_tokens >= 0,
          ErrorCode::config, "invalid extraction spec");

  ExtractionTraces out;
  VectorXd negative_mean = VectorXd::Zero(bank.hidden_size());
  for (int side = 0; side < 2; ++side) {
    for (int n = 0; n < spec.responses; ++n) {
      const std::uint64_t idx = static_cast<std::uint64_t>(persona) * 1000003ULL +
                                static_cast<std::uint64_t>(side) * 1000ULL + static_cast<std::uint64_t>(n);
      std::mt19937_64 rng(derive_seed(spec.seed, idx));
      std::uniform_int_distribution<int> any(0, K - 1);
      int planted = persona;
      if (side == 1) {
        planted = n % (K - 1);
        if (planted >= persona) ++planted;
        negative_mean += bank.direction(planted);
      }
      PlantSpec ps;
      ps.seed = derive_seed(spec.seed ^ 0x5A5A5A5AULL, idx);
      ps.trace_id = std::string(side == 0 ? "pos-" : "neg-") + std::to_string(persona) + "-" + std::to_string(n);
      ps.gain = spec.gain;
      ps.noise = spec.noise;
      if (spec.prefix_tokens > 0) ps.segments.push_back({any(rng), spec.prefix_tokens});
      ps.segments.push_back({planted, spec.response_tokens});
      ps.response_start = spec.prefix_tokens;
      (side == 0 ? out.positive : out.negative).push_back(gen_trace(ps, bank));
    }
  }
  negative_mean /= static_cast<double>(spec.responses);
  out.planted_contrast = spec.gain * (bank.direction(persona) - negative_mean);
  return out;
}

}  // namespace polylogue::synth
