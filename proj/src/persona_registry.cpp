#include "polylogue/persona_registry.hpp"

#include "polylogue/error.hpp"

#include <json.hpp>

namespace polylogue::personas {

const std::array<PersonaSpec, kNumPersonas>& registry() {
  static const std::array<PersonaSpec, kNumPersonas> specs = {{
      {"interpreter", "Read",
       "Focuses on understanding the problem statement by parsing and restating it.",
       "Respond like a careful interpreter who restates the problem in your own words.",
       "Do not restate or paraphrase the problem."},
      {"analyst", "Analyse",
       "Identifies underlying structure, constraints, and relevant concepts to clarify what must "
       "be solved.",
       "Respond like an analyst who identifies the structure, constraints and relevant concepts.",
       "Do not analyse the structure or constraints of the problem."},
      {"planner", "Plan",
       "Thinks ahead strategically, outlines structured approaches, and acts according to a "
       "clear, organised plan.",
       "Respond like a strategic planner.",
       "Do not plan or outline."},
      {"solver", "Implement",
       "Executes a chosen strategy through explicit calculations or logical steps.",
       "Respond like a solver who carries out explicit calculations step by step.",
       "Do not carry out explicit calculations or step-by-step derivations."},
      {"explorer", "Explore",
       "Generates and tests alternative ideas or hypotheses to search for promising solution "
       "paths.",
       "Respond like an explorer who tries several alternative ideas and hypotheses.",
       "Do not consider alternative ideas; follow a single path."},
      {"verifier", "Verify",
       "Checks intermediate results and final conclusions for correctness and consistency.",
       "Respond like a verifier who double-checks every intermediate result.",
       "Do not check or verify any of your results."},
      {"monitor", "Monitor",
       "Regulates the reasoning process by tracking progress, detecting confusion, and adjusting "
       "direction when needed.",
       "Respond like a monitor who tracks progress and notices when to change course.",
       "Do not reflect on or comment about your own progress."},
      {"arbiter", "Answer",
       "Commits to a final answer and presents it clearly and decisively.",
       "Respond like an arbiter who commits to a final answer clearly and decisively.",
       "Do not commit to a final answer."},
  }};
  return specs;
}

std::vector<std::string> canonical_names() {
  std::vector<std::string> names;
  for (const auto& p : registry()) names.push_back(p.name);
  return names;
}

int index_of(std::string_view name) {
  const auto& specs = registry();
  for (std::size_t i = 0; i < specs.size(); ++i)
    if (specs[i].name == name) return static_cast<int>(i);
  return -1;
}

std::string registry_json() {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < registry().size(); ++i) {
    const auto& p = registry()[i];
    nlohmann::ordered_json j;
    j["index"] = i;
    j["name"] = p.name;
    j["episode"] = p.episode;
    j["description"] = p.description;
    j["inducing_prompt"] = p.inducing_prompt;
    j["inhibiting_prompt"] = p.inhibiting_prompt;
    arr.push_back(std::move(j));
  }
  nlohmann::ordered_json root;
  root["personas"] = std::move(arr);
  return root.dump(2) + "\n";
}

VectorXd response_mean(const ActivationTrace& trace) {
  const Index T = trace.num_tokens();
  const Index span = T - trace.response_start;
  require(trace.response_start >= 0 && span >= 1, ErrorCode::degenerate_trace,
          "trace '" + trace.trace_id + "' has no tokens after the reasoning marker");
  return trace.activations.bottomRows(span).cast<double>().colwise().mean().transpose();
}

namespace {

VectorXd mean_of_means(std::span<const ActivationTrace> traces, Index d, const char* side) {
  require(!traces.empty(), ErrorCode::empty_input, std::string("extraction set has no ") + side +
                                                       " responses");
  VectorXd acc = VectorXd::Zero(d);
  for (const auto& t : traces) {
    require(t.hidden_size() == d, ErrorCode::dimension,
            "trace '" + t.trace_id + "' has hidden_size " + std::to_string(t.hidden_size()) +
                ", expected " + std::to_string(d));
    acc += response_mean(t);
  }
  return acc / static_cast<double>(traces.size());
}

}  // namespace

ExtractedDirection extract_persona_vector(const ExtractionSet& set) {
  require(!set.positive.empty() && !set.negative.empty(), ErrorCode::empty_input,
          "extraction set needs both Y+ and Y- responses");
  const Index d = set.positive.front().hidden_size();
  const int layer = set.positive.front().layer;
  for (auto side : {set.positive, set.negative})
    for (const auto& t : side)
      require(t.layer == layer, ErrorCode::consistency, "extraction traces span several layers");

  ExtractedDirection out;
  out.vector = mean_of_means(set.positive, d, "Y+") - mean_of_means(set.negative, d, "Y-");
  out.degenerate = out.vector.norm() < kDegenerateNorm;
  return out;
}

PersonaBank build_bank(std::span<const VectorXd> vectors, int layer, double alpha,
                       std::string provenance, std::vector<std::string> names) {
  if (names.empty()) {
    require(static_cast<Index>(vectors.size()) == kNumPersonas, ErrorCode::dimension,
            "expected " + std::to_string(kNumPersonas) + " persona vectors, got " +
                std::to_string(vectors.size()));
    names = canonical_names();
  }
  require(!vectors.empty() && names.size() == vectors.size(), ErrorCode::dimension,
          "persona vector count does not match names");
  const Index d = vectors.front().size();
  require(d >= 1, ErrorCode::dimension, "persona vectors are empty");

  PersonaBank bank;
  bank.layer = layer;
  bank.names = std::move(names);
  bank.default_alpha = alpha;
  bank.provenance = std::move(provenance);
  bank.vectors.resize(static_cast<Index>(vectors.size()), d);
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    require(vectors[k].size() == d, ErrorCode::dimension, "persona vectors differ in length");
    bank.vectors.row(static_cast<Index>(k)) = vectors[k].transpose().cast<float>();
  }
  validate(bank);
  return bank;
}

}  // namespace polylogue::personas
