#pragma once

#include "polylogue/cli.hpp"
#include "polylogue/trace_store.hpp"

#include <filesystem>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

/// The whole command-line pipeline on a synthetic corpus, run in-process.
namespace pipeline {

namespace fs = std::filesystem;

struct Config {
  int seed = 7;
  int traces = 120;
  int hidden = 32;
  int target_bin = 3;
  int target_persona = 5;
};

struct Step {
  std::string name;  // subcommand plus a tag when it repeats
  std::vector<std::string> args;
};

/// Judge readouts for tune-select: layer 12, alpha 4 has the best trait and
/// coherence mix; layer 8 prompts are discarded for low numeric mass.
inline std::string grid_jsonl() {
  auto row = [](int layer, double alpha, const char* id, int trait, int coherence, double mass) {
    return "{\"layer\":" + std::to_string(layer) + ",\"alpha\":" + polylogue::store::format_double(alpha) +
           ",\"prompt_id\":\"" + id + "\",\"trait_logits\":{\"" + std::to_string(trait) +
           "\":0},\"coherence_logits\":{\"" + std::to_string(coherence) +
           "\":0},\"numeric_mass_trait\":" + polylogue::store::format_double(mass) +
           ",\"numeric_mass_coherence\":0.9}\n";
  };
  return row(8, 2, "a", 99, 99, 0.1) + row(8, 2, "b", 99, 99, 0.1) + row(12, 2, "a", 60, 90, 0.9) +
         row(12, 2, "b", 50, 80, 0.9) + row(12, 4, "a", 85, 80, 0.9) + row(12, 4, "b", 90, 70, 0.9) +
         row(16, 4, "a", 95, 20, 0.9) + row(16, 4, "b", 97, 10, 0.9);
}

/// Every subcommand once (fit three times: features, random baseline and
/// activation baseline). Writes the tuning grid under `root` as a side effect.
inline std::vector<Step> steps(const fs::path& root, const Config& c = {}) {
  fs::create_directories(root);
  polylogue::store::write_file_atomic(root / "grid.jsonl", grid_jsonl());
  const auto p = [&](const char* rel) { return (root / rel).string(); };
  const std::string dataset = p("synth/dataset");
  return {
      {"synth",
       {"synth", "--seed", std::to_string(c.seed), "--out", p("synth"), "--traces", std::to_string(c.traces),
        "--hidden", std::to_string(c.hidden), "--target-bin", std::to_string(c.target_bin), "--target-persona",
        std::to_string(c.target_persona)}},
      {"extract-personas",
       {"extract-personas", "--manifest", p("synth/extraction/manifest.json"), "--out", p("bank"), "--registry-out",
        p("personas.json")}},
      {"project", {"project", "--bank", p("bank"), "--traces", dataset, "--out", p("projected")}},
      {"whiten", {"whiten", "--input", p("projected"), "--out", p("whitened")}},
      {"mrr", {"mrr", "--bank", p("bank"), "--traces", dataset, "--model", "synthetic", "--out", p("mrr.json")}},
      {"features", {"features", "--bank", p("bank"), "--traces", dataset, "--out", p("features.csv")}},
      {"fit",
       {"fit", "--features", p("features.csv"), "--out", p("model.json"), "--report", p("cv.json"), "--c-min",
        "1e-3", "--c-max", "10", "--c-count", "5"}},
      {"coeffs", {"coeffs", "--model", p("model.json"), "--out", p("coeffs.csv")}},
      {"derive-strategy",
       {"derive-strategy", "--model", p("model.json"), "--bank", p("bank"), "--features-meta",
        p("features.csv.meta.json"), "--out", p("schedule.json")}},
      {"steer-sim",
       {"steer-sim", "--trace", p("synth/dataset/synth-0000"), "--bank", p("bank"), "--schedule", p("schedule.json"),
        "--out", p("steered"), "--mask-log", p("masks.jsonl")}},
      {"tune-select", {"tune-select", "--grid", p("grid.jsonl"), "--model", "synthetic", "--out", p("selection.json")}},
      {"plot-data", {"plot-data", "--bank", p("bank"), "--traces", dataset, "--out-prefix", p("plot/fig")}},
      {"features-random",
       {"features", "--bank", p("bank"), "--traces", dataset, "--random-seed", "3", "--out", p("random.csv")}},
      {"fit-random",
       {"fit", "--features", p("random.csv"), "--out", p("random_model.json"), "--report", p("random_cv.json"),
        "--c-min", "1e-3", "--c-max", "10", "--c-count", "5"}},
      {"fit-activation",
       {"fit", "--activation-baseline", "--traces", dataset, "--pca-components", "8", "--out",
        p("activation_model.json"), "--report", p("activation_cv.json"), "--c-min", "1e-3", "--c-max", "1",
        "--c-count", "3"}},
  };
}

struct Result {
  std::string name;
  int code = -1;
  std::string err;
};

/// Runs the steps in order; stops after the first non-zero exit.
inline std::vector<Result> run(const std::vector<Step>& all) {
  std::vector<Result> out;
  for (const auto& s : all) {
    std::ostringstream o, e;
    const int code = polylogue::cli::run(s.args, o, e);
    out.push_back({s.name, code, e.str()});
    if (code != 0) break;
  }
  return out;
}

/// Relative path -> bytes for every regular file under `dir`.
inline std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file())
      files[fs::relative(entry.path(), dir).generic_string()] = polylogue::store::read_file(entry.path());
  return files;
}

/// Output files each step is responsible for (relative to the root).
inline std::vector<std::string> outputs_of(const std::string& step) {
  static const std::map<std::string, std::vector<std::string>> table{
      {"synth", {"synth/plant.json", "synth/bank_true/bank.json", "synth/extraction/manifest.json",
                 "synth/dataset/synth-0000/activations.bin"}},
      {"extract-personas", {"bank/bank.json", "bank/vectors.bin", "personas.json"}},
      {"project", {"projected/synth-0000.json", "projected/synth-0000.bin"}},
      {"whiten", {"whitened/whitening.json", "whitened/synth-0000.bin"}},
      {"mrr", {"mrr.json"}},
      {"features", {"features.csv", "features.csv.meta.json"}},
      {"fit", {"model.json", "cv.json"}},
      {"coeffs", {"coeffs.csv"}},
      {"derive-strategy", {"schedule.json"}},
      {"steer-sim", {"steered/activations.bin", "steered/meta.json", "masks.jsonl"}},
      {"tune-select", {"selection.json"}},
      {"plot-data", {"plot/fig_similarity.csv", "plot/fig_labels.csv"}},
      {"features-random", {"random.csv", "random.csv.meta.json"}},
      {"fit-random", {"random_model.json", "random_cv.json"}},
      {"fit-activation", {"activation_model.json", "activation_cv.json"}},
  };
  return table.at(step);
}

}  // namespace pipeline
