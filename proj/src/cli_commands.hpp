#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace polylogue::cli {

namespace fs = std::filesystem;

struct ExtractOptions {
  fs::path manifest;
  fs::path out;
  fs::path registry_out;
  unsigned threads = 0;
};

struct ProjectOptions {
  fs::path bank;
  std::vector<fs::path> traces;
  fs::path out;
  unsigned threads = 0;
};

struct WhitenOptions {
  fs::path input;
  fs::path out;
  double lambda = 0.05;
  std::optional<double> eig_floor;
};

struct MrrOptions {
  fs::path bank;
  std::vector<fs::path> traces;
  fs::path labels;
  std::string model = "model";
  double lambda = 0.05;
  bool raw = false;
  fs::path out;
  unsigned threads = 0;
};

struct FeaturesOptions {
  fs::path bank;
  std::vector<fs::path> traces;
  fs::path out;
  int n_bins = 20;
  std::optional<std::uint64_t> random_seed;
  unsigned threads = 0;
};

struct FitOptions {
  fs::path features;
  bool activation_baseline = false;
  std::vector<fs::path> traces;
  int pca_components = 128;
  fs::path out;
  fs::path report;
  std::uint64_t seed = 0;
  std::string model = "model";
  std::string condition;
  int outer = 5;
  int inner = 5;
  double c_min = 1e-4;
  double c_max = 1e4;
  int c_count = 10;
  unsigned threads = 0;
};

struct CoeffsOptions {
  fs::path model;
  fs::path out;
  int top = 0;
};

struct StrategyOptions {
  fs::path model;
  fs::path bank;
  fs::path features_meta;
  std::optional<int> median_paragraphs;
  std::optional<int> n_bins;
  int top_k = 5;
  std::optional<double> alpha;
  fs::path out;
};

struct SteerOptions {
  fs::path trace;
  fs::path bank;
  fs::path schedule;
  fs::path out;
  fs::path mask_log;
};

struct TuneOptions {
  fs::path grid;
  std::string model = "model";
  double beta = 0.7;
  double tau = 0.25;
  fs::path out;
};

struct SynthOptions {
  std::uint64_t seed = 0;
  fs::path out;
  int traces = 200;
  int hidden = 64;
  double gain = 1.0;
  double noise = 0.1;
  int min_paragraphs = 20;
  int max_paragraphs = 20;
  int n_bins = 20;
  int target_bin = 3;
  int target_persona = 5;
  int responses = 20;
  int layer = 12;
  double alpha = 4.0;
};

struct PlotOptions {
  fs::path bank;
  std::vector<fs::path> traces;
  fs::path out_prefix;
  int bins = 20;
  unsigned threads = 0;
};

/// Validation error when the file is missing or blank.
void check_label_file(const fs::path& file);

int cmd_extract(const ExtractOptions& o, std::ostream& err);
int cmd_project(const ProjectOptions& o, std::ostream& err);
int cmd_whiten(const WhitenOptions& o, std::ostream& err);
int cmd_mrr(const MrrOptions& o, std::ostream& err);
int cmd_features(const FeaturesOptions& o, std::ostream& err);
int cmd_fit(const FitOptions& o, std::ostream& err);
int cmd_coeffs(const CoeffsOptions& o, std::ostream& err);
int cmd_strategy(const StrategyOptions& o, std::ostream& err);
int cmd_steer(const SteerOptions& o, std::ostream& err);
int cmd_tune(const TuneOptions& o, std::ostream& err);
int cmd_synth(const SynthOptions& o, std::ostream& err);
int cmd_plot(const PlotOptions& o, std::ostream& err);

}  // namespace polylogue::cli
