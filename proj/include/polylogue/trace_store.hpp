#pragma once

#include "polylogue/types.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Bundle layouts
//
//   trace bundle (directory)     meta.json, activations.bin, tokens.jsonl
//   bank bundle (directory)      bank.json, vectors.bin
//   schedule                     schedule.json
//   feature matrix               CSV, header "trace_id,label,f000,f001,..."
//   polylogue matrix             <stem>.json header + <stem>.bin (K x T, f32 LE)
//
// Every matrix payload is raw little-endian IEEE-754 f32, row-major. JSON keys
// are written in a fixed order so that persisting a value twice yields
// identical bytes.

namespace polylogue::store {

namespace fs = std::filesystem;

inline constexpr std::string_view kTraceMagic = "PLYG1";
inline constexpr std::string_view kBankMagic = "PLYB1";
inline constexpr std::string_view kScheduleMagic = "PLYS1";
inline constexpr std::string_view kPolylogueMagic = "PLYP1";

void persist_trace(const ActivationTrace& trace, const fs::path& dir);
ActivationTrace load_trace(const fs::path& dir);

void persist_bank(const PersonaBank& bank, const fs::path& dir);
PersonaBank load_bank(const fs::path& dir);

void persist_schedule(const SteeringSchedule& schedule, const fs::path& file);
SteeringSchedule load_schedule(const fs::path& file);
std::string serialize_schedule(const SteeringSchedule& schedule);
SteeringSchedule parse_schedule(std::string_view text);

/// Column names f000..f{n-1}.
std::vector<std::string> feature_column_names(std::size_t n);
void persist_features(std::span<const FeatureRow> rows, const fs::path& file);
std::vector<FeatureRow> load_features(const fs::path& file);

/// K x T polylogue scores as written by `project` / `whiten`.
struct PolylogueExport {
  std::string trace_id;
  std::vector<std::string> personas;
  bool whitened = false;
  RowMatrix<float> scores;
};
void persist_polylogue(const PolylogueExport& matrix, const fs::path& stem);
PolylogueExport load_polylogue(const fs::path& stem);

bool bitwise_equal(const ActivationTrace& a, const ActivationTrace& b);
bool bitwise_equal(const PersonaBank& a, const PersonaBank& b);

/// Expands each path: a bundle directory (has meta.json) is taken as is; any
/// other directory contributes its immediate bundle subdirectories in sorted
/// order.
std::vector<fs::path> collect_bundles(std::span<const fs::path> paths);

/// Writes via a sibling temp file and rename.
void write_file_atomic(const fs::path& file, std::string_view bytes);
std::string read_file(const fs::path& file);

/// Shortest round-trip decimal form.
std::string format_double(double value);

}  // namespace polylogue::store
