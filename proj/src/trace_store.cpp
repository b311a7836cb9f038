#include "polylogue/trace_store.hpp"

#include "polylogue/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <system_error>

namespace polylogue {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::format: return "format error";
    case ErrorCode::dimension: return "dimension error";
    case ErrorCode::incomplete_bundle: return "incomplete bundle";
    case ErrorCode::consistency: return "consistency error";
    case ErrorCode::validation: return "validation error";
    case ErrorCode::degenerate_trace: return "degenerate trace";
    case ErrorCode::degenerate_persona: return "degenerate persona";
    case ErrorCode::degenerate_label: return "degenerate labels";
    case ErrorCode::insufficient_data: return "insufficient data";
    case ErrorCode::empty_input: return "empty input";
    case ErrorCode::config: return "configuration error";
    case ErrorCode::no_valid_config: return "no valid configuration";
    case ErrorCode::numeric: return "numeric error";
    case ErrorCode::io: return "i/o error";
  }
  return "error";
}

std::optional<int> ActivationTrace::label_of(int paragraph) const {
  if (!paragraph_labels) return std::nullopt;
  for (const auto& l : *paragraph_labels)
    if (l.paragraph == paragraph) return l.persona;
  return std::nullopt;
}

void validate(const ActivationTrace& trace) {
  const Index T = trace.num_tokens();
  require(T >= 1, ErrorCode::validation, "trace '" + trace.trace_id + "' has no tokens");
  require(trace.hidden_size() >= 1, ErrorCode::validation, "trace hidden_size must be >= 1");
  require(trace.layer >= 0, ErrorCode::validation, "trace layer must be >= 0");
  require(static_cast<Index>(trace.tokens.size()) == T, ErrorCode::dimension,
          "trace '" + trace.trace_id + "': " + std::to_string(trace.tokens.size()) +
              " token texts for " + std::to_string(T) + " activation rows");
  require(trace.response_start >= 0 && trace.response_start < T, ErrorCode::validation,
          "response_start outside [0, T)");
  if (trace.paragraph_labels) {
    std::set<int> seen;
    for (const auto& l : *trace.paragraph_labels) {
      require(l.paragraph >= 0 && l.persona >= 0, ErrorCode::validation,
              "negative paragraph label index");
      require(seen.insert(l.paragraph).second, ErrorCode::validation,
              "duplicate paragraph_index " + std::to_string(l.paragraph));
    }
  }
}

bool PersonaBank::degenerate(Index k) const {
  return vectors.row(k).cast<double>().norm() < kDegenerateNorm;
}

bool PersonaBank::any_degenerate() const {
  for (Index k = 0; k < num_personas(); ++k)
    if (degenerate(k)) return true;
  return false;
}

void validate(const PersonaBank& bank) {
  const Index K = bank.num_personas();
  require(K >= 1, ErrorCode::validation, "bank has no personas");
  require(bank.hidden_size() >= 1, ErrorCode::validation, "bank hidden_size must be >= 1");
  require(static_cast<Index>(bank.names.size()) == K, ErrorCode::consistency,
          std::to_string(bank.names.size()) + " persona names for K=" + std::to_string(K));
  std::set<std::string> unique(bank.names.begin(), bank.names.end());
  require(unique.size() == bank.names.size(), ErrorCode::consistency, "persona names not unique");
  require(std::isfinite(bank.default_alpha) && bank.default_alpha > 0, ErrorCode::validation,
          "default_alpha must be finite and > 0");
  require(bank.vectors.allFinite(), ErrorCode::numeric, "bank vectors contain non-finite values");
}

void validate(const SteeringSchedule& schedule, Index num_personas) {
  require(schedule.layer >= 0, ErrorCode::validation, "schedule layer must be >= 0");
  require(std::isfinite(schedule.alpha) && schedule.alpha > 0, ErrorCode::validation,
          "schedule alpha must be finite and > 0");
  for (const auto& r : schedule.rules) {
    require(r.start >= 1 && r.start <= r.end, ErrorCode::validation,
            "rule paragraph range " + std::to_string(r.start) + "-" + std::to_string(r.end) +
                " is not 1 <= start <= end");
    require(r.direction == 1 || r.direction == -1, ErrorCode::validation,
            "rule direction must be -1 or +1, got " + std::to_string(r.direction));
    require(r.persona >= 0, ErrorCode::validation, "negative persona index");
    if (num_personas >= 0)
      require(r.persona < num_personas, ErrorCode::validation,
              "rule persona " + std::to_string(r.persona) + " outside bank");
  }
}

namespace store {
namespace {

using ordered_json = nlohmann::ordered_json;
using json = nlohmann::json;

json parse_json(std::string_view text, const fs::path& origin) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::format, origin.string() + ": " + e.what());
  }
}

template <typename T>
T get_field(const json& j, const char* key, const fs::path& origin) {
  if (!j.is_object() || !j.contains(key))
    fail(ErrorCode::format, origin.string() + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::format, origin.string() + ": key '" + key + "': " + e.what());
  }
}

void check_magic(const json& j, std::string_view magic, const fs::path& origin) {
  const auto found = get_field<std::string>(j, "magic", origin);
  require(found == magic, ErrorCode::format,
          origin.string() + ": bad magic '" + found + "', expected '" + std::string(magic) + "'");
}

fs::path member(const fs::path& dir, const char* name) {
  fs::path p = dir / name;
  require(fs::is_regular_file(p), ErrorCode::incomplete_bundle,
          "bundle " + dir.string() + " is missing " + name);
  return p;
}

std::string encode_f32(const float* data, std::size_t count) {
  std::string bytes(count * sizeof(float), '\0');
  std::memcpy(bytes.data(), data, bytes.size());
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < bytes.size(); i += 4) std::reverse(&bytes[i], &bytes[i] + 4);
  }
  return bytes;
}

RowMatrix<float> decode_f32(std::string bytes, Index rows, Index cols, const fs::path& origin) {
  const std::size_t expected = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * 4;
  require(bytes.size() == expected, ErrorCode::dimension,
          origin.string() + ": payload has " + std::to_string(bytes.size()) + " bytes (" +
              std::to_string(bytes.size() / 4) + " floats), declared " + std::to_string(rows) +
              "x" + std::to_string(cols) + " needs " + std::to_string(expected));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < bytes.size(); i += 4) std::reverse(&bytes[i], &bytes[i] + 4);
  }
  RowMatrix<float> m(rows, cols);
  if (expected > 0) std::memcpy(m.data(), bytes.data(), expected);
  return m;
}

std::string dump(const ordered_json& j) {
  try {
    return j.dump(2) + "\n";
  } catch (const json::exception& e) {
    fail(ErrorCode::validation, std::string("cannot serialize: ") + e.what());
  }
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) fail(ErrorCode::numeric, "cannot format double");
  return std::string(buf, ptr);
}

void write_file_atomic(const fs::path& file, std::string_view bytes) {
  std::error_code ec;
  if (file.has_parent_path()) fs::create_directories(file.parent_path(), ec);
  fs::path tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::io, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorCode::io, "write failed: " + tmp.string());
  }
  fs::rename(tmp, file, ec);
  require(!ec, ErrorCode::io, "rename to " + file.string() + " failed: " + ec.message());
}

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

// --- trace bundles ---------------------------------------------------------

void persist_trace(const ActivationTrace& trace, const fs::path& dir) {
  validate(trace);
  ordered_json meta;
  meta["magic"] = kTraceMagic;
  meta["trace_id"] = trace.trace_id;
  meta["model_id"] = trace.model_id;
  meta["layer"] = trace.layer;
  meta["hidden_size"] = trace.hidden_size();
  meta["num_tokens"] = trace.num_tokens();
  meta["response_start"] = trace.response_start;
  meta["dtype"] = "f32le";
  meta["correct"] = trace.correct ? ordered_json(*trace.correct) : ordered_json(nullptr);
  if (trace.paragraph_labels) {
    ordered_json labels = ordered_json::array();
    for (const auto& l : *trace.paragraph_labels) labels.push_back({l.paragraph, l.persona});
    meta["paragraph_labels"] = std::move(labels);
  } else {
    meta["paragraph_labels"] = nullptr;
  }

  std::string tokens;
  for (std::size_t t = 0; t < trace.tokens.size(); ++t) {
    ordered_json line;
    line["t"] = t;
    line["text"] = trace.tokens[t];
    try {
      tokens += line.dump() + "\n";
    } catch (const json::exception& e) {
      fail(ErrorCode::validation, "token " + std::to_string(t) + ": " + e.what());
    }
  }

  fs::create_directories(dir);
  write_file_atomic(dir / "activations.bin",
                    encode_f32(trace.activations.data(), trace.activations.size()));
  write_file_atomic(dir / "tokens.jsonl", tokens);
  write_file_atomic(dir / "meta.json", dump(meta));
}

ActivationTrace load_trace(const fs::path& dir) {
  const fs::path meta_path = member(dir, "meta.json");
  const json meta = parse_json(read_file(meta_path), meta_path);
  check_magic(meta, kTraceMagic, meta_path);
  require(get_field<std::string>(meta, "dtype", meta_path) == "f32le", ErrorCode::format,
          meta_path.string() + ": unsupported dtype");
  const fs::path act_path = member(dir, "activations.bin");
  const fs::path tok_path = member(dir, "tokens.jsonl");

  ActivationTrace trace;
  trace.trace_id = get_field<std::string>(meta, "trace_id", meta_path);
  trace.model_id = get_field<std::string>(meta, "model_id", meta_path);
  trace.layer = get_field<int>(meta, "layer", meta_path);
  const auto d = get_field<std::int64_t>(meta, "hidden_size", meta_path);
  const auto T = get_field<std::int64_t>(meta, "num_tokens", meta_path);
  trace.response_start = get_field<std::int64_t>(meta, "response_start", meta_path);
  require(d >= 1 && T >= 1, ErrorCode::dimension, meta_path.string() + ": T and d must be >= 1");

  if (!meta.contains("correct")) fail(ErrorCode::format, meta_path.string() + ": missing key 'correct'");
  if (!meta["correct"].is_null()) trace.correct = get_field<bool>(meta, "correct", meta_path);
  if (!meta.contains("paragraph_labels"))
    fail(ErrorCode::format, meta_path.string() + ": missing key 'paragraph_labels'");
  if (!meta["paragraph_labels"].is_null()) {
    const auto pairs = get_field<std::vector<std::array<int, 2>>>(meta, "paragraph_labels", meta_path);
    std::vector<ParagraphLabel> labels;
    labels.reserve(pairs.size());
    for (const auto& p : pairs) labels.push_back({p[0], p[1]});
    trace.paragraph_labels = std::move(labels);
  }

  trace.activations = decode_f32(read_file(act_path), T, d, act_path);

  std::istringstream lines(read_file(tok_path));
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const json j = parse_json(line, tok_path);
    const auto t = get_field<std::int64_t>(j, "t", tok_path);
    require(t == static_cast<std::int64_t>(trace.tokens.size()), ErrorCode::format,
            tok_path.string() + ": token index " + std::to_string(t) + " out of sequence");
    trace.tokens.push_back(get_field<std::string>(j, "text", tok_path));
  }
  validate(trace);
  return trace;
}

// --- persona banks -------------------------------------------------------

void persist_bank(const PersonaBank& bank, const fs::path& dir) {
  validate(bank);
  ordered_json meta;
  meta["magic"] = kBankMagic;
  meta["layer"] = bank.layer;
  meta["num_personas"] = bank.num_personas();
  meta["hidden_size"] = bank.hidden_size();
  meta["names"] = bank.names;
  meta["default_alpha"] = bank.default_alpha;
  meta["provenance"] = bank.provenance;
  fs::create_directories(dir);
  write_file_atomic(dir / "vectors.bin", encode_f32(bank.vectors.data(), bank.vectors.size()));
  write_file_atomic(dir / "bank.json", dump(meta));
}

PersonaBank load_bank(const fs::path& dir) {
  const fs::path meta_path = member(dir, "bank.json");
  const json meta = parse_json(read_file(meta_path), meta_path);
  check_magic(meta, kBankMagic, meta_path);
  const fs::path vec_path = member(dir, "vectors.bin");

  PersonaBank bank;
  bank.layer = get_field<int>(meta, "layer", meta_path);
  const auto K = get_field<std::int64_t>(meta, "num_personas", meta_path);
  const auto d = get_field<std::int64_t>(meta, "hidden_size", meta_path);
  bank.names = get_field<std::vector<std::string>>(meta, "names", meta_path);
  bank.default_alpha = get_field<double>(meta, "default_alpha", meta_path);
  bank.provenance = get_field<std::string>(meta, "provenance", meta_path);
  require(K >= 1 && d >= 1, ErrorCode::dimension, meta_path.string() + ": K and d must be >= 1");
  require(static_cast<std::int64_t>(bank.names.size()) == K, ErrorCode::consistency,
          meta_path.string() + ": " + std::to_string(bank.names.size()) + " names for K=" +
              std::to_string(K));
  bank.vectors = decode_f32(read_file(vec_path), K, d, vec_path);
  validate(bank);
  return bank;
}

// --- schedules -------------------------------------------------------------

std::string serialize_schedule(const SteeringSchedule& schedule) {
  validate(schedule);
  ordered_json j;
  j["magic"] = kScheduleMagic;
  j["layer"] = schedule.layer;
  j["alpha"] = schedule.alpha;
  ordered_json rules = ordered_json::array();
  for (const auto& r : schedule.rules) {
    ordered_json rule;
    rule["persona"] = r.persona;
    rule["start"] = r.start;
    rule["end"] = r.end;
    rule["direction"] = r.direction;
    rules.push_back(std::move(rule));
  }
  j["rules"] = std::move(rules);
  return dump(j);
}

SteeringSchedule parse_schedule(std::string_view text) {
  const fs::path origin = "schedule.json";
  const json j = parse_json(text, origin);
  check_magic(j, kScheduleMagic, origin);
  SteeringSchedule s;
  s.layer = get_field<int>(j, "layer", origin);
  s.alpha = get_field<double>(j, "alpha", origin);
  const auto rules = get_field<json>(j, "rules", origin);
  require(rules.is_array(), ErrorCode::format, "schedule rules must be an array");
  for (const auto& r : rules) {
    s.rules.push_back({get_field<int>(r, "persona", origin), get_field<int>(r, "start", origin),
                       get_field<int>(r, "end", origin), get_field<int>(r, "direction", origin)});
  }
  validate(s);
  return s;
}

void persist_schedule(const SteeringSchedule& schedule, const fs::path& file) {
  write_file_atomic(file, serialize_schedule(schedule));
}

SteeringSchedule load_schedule(const fs::path& file) {
  require(fs::is_regular_file(file), ErrorCode::incomplete_bundle, "missing " + file.string());
  return parse_schedule(read_file(file));
}

// --- feature CSV ---------------------------------------------------------

std::vector<std::string> feature_column_names(std::size_t n) {
  std::vector<std::string> names;
  names.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "f%03zu", i);
    names.emplace_back(buf);
  }
  return names;
}

void persist_features(std::span<const FeatureRow> rows, const fs::path& file) {
  const std::size_t width = rows.empty() ? 0 : rows.front().values.size();
  std::string out = "trace_id,label";
  for (const auto& name : feature_column_names(width)) out += "," + name;
  out += "\n";
  for (const auto& row : rows) {
    require(row.values.size() == width, ErrorCode::dimension,
            "feature row '" + row.trace_id + "' has inconsistent width");
    require(row.trace_id.find_first_of(",\"\r\n") == std::string::npos, ErrorCode::validation,
            "trace_id '" + row.trace_id + "' cannot be written to CSV");
    out += row.trace_id;
    out += ',';
    if (row.label) out += *row.label ? '1' : '0';
    for (double v : row.values) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  write_file_atomic(file, out);
}

std::vector<FeatureRow> load_features(const fs::path& file) {
  std::istringstream in(read_file(file));
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::format, file.string() + ": empty file");
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      auto pos = s.find(',', start);
      cells.push_back(s.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    return cells;
  };
  const auto header = split(line);
  require(header.size() >= 2 && header[0] == "trace_id" && header[1] == "label", ErrorCode::format,
          file.string() + ": header must start with trace_id,label");
  const auto expected = feature_column_names(header.size() - 2);
  require(std::equal(expected.begin(), expected.end(), header.begin() + 2), ErrorCode::format,
          file.string() + ": feature columns must be f000..");

  std::vector<FeatureRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    require(cells.size() == header.size(), ErrorCode::dimension,
            file.string() + ":" + std::to_string(line_no) + ": wrong number of cells");
    FeatureRow row;
    row.trace_id = cells[0];
    if (cells[1] == "1") row.label = true;
    else if (cells[1] == "0") row.label = false;
    else require(cells[1].empty(), ErrorCode::format, file.string() + ": label must be 0, 1 or empty");
    row.values.reserve(cells.size() - 2);
    for (std::size_t c = 2; c < cells.size(); ++c) {
      double v = 0;
      const auto& cell = cells[c];
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      require(ec == std::errc{} && ptr == cell.data() + cell.size(), ErrorCode::format,
              file.string() + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
      row.values.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// --- polylogue matrices ----------------------------------------------------

void persist_polylogue(const PolylogueExport& matrix, const fs::path& stem) {
  require(static_cast<Index>(matrix.personas.size()) == matrix.scores.rows(), ErrorCode::consistency,
          "polylogue export persona count mismatch");
  ordered_json meta;
  meta["magic"] = kPolylogueMagic;
  meta["trace_id"] = matrix.trace_id;
  meta["num_personas"] = matrix.scores.rows();
  meta["num_tokens"] = matrix.scores.cols();
  meta["whitened"] = matrix.whitened;
  meta["dtype"] = "f32le";
  meta["personas"] = matrix.personas;
  fs::path bin = stem, header = stem;
  bin += ".bin";
  header += ".json";
  write_file_atomic(bin, encode_f32(matrix.scores.data(), matrix.scores.size()));
  write_file_atomic(header, dump(meta));
}

PolylogueExport load_polylogue(const fs::path& stem) {
  fs::path bin = stem, header = stem;
  bin += ".bin";
  header += ".json";
  require(fs::is_regular_file(header) && fs::is_regular_file(bin), ErrorCode::incomplete_bundle,
          "missing polylogue matrix files for " + stem.string());
  const json meta = parse_json(read_file(header), header);
  check_magic(meta, kPolylogueMagic, header);
  PolylogueExport m;
  m.trace_id = get_field<std::string>(meta, "trace_id", header);
  m.whitened = get_field<bool>(meta, "whitened", header);
  m.personas = get_field<std::vector<std::string>>(meta, "personas", header);
  const auto K = get_field<std::int64_t>(meta, "num_personas", header);
  const auto T = get_field<std::int64_t>(meta, "num_tokens", header);
  require(static_cast<std::int64_t>(m.personas.size()) == K, ErrorCode::consistency,
          header.string() + ": persona names do not match num_personas");
  m.scores = decode_f32(read_file(bin), K, T, bin);
  return m;
}

// --- misc --------------------------------------------------------------------

bool bitwise_equal(const ActivationTrace& a, const ActivationTrace& b) {
  if (a.trace_id != b.trace_id || a.model_id != b.model_id || a.layer != b.layer ||
      a.response_start != b.response_start || a.tokens != b.tokens || a.correct != b.correct ||
      a.paragraph_labels != b.paragraph_labels)
    return false;
  if (a.activations.rows() != b.activations.rows() || a.activations.cols() != b.activations.cols())
    return false;
  return std::memcmp(a.activations.data(), b.activations.data(),
                     sizeof(float) * static_cast<std::size_t>(a.activations.size())) == 0;
}

bool bitwise_equal(const PersonaBank& a, const PersonaBank& b) {
  if (a.layer != b.layer || a.names != b.names || a.provenance != b.provenance ||
      std::memcmp(&a.default_alpha, &b.default_alpha, sizeof(double)) != 0)
    return false;
  if (a.vectors.rows() != b.vectors.rows() || a.vectors.cols() != b.vectors.cols()) return false;
  return std::memcmp(a.vectors.data(), b.vectors.data(),
                     sizeof(float) * static_cast<std::size_t>(a.vectors.size())) == 0;
}

std::vector<fs::path> collect_bundles(std::span<const fs::path> paths) {
  std::vector<fs::path> out;
  for (const auto& p : paths) {
    require(fs::exists(p), ErrorCode::io, "no such path: " + p.string());
    if (fs::is_regular_file(p / "meta.json")) {
      out.push_back(p);
      continue;
    }
    require(fs::is_directory(p), ErrorCode::format, p.string() + " is not a trace bundle directory");
    std::vector<fs::path> children;
    for (const auto& entry : fs::directory_iterator(p))
      if (entry.is_directory() && fs::is_regular_file(entry.path() / "meta.json"))
        children.push_back(entry.path());
    std::sort(children.begin(), children.end());
    out.insert(out.end(), children.begin(), children.end());
  }
  return out;
}

}  // namespace store
}  // namespace polylogue
