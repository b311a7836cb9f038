#include "cli_commands.hpp"

#include "polylogue/cli.hpp"
#include "polylogue/parallel.hpp"
#include "polylogue/persona_registry.hpp"
#include "polylogue/polylogue_core.hpp"
#include "polylogue/ranking_eval.hpp"
#include "polylogue/sparse_learn.hpp"
#include "polylogue/steering_engine.hpp"
#include "polylogue/synth_oracle.hpp"
#include "polylogue/trace_store.hpp"
#include "polylogue/tuning.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <thread>

namespace polylogue::cli {

namespace {

using json = nlohmann::ordered_json;

unsigned worker_count(unsigned requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json parse_json_file(const fs::path& file) {
  const std::string text = store::read_file(file);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::format, file.string() + ": " + e.what());
  }
}

void check_id(const std::string& id) {
  require(!id.empty() && id.find('/') == std::string::npos && id != "." && id != "..",
          ErrorCode::validation, "trace id '" + id + "' cannot name a file");
}

std::vector<ActivationTrace> load_traces(const std::vector<fs::path>& paths, unsigned threads) {
  const auto bundles = store::collect_bundles(paths);
  require(!bundles.empty(), ErrorCode::empty_input, "no trace bundles found");
  std::vector<ActivationTrace> traces(bundles.size());
  parallel_for(bundles.size(), worker_count(threads),
               [&](std::size_t i) { traces[i] = store::load_trace(bundles[i]); });
  std::set<std::string> seen;
  for (const auto& t : traces) {
    check_id(t.trace_id);
    require(seen.insert(t.trace_id).second, ErrorCode::consistency, "duplicate trace id '" + t.trace_id + "'");
  }
  return traces;
}

void check_compatible(const ActivationTrace& trace, const PersonaBank& bank) {
  require(trace.hidden_size() == bank.hidden_size(), ErrorCode::dimension,
          trace.trace_id + ": hidden size " + std::to_string(trace.hidden_size()) + " differs from bank d=" +
              std::to_string(bank.hidden_size()));
  require(trace.layer == bank.layer, ErrorCode::consistency,
          trace.trace_id + ": layer " + std::to_string(trace.layer) + " differs from bank layer " +
              std::to_string(bank.layer));
}

std::vector<PolylogueMatrix> project_all(const std::vector<ActivationTrace>& traces, const PersonaBank& bank,
                                         unsigned threads) {
  for (const auto& t : traces) check_compatible(t, bank);
  std::vector<PolylogueMatrix> out(traces.size());
  parallel_for(traces.size(), worker_count(threads), [&](std::size_t i) { out[i] = project(traces[i], bank); });
  return out;
}

std::string csv_number(double v) { return store::format_double(v); }

}  // namespace

// ---------------------------------------------------------------------------

int cmd_extract(const ExtractOptions& o, std::ostream& err) {
  if (!o.registry_out.empty()) store::write_file_atomic(o.registry_out, personas::registry_json());
  if (o.manifest.empty()) return kExitOk;

  const json manifest = parse_json_file(o.manifest);
  const fs::path base = o.manifest.parent_path();
  int layer = 0;
  double alpha = 1.0;
  std::vector<std::string> names;
  std::vector<VectorXd> vectors;
  std::string provenance = "difference of post-marker response means;";
  try {
    layer = manifest.at("layer").get<int>();
    alpha = manifest.value("alpha", 1.0);
    const auto& entries = manifest.at("personas");
    require(entries.is_array() && !entries.empty(), ErrorCode::validation, "manifest lists no personas");
    for (const auto& entry : entries) {
      auto paths = [&](const char* key) {
        std::vector<fs::path> out;
        for (const auto& p : entry.at(key)) out.push_back(base / p.get<std::string>());
        return out;
      };
      const std::string name = entry.at("name").get<std::string>();
      const auto pos = load_traces(paths("positive"), o.threads);
      const auto neg = load_traces(paths("negative"), o.threads);
      for (const auto* group : {&pos, &neg})
        for (const auto& t : *group) {
          require(t.layer == layer, ErrorCode::consistency,
                  t.trace_id + ": layer " + std::to_string(t.layer) + " differs from manifest layer");
          require(t.hidden_size() == pos.front().hidden_size(), ErrorCode::dimension,
                  t.trace_id + ": hidden size differs from the other responses");
        }
      const auto dir = personas::extract_persona_vector({pos, neg});
      if (dir.degenerate) err << "warning: persona '" << name << "' extracted a degenerate vector\n";
      names.push_back(name);
      vectors.push_back(dir.vector);
      provenance += " " + name + " +" + std::to_string(pos.size()) + "/-" + std::to_string(neg.size()) + ";";
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::format, o.manifest.string() + ": " + e.what());
  }
  if (manifest.contains("provenance")) provenance = manifest["provenance"].get<std::string>() + " " + provenance;
  const PersonaBank bank = personas::build_bank(vectors, layer, alpha, provenance, names);
  store::persist_bank(bank, o.out);
  return kExitOk;
}

int cmd_project(const ProjectOptions& o, std::ostream&) {
  const PersonaBank bank = store::load_bank(o.bank);
  const auto traces = load_traces(o.traces, o.threads);
  const auto matrices = project_all(traces, bank, o.threads);
  parallel_for(matrices.size(), worker_count(o.threads), [&](std::size_t i) {
    store::persist_polylogue({matrices[i].trace_id, bank.names, false, matrices[i].scores.cast<float>()},
                             o.out / matrices[i].trace_id);
  });
  return kExitOk;
}

int cmd_whiten(const WhitenOptions& o, std::ostream&) {
  std::vector<fs::path> stems;
  require(fs::is_directory(o.input), ErrorCode::io, o.input.string() + " is not a directory");
  for (const auto& entry : fs::directory_iterator(o.input)) {
    const fs::path p = entry.path();
    if (p.extension() != ".json" || p.filename() == "whitening.json") continue;
    fs::path bin = p;
    bin.replace_extension(".bin");
    if (fs::exists(bin)) stems.push_back(p.parent_path() / p.stem());
  }
  std::sort(stems.begin(), stems.end());
  require(!stems.empty(), ErrorCode::empty_input, "no polylogue matrices in " + o.input.string());

  std::vector<store::PolylogueExport> exports;
  std::vector<PolylogueMatrix> matrices;
  for (const auto& stem : stems) {
    exports.push_back(store::load_polylogue(stem));
    require(exports.back().personas == exports.front().personas, ErrorCode::consistency,
            stem.string() + ": persona names differ from " + stems.front().string());
    require(!exports.back().whitened, ErrorCode::validation, stem.string() + " is already whitened");
    matrices.push_back({exports.back().trace_id, exports.back().scores.cast<double>(), false});
  }
  const WhiteningModel model = fit_whitening(pool_projections(matrices), o.lambda, o.eig_floor);

  json j;
  j["magic"] = "PLYW1";
  j["lambda"] = model.lambda;
  j["eig_floor"] = model.eig_floor;
  j["personas"] = exports.front().personas;
  j["mu"] = std::vector<double>(model.mu.data(), model.mu.data() + model.mu.size());
  json W = json::array();
  for (Index r = 0; r < model.W.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(model.W.cols()));
    for (Index c = 0; c < model.W.cols(); ++c) row[static_cast<std::size_t>(c)] = model.W(r, c);
    W.push_back(row);
  }
  j["W"] = W;
  store::write_file_atomic(o.out / "whitening.json", dump(j));
  for (std::size_t i = 0; i < matrices.size(); ++i) {
    const auto w = apply_whitening(model, matrices[i]);
    store::persist_polylogue({w.trace_id, exports[i].personas, true, w.scores.cast<float>()},
                             o.out / stems[i].filename());
  }
  return kExitOk;
}

void check_label_file(const fs::path& file) {
  require(fs::is_regular_file(file), ErrorCode::validation, file.string() + ": label file not found");
  const std::string text = store::read_file(file);
  require(text.find_first_not_of(" \t\r\n") != std::string::npos, ErrorCode::validation,
          file.string() + ": label file is empty");
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::format, file.string() + ": " + e.what());
  }
  require(j.is_object(), ErrorCode::format, file.string() + ": expected {trace_id: [[paragraph, persona], ...]}");
  bool any = false;
  for (const auto& [id, pairs] : j.items()) any = any || (pairs.is_array() && !pairs.empty());
  require(any, ErrorCode::validation, file.string() + ": label file holds no labels");
}

namespace {

std::map<std::string, std::vector<ParagraphLabel>> load_label_file(const fs::path& file,
                                                                   const PersonaBank& bank) {
  check_label_file(file);
  const std::string text = store::read_file(file);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::format, file.string() + ": " + e.what());
  }
  require(j.is_object(), ErrorCode::format, file.string() + ": expected {trace_id: [[paragraph, persona], ...]}");
  std::map<std::string, std::vector<ParagraphLabel>> out;
  std::size_t total = 0;
  for (const auto& [id, pairs] : j.items()) {
    require(pairs.is_array(), ErrorCode::format, file.string() + ": labels of '" + id + "' must be an array");
    auto& labels = out[id];
    for (const auto& pair : pairs) {
      require(pair.is_array() && pair.size() == 2 && pair[0].is_number_integer(), ErrorCode::format,
              file.string() + ": each label is [paragraph, persona]");
      int persona = -1;
      if (pair[1].is_string()) {
        const auto it = std::find(bank.names.begin(), bank.names.end(), pair[1].get<std::string>());
        require(it != bank.names.end(), ErrorCode::validation,
                file.string() + ": unknown persona '" + pair[1].get<std::string>() + "'");
        persona = static_cast<int>(it - bank.names.begin());
      } else {
        require(pair[1].is_number_integer(), ErrorCode::format, file.string() + ": persona must be int or name");
        persona = pair[1].get<int>();
      }
      require(persona >= 0 && persona < bank.num_personas(), ErrorCode::validation,
              file.string() + ": persona index outside the bank");
      labels.push_back({pair[0].get<int>(), persona});
    }
    total += labels.size();
  }
  require(total > 0, ErrorCode::validation, file.string() + ": no paragraph labels");
  return out;
}

}  // namespace

int cmd_mrr(const MrrOptions& o, std::ostream&) {
  const PersonaBank bank = store::load_bank(o.bank);
  std::optional<std::map<std::string, std::vector<ParagraphLabel>>> overrides;
  if (!o.labels.empty()) overrides = load_label_file(o.labels, bank);
  auto traces = load_traces(o.traces, o.threads);
  if (overrides) {
    std::set<std::string> ids;
    for (auto& t : traces) {
      ids.insert(t.trace_id);
      if (auto it = overrides->find(t.trace_id); it != overrides->end()) {
        t.paragraph_labels = it->second;
        validate(t);
      }
    }
    for (const auto& [id, _] : *overrides)
      require(ids.count(id) == 1, ErrorCode::consistency, "labels name unknown trace '" + id + "'");
  }

  auto matrices = project_all(traces, bank, o.threads);
  if (!o.raw) {
    const WhiteningModel model = fit_whitening(pool_projections(matrices), o.lambda);
    for (auto& m : matrices) m = apply_whitening(model, m);
  }
  std::vector<ranking::ParagraphRanking> rankings;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto seg = segment_paragraphs(traces[i]);
    auto r = ranking::rank_paragraphs(matrices[i], seg, traces[i]);
    rankings.insert(rankings.end(), r.begin(), r.end());
  }
  require(!rankings.empty(), ErrorCode::empty_input, "no labelled non-empty paragraphs to rank");
  std::vector<int> labels;
  for (const auto& r : rankings) labels.push_back(r.label);

  ranking::MrrReport row;
  row.model = o.model;
  row.random = ranking::mrr_random(static_cast<int>(bank.num_personas()));
  row.frequency = ranking::mrr_frequency(labels, static_cast<int>(bank.num_personas()));
  row.polylogue = ranking::mrr(rankings);
  row.paragraphs = rankings.size();
  store::write_file_atomic(o.out, ranking::report_json(std::span(&row, 1)));
  return kExitOk;
}

int cmd_features(const FeaturesOptions& o, std::ostream&) {
  PersonaBank bank = store::load_bank(o.bank);
  if (o.random_seed) {
    PersonaBank random;
    random.layer = bank.layer;
    random.default_alpha = bank.default_alpha;
    for (Index k = 0; k < bank.num_personas(); ++k) random.names.push_back("random_" + std::to_string(k));
    random.vectors = learn::random_unit_vectors(bank.num_personas(), bank.hidden_size(), *o.random_seed)
                         .cast<float>();
    random.provenance = "random unit vectors, seed " + std::to_string(*o.random_seed);
    bank = std::move(random);
  }
  const auto traces = load_traces(o.traces, o.threads);
  for (const auto& t : traces) check_compatible(t, bank);

  std::vector<FeatureRow> rows(traces.size());
  std::vector<int> counts(traces.size());
  const FeatureConfig config{o.n_bins};
  parallel_for(traces.size(), worker_count(o.threads), [&](std::size_t i) {
    rows[i] = trace_features(traces[i], bank, config);
    counts[i] = segment_paragraphs(traces[i]).count();
  });
  store::persist_features(rows, o.out);

  json meta;
  meta["magic"] = "PLYF1";
  meta["n_bins"] = o.n_bins;
  meta["personas"] = bank.names;
  meta["feature_names"] = feature_names(bank.names, o.n_bins);
  meta["bank_provenance"] = bank.provenance;
  meta["condition"] = o.random_seed ? "random" : "polylogue";
  meta["paragraph_counts"] = counts;
  meta["median_paragraphs"] = steering::median_paragraph_count(counts);
  fs::path sidecar = o.out;
  sidecar += ".meta.json";
  store::write_file_atomic(sidecar, dump(meta));
  return kExitOk;
}

int cmd_fit(const FitOptions& o, std::ostream& err) {
  MatrixXd X;
  std::vector<int> labels;
  std::vector<std::string> names;
  std::string layout;
  std::string condition = o.condition;

  if (o.activation_baseline) {
    const auto traces = load_traces(o.traces, o.threads);
    const Index d = traces.front().hidden_size();
    MatrixXd last(static_cast<Index>(traces.size()), d);
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const auto& t = traces[i];
      require(t.hidden_size() == d, ErrorCode::dimension, t.trace_id + ": hidden size differs");
      require(t.correct.has_value(), ErrorCode::validation, t.trace_id + ": missing correctness label");
      last.row(static_cast<Index>(i)) = t.activations.row(t.num_tokens() - 1).cast<double>();
      labels.push_back(*t.correct ? 1 : 0);
    }
    const learn::PcaModel pca = learn::pca_fit(last, o.pca_components);
    if (pca.truncated())
      err << "warning: PCA truncated to " << pca.components.rows() << " of " << o.pca_components
          << " components\n";
    X = learn::pca_apply(pca, last);
    for (Index m = 0; m < X.cols(); ++m) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "pc%03d", static_cast<int>(m));
      names.emplace_back(buf);
    }
    json l;
    l["condition"] = "activation";
    l["pca_requested"] = o.pca_components;
    l["pca_components"] = X.cols();
    l["hidden_size"] = d;
    layout = l.dump();
    if (condition.empty()) condition = "activation";
  } else {
    const auto rows = store::load_features(o.features);
    require(!rows.empty(), ErrorCode::empty_input, o.features.string() + " has no rows");
    const std::size_t D = rows.front().values.size();
    X.resize(static_cast<Index>(rows.size()), static_cast<Index>(D));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      require(rows[i].label.has_value(), ErrorCode::validation, rows[i].trace_id + ": missing label");
      require(rows[i].values.size() == D, ErrorCode::dimension, rows[i].trace_id + ": ragged feature row");
      for (std::size_t j = 0; j < D; ++j) X(static_cast<Index>(i), static_cast<Index>(j)) = rows[i].values[j];
      labels.push_back(*rows[i].label ? 1 : 0);
    }
    fs::path sidecar = o.features;
    sidecar += ".meta.json";
    if (fs::exists(sidecar)) {
      const json meta = parse_json_file(sidecar);
      names = meta.at("feature_names").get<std::vector<std::string>>();
      require(names.size() == D, ErrorCode::consistency, sidecar.string() + ": feature name count differs from CSV");
      layout = meta.dump();
      if (condition.empty()) condition = meta.value("condition", "polylogue");
    } else {
      names = store::feature_column_names(D);
      if (condition.empty()) condition = "polylogue";
    }
  }
  require(X.allFinite(), ErrorCode::numeric, "feature matrix has non-finite values");

  learn::CvOptions cv;
  cv.outer_folds = o.outer;
  cv.inner_folds = o.inner;
  cv.c_grid = learn::log_grid(o.c_min, o.c_max, o.c_count);
  cv.seed = o.seed;
  cv.threads = worker_count(o.threads);
  const auto [fitted, report] = learn::cv_fit(X, labels, cv);

  double positives = 0;
  for (int y : labels) positives += y;
  const double percent = 100.0 * positives / static_cast<double>(labels.size());
  store::write_file_atomic(o.out, learn::classifier_json(fitted, names, layout));
  store::write_file_atomic(o.report, learn::cv_report_json(report, o.model, condition, percent));
  if (!fitted.model.converged) {
    err << "error: final refit did not converge within " << fitted.model.sweeps << " sweeps\n";
    return kExitNumeric;
  }
  return kExitOk;
}

int cmd_coeffs(const CoeffsOptions& o, std::ostream&) {
  const auto loaded = learn::parse_classifier(store::read_file(o.model));
  auto ranked = learn::ranked_coefficients(loaded.fitted.model.weights, loaded.names);
  if (o.top > 0 && static_cast<std::size_t>(o.top) < ranked.size()) ranked.resize(static_cast<std::size_t>(o.top));
  store::write_file_atomic(o.out, learn::coefficients_csv(ranked));
  return kExitOk;
}

int cmd_strategy(const StrategyOptions& o, std::ostream& err) {
  const auto loaded = learn::parse_classifier(store::read_file(o.model));
  PersonaBank bank = store::load_bank(o.bank);
  json meta = json::object();
  if (!o.features_meta.empty()) {
    meta = parse_json_file(o.features_meta);
  } else if (!loaded.layout_json.empty()) {
    meta = json::parse(loaded.layout_json);
  }
  if (meta.contains("personas"))
    require(meta["personas"].get<std::vector<std::string>>() == bank.names, ErrorCode::consistency,
            "model personas differ from the bank's");

  steering::StrategyConfig config;
  config.top_k = o.top_k;
  config.n_bins = o.n_bins.value_or(meta.value("n_bins", 20));
  if (o.median_paragraphs) {
    config.median_paragraphs = *o.median_paragraphs;
  } else if (meta.contains("median_paragraphs")) {
    config.median_paragraphs = meta["median_paragraphs"].get<int>();
  } else {
    fail(ErrorCode::config, "median paragraph count unknown: pass --median-paragraphs or --features-meta");
  }
  if (o.alpha) bank.default_alpha = *o.alpha;
  const SteeringSchedule schedule = steering::derive_strategy(loaded.fitted.model, config, bank);
  if (schedule.rules.empty()) err << "warning: no non-zero paragraph coefficients; schedule is empty\n";
  store::persist_schedule(schedule, o.out);
  return kExitOk;
}

int cmd_steer(const SteerOptions& o, std::ostream&) {
  const ActivationTrace trace = store::load_trace(o.trace);
  const PersonaBank bank = store::load_bank(o.bank);
  const SteeringSchedule schedule = store::load_schedule(o.schedule);
  require(schedule.layer == bank.layer, ErrorCode::consistency, "schedule layer differs from bank layer");
  check_compatible(trace, bank);
  std::vector<steering::MaskStep> masks;
  const ActivationTrace steered = steering::steer_trace(trace, schedule, bank, &masks);
  store::persist_trace(steered, o.out);
  const fs::path log = o.mask_log.empty() ? o.out / "masks.jsonl" : o.mask_log;
  store::write_file_atomic(log, steering::mask_log_jsonl(masks));
  return kExitOk;
}

int cmd_tune(const TuneOptions& o, std::ostream&) {
  require(o.beta > 0 && o.beta < 1, ErrorCode::config, "--beta must lie in (0, 1)");
  const auto grid = tuning::parse_grid_jsonl(store::read_file(o.grid), o.tau, o.beta);
  store::write_file_atomic(o.out, tuning::selection_json(tuning::select_config(grid), o.model));
  return kExitOk;
}

int cmd_synth(const SynthOptions& o, std::ostream&) {
  const int K = static_cast<int>(personas::kNumPersonas);
  require(o.target_persona < K, ErrorCode::config, "--target-persona must be < " + std::to_string(K));
  require(o.target_bin < o.n_bins, ErrorCode::config, "--target-bin must be < --nb");
  require(o.min_paragraphs <= o.max_paragraphs, ErrorCode::config, "--min-paragraphs exceeds --max-paragraphs");

  const PersonaBank bank = synth::gen_bank(K, o.hidden, synth::derive_seed(o.seed, 0), o.layer, o.alpha);
  store::persist_bank(bank, o.out / "bank_true");

  synth::ExtractionSpec es;
  es.seed = synth::derive_seed(o.seed, 1);
  es.responses = o.responses;
  es.gain = o.gain;
  es.noise = o.noise;
  json manifest;
  manifest["layer"] = o.layer;
  manifest["alpha"] = o.alpha;
  manifest["provenance"] = "synthetic extraction set, seed " + std::to_string(o.seed) + ";";
  json entries = json::array();
  const fs::path ext = o.out / "extraction";
  for (int k = 0; k < K; ++k) {
    const auto set = synth::gen_extraction(es, bank, k);
    const std::string& name = bank.names[static_cast<std::size_t>(k)];
    for (const auto& t : set.positive) store::persist_trace(t, ext / name / "pos" / t.trace_id);
    for (const auto& t : set.negative) store::persist_trace(t, ext / name / "neg" / t.trace_id);
    json e;
    e["name"] = name;
    e["positive"] = json::array({name + "/pos"});
    e["negative"] = json::array({name + "/neg"});
    entries.push_back(e);
  }
  manifest["personas"] = entries;
  store::write_file_atomic(ext / "manifest.json", dump(manifest));

  synth::DatasetSpec ds;
  ds.seed = synth::derive_seed(o.seed, 2);
  ds.num_traces = o.traces;
  ds.gain = o.gain;
  ds.noise = o.noise;
  ds.min_paragraphs = o.min_paragraphs;
  ds.max_paragraphs = o.max_paragraphs;
  ds.n_bins = o.n_bins;
  ds.target_bin = o.target_bin;
  ds.target_persona = o.target_persona;
  const auto traces = synth::gen_dataset(ds, bank);
  int positives = 0;
  for (const auto& t : traces) {
    store::persist_trace(t, o.out / "dataset" / t.trace_id);
    positives += t.correct.value_or(false) ? 1 : 0;
  }

  json plant;
  plant["seed"] = o.seed;
  plant["num_personas"] = K;
  plant["hidden_size"] = o.hidden;
  plant["layer"] = o.layer;
  plant["gain"] = o.gain;
  plant["noise"] = o.noise;
  plant["n_bins"] = o.n_bins;
  plant["target_bin"] = o.target_bin;
  plant["target_persona"] = o.target_persona;
  plant["target_name"] = bank.names[static_cast<std::size_t>(o.target_persona)];
  plant["num_traces"] = o.traces;
  plant["positives"] = positives;
  plant["responses_per_condition"] = o.responses;
  store::write_file_atomic(o.out / "plant.json", dump(plant));
  return kExitOk;
}

int cmd_plot(const PlotOptions& o, std::ostream&) {
  const PersonaBank bank = store::load_bank(o.bank);
  const auto traces = load_traces(o.traces, o.threads);
  const auto matrices = project_all(traces, bank, o.threads);
  const Index K = bank.num_personas();
  const int B = o.bins;

  // Mean similarity per normalised-position bin, then softmax over personas.
  MatrixXd sums = MatrixXd::Zero(K, B);
  std::vector<Index> tokens(static_cast<std::size_t>(B), 0);
  for (const auto& m : matrices) {
    const Index T = m.num_tokens();
    for (Index t = 0; t < T; ++t) {
      const auto b = static_cast<std::size_t>(std::min<Index>(t * B / T, B - 1));
      sums.col(static_cast<Index>(b)) += m.scores.col(t);
      ++tokens[b];
    }
  }
  std::string sim = "progress_bin,persona,value\n";
  for (int b = 0; b < B; ++b) {
    if (tokens[static_cast<std::size_t>(b)] == 0) continue;
    const VectorXd mean = sums.col(b) / static_cast<double>(tokens[static_cast<std::size_t>(b)]);
    const VectorXd e = (mean.array() - mean.maxCoeff()).exp();
    const VectorXd soft = e / e.sum();
    for (Index k = 0; k < K; ++k)
      sim += std::to_string(b) + "," + bank.names[static_cast<std::size_t>(k)] + "," + csv_number(soft(k)) + "\n";
  }

  // Paragraph-label share per progress bin.
  MatrixXd counts = MatrixXd::Zero(K, B);
  for (const auto& t : traces) {
    if (!t.paragraph_labels) continue;
    const int P = segment_paragraphs(t).count();
    const auto bins = bin_paragraphs(P, B);
    for (const auto& l : *t.paragraph_labels) {
      if (l.paragraph < 0 || l.paragraph >= P || l.persona < 0 || l.persona >= K) continue;
      counts(l.persona, bins[static_cast<std::size_t>(l.paragraph)]) += 1;
    }
  }
  std::string lab = "progress_bin,persona,fraction\n";
  for (int b = 0; b < B; ++b) {
    const double total = counts.col(b).sum();
    if (total == 0) continue;
    for (Index k = 0; k < K; ++k)
      lab += std::to_string(b) + "," + bank.names[static_cast<std::size_t>(k)] + "," +
             csv_number(counts(k, b) / total) + "\n";
  }

  fs::path sim_path = o.out_prefix, lab_path = o.out_prefix;
  sim_path += "_similarity.csv";
  lab_path += "_labels.csv";
  store::write_file_atomic(sim_path, sim);
  store::write_file_atomic(lab_path, lab);
  return kExitOk;
}

}  // namespace polylogue::cli
