#include "polylogue/cli.hpp"

#include "cli_commands.hpp"
#include "polylogue/error.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>

namespace polylogue::cli {

namespace {

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::config:
      return kExitUsage;
    case ErrorCode::numeric:
      return kExitNumeric;
    default:
      return kExitData;
  }
}

void add_threads(CLI::App* sub, unsigned& threads) {
  sub->add_option("--threads", threads, "worker cap (0 = hardware concurrency)");
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"polylogue: persona alignment monitoring, evaluation and steering", "polylogue"};
  app.set_config("--config", "", "TOML file with flag values; command-line flags win");
  app.require_subcommand(1);
  app.fallthrough();

  std::function<int()> action;

  ExtractOptions extract;
  {
    auto* s = app.add_subcommand("extract-personas", "difference-of-means persona bank from Y+/Y- traces");
    s->add_option("--manifest", extract.manifest, "JSON manifest of positive/negative trace paths");
    s->add_option("--out", extract.out, "bank bundle directory");
    s->add_option("--registry-out", extract.registry_out, "also write personas.json here");
    add_threads(s, extract.threads);
    s->callback([&] {
      if (extract.manifest.empty() && extract.registry_out.empty())
        throw CLI::RequiredError("--manifest or --registry-out");
      if (!extract.manifest.empty() && extract.out.empty()) throw CLI::RequiredError("--out");
      action = [&] { return cmd_extract(extract, err); };
    });
  }

  ProjectOptions project;
  {
    auto* s = app.add_subcommand("project", "K x T alignment matrices per trace");
    s->add_option("--bank", project.bank)->required();
    s->add_option("--traces", project.traces, "trace bundles or directories of bundles")->required();
    s->add_option("--out", project.out)->required();
    add_threads(s, project.threads);
    s->callback([&] { action = [&] { return cmd_project(project, err); }; });
  }

  WhitenOptions whiten;
  {
    auto* s = app.add_subcommand("whiten", "fit and apply shrinkage whitening to projected matrices");
    s->add_option("--input", whiten.input, "directory written by project")->required();
    s->add_option("--out", whiten.out)->required();
    s->add_option("--lambda", whiten.lambda)->check(CLI::Range(0.0, 1.0));
    s->add_option("--eig-floor", whiten.eig_floor)->check(CLI::PositiveNumber);
    s->callback([&] { action = [&] { return cmd_whiten(whiten, err); }; });
  }

  MrrOptions mrr;
  {
    auto* s = app.add_subcommand("mrr", "paragraph ranking MRR with random and frequency baselines");
    s->add_option("--bank", mrr.bank);
    s->add_option("--traces", mrr.traces);
    s->add_option("--labels", mrr.labels, "JSON {trace_id: [[paragraph, persona], ...]}");
    s->add_option("--model", mrr.model);
    s->add_option("--lambda", mrr.lambda)->check(CLI::Range(0.0, 1.0));
    s->add_flag("--raw", mrr.raw, "rank raw instead of whitened scores");
    s->add_option("--out", mrr.out);
    add_threads(s, mrr.threads);
    s->callback([&] {
      // A bad label file is a data error even when other flags are missing.
      if (!mrr.labels.empty()) check_label_file(mrr.labels);
      if (mrr.bank.empty()) throw CLI::RequiredError("--bank");
      if (mrr.traces.empty()) throw CLI::RequiredError("--traces");
      if (mrr.out.empty()) throw CLI::RequiredError("--out");
      action = [&] { return cmd_mrr(mrr, err); };
    });
  }

  FeaturesOptions features;
  {
    auto* s = app.add_subcommand("features", "per-trace feature rows as CSV");
    s->add_option("--bank", features.bank)->required();
    s->add_option("--traces", features.traces)->required();
    s->add_option("--out", features.out)->required();
    s->add_option("--nb", features.n_bins)->check(CLI::PositiveNumber);
    s->add_option("--random-seed", features.random_seed, "replace the bank by seeded random unit vectors");
    add_threads(s, features.threads);
    s->callback([&] { action = [&] { return cmd_features(features, err); }; });
  }

  FitOptions fit;
  {
    auto* s = app.add_subcommand("fit", "nested-CV L1 logistic regression");
    s->add_option("--features", fit.features);
    s->add_flag("--activation-baseline", fit.activation_baseline, "PCA of last-token states instead of features");
    s->add_option("--traces", fit.traces);
    s->add_option("--pca-components", fit.pca_components)->check(CLI::PositiveNumber);
    s->add_option("--out", fit.out)->required();
    s->add_option("--report", fit.report)->required();
    s->add_option("--seed", fit.seed);
    s->add_option("--model", fit.model);
    s->add_option("--condition", fit.condition);
    s->add_option("--outer-folds", fit.outer)->check(CLI::Range(2, 1000));
    s->add_option("--inner-folds", fit.inner)->check(CLI::Range(2, 1000));
    s->add_option("--c-min", fit.c_min)->check(CLI::PositiveNumber);
    s->add_option("--c-max", fit.c_max)->check(CLI::PositiveNumber);
    s->add_option("--c-count", fit.c_count)->check(CLI::PositiveNumber);
    add_threads(s, fit.threads);
    s->callback([&] {
      if (fit.activation_baseline == fit.traces.empty())
        throw CLI::ValidationError("--activation-baseline", "requires --traces (and --traces requires it)");
      if (!fit.activation_baseline && fit.features.empty()) throw CLI::RequiredError("--features");
      if (fit.c_min > fit.c_max) throw CLI::ValidationError("--c-min", "must not exceed --c-max");
      action = [&] { return cmd_fit(fit, err); };
    });
  }

  CoeffsOptions coeffs;
  {
    auto* s = app.add_subcommand("coeffs", "ranked non-zero coefficients as CSV");
    s->add_option("--model", coeffs.model)->required();
    s->add_option("--out", coeffs.out)->required();
    s->add_option("--top", coeffs.top, "keep the first N rows (0 = all)")->check(CLI::NonNegativeNumber);
    s->callback([&] { action = [&] { return cmd_coeffs(coeffs, err); }; });
  }

  StrategyOptions strategy;
  {
    auto* s = app.add_subcommand("derive-strategy", "steering schedule from the top paragraph coefficients");
    s->add_option("--model", strategy.model)->required();
    s->add_option("--bank", strategy.bank)->required();
    s->add_option("--features-meta", strategy.features_meta, "sidecar written by features");
    s->add_option("--median-paragraphs", strategy.median_paragraphs);
    s->add_option("--nb", strategy.n_bins);
    s->add_option("--top-k", strategy.top_k);
    s->add_option("--alpha", strategy.alpha)->check(CLI::PositiveNumber);
    s->add_option("--out", strategy.out)->required();
    s->callback([&] { action = [&] { return cmd_strategy(strategy, err); }; });
  }

  SteerOptions steer;
  {
    auto* s = app.add_subcommand("steer-sim", "replay a stored trace under a schedule");
    s->add_option("--trace", steer.trace)->required();
    s->add_option("--bank", steer.bank)->required();
    s->add_option("--schedule", steer.schedule)->required();
    s->add_option("--out", steer.out, "steered trace bundle")->required();
    s->add_option("--mask-log", steer.mask_log, "default: <out>/masks.jsonl");
    s->callback([&] { action = [&] { return cmd_steer(steer, err); }; });
  }

  TuneOptions tune;
  {
    auto* s = app.add_subcommand("tune-select", "pick (layer, alpha) from judge readouts");
    s->add_option("--grid", tune.grid)->required();
    s->add_option("--model", tune.model);
    s->add_option("--beta", tune.beta)->check(CLI::Range(0.0, 1.0));
    s->add_option("--tau", tune.tau)->check(CLI::Range(0.0, 1.0));
    s->add_option("--out", tune.out)->required();
    s->callback([&] { action = [&] { return cmd_tune(tune, err); }; });
  }

  SynthOptions synth;
  {
    auto* s = app.add_subcommand("synth", "planted synthetic bank, extraction set and dataset");
    s->add_option("--seed", synth.seed)->required();
    s->add_option("--out", synth.out)->required();
    s->add_option("--traces", synth.traces)->check(CLI::PositiveNumber);
    s->add_option("--hidden", synth.hidden)->check(CLI::PositiveNumber);
    s->add_option("--gain", synth.gain)->check(CLI::PositiveNumber);
    s->add_option("--noise", synth.noise)->check(CLI::NonNegativeNumber);
    s->add_option("--min-paragraphs", synth.min_paragraphs)->check(CLI::PositiveNumber);
    s->add_option("--max-paragraphs", synth.max_paragraphs)->check(CLI::PositiveNumber);
    s->add_option("--nb", synth.n_bins)->check(CLI::PositiveNumber);
    s->add_option("--target-bin", synth.target_bin)->check(CLI::NonNegativeNumber);
    s->add_option("--target-persona", synth.target_persona)->check(CLI::NonNegativeNumber);
    s->add_option("--responses", synth.responses)->check(CLI::PositiveNumber);
    s->add_option("--layer", synth.layer)->check(CLI::NonNegativeNumber);
    s->add_option("--alpha", synth.alpha)->check(CLI::PositiveNumber);
    s->callback([&] { action = [&] { return cmd_synth(synth, err); }; });
  }

  PlotOptions plot;
  {
    auto* s = app.add_subcommand("plot-data", "progress-binned similarity and label CSVs");
    s->add_option("--bank", plot.bank)->required();
    s->add_option("--traces", plot.traces)->required();
    s->add_option("--out-prefix", plot.out_prefix)->required();
    s->add_option("--bins", plot.bins)->check(CLI::PositiveNumber);
    add_threads(s, plot.threads);
    s->callback([&] { action = [&] { return cmd_plot(plot, err); }; });
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return exit_code(e.code());
  }

  try {
    return action();
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

int run(std::span<const std::string> args) { return run(args, std::cout, std::cerr); }

}  // namespace polylogue::cli
