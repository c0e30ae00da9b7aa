#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sescore/sescore.hpp"

namespace sescore::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kBackend = 3 };

namespace detail {

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

inline std::vector<std::size_t> parse_dims(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& item : split_csv(s)) {
    try {
      out.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw UsageError("bad dimension list '" + s + "'");
    }
  }
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

inline std::ofstream open_out(const std::string& path, bool append = false) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

/// Gateway flags shared by every subcommand that talks to a model backend.
struct GatewayFlags {
  GatewayConfig defaults;
  std::string provider = defaults.provider;
  std::string base_url = defaults.base_url;
  int timeout_ms = defaults.timeout_ms;
  std::uint64_t mock_seed = defaults.mock_seed;
  std::string lexicon = defaults.lexicon_path;
  std::size_t embed_dim = defaults.embed_dim;
  std::vector<CLI::Option*> opts;

  void add_to(CLI::App& app) {
    opts.push_back(app.add_option("--provider", provider, "Model backend")->check(CLI::IsMember({"mock", "remote"})));
    opts.push_back(app.add_option("--base-url", base_url, "Sidecar base URL (remote provider)"));
    opts.push_back(app.add_option("--timeout-ms", timeout_ms, "Remote request timeout in ms"));
    opts.push_back(app.add_option("--mock-seed", mock_seed, "Seed of the mock provider"));
    opts.push_back(app.add_option("--lexicon", lexicon, "Mock lexicon TSV (word<TAB>weight); empty: built-in"));
    opts.push_back(app.add_option("--embed-dim", embed_dim, "Mock embedding dimension"));
  }

  GatewayConfig apply(GatewayConfig g) const {
    if (opts[0]->count()) g.provider = provider;
    if (opts[1]->count()) g.base_url = base_url;
    if (opts[2]->count()) g.timeout_ms = timeout_ms;
    if (opts[3]->count()) g.mock_seed = mock_seed;
    if (opts[4]->count()) g.lexicon_path = lexicon;
    if (opts[5]->count()) g.embed_dim = embed_dim;
    return g;
  }
};

inline std::string checkpoint_path(const std::string& output) { return output + ".checkpoint"; }

}  // namespace detail

/// Runs one CLI invocation. args excludes the program name. Diagnostics go to
/// `err`; data goes to files or `out`.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Stratified error synthesis, severity scoring, quality regression and correlation evaluation",
               "sescore"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  std::string config_path;

  // synth ------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Generate <ref, cand, score> triples from raw sentences");
  std::string synth_input, synth_output, synth_params, synth_stats;
  std::uint64_t synth_seed = 0;
  std::string synth_severity = "full";
  std::size_t synth_workers = 1;
  bool synth_resume = false;
  double synth_gamma = SeverityParams{}.gamma;
  synth->add_option("--input", synth_input, "Raw text, one sentence per line")->required();
  synth->add_option("--output", synth_output, "Output JSONL file")->required();
  auto* synth_seed_opt = synth->add_option("--seed", synth_seed, "Global seed");
  synth->add_option("--params", synth_params, "Synthesis params JSON");
  synth->add_option("--config", config_path, "Full run config JSON");
  auto* synth_sev_opt = synth->add_option("--severity", synth_severity, "Severity mode")
                            ->check(CLI::IsMember({"full", "minor-only", "off"}));
  auto* synth_gamma_opt = synth->add_option("--gamma", synth_gamma, "Entailment threshold");
  auto* synth_workers_opt = synth->add_option("--workers", synth_workers, "Worker threads")->check(CLI::PositiveNumber);
  synth->add_option("--stats", synth_stats, "Write corpus statistics JSON here");
  synth->add_flag("--resume", synth_resume, "Continue from <output>.checkpoint after a backend failure");
  detail::GatewayFlags synth_gw;
  synth_gw.add_to(*synth);

  // validate ---------------------------------------------------------------
  auto* validate = app.add_subcommand("validate", "Re-check score accounting and bounds of a triples file");
  std::string validate_input;
  std::size_t validate_mmax = SynthesisParams{}.m_max;
  int validate_severe = SeverityParams{}.severe_penalty;
  validate->add_option("--input", validate_input, "Triples JSONL")->required();
  validate->add_option("--m-max", validate_mmax, "Maximum edits per chain");
  validate->add_option("--severe-penalty", validate_severe, "Most negative per-step severity");

  // train ------------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "Train the quality regressor on triples");
  std::string train_triples, train_out, train_log, train_hidden = "2048,1024";
  RegressorConfig rdef;
  std::size_t train_epochs = rdef.epochs, train_batch = rdef.batch_size, train_max_steps = rdef.max_steps;
  double train_lr = rdef.lr, train_dropout = rdef.dropout;
  std::uint64_t train_seed = rdef.seed;
  bool train_scale = rdef.scale_targets;
  train_cmd->add_option("--triples", train_triples, "Triples JSONL")->required();
  train_cmd->add_option("--out", train_out, "Checkpoint output path")->required();
  train_cmd->add_option("--config", config_path, "Run config JSON (regressor and gateway sections)");
  auto* t_hidden = train_cmd->add_option("--hidden", train_hidden, "Hidden layer widths, comma separated");
  auto* t_epochs = train_cmd->add_option("--epochs", train_epochs, "Training epochs");
  auto* t_batch = train_cmd->add_option("--batch-size", train_batch, "Minibatch size");
  auto* t_lr = train_cmd->add_option("--lr", train_lr, "Adam learning rate");
  auto* t_dropout = train_cmd->add_option("--dropout", train_dropout, "Dropout rate");
  auto* t_steps = train_cmd->add_option("--max-steps", train_max_steps, "Stop after this many steps (0: no cap)");
  auto* t_seed = train_cmd->add_option("--seed", train_seed, "Init and shuffling seed");
  auto* t_scale = train_cmd->add_flag("--scale-targets", train_scale, "Train on scores mapped to [0,1]");
  train_cmd->add_option("--log", train_log, "Write the training log JSON here");
  detail::GatewayFlags train_gw;
  train_gw.add_to(*train_cmd);

  // predict ----------------------------------------------------------------
  auto* predict_cmd = app.add_subcommand("predict", "Score candidates against references with a checkpoint");
  std::string p_ckpt, p_ref, p_cand, p_out;
  predict_cmd->add_option("--ckpt", p_ckpt, "Checkpoint file")->required();
  predict_cmd->add_option("--ref-file", p_ref, "References, one per line")->required();
  predict_cmd->add_option("--cand-file", p_cand, "Candidates, one per line")->required();
  predict_cmd->add_option("--out", p_out, "Scores output, one %.6f value per line")->required();
  detail::GatewayFlags predict_gw;
  predict_gw.add_to(*predict_cmd);

  // eval -------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Correlate metric scores with human judgments");
  std::string e_mode, e_input, e_ties = "discordant", e_metric = "metric", e_metric_a = "metric_a",
                                e_metric_b = "metric_b", e_aspects, e_report, e_level = "segment";
  double e_threshold = 0.0;
  std::size_t e_resamples = 1000;
  std::uint64_t e_seed = 0;
  eval_cmd->add_option("mode", e_mode, "kendall, pearson or compare")
      ->required()
      ->check(CLI::IsMember({"kendall", "pearson", "compare"}));
  eval_cmd->add_option("--input", e_input, "TSV with header")->required();
  eval_cmd->add_option("--threshold", e_threshold, "Minimum human score gap for a ranked pair");
  eval_cmd->add_option("--ties", e_ties, "Metric ties in Kendall")->check(CLI::IsMember({"discordant", "drop"}));
  eval_cmd->add_option("--metric", e_metric, "Metric column");
  eval_cmd->add_option("--metric-a", e_metric_a, "First metric column (compare)");
  eval_cmd->add_option("--metric-b", e_metric_b, "Second metric column (compare)");
  eval_cmd->add_option("--aspects", e_aspects, "Average these human columns instead of 'human'");
  eval_cmd->add_option("--level", e_level, "compare: resample segments or systems")
      ->check(CLI::IsMember({"segment", "system"}));
  eval_cmd->add_option("--resamples", e_resamples, "Bootstrap resamples (>= 100)");
  eval_cmd->add_option("--seed", e_seed, "Bootstrap seed");
  eval_cmd->add_option("--report", e_report, "Write a JSON report here");

  // protocol-check ---------------------------------------------------------
  auto* check_cmd = app.add_subcommand("protocol-check", "Check that the model backend offers the needed capabilities");
  std::string check_require = "fill_mask,infill,entail,embed";
  check_cmd->add_option("--config", config_path, "Run config JSON (gateway section)");
  check_cmd->add_option("--require", check_require, "Capabilities that must be present");
  detail::GatewayFlags check_gw;
  check_gw.add_to(*check_cmd);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kUsage;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = run_config_from_json(read_json_file(config_path));

    if (*synth) {
      if (!synth_params.empty()) cfg.synthesis = synthesis_params_from_json(read_json_file(synth_params), cfg.synthesis);
      if (synth_seed_opt->count()) cfg.seed = synth_seed;
      if (synth_sev_opt->count()) cfg.severity.mode = parse_severity_mode(synth_severity);
      if (synth_gamma_opt->count()) cfg.severity.gamma = synth_gamma;
      if (synth_workers_opt->count()) cfg.workers = synth_workers;
      cfg.gateway = synth_gw.apply(cfg.gateway);
      cfg.synthesis.validate();
      cfg.severity.validate();

      auto provider = make_provider(cfg.gateway);
      SynthesisOptions opt;
      opt.params = cfg.synthesis;
      opt.severity = cfg.severity;
      opt.global_seed = cfg.seed;
      opt.workers = cfg.workers;
      opt.warnings = &err;
      opt.progress = &err;
      const std::string ckpt = detail::checkpoint_path(synth_output);
      if (synth_resume && std::filesystem::exists(ckpt)) {
        const auto j = read_json_file(ckpt);
        opt.start_index = j.at("next_index").get<std::size_t>();
        if (j.value("seed", cfg.seed) != cfg.seed) throw UsageError("--resume: checkpoint was written with a different seed");
      }
      auto in = detail::open_in(synth_input);
      auto outf = detail::open_out(synth_output, opt.start_index > 0);
      CorpusStats stats;
      try {
        stats = run_synthesis(in, outf, opt, *provider);
      } catch (const SynthesisInterrupted& e) {
        auto c = detail::open_out(ckpt);
        c << nlohmann::json{{"next_index", e.next_index()}, {"seed", cfg.seed}}.dump() << '\n';
        err << "error: backend failure at input line " << e.next_index() + 1 << ": " << e.what() << "\n"
            << "completed lines are in " << synth_output << "; rerun with --resume to continue\n";
        return kBackend;
      }
      if (std::filesystem::exists(ckpt)) std::filesystem::remove(ckpt);
      nlohmann::ordered_json report{{"stats", to_json(stats)}, {"config", to_json(cfg)}};
      err << report["stats"].dump() << '\n';
      if (!synth_stats.empty()) detail::open_out(synth_stats) << report.dump(2) << '\n';
      return kOk;
    }

    if (*validate) {
      auto in = detail::open_in(validate_input);
      const auto rep = validate_corpus(in, validate_mmax, validate_severe);
      if (rep.violation) {
        err << "violation at record " << rep.violation->record_index << ": " << rep.violation->message << '\n';
        return kData;
      }
      out << to_json(rep.stats).dump() << '\n';
      return kOk;
    }

    if (*train_cmd) {
      if (t_hidden->count()) cfg.regressor.hidden_dims = detail::parse_dims(train_hidden);
      if (t_epochs->count()) cfg.regressor.epochs = train_epochs;
      if (t_batch->count()) cfg.regressor.batch_size = train_batch;
      if (t_lr->count()) cfg.regressor.lr = train_lr;
      if (t_dropout->count()) cfg.regressor.dropout = train_dropout;
      if (t_steps->count()) cfg.regressor.max_steps = train_max_steps;
      if (t_seed->count()) cfg.regressor.seed = train_seed;
      if (t_scale->count()) cfg.regressor.scale_targets = train_scale;
      cfg.gateway = train_gw.apply(cfg.gateway);
      cfg.regressor.validate();

      auto in = detail::open_in(train_triples);
      const auto examples = load_training_examples(in);
      if (examples.empty()) throw DataError(train_triples + ": no triples");
      auto provider = make_provider(cfg.gateway);
      const std::size_t dim = provider->embed(examples.front().reference).size();
      QualityModel model = QualityModel::create(cfg.regressor, dim);
      model.embedder = to_json(cfg.gateway);
      const TrainingLog log = train(model, examples, *provider);
      save_checkpoint(model, train_out);
      nlohmann::json epochs = nlohmann::json::array();
      for (const auto& e : log.epochs) {
        epochs.push_back({{"epoch", e.epoch}, {"steps", e.steps}, {"mean_loss", e.mean_loss}});
        err << "epoch " << e.epoch << ": steps=" << e.steps << " mean_loss=" << e.mean_loss << '\n';
      }
      if (!train_log.empty())
        detail::open_out(train_log) << nlohmann::json{{"epochs", epochs}, {"step_losses", log.step_losses}}.dump()
                                    << '\n';
      return kOk;
    }

    if (*predict_cmd) {
      QualityModel model = load_checkpoint(p_ckpt);
      GatewayConfig g = model.embedder.is_object() && !model.embedder.empty()
                            ? gateway_config_from_json(model.embedder)
                            : cfg.gateway;
      g = predict_gw.apply(g);
      auto provider = make_provider(g);
      const auto refs = detail::read_lines(p_ref);
      const auto cands = detail::read_lines(p_cand);
      if (refs.size() != cands.size())
        throw DataError("--ref-file has " + std::to_string(refs.size()) + " lines but --cand-file has " +
                        std::to_string(cands.size()));
      auto o = detail::open_out(p_out);
      char buf[64];
      for (std::size_t i = 0; i < refs.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.6f", predict(model, refs[i], cands[i], *provider));
        o << buf << '\n';
      }
      return kOk;
    }

    if (*eval_cmd) {
      const auto table = eval::read_tsv(e_input);
      const auto aspects = detail::split_csv(e_aspects);
      const auto ties = eval::parse_tie_policy(e_ties);
      const bool segment_level = table.column("segment_id").has_value();
      nlohmann::ordered_json report{{"mode", e_mode}, {"input", e_input}};
      char line[256];
      if (e_mode == "kendall") {
        const auto records = eval::segment_records(table, e_metric, aspects);
        const auto pairs = eval::prepare_pairs(records, e_threshold);
        const auto res = eval::kendall_tau_like(pairs, eval::metric_scores(records), ties);
        std::snprintf(line, sizeof line, "tau=%.6f concordant=%zu discordant=%zu pairs=%zu", res.tau, res.concordant,
                      res.discordant, pairs.size());
        report.update({{"tau", res.tau},
                       {"concordant", res.concordant},
                       {"discordant", res.discordant},
                       {"metric_ties", res.metric_ties},
                       {"pairs", pairs.size()},
                       {"threshold", e_threshold},
                       {"ties", e_ties}});
      } else if (e_mode == "pearson") {
        const auto systems = segment_level ? eval::aggregate_systems(eval::segment_records(table, e_metric, aspects))
                                           : eval::system_records(table, e_metric, aspects);
        const double rho = eval::pearson_system(systems);
        std::snprintf(line, sizeof line, "abs_pearson=%.6f systems=%zu", rho, systems.size());
        report.update({{"abs_pearson", rho}, {"systems", systems.size()}});
      } else {
        eval::BootstrapResult res;
        if (e_level == "segment") {
          const auto a = eval::segment_records(table, e_metric_a, aspects);
          const auto b = eval::segment_records(table, e_metric_b, aspects);
          std::vector<eval::PairedSegmentRecord> paired;
          for (std::size_t i = 0; i < a.size(); ++i)
            paired.push_back({a[i].segment_id, a[i].system_id, a[i].human, a[i].metric, b[i].metric});
          res = eval::bootstrap_significance(paired, e_resamples, e_seed, e_threshold, ties);
        } else {
          auto a = segment_level ? eval::aggregate_systems(eval::segment_records(table, e_metric_a, aspects))
                                 : eval::system_records(table, e_metric_a, aspects);
          auto b = segment_level ? eval::aggregate_systems(eval::segment_records(table, e_metric_b, aspects))
                                 : eval::system_records(table, e_metric_b, aspects);
          std::vector<eval::PairedSystemRecord> paired;
          for (std::size_t i = 0; i < a.size(); ++i)
            paired.push_back({a[i].system_id, a[i].human, a[i].metric, b[i].metric});
          res = eval::bootstrap_significance(paired, e_resamples, e_seed);
        }
        std::snprintf(line, sizeof line, "p=%.6f stat_a=%.6f stat_b=%.6f resamples=%zu", res.p_value, res.stat_a,
                      res.stat_b, res.n_resamples);
        report.update({{"p_value", res.p_value},
                       {"stat_a", res.stat_a},
                       {"stat_b", res.stat_b},
                       {"resamples", res.n_resamples},
                       {"level", e_level},
                       {"seed", e_seed}});
      }
      out << line << '\n';
      if (!e_report.empty()) detail::open_out(e_report) << report.dump(2) << '\n';
      return kOk;
    }

    if (*check_cmd) {
      cfg.gateway = check_gw.apply(cfg.gateway);
      std::vector<Capability> required;
      for (const auto& name : detail::split_csv(check_require)) {
        Capability c;
        if (!parse_capability(name, c)) throw UsageError("unknown capability '" + name + "'");
        required.push_back(c);
      }
      auto provider = make_provider(cfg.gateway);
      const auto report = provider->health_check(required);
      if (!report.ok) {
        err << "protocol-check failed for " << provider->backend_id() << ": " << report.detail << '\n';
        return kBackend;
      }
      out << "ok " << provider->backend_id() << '\n';
      return kOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const BackendError& e) {
    err << "backend error: " << e.what() << '\n';
    return kBackend;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

}  // namespace sescore::cli
