#include "unirep/cli.hpp"

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>
#include <sstream>

#include "unirep/ablation.hpp"
#include "unirep/errors.hpp"
#include "unirep/io.hpp"
#include "unirep/pipeline.hpp"

namespace unirep {

using nlohmann::json;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON run config (defaults are used for missing keys)");
  cmd->add_option("--set", c.overrides, "Dotted-key override, e.g. --set fcmi.tau=0.5");
  cmd->add_option("--seed", c.seed, "Run seed");
}

json parse_override_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return json(text);
  }
}

RunConfig effective_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : RunConfig::load(c.config_path);
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
    cfg = cfg.with(o.substr(0, eq), parse_override_value(o.substr(eq + 1)));
  }
  if (c.seed >= 0) cfg = cfg.with("seed", static_cast<std::uint64_t>(c.seed));
  cfg.validate();
  return cfg;
}

Modality parse_direction(const std::string& d) {
  if (d == "a->b" || d == "a2b" || d == "ab") return Modality::a;
  if (d == "b->a" || d == "b2a" || d == "ba") return Modality::b;
  throw ConfigError("--direction must be a->b or b->a, got '" + d + "'", "eval.source");
}

std::string direction_tag(Modality source) { return source == Modality::a ? "a2b" : "b2a"; }

struct Run {
  RunConfig config;
  GenSpec spec;
  Model model;
};

Run load_run(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("run directory " + dir.string() + " does not exist");
  if (!fs::exists(dir / "checkpoint" / "manifest.json")) {
    throw DataError("no checkpoint in " + dir.string() + "; run pretrain first");
  }
  Run r;
  r.config = RunConfig::load((dir / "config.json").string());
  try {
    r.spec = gen_spec_from_json(read_json(dir / "run.json").at("dataset_spec"));
  } catch (const json::exception& e) {
    throw DataError((dir / "run.json").string() + ": " + e.what());
  }
  r.model = load_checkpoint(dir / "checkpoint");
  return r;
}

Dataset dataset_with_preset(GenSpec spec, SplitPreset preset) {
  spec.n_known = known_count(spec.n_classes, preset);
  return generate(spec);
}

void print_split_sizes(const Dataset& d, std::ostream& out) {
  for (Split s : kAllSplits) out << "  " << std::left << std::setw(13) << to_string(s) << d.get(s).size() << "\n";
}

int cmd_generate(const Common& c, const std::string& out_dir, const std::string& split, std::ostream& out) {
  RunConfig cfg = effective_config(c);
  GenSpec spec = cfg.gen_spec();
  if (!split.empty()) spec.n_known = known_count(spec.n_classes, parse_split_preset(split));
  spec.validate();
  const Dataset d = generate(spec);
  save_dataset(out_dir, d);
  out << "dataset written to " << out_dir << "\n";
  print_split_sizes(d, out);
  out << "manifest hash " << file_hash(fs::path(out_dir) / "manifest.json") << "\n";
  return kExitOk;
}

int cmd_pretrain(const Common& c, const std::string& dataset_dir, const std::string& out_dir, std::ostream& out) {
  RunConfig cfg = effective_config(c);
  const Dataset data = load_dataset(dataset_dir);
  const fs::path run(out_dir);
  fs::create_directories(run);
  cfg.save((run / "config.json").string());
  write_json(run / "run.json", json{{"dataset", fs::absolute(dataset_dir).string()},
                                    {"dataset_hash", file_hash(fs::path(dataset_dir) / "manifest.json")},
                                    {"dataset_spec", gen_spec_to_json(data.spec)},
                                    {"seed", cfg.seed}});

  const ModalBatch& pre = data.get(Split::pretrain);
  if (pre.size() == 0) throw DataError("pretraining split is empty");
  Trainer trainer(cfg, pre.x_a.dim(2), pre.x_b.dim(2));
  std::string log;
  for (std::size_t e = 0; e < cfg.train.epochs; ++e) {
    const EpochLog entry = trainer.run_epoch(pre);
    log += entry.to_json().dump() + "\n";
    write_text(run / "train_log.jsonl", log);
    out << "epoch " << entry.epoch << "  total " << std::setprecision(6) << entry.mean.total << "  fine "
        << entry.mean.fine << "  coarse " << entry.mean.coarse << "  cujp " << entry.mean.cujp << "  recon "
        << entry.mean.recon << "  commit " << entry.mean.commit << "  perplexity " << entry.perplexity << "\n";
  }
  write_text(run / "train_log.jsonl", log);
  save_checkpoint(run / "checkpoint", trainer.model());
  out << "run written to " << out_dir << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& run_dir, const std::string& direction, const std::string& split,
             const std::string& out_stem, std::ostream& out) {
  Run r = load_run(run_dir);
  const Modality source = direction.empty() ? r.config.eval.source : parse_direction(direction);
  const SplitPreset preset = split.empty() ? r.config.eval.split : parse_split_preset(split);
  const Dataset data = dataset_with_preset(r.spec, preset);
  EvalReport report = run_downstream(r.model, data, r.config, source);
  report.split = preset;

  const fs::path stem = out_stem.empty()
                            ? fs::path(run_dir) / "eval" / (direction_tag(source) + "_" + to_string(preset))
                            : fs::path(out_stem);
  write_json(fs::path(stem.string() + ".json"), report.to_json());
  write_text(fs::path(stem.string() + ".csv"), EvalReport::csv_header() + "\n" + report.csv_row() + "\n");

  out << std::fixed << std::setprecision(2);
  out << report.source_encoder << " probe -> " << report.target_encoder << " test, " << to_string(preset) << "\n";
  out << "  OS* " << report.scores.os_star;
  if (report.scores.unk) out << "  UNK " << *report.scores.unk << "  HOS " << *report.scores.hos;
  out << "  closed-set " << report.scores.closed_set_accuracy << "  theta " << std::setprecision(4) << report.theta
      << "\n" << std::setprecision(2);
  for (const auto& rk : report.recall) {
    out << "  recall@" << rk.k << "  a->b " << rk.a_to_b << "  b->a " << rk.b_to_a << "\n";
  }
  out << "report written to " << stem.string() << ".json\n";
  return kExitOk;
}

int cmd_ablate(const Common& c, const std::string& sweep_arg, const std::vector<std::uint64_t>& seeds,
               const std::string& out_dir, std::ostream& out) {
  const RunConfig cfg = effective_config(c);
  json sweep_json;
  if (fs::exists(sweep_arg)) {
    sweep_json = read_json(sweep_arg);
  } else {
    sweep_json = json{{"preset", sweep_arg}};
  }
  if (!seeds.empty()) sweep_json["seeds"] = seeds;
  const SweepSpec sweep = parse_sweep(sweep_json, cfg.seed);
  out << sweep.cells.size() << " cells x " << sweep.seeds.size() << " seeds, " << worker_threads()
      << " worker thread(s)\n";
  const auto rows = run_ablation(cfg, sweep, out_dir, 0, [&](const AblationRow& row) {
    out << "  " << row.cell << " seed " << row.seed << ": " << row.status;
    if (row.report && row.report->scores.hos) out << "  HOS " << std::fixed << std::setprecision(2) << *row.report->scores.hos;
    if (!row.reason.empty()) out << "  (" << row.reason << ")";
    out << "\n" << std::flush;
  });
  out << "mean HOS per cell\n";
  for (const auto& [cell, hos] : mean_hos(rows)) {
    out << "  " << std::left << std::setw(20) << cell << std::fixed << std::setprecision(2) << hos << "\n";
  }
  out << "results merged into " << (fs::path(out_dir) / "ablation.csv").string() << "\n";
  for (const auto& r : rows) {
    if (r.status == "failed") return kExitNumerical;
  }
  return kExitOk;
}

int cmd_stats(const std::string& run_dir, const std::string& out_dir_arg, std::ostream& out) {
  Run r = load_run(run_dir);
  const fs::path out_dir = out_dir_arg.empty() ? fs::path(run_dir) / "stats" : fs::path(out_dir_arg);
  const Dataset data = dataset_with_preset(r.spec, r.config.eval.split);
  const std::size_t H = r.model.codebook.size();
  std::vector<std::size_t> ca(H, 0), cb(H, 0);
  for (Split s : {Split::test_known, Split::test_unknown}) {
    const ModalBatch& b = data.get(s);
    if (b.size() == 0) continue;
    const auto qa = r.model.codebook.quantize(r.model.enc_a.apply(b.x_a));
    const auto qb = r.model.codebook.quantize(r.model.enc_b.apply(b.x_b));
    for (auto i : qa.indices) ++ca[i];
    for (auto i : qb.indices) ++cb[i];
  }
  const CoactivationTable table = coactivation_stats({ca, cb});
  std::vector<std::size_t> both(H);
  for (std::size_t l = 0; l < H; ++l) both[l] = ca[l] + cb[l];
  save_codebook(out_dir / "codebook", r.model.codebook);
  write_text(out_dir / "coactivation.csv", table.to_csv());
  const json summary{{"codebook_size", H},
                     {"perplexity", perplexity(both)},
                     {"perplexity_a", perplexity(ca)},
                     {"perplexity_b", perplexity(cb)},
                     {"shared", table.count(ShareClass::all)},
                     {"single", table.count(ShareClass::single)},
                     {"dead", table.count(ShareClass::dead)}};
  write_json(out_dir / "stats.json", summary);
  out << "codewords shared " << summary["shared"] << ", single-modality " << summary["single"] << ", dead "
      << summary["dead"] << "; perplexity " << std::fixed << std::setprecision(2) << perplexity(both) << "\n";
  out << "co-activation table written to " << (out_dir / "coactivation.csv").string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Unified discrete multimodal representation toolkit"};
  app.require_subcommand(1);

  Common gen_c, pre_c, abl_c;
  std::string gen_out, gen_split;
  auto* gen = app.add_subcommand("generate", "Generate a paired synthetic dataset");
  add_common(gen, gen_c);
  gen->add_option("--out", gen_out, "Dataset directory")->required();
  gen->add_option("--split", gen_split, "Class split preset: split1 (1:1) or split2 (3:1)");

  std::string pre_dataset, pre_out;
  auto* pre = app.add_subcommand("pretrain", "Pretrain encoders, codebook and jigsaw head");
  add_common(pre, pre_c);
  pre->add_option("--dataset", pre_dataset, "Dataset directory from generate")->required();
  pre->add_option("--out", pre_out, "Run directory")->required();

  std::string ev_run, ev_dir, ev_split, ev_out;
  auto* ev = app.add_subcommand("eval", "Open-set cross-modal evaluation of a pretrained run");
  ev->add_option("--run", ev_run, "Run directory from pretrain")->required();
  ev->add_option("--direction", ev_dir, "a->b or b->a");
  ev->add_option("--split", ev_split, "split1 or split2");
  ev->add_option("--out", ev_out, "Output path stem for the report (.json and .csv)");

  std::string abl_sweep = "loss", abl_out;
  std::vector<std::uint64_t> abl_seeds;
  auto* abl = app.add_subcommand("ablate", "Run a sweep of pipeline cells over several seeds");
  add_common(abl, abl_c);
  abl->add_option("--sweep", abl_sweep, "Preset (loss, jigsaw, codebook, mask) or a sweep JSON file");
  abl->add_option("--seeds", abl_seeds, "Seeds to run per cell");
  abl->add_option("--out", abl_out, "Output directory")->required();

  std::string st_run, st_out;
  auto* st = app.add_subcommand("stats", "Export codebook co-activation statistics for a run");
  st->add_option("--run", st_run, "Run directory from pretrain")->required();
  st->add_option("--out", st_out, "Output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_generate(gen_c, gen_out, gen_split, out);
    if (pre->parsed()) return cmd_pretrain(pre_c, pre_dataset, pre_out, out);
    if (ev->parsed()) return cmd_eval(ev_run, ev_dir, ev_split, ev_out, out);
    if (abl->parsed()) return cmd_ablate(abl_c, abl_sweep, abl_seeds, abl_out, out);
    if (st->parsed()) return cmd_stats(st_run, st_out, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what();
    if (!e.key().empty()) err << " [" << e.key() << "]";
    err << "\n";
    return kExitConfig;
  } catch (const TrainingError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    err << "file error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace unirep
