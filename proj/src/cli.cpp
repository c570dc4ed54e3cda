#include "dgm/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dgm/eval.hpp"
#include "dgm/format.hpp"
#include "dgm/io.hpp"
#include "dgm/models.hpp"

namespace dgm {

namespace fs = std::filesystem;

int exit_code_for(ErrorKind kind) {
  return kind == ErrorKind::kTraining ? kExitDiverged : kExitInvalid;
}

std::string format_error_line(const std::string& kind, const std::string& message) {
  std::string text;
  for (char c : message) {
    if (c == '"' || c == '\\') text += '\\';
    text += (c == '\n' || c == '\r') ? ' ' : c;
  }
  return "error kind=" + kind + " message=\"" + text + "\"";
}

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoint;
};

struct Run {
  RunConfig cfg;
  TemporalGraph graph;
};

// Loads the config and its dataset and applies the command-line overrides.
Run open_run(const CommonOptions& o) {
  if (o.config.empty()) throw config_error("missing required option --config");
  Run run{load_run_config(o.config), {}};
  if (o.seed) run.cfg.model.seed = *o.seed;
  if (!o.out.empty()) run.cfg.out = o.out;
  if (run.cfg.dataset.empty()) throw config_error("missing required field 'dataset'");
  const std::string path = resolve_data_path(run.cfg.dataset);
  if (!fs::is_directory(path)) {
    throw config_error("dataset: no dataset bundle at '" + path + "'");
  }
  run.graph = load_bundle(path);
  if (run.cfg.model.n == 0) {
    run.cfg.model.n = run.graph.n;
  } else if (run.cfg.model.n != run.graph.n) {
    throw config_error("n: config says " + std::to_string(run.cfg.model.n) + ", dataset has " +
                       std::to_string(run.graph.n) + " nodes");
  }
  run.cfg.model.validate();
  return run;
}

std::unique_ptr<EmbeddingModel> open_checkpoint(const Run& run, const CommonOptions& o) {
  const std::string path =
      o.checkpoint.empty() ? (fs::path(run.cfg.out) / "checkpoint.bin").string() : o.checkpoint;
  std::istringstream in(read_file(path));
  auto model = load_checkpoint(in);
  if (model->config().n != run.graph.n) {
    throw dimension_error("checkpoint " + path + " expects " + std::to_string(model->config().n) +
                          " nodes, dataset has " + std::to_string(run.graph.n));
  }
  return model;
}

void write_embeddings(const EmbeddingModel& model, const TemporalGraph& g, const std::string& dir,
                      const std::string& provenance) {
  const auto emb = embed_all(model, g);
  for (std::size_t t = model.config().lookback; t < emb.size(); ++t) {
    std::ostringstream csv;
    csv << provenance << '\n';
    write_embeddings_csv(emb[t], csv);
    write_file((fs::path(dir) / "embeddings" / ("t" + std::to_string(t) + ".csv")).string(),
               csv.str());
  }
}

std::size_t history_epochs(const std::string& out_dir) {
  const fs::path p = fs::path(out_dir) / "history.csv";
  if (!fs::exists(p)) return 0;
  const std::string text = read_file(p.string());
  const auto at = text.find("epochs_run=");
  return at == std::string::npos ? 0 : std::stoul(text.substr(at + 11));
}

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw config_error("timestamps: bad entry '" + item + "'");
    }
  }
  return out;
}

void add_common(CLI::App* cmd, CommonOptions& o, bool checkpoint) {
  cmd->add_option("--config", o.config, "run configuration file")->required();
  cmd->add_option("--seed", o.seed, "override the configured seed");
  cmd->add_option("--out", o.out, "output directory (default: the config's out)");
  if (checkpoint) {
    cmd->add_option("--checkpoint", o.checkpoint, "model checkpoint (default: <out>/checkpoint.bin)");
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gaussian dynamic-graph embeddings: transformer and selective state-space models"};
  app.name("dgm");
  app.require_subcommand(1);

  // ingest
  std::string ingest_input, ingest_out, ingest_format = "snapshot", ingest_split;
  double bin_width = 1.0;
  bool ingest_directed = false;
  auto* ingest = app.add_subcommand("ingest", "edge list -> dataset bundle");
  ingest->add_option("input", ingest_input, "edge list `src dst weight tag`")->required();
  ingest->add_option("--out", ingest_out, "bundle directory")->required();
  ingest->add_option("--format", ingest_format, "tag format: snapshot or time-binned")
      ->check(CLI::IsMember({"snapshot", "time-binned"}));
  ingest->add_option("--bin-width", bin_width, "bin width for time-binned tags");
  ingest->add_flag("--directed", ingest_directed, "keep edge direction");
  ingest->add_option("--split", ingest_split, "explicit train_end,val_end");

  // generate-sbm
  SbmParams sbm;
  sbm.n = 99;
  sbm.timestamps = 20;
  std::uint64_t sbm_seed = 0;
  std::string sbm_out;
  auto* gen = app.add_subcommand("generate-sbm", "synthetic churning block model -> bundle");
  gen->add_option("--out", sbm_out, "bundle directory")->required();
  gen->add_option("--n", sbm.n, "node count")->capture_default_str();
  gen->add_option("--communities", sbm.communities, "community count")->capture_default_str();
  gen->add_option("--p-in", sbm.p_in, "within-community edge probability")->capture_default_str();
  gen->add_option("--p-out", sbm.p_out, "cross-community edge probability")->capture_default_str();
  gen->add_option("--churn-min", sbm.churn_min, "fewest nodes moved per step")->capture_default_str();
  gen->add_option("--churn-max", sbm.churn_max, "most nodes moved per step")->capture_default_str();
  gen->add_option("--timestamps", sbm.timestamps, "snapshot count")->capture_default_str();
  gen->add_option("--seed", sbm_seed, "generator seed")->capture_default_str();

  CommonOptions train_o, eval_o, inspect_o, export_o;
  auto* train_cmd = app.add_subcommand("train", "train a model; writes checkpoint, history, embeddings");
  add_common(train_cmd, train_o, false);

  bool record_time = false, append = false;
  auto* eval_cmd = app.add_subcommand("eval", "link prediction MAP/MRR -> metrics.jsonl");
  add_common(eval_cmd, eval_o, true);
  eval_cmd->add_flag("--record-time", record_time, "record wall_time_s");
  eval_cmd->add_flag("--append", append, "append to metrics.jsonl instead of replacing it");

  std::string timestamps, matrix;
  std::optional<std::size_t> node;
  auto* inspect = app.add_subcommand("inspect", "temporal mixing matrices -> CSV per timestamp");
  add_common(inspect, inspect_o, true);
  inspect->add_option("--timestamps", timestamps, "comma-separated timestamps (default: last)");
  inspect->add_option("--node", node, "single node (default: mean over nodes)");
  inspect->add_option("--matrix", matrix, "hidden-attention (Mamba) or attention (transformer)")
      ->check(CLI::IsMember({"hidden-attention", "attention"}));

  auto* export_cmd = app.add_subcommand("export-embeddings", "embedding CSV per timestamp");
  add_common(export_cmd, export_o, true);

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << format_error_line("usage", e.what()) << '\n';
    return kExitInvalid;
  }

  try {
    if (*ingest) {
      IngestOptions opt;
      opt.format = ingest_format == "snapshot" ? TagFormat::kSnapshotId : TagFormat::kTimeBinned;
      opt.bin_width = bin_width;
      opt.directed = ingest_directed;
      if (!ingest_split.empty()) {
        const auto parts = parse_list(ingest_split);
        if (parts.size() != 2) throw config_error("split: expected train_end,val_end");
        opt.split = std::pair{parts[0], parts[1]};
      }
      const std::string input = resolve_data_path(ingest_input);
      const TemporalGraph g = load_edge_list(input, opt);
      const std::string options_text = "format=" + ingest_format + "\nbin_width=" +
                                       format_double(bin_width) + "\ndirected=" +
                                       (ingest_directed ? "true" : "false") + "\nsplit=" +
                                       ingest_split + "\ninput=" + hex64(fnv1a64(read_file(input))) +
                                       "\n";
      write_bundle(g, ingest_out, provenance_line(hex64(fnv1a64(options_text)), 0));
      std::size_t edges = 0;
      for (const auto& s : g.snapshots) edges += s.edges.size();
      out << "ingested n=" << g.n << " T=" << g.num_timestamps() << " edges=" << edges
          << " -> " << ingest_out << '\n';
    } else if (*gen) {
      Rng rng(sbm_seed);
      const SbmGraph result = generate_sbm(sbm, rng);
      std::ostringstream params;
      params << "n=" << sbm.n << "\ncommunities=" << sbm.communities
             << "\np_in=" << format_double(sbm.p_in) << "\np_out=" << format_double(sbm.p_out)
             << "\nchurn=" << sbm.churn_min << "," << sbm.churn_max << "\nT=" << sbm.timestamps
             << "\n";
      const std::string prov = provenance_line(hex64(fnv1a64(params.str())), sbm_seed);
      write_bundle(result.graph, sbm_out, prov);
      std::ostringstream members;
      members << prov << "\nt,node,community\n";
      for (std::size_t t = 0; t < result.memberships.size(); ++t) {
        for (std::size_t v = 0; v < sbm.n; ++v) {
          members << t << ',' << v << ',' << result.memberships[t][v] << '\n';
        }
      }
      write_file((fs::path(sbm_out) / "memberships.csv").string(), members.str());
      out << "generated n=" << sbm.n << " T=" << sbm.timestamps << " -> " << sbm_out << '\n';
    } else if (*train_cmd) {
      Run run = open_run(train_o);
      const std::string prov = provenance_line(run.cfg.hash(), run.cfg.model.seed);
      auto model = make_model(run.cfg.model);
      const TrainingHistory history = train(*model, run.graph);
      std::ostringstream hist;
      hist << prov << '\n';
      write_history(history, hist);
      std::ostringstream ckpt;
      save_checkpoint(*model, ckpt);
      write_file((fs::path(run.cfg.out) / "history.csv").string(), hist.str());
      write_file((fs::path(run.cfg.out) / "checkpoint.bin").string(), ckpt.str());
      write_embeddings(*model, run.graph, run.cfg.out, prov);
      out << "trained " << to_string(run.cfg.model.kind) << " epochs_run=" << history.epochs_run
          << " best_epoch=" << history.best_epoch << " -> " << run.cfg.out << '\n';
    } else if (*eval_cmd) {
      const auto start = std::chrono::steady_clock::now();
      Run run = open_run(eval_o);
      auto model = open_checkpoint(run, eval_o);
      const Metrics m = evaluate(*model, run.graph, run.cfg.eval_options());
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      nlohmann::ordered_json record;
      record["dataset"] = fs::path(run.cfg.dataset).filename().string();
      record["model"] = to_string(model->config().kind);
      record["lookback"] = model->config().lookback;
      record["seed"] = run.cfg.model.seed;
      record["MAP"] = m.map;
      record["MRR"] = m.mrr;
      record["epochs_run"] = history_epochs(run.cfg.out);
      record["wall_time_s"] = record_time ? nlohmann::ordered_json(seconds) : nullptr;
      record["queries"] = m.queries;
      record["config_hash"] = run.cfg.hash();
      const std::string line = record.dump();
      const fs::path path = fs::path(run.cfg.out) / "metrics.jsonl";
      fs::create_directories(path.parent_path());
      std::ofstream file(path, append ? std::ios::app : std::ios::trunc);
      file << line << '\n';
      if (!file) throw io_error("cannot write " + path.string());
      out << line << '\n';
    } else if (*inspect) {
      Run run = open_run(inspect_o);
      auto model = open_checkpoint(run, inspect_o);
      const bool mamba = model->config().kind != ModelKind::kStTransformerG2G;
      if (!matrix.empty() && (matrix == "hidden-attention") != mamba) {
        throw config_error("matrix: " + matrix + " is not available for " +
                           to_string(model->config().kind));
      }
      std::vector<std::size_t> ts = timestamps.empty()
                                        ? std::vector<std::size_t>{run.graph.num_timestamps() - 1}
                                        : parse_list(timestamps);
      const std::string prov = provenance_line(run.cfg.hash(), run.cfg.model.seed);
      for (std::size_t t : ts) {
        const auto mats = model->temporal_matrices(run.graph, t);
        Tensor m;
        if (node) {
          if (*node >= mats.size()) throw config_error("node: " + std::to_string(*node) + " out of range");
          m = mats[*node];
        } else {
          const std::size_t len = mats.front().dim(0);
          std::vector<double> acc(len * len, 0.0);
          for (const auto& x : mats) {
            const auto d = x.data();
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += d[i];
          }
          for (double& v : acc) v /= static_cast<double>(mats.size());
          m = Tensor::from({len, len}, std::move(acc));
        }
        std::ostringstream csv;
        csv << prov << " t=" << t << " node=" << (node ? std::to_string(*node) : "mean")
            << " matrix=" << (mamba ? "hidden-attention" : "attention") << '\n';
        write_matrix_csv(m, csv);
        const fs::path path = fs::path(run.cfg.out) / "inspect" / ("t" + std::to_string(t) + ".csv");
        write_file(path.string(), csv.str());
        out << "wrote " << path.string() << '\n';
      }
    } else if (*export_cmd) {
      Run run = open_run(export_o);
      auto model = open_checkpoint(run, export_o);
      write_embeddings(*model, run.graph, run.cfg.out,
                       provenance_line(run.cfg.hash(), run.cfg.model.seed));
      out << "exported embeddings -> " << (fs::path(run.cfg.out) / "embeddings").string() << '\n';
    }
  } catch (const Error& e) {
    err << format_error_line(to_string(e.kind()), e.what()) << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << format_error_line("internal", e.what()) << '\n';
    return kExitInvalid;
  }
  return kExitOk;
}

}  // namespace dgm
