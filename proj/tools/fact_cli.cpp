// Command-line front end: run experiments, sweep study axes, render reports.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "fact/errors.hpp"
#include "fact/experiment.hpp"
#include "fact/federation.hpp"
#include "fact/report.hpp"
#include "fact/snapshot.hpp"

namespace {

using namespace fact;

struct Overrides {
  std::optional<uint64_t> seed;
  std::optional<size_t> repeats;
  std::optional<std::string> variant;
};

void apply_overrides(ExperimentConfig& cfg, const Overrides& ov) {
  if (ov.seed) cfg.seeds = {*ov.seed};
  if (ov.repeats) {
    size_t k = *ov.repeats;
    if (k == 0) throw ConfigError("--repeats must be >= 1");
    if (k <= cfg.seeds.size()) {
      cfg.seeds.resize(k);
    } else {
      uint64_t next = 0;
      for (uint64_t s : cfg.seeds) next = std::max(next, s);
      while (cfg.seeds.size() < k) cfg.seeds.push_back(++next);
    }
  }
  if (ov.variant) cfg.variant = parse_variant(*ov.variant);
  cfg.validate();
}

std::string sanitize(const std::string& label) {
  std::string out;
  for (char c : label) {
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')
               ? c
               : '_';
  }
  return out;
}

// Persists per-run history CSVs and best-model snapshots next to the report.
ArtifactSink file_sink(const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  return [out_dir](const RunArtifacts& a) {
    std::string base = sanitize(a.config_label) + "_seed" + std::to_string(a.seed);
    std::ofstream hist(std::filesystem::path(out_dir) / ("history_" + base + ".csv"));
    hist << history_csv(a.history);
    save_model(a.best_model,
               (std::filesystem::path(out_dir) / ("model_" + base + ".json")).string());
  };
}

void print_summary(const ResultTable& table) {
  for (const SummaryRow& s : table.summaries) {
    std::printf("%-28s n=%zu accuracy %.4f +- %.4f\n", s.config_label.c_str(), s.n,
                s.acc_mean, s.acc_std);
  }
}

int run_command(const std::string& config_path, const std::string& out_dir,
                const Overrides& ov) {
  ExperimentConfig cfg = load_config(config_path);
  apply_overrides(cfg, ov);
  ResultTable table = run_experiment(cfg, file_sink(out_dir));
  emit_report(table, out_dir);
  print_summary(table);
  std::printf("report written to %s\n", out_dir.c_str());
  return 0;
}

int sweep_command(const std::string& config_path, std::string axis,
                  const std::string& out_dir, const Overrides& ov) {
  ExperimentConfig cfg = load_config(config_path);
  apply_overrides(cfg, ov);
  if (axis.empty()) {
    if (!cfg.sweep) {
      throw ConfigError("sweep: no --axis given and the config has no sweep block");
    }
    axis = cfg.sweep->axis;
  }
  ResultTable table;
  ArtifactSink sink = file_sink(out_dir);
  if (axis == "rounds") {
    table = sweep_rounds(cfg, sink);
  } else if (axis == "clients") {
    table = sweep_client_splits(cfg, sink);
  } else if (axis == "sources") {
    table = sweep_sources(cfg, sink);
  } else {
    throw ConfigError("sweep: unknown axis '" + axis + "' (rounds | clients | sources)");
  }
  emit_report(table, out_dir);
  print_summary(table);
  std::printf("report written to %s\n", out_dir.c_str());
  return 0;
}

int report_command(const std::string& results_path, const std::string& out_dir) {
  std::ifstream in(results_path);
  if (!in) throw IoError("report: cannot open " + results_path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  ResultTable table = parse_results_csv(text);
  emit_report(table, out_dir);
  print_summary(table);
  std::printf("report written to %s\n", out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fact: federated adversarial cross-training simulator"};
  app.require_subcommand(1);

  std::string config_path, results_path, out_dir = "fact_out", axis;
  Overrides ov;
  auto add_overrides = [&](CLI::App* cmd) {
    cmd->add_option("--seed", ov.seed, "run a single seed instead of the config list");
    cmd->add_option("--repeats", ov.repeats,
                    "number of repeats (truncates or extends the seed list)");
    cmd->add_option("--variant", ov.variant, "fact | fact-nf | source-only")
        ->check(CLI::IsMember({"fact", "fact-nf", "source-only"}));
  };

  CLI::App* run = app.add_subcommand("run", "run the experiment described by a config");
  run->add_option("config", config_path, "experiment config (json)")->required();
  run->add_option("--out", out_dir, "output directory");
  add_overrides(run);

  CLI::App* sweep = app.add_subcommand("sweep", "run a study sweep over one axis");
  sweep->add_option("config", config_path, "experiment config (json)")->required();
  sweep->add_option("--axis", axis, "rounds | clients | sources");
  sweep->add_option("--out", out_dir, "output directory");
  add_overrides(sweep);

  CLI::App* report = app.add_subcommand("report", "rebuild report files from a results.csv");
  report->add_option("results", results_path, "results.csv from a previous run")
      ->required();
  report->add_option("--out", out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_command(config_path, out_dir, ov);
    if (sweep->parsed()) return sweep_command(config_path, axis, out_dir, ov);
    if (report->parsed()) return report_command(results_path, out_dir);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "fact: error [config]: %s\n", e.what());
    return 2;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "fact: error [format]: %s\n", e.what());
    return 3;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "fact: error [numerical]: %s\n", e.what());
    return 4;
  } catch (const ProtocolError& e) {
    std::fprintf(stderr, "fact: error [protocol]: %s\n", e.what());
    return 4;
  } catch (const IoError& e) {
    std::fprintf(stderr, "fact: error [io]: %s\n", e.what());
    return 5;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fact: error [run]: %s\n", e.what());
    return 1;
  }
  return 0;
}
