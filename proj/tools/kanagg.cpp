#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kanagg/data.hpp"
#include "kanagg/errors.hpp"
#include "kanagg/experiment.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> datasets;
  std::optional<int> runs;
  std::optional<int> iterations;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> variants;
  std::vector<std::string> aggregators;
  bool strict = false;
  std::string out_dir;
  std::optional<int> parallelism;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool sweep) {
  cmd->add_option("--config", o.config_path, "Experiment config (JSON)");
  cmd->add_option("--dataset", o.datasets, "Dataset manifest(s)");
  cmd->add_option("--runs", o.runs, "Seeded runs per configuration")->check(CLI::PositiveNumber);
  cmd->add_option("--iterations", o.iterations, "Training iterations per run")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "Global seed");
  if (sweep) {
    cmd->add_option("--aggregators", o.aggregators, "Aggregators to cross (default: all nine)");
  } else {
    cmd->add_option("--variants", o.variants, "Variants: kan, kan-layernorm, kan-avg");
  }
  cmd->add_flag("--strict-replication", o.strict, "Regression head on the label index, no feature scaling");
  cmd->add_option("--out", o.out_dir, "Output directory (default: $KANAGG_OUT_DIR or ./results)");
  cmd->add_option("--parallelism", o.parallelism, "Concurrent runs")->check(CLI::PositiveNumber);
}

kanagg::ExperimentConfig build_config(const CommonOptions& o, kanagg::ExperimentMode mode) {
  kanagg::ExperimentConfig cfg;
  if (!o.config_path.empty()) cfg = kanagg::load_experiment_config(o.config_path);
  cfg.mode = mode;
  for (const auto& path : o.datasets) cfg.datasets.push_back(kanagg::load_manifest(path));
  if (o.runs) cfg.runs = *o.runs;
  if (o.iterations) cfg.train.iterations = *o.iterations;
  if (o.seed) cfg.seed = *o.seed;
  if (!o.variants.empty()) {
    cfg.variants.clear();
    for (const auto& v : o.variants) cfg.variants.push_back(kanagg::parse_variant(v));
  }
  if (!o.aggregators.empty()) {
    cfg.aggregators.clear();
    for (const auto& a : o.aggregators) cfg.aggregators.push_back(kanagg::parse_aggregator(a));
  }
  if (o.strict) cfg.strict_replication = true;
  if (o.parallelism) cfg.parallelism = *o.parallelism;
  return cfg;
}

std::filesystem::path out_dir(const CommonOptions& o) {
  if (!o.out_dir.empty()) return o.out_dir;
  if (const char* env = std::getenv("KANAGG_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return "results";
}

template <typename Report>
int finish(const Report& report, const std::filesystem::path& dir) {
  kanagg::write_report(report, dir);
  std::cout << kanagg::summary_table(report);
  const std::size_t failed = report.failed_runs();
  if (failed > 0) {
    std::cerr << "error: " << failed << " of " << report.runs.size() << " runs failed; see " << dir.string()
              << "\n";
    return 1;
  }
  std::cout << "reports written to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KAN node-aggregator experiments"};
  app.require_subcommand(1);

  CommonOptions sweep_opts;
  CommonOptions compare_opts;
  CommonOptions adherence_opts;
  auto* sweep = app.add_subcommand("sweep", "Train every aggregator pair and rank them");
  add_common(sweep, sweep_opts, true);
  auto* compare = app.add_subcommand("compare", "Compare kan, kan-layernorm and kan-avg with Wilcoxon tests");
  add_common(compare, compare_opts, false);
  auto* adherence = app.add_subcommand("adherence", "Measure hidden-node range adherence");
  add_common(adherence, adherence_opts, false);

  std::string pre_manifest;
  std::uint64_t pre_seed = 0;
  bool pre_no_scale = false;
  std::string pre_out;
  auto* pre = app.add_subcommand("preprocess", "Load, split and encode one dataset");
  pre->add_option("--dataset", pre_manifest, "Dataset manifest")->required();
  pre->add_option("--seed", pre_seed, "Split seed");
  pre->add_flag("--strict-replication", pre_no_scale, "Skip feature scaling");
  pre->add_option("--out", pre_out, "Write the preprocessed dataset as JSON here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sweep) {
      return finish(kanagg::run_sweep(build_config(sweep_opts, kanagg::ExperimentMode::Sweep)),
                    out_dir(sweep_opts));
    }
    if (*compare) {
      return finish(kanagg::run_comparison(build_config(compare_opts, kanagg::ExperimentMode::Compare)),
                    out_dir(compare_opts));
    }
    if (*adherence) {
      return finish(kanagg::run_adherence(build_config(adherence_opts, kanagg::ExperimentMode::Adherence)),
                    out_dir(adherence_opts));
    }
    if (*pre) {
      const auto manifest = kanagg::load_manifest(pre_manifest);
      const auto data = kanagg::load_dataset(manifest, {pre_seed, !pre_no_scale});
      std::cout << data.name << ": " << data.n_instances() << " rows, " << data.n_features() << " features, "
                << data.n_classes() << " classes; split " << data.train.size() << "/" << data.val.size()
                << "/" << data.test.size() << "\n";
      if (!pre_out.empty()) {
        std::ofstream out(pre_out);
        if (!out) throw kanagg::ConfigError("cannot write " + pre_out);
        out << kanagg::dataset_to_json(data) << "\n";
      }
      return 0;
    }
  } catch (const kanagg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
