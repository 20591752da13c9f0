#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kanagg/aggregators.hpp"
#include "kanagg/data.hpp"
#include "kanagg/stats.hpp"
#include "kanagg/training.hpp"

namespace kanagg {

enum class ExperimentMode { Sweep, Compare, Adherence };

/// kan: sum nodes; kan-layernorm: sum nodes + normalized hidden outputs;
/// kan-avg: mean nodes.
enum class Variant { Kan, KanLayerNorm, KanAvg };

std::string_view to_string(ExperimentMode mode) noexcept;
std::string_view to_string(Variant variant) noexcept;
ExperimentMode parse_mode(std::string_view name);
Variant parse_variant(std::string_view name);

struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::Compare;
  std::vector<DatasetManifest> datasets;
  std::vector<Variant> variants{Variant::Kan, Variant::KanLayerNorm, Variant::KanAvg};
  std::vector<Aggregator> aggregators{kAllAggregators.begin(), kAllAggregators.end()};
  int runs = 0;  // 0 = mode default: 20 for compare, 1 otherwise
  TrainConfig train;
  std::size_t hidden_width = 10;
  int grid_size = 3;
  int degree = 3;
  double range_lo = -1.0;
  double range_hi = 1.0;
  /// [n_in, hidden, 1] regression head and no feature scaling.
  bool strict_replication = false;
  std::uint64_t seed = 0;
  int parallelism = 1;

  int effective_runs() const noexcept;
  HeadMode head() const noexcept {
    return strict_replication ? HeadMode::Regression : HeadMode::Softmax;
  }
  /// Throws ConfigError.
  void validate() const;
};

/// Reads a JSON experiment file; dataset manifest paths resolve against the
/// file's directory.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc,
                                             const std::filesystem::path& base_dir);

/// Canonical JSON of the settings that determine results (no parallelism).
nlohmann::json experiment_config_to_json(const ExperimentConfig& config);
std::string config_hash(const ExperimentConfig& config);

/// Reproducible per-run seed from (global seed, dataset, combination, run index).
std::uint64_t derive_seed(std::uint64_t global, std::string_view dataset, std::string_view combo,
                          std::uint64_t run_index) noexcept;

enum class RunStatus { Ok, Diverged, Failed };
std::string_view to_string(RunStatus status) noexcept;

struct RunRecord {
  std::string run_id;
  std::string dataset;
  std::string combo;
  int run_index = 0;
  std::uint64_t seed = 0;
  std::uint64_t data_seed = 0;
  RunStatus status = RunStatus::Ok;
  std::string error;
  TrainResult result;

  bool completed() const noexcept { return status != RunStatus::Failed; }
};

struct SweepCombo {
  Aggregator first;
  Aggregator second;
  std::string name() const;
};

struct SweepReport {
  nlohmann::json config;
  std::string config_hash;
  std::vector<std::string> datasets;
  std::vector<SweepCombo> combos;
  std::vector<std::vector<double>> accuracy;  // [combo][dataset], mean test accuracy
  std::vector<std::vector<double>> ranks;     // [ranked combo][dataset]
  std::vector<std::size_t> ranked_combos;     // combo index of each ranks row
  std::vector<std::size_t> excluded_combos;   // combos with a failed run
  std::vector<RankSummary> table;             // rows index into ranked_combos
  std::vector<RunRecord> runs;

  std::size_t failed_runs() const;
};

struct VariantSummary {
  Variant variant;
  std::vector<double> accuracies;  // test accuracy per completed run, by run index
  std::vector<int> run_indices;
  double mean = 0.0;
  double std = 0.0;  // population
  std::vector<double> adherence;  // pooled over runs, per hidden layer
};

struct PairwiseTest {
  Variant a;
  Variant b;
  WilcoxonResult result;
};

struct DatasetComparison {
  std::string dataset;
  std::size_t n_features = 0;
  std::vector<VariantSummary> variants;
  std::vector<PairwiseTest> tests;
  Variant best = Variant::Kan;
};

struct ComparisonReport {
  nlohmann::json config;
  std::string config_hash;
  std::vector<DatasetComparison> datasets;
  std::vector<RunRecord> runs;

  std::size_t failed_runs() const;
  const VariantSummary* find(std::string_view dataset, Variant v) const;
};

struct AdherenceEntry {
  std::string dataset;
  std::size_t n_features = 0;
  Variant variant;
  std::vector<double> fractions;  // per hidden layer
};

struct AdherenceReport {
  nlohmann::json config;
  std::string config_hash;
  std::vector<AdherenceEntry> entries;  // ascending feature count
  std::vector<RunRecord> runs;

  std::size_t failed_runs() const;
  /// dataset,n_features,variant,layer,fraction
  std::string plot_csv() const;
};

SweepReport run_sweep(const ExperimentConfig& config);
ComparisonReport run_comparison(const ExperimentConfig& config);
AdherenceReport run_adherence(const ExperimentConfig& config);

// Serialization. Payloads are deterministic in (config, seeds); timestamps
// only appear in the header written next to them.
nlohmann::json run_record_to_json(const RunRecord& run);
nlohmann::json report_payload(const SweepReport& report);
nlohmann::json report_payload(const ComparisonReport& report);
nlohmann::json report_payload(const AdherenceReport& report);
std::string summary_table(const SweepReport& report);
std::string summary_table(const ComparisonReport& report);
std::string summary_table(const AdherenceReport& report);

/// Writes <mode>_report.json, <mode>_runs.jsonl and <mode>_summary.txt
/// (plus adherence_plot.csv for the adherence mode) into `out_dir`.
void write_report(const SweepReport& report, const std::filesystem::path& out_dir);
void write_report(const ComparisonReport& report, const std::filesystem::path& out_dir);
void write_report(const AdherenceReport& report, const std::filesystem::path& out_dir);

}  // namespace kanagg
