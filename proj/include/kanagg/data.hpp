#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "kanagg/matrix.hpp"

namespace kanagg {

enum class ColumnRole { Feature, Target, Ignore };
enum class ColumnType { Numeric, Categorical };

struct ColumnSpec {
  std::string name;
  ColumnRole role = ColumnRole::Feature;
  ColumnType type = ColumnType::Numeric;
};

enum class SyntheticKind { Xor, Blobs };

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::Blobs;
  std::size_t n_features = 2;
  std::size_t n_instances = 200;
  std::size_t n_classes = 2;  // blobs only; xor is always binary
  std::uint64_t seed = 0;     // generation seed, independent of the split seed
};

/// Describes how to read one tabular dataset. Either `source` (a delimited
/// text file) or `synthetic` is set.
struct DatasetManifest {
  std::string name;
  std::filesystem::path source;
  std::optional<SyntheticSpec> synthetic;
  char delimiter = ',';
  bool whitespace_delimited = false;
  bool has_header = false;
  std::string comment_prefix;  // lines starting with it are skipped
  std::vector<std::string> missing_values{"?"};
  std::vector<ColumnSpec> columns;
  std::optional<std::size_t> expected_instances;
  std::optional<std::size_t> expected_features;
  std::optional<std::size_t> expected_classes;

  /// Throws ConfigError unless there is exactly one target and at least one
  /// feature column (file-backed manifests only).
  void validate() const;
  std::size_t feature_count() const;
};

/// Parses a manifest document; relative `source` paths resolve against
/// `base_dir`.
DatasetManifest manifest_from_json_text(const std::string& text,
                                        const std::filesystem::path& base_dir);
DatasetManifest load_manifest(const std::filesystem::path& path);

struct RawColumn {
  ColumnSpec spec;
  std::vector<std::optional<double>> numbers;      // Numeric features
  std::vector<std::optional<std::string>> labels;  // Categorical features and the target
};

struct RawTable {
  std::vector<RawColumn> columns;  // Ignore-role columns are dropped
  std::size_t rows = 0;
  std::size_t missing_cells = 0;
  std::size_t dropped_rows = 0;  // rows whose target was missing
};

/// Throws IngestionError with the 1-based row/column of the problem.
RawTable load_table(const DatasetManifest& manifest);
RawTable parse_table(std::istream& in, const DatasetManifest& manifest);

struct FeatureStats {
  std::string name;
  ColumnType type = ColumnType::Numeric;
  double impute_value = 0.0;              // train mean, or train mode code
  std::vector<std::string> categories;    // first-appearance order on train
  double min = 0.0;                       // train min/max of the encoded values
  double max = 0.0;
};

struct PreprocessOptions {
  std::uint64_t seed = 0;
  bool scale_features = true;  // affine map of train [min, max] onto [-1, 1]
};

/// Preprocessed data. Rows are stored in shuffled order; the splits index
/// into `features`.
struct Dataset {
  std::string name;
  Matrix features;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::vector<std::size_t> source_rows;  // raw-table row of each stored row
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::vector<FeatureStats> stats;
  std::uint64_t seed = 0;
  bool scaled = true;

  std::size_t n_features() const noexcept { return features.cols(); }
  std::size_t n_classes() const noexcept { return class_names.size(); }
  std::size_t n_instances() const noexcept { return features.rows(); }
};

struct SplitSizes {
  std::size_t train;
  std::size_t val;
  std::size_t test;
};

/// 60/20/20: val and test are n / 5 rounded to nearest, train takes the rest.
SplitSizes split_sizes(std::size_t n);

/// Throws PreprocessError for an all-missing train feature or a single-class target.
Dataset preprocess(const RawTable& raw, const DatasetManifest& manifest,
                   const PreprocessOptions& options);

/// Deterministic labelled data run through the same preprocessing pipeline.
/// Xor labels are exactly balanced; blobs draws one Gaussian cluster per class.
Dataset synthetic_dataset(const SyntheticSpec& spec, const PreprocessOptions& options);
Dataset synthetic_dataset(SyntheticKind kind, std::size_t n_features, std::size_t n_instances,
                          std::uint64_t seed);
/// Builds the raw table that synthetic_dataset preprocesses.
RawTable synthetic_table(const SyntheticSpec& spec);
DatasetManifest synthetic_manifest(const std::string& name, const SyntheticSpec& spec);

/// Loads (or synthesizes) and preprocesses the dataset a manifest describes.
Dataset load_dataset(const DatasetManifest& manifest, const PreprocessOptions& options);

/// Serializes a preprocessed dataset, including its fitted statistics.
std::string dataset_to_json(const Dataset& data);

}  // namespace kanagg
