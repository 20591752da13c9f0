#include "kanagg/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "kanagg/errors.hpp"

namespace kanagg {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  s = s.substr(first, last - first + 1);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    s = s.substr(1, s.size() - 2);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line, const DatasetManifest& m) {
  std::vector<std::string_view> out;
  if (m.whitespace_delimited) {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
      if (i >= line.size()) break;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
      out.push_back(line.substr(i, j - i));
      i = j;
    }
    return out;
  }
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(m.delimiter, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::optional<double> parse_number(std::string_view s) {
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

ColumnRole parse_role(const std::string& s) {
  if (s == "feature") return ColumnRole::Feature;
  if (s == "target") return ColumnRole::Target;
  if (s == "ignore") return ColumnRole::Ignore;
  throw ConfigError("manifest: unknown column role '" + s + "'");
}

ColumnType parse_type(const std::string& s) {
  if (s == "numeric") return ColumnType::Numeric;
  if (s == "categorical") return ColumnType::Categorical;
  throw ConfigError("manifest: unknown column type '" + s + "'");
}

SyntheticKind parse_synthetic_kind(const std::string& s) {
  if (s == "xor") return SyntheticKind::Xor;
  if (s == "blobs" || s == "gaussian-blobs") return SyntheticKind::Blobs;
  throw ConfigError("manifest: unknown synthetic kind '" + s + "'");
}

// Class labels sort numerically when every label is a number, else lexically.
void sort_class_names(std::vector<std::string>& names) {
  const bool numeric = std::all_of(names.begin(), names.end(),
                                   [](const std::string& s) { return parse_number(s).has_value(); });
  if (numeric) {
    std::sort(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
      return *parse_number(a) < *parse_number(b);
    });
  } else {
    std::sort(names.begin(), names.end());
  }
}

}  // namespace

void DatasetManifest::validate() const {
  if (name.empty()) throw ConfigError("manifest: missing name");
  if (synthetic) {
    if (synthetic->n_features < 2) throw ConfigError("synthetic dataset needs at least 2 features");
    if (synthetic->n_instances < 5) throw ConfigError("synthetic dataset needs at least 5 instances");
    if (synthetic->kind == SyntheticKind::Blobs && synthetic->n_classes < 2) {
      throw ConfigError("synthetic blobs need at least 2 classes");
    }
    return;
  }
  std::size_t targets = 0;
  std::size_t features = 0;
  for (const ColumnSpec& c : columns) {
    if (c.role == ColumnRole::Target) ++targets;
    if (c.role == ColumnRole::Feature) ++features;
  }
  if (targets != 1) throw ConfigError("manifest '" + name + "': exactly one target column required");
  if (features == 0) throw ConfigError("manifest '" + name + "': no feature columns");
  if (expected_features && *expected_features != features) {
    throw ConfigError("manifest '" + name + "': declares " + std::to_string(features) +
                      " feature columns but expects " + std::to_string(*expected_features));
  }
}

std::size_t DatasetManifest::feature_count() const {
  if (synthetic) return synthetic->n_features;
  return static_cast<std::size_t>(std::count_if(columns.begin(), columns.end(), [](const ColumnSpec& c) {
    return c.role == ColumnRole::Feature;
  }));
}

DatasetManifest manifest_from_json_text(const std::string& text,
                                        const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest: malformed JSON: ") + e.what());
  }
  DatasetManifest m;
  try {
    m.name = j.at("name").get<std::string>();
    if (j.contains("synthetic")) {
      const json& s = j.at("synthetic");
      SyntheticSpec spec;
      spec.kind = parse_synthetic_kind(s.at("kind").get<std::string>());
      spec.n_features = s.at("features").get<std::size_t>();
      spec.n_instances = s.at("instances").get<std::size_t>();
      spec.n_classes = s.value("classes", std::size_t{2});
      spec.seed = s.value("seed", std::uint64_t{0});
      m.synthetic = spec;
    } else {
      std::filesystem::path src = j.at("source").get<std::string>();
      m.source = src.is_absolute() ? src : base_dir / src;
      const std::string delim = j.value("delimiter", std::string(","));
      if (delim == "whitespace") {
        m.whitespace_delimited = true;
      } else if (delim.size() == 1) {
        m.delimiter = delim[0];
      } else {
        throw ConfigError("manifest: delimiter must be one character or \"whitespace\"");
      }
      m.has_header = j.value("header", false);
      m.comment_prefix = j.value("comment_prefix", std::string());
      if (j.contains("missing")) m.missing_values = j.at("missing").get<std::vector<std::string>>();
      for (const json& c : j.at("columns")) {
        const ColumnRole role = parse_role(c.value("role", std::string("feature")));
        const ColumnType type = parse_type(c.value("type", std::string("numeric")));
        const std::string name = c.at("name").get<std::string>();
        const std::size_t count = c.value("count", std::size_t{0});
        if (count == 0) {
          m.columns.push_back({name, role, type});
        } else {
          for (std::size_t i = 1; i <= count; ++i) {
            m.columns.push_back({name + "_" + std::to_string(i), role, type});
          }
        }
      }
    }
    if (j.contains("expected")) {
      const json& e = j.at("expected");
      if (e.contains("instances")) m.expected_instances = e.at("instances").get<std::size_t>();
      if (e.contains("features")) m.expected_features = e.at("features").get<std::size_t>();
      if (e.contains("classes")) m.expected_classes = e.at("classes").get<std::size_t>();
    }
  } catch (const json::exception& e) {
    throw ConfigError("manifest '" + m.name + "': " + e.what());
  }
  m.validate();
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return manifest_from_json_text(buf.str(), path.parent_path());
}

RawTable parse_table(std::istream& in, const DatasetManifest& m) {
  m.validate();
  RawTable table;
  std::vector<RawColumn> all(m.columns.size());
  for (std::size_t c = 0; c < m.columns.size(); ++c) all[c].spec = m.columns[c];

  std::string line;
  std::size_t line_no = 0;
  bool header_pending = m.has_header;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    if (!m.comment_prefix.empty() && view.starts_with(m.comment_prefix)) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    const auto fields = split_fields(line, m);
    if (fields.size() != m.columns.size()) {
      throw IngestionError("expected " + std::to_string(m.columns.size()) + " fields, found " +
                               std::to_string(fields.size()),
                           line_no);
    }
    bool target_missing = false;
    std::vector<std::optional<double>> nums(fields.size());
    std::vector<std::optional<std::string>> labs(fields.size());
    std::size_t missing = 0;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const ColumnSpec& spec = m.columns[c];
      if (spec.role == ColumnRole::Ignore) continue;
      const std::string_view cell = trim(fields[c]);
      const bool is_missing =
          cell.empty() ||
          std::find(m.missing_values.begin(), m.missing_values.end(), cell) != m.missing_values.end();
      if (is_missing) {
        if (spec.role == ColumnRole::Target) target_missing = true;
        ++missing;
        continue;
      }
      if (spec.role == ColumnRole::Feature && spec.type == ColumnType::Numeric) {
        nums[c] = parse_number(cell);
        if (!nums[c]) {
          throw IngestionError("cannot parse '" + std::string(cell) + "' as a number", line_no, c + 1);
        }
      } else {
        labs[c] = std::string(cell);
      }
    }
    if (target_missing) {
      ++table.dropped_rows;
      continue;
    }
    table.missing_cells += missing;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const ColumnSpec& spec = m.columns[c];
      if (spec.role == ColumnRole::Ignore) continue;
      if (spec.role == ColumnRole::Feature && spec.type == ColumnType::Numeric) {
        all[c].numbers.push_back(nums[c]);
      } else {
        all[c].labels.push_back(std::move(labs[c]));
      }
    }
    ++table.rows;
  }
  if (table.rows == 0) throw IngestionError("no data rows in '" + m.name + "'");
  for (RawColumn& col : all) {
    if (col.spec.role != ColumnRole::Ignore) table.columns.push_back(std::move(col));
  }
  return table;
}

RawTable load_table(const DatasetManifest& m) {
  std::ifstream in(m.source);
  if (!in) throw IngestionError("cannot open data file " + m.source.string());
  return parse_table(in, m);
}

SplitSizes split_sizes(std::size_t n) {
  const std::size_t fifth = (n + 2) / 5;  // nearest integer to n / 5
  return {n - 2 * fifth, fifth, fifth};
}

Dataset preprocess(const RawTable& raw, const DatasetManifest& manifest,
                   const PreprocessOptions& options) {
  const std::size_t n = raw.rows;
  const SplitSizes sizes = split_sizes(n);
  if (sizes.train == 0) throw PreprocessError("dataset '" + manifest.name + "' has no rows");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(options.seed);
  std::shuffle(order.begin(), order.end(), rng);

  const RawColumn* target = nullptr;
  std::vector<const RawColumn*> feature_cols;
  for (const RawColumn& c : raw.columns) {
    if (c.spec.role == ColumnRole::Target) target = &c;
    if (c.spec.role == ColumnRole::Feature) feature_cols.push_back(&c);
  }
  if (target == nullptr) throw PreprocessError("dataset '" + manifest.name + "' has no target");
  if (feature_cols.empty()) throw PreprocessError("dataset '" + manifest.name + "' has no features");

  Dataset ds;
  ds.name = manifest.name;
  ds.seed = options.seed;
  ds.scaled = options.scale_features;
  ds.source_rows = order;

  // Target classes.
  {
    std::vector<std::string> names;
    for (const auto& l : target->labels) names.push_back(*l);
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    if (names.size() < 2) {
      throw PreprocessError("dataset '" + manifest.name + "': target has a single class");
    }
    sort_class_names(names);
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < names.size(); ++i) index[names[i]] = static_cast<int>(i);
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) ds.labels[i] = index.at(*target->labels[order[i]]);
    ds.class_names = std::move(names);
  }

  const std::size_t d = feature_cols.size();
  ds.features = Matrix(n, d);
  ds.stats.resize(d);
  for (std::size_t f = 0; f < d; ++f) {
    const RawColumn& col = *feature_cols[f];
    FeatureStats& st = ds.stats[f];
    st.name = col.spec.name;
    st.type = col.spec.type;

    if (col.spec.type == ColumnType::Numeric) {
      double sum = 0.0;
      std::size_t present = 0;
      for (std::size_t i = 0; i < sizes.train; ++i) {
        if (const auto& v = col.numbers[order[i]]) {
          sum += *v;
          ++present;
        }
      }
      if (present == 0) {
        throw PreprocessError("dataset '" + manifest.name + "': feature '" + st.name +
                              "' is missing on every training row");
      }
      st.impute_value = sum / static_cast<double>(present);
      for (std::size_t i = 0; i < n; ++i) {
        ds.features(i, f) = col.numbers[order[i]].value_or(st.impute_value);
      }
    } else {
      std::map<std::string, std::size_t> codes;
      std::vector<std::size_t> counts;
      for (std::size_t i = 0; i < sizes.train; ++i) {
        const auto& v = col.labels[order[i]];
        if (!v) continue;
        auto [it, inserted] = codes.try_emplace(*v, st.categories.size());
        if (inserted) {
          st.categories.push_back(*v);
          counts.push_back(0);
        }
        ++counts[it->second];
      }
      if (st.categories.empty()) {
        throw PreprocessError("dataset '" + manifest.name + "': feature '" + st.name +
                              "' is missing on every training row");
      }
      const auto mode = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) -
                                                 counts.begin());
      st.impute_value = static_cast<double>(mode);
      const double unseen = static_cast<double>(st.categories.size());
      for (std::size_t i = 0; i < n; ++i) {
        const auto& v = col.labels[order[i]];
        if (!v) {
          ds.features(i, f) = st.impute_value;
        } else {
          const auto it = codes.find(*v);
          ds.features(i, f) = it == codes.end() ? unseen : static_cast<double>(it->second);
        }
      }
    }

    st.min = ds.features(0, f);
    st.max = ds.features(0, f);
    for (std::size_t i = 1; i < sizes.train; ++i) {
      st.min = std::min(st.min, ds.features(i, f));
      st.max = std::max(st.max, ds.features(i, f));
    }
    if (options.scale_features) {
      const double span = st.max - st.min;
      for (std::size_t i = 0; i < n; ++i) {
        ds.features(i, f) = span > 0.0 ? 2.0 * (ds.features(i, f) - st.min) / span - 1.0 : 0.0;
      }
    }
  }

  ds.train.resize(sizes.train);
  std::iota(ds.train.begin(), ds.train.end(), std::size_t{0});
  ds.val.resize(sizes.val);
  std::iota(ds.val.begin(), ds.val.end(), sizes.train);
  ds.test.resize(sizes.test);
  std::iota(ds.test.begin(), ds.test.end(), sizes.train + sizes.val);
  return ds;
}

DatasetManifest synthetic_manifest(const std::string& name, const SyntheticSpec& spec) {
  DatasetManifest m;
  m.name = name;
  m.synthetic = spec;
  for (std::size_t f = 0; f < spec.n_features; ++f) {
    m.columns.push_back({"x" + std::to_string(f + 1), ColumnRole::Feature, ColumnType::Numeric});
  }
  m.columns.push_back({"class", ColumnRole::Target, ColumnType::Categorical});
  return m;
}

RawTable synthetic_table(const SyntheticSpec& spec) {
  if (spec.n_features < 2) throw std::invalid_argument("synthetic_table: need at least 2 features");
  if (spec.n_instances < 5) throw std::invalid_argument("synthetic_table: need at least 5 instances");
  const std::size_t n_classes = spec.kind == SyntheticKind::Xor ? 2 : spec.n_classes;
  if (n_classes < 2) throw std::invalid_argument("synthetic_table: need at least 2 classes");

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> magnitude(0.05, 1.0);
  std::normal_distribution<double> noise(0.0, 0.15);

  std::vector<std::vector<double>> means;
  if (spec.kind == SyntheticKind::Blobs) {
    means.assign(n_classes, std::vector<double>(spec.n_features));
    for (auto& mu : means) {
      for (double& v : mu) v = 0.6 * unit(rng);
    }
  }

  RawTable t;
  t.rows = spec.n_instances;
  t.columns.resize(spec.n_features + 1);
  for (std::size_t f = 0; f < spec.n_features; ++f) {
    t.columns[f].spec = {"x" + std::to_string(f + 1), ColumnRole::Feature, ColumnType::Numeric};
    t.columns[f].numbers.resize(spec.n_instances);
  }
  RawColumn& target = t.columns.back();
  target.spec = {"class", ColumnRole::Target, ColumnType::Categorical};
  target.labels.resize(spec.n_instances);

  for (std::size_t i = 0; i < spec.n_instances; ++i) {
    const std::size_t label = i % n_classes;
    target.labels[i] = std::to_string(label);
    if (spec.kind == SyntheticKind::Xor) {
      const double s0 = unit(rng) < 0.0 ? -1.0 : 1.0;
      const double s1 = label == 1 ? -s0 : s0;
      t.columns[0].numbers[i] = s0 * magnitude(rng);
      t.columns[1].numbers[i] = s1 * magnitude(rng);
      for (std::size_t f = 2; f < spec.n_features; ++f) t.columns[f].numbers[i] = unit(rng);
    } else {
      for (std::size_t f = 0; f < spec.n_features; ++f) {
        t.columns[f].numbers[i] = means[label][f] + noise(rng);
      }
    }
  }
  return t;
}

Dataset synthetic_dataset(const SyntheticSpec& spec, const PreprocessOptions& options) {
  const std::string name = spec.kind == SyntheticKind::Xor ? "synthetic-xor" : "synthetic-blobs";
  return preprocess(synthetic_table(spec), synthetic_manifest(name, spec), options);
}

Dataset synthetic_dataset(SyntheticKind kind, std::size_t n_features, std::size_t n_instances,
                          std::uint64_t seed) {
  SyntheticSpec spec;
  spec.kind = kind;
  spec.n_features = n_features;
  spec.n_instances = n_instances;
  spec.n_classes = kind == SyntheticKind::Xor ? 2 : 3;
  spec.seed = seed;
  return synthetic_dataset(spec, PreprocessOptions{seed, true});
}

Dataset load_dataset(const DatasetManifest& manifest, const PreprocessOptions& options) {
  manifest.validate();
  if (manifest.synthetic) {
    Dataset ds = preprocess(synthetic_table(*manifest.synthetic), manifest, options);
    return ds;
  }
  return preprocess(load_table(manifest), manifest, options);
}

std::string dataset_to_json(const Dataset& data) {
  json stats = json::array();
  for (const FeatureStats& s : data.stats) {
    stats.push_back({{"name", s.name},
                     {"type", s.type == ColumnType::Numeric ? "numeric" : "categorical"},
                     {"impute_value", s.impute_value},
                     {"categories", s.categories},
                     {"train_min", s.min},
                     {"train_max", s.max}});
  }
  json rows = json::array();
  for (std::size_t i = 0; i < data.n_instances(); ++i) {
    const auto r = data.features.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  json doc = {{"name", data.name},
              {"seed", data.seed},
              {"scaled", data.scaled},
              {"encoding", "ordinal-first-appearance"},
              {"imputation", "train-mean/train-mode"},
              {"class_names", data.class_names},
              {"n_features", data.n_features()},
              {"n_instances", data.n_instances()},
              {"train", data.train},
              {"val", data.val},
              {"test", data.test},
              {"source_rows", data.source_rows},
              {"labels", data.labels},
              {"features", rows},
              {"stats", stats}};
  return doc.dump();
}

}  // namespace kanagg
