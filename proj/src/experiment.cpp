#include "kanagg/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <variant>

#include "kanagg/errors.hpp"
#include "kanagg/network.hpp"

namespace kanagg {

using nlohmann::json;

std::string_view to_string(ExperimentMode mode) noexcept {
  switch (mode) {
    case ExperimentMode::Sweep: return "sweep";
    case ExperimentMode::Compare: return "compare";
    case ExperimentMode::Adherence: return "adherence";
  }
  return "unknown";
}

std::string_view to_string(Variant variant) noexcept {
  switch (variant) {
    case Variant::Kan: return "kan";
    case Variant::KanLayerNorm: return "kan-layernorm";
    case Variant::KanAvg: return "kan-avg";
  }
  return "unknown";
}

std::string_view to_string(RunStatus status) noexcept {
  switch (status) {
    case RunStatus::Ok: return "ok";
    case RunStatus::Diverged: return "diverged";
    case RunStatus::Failed: return "failed";
  }
  return "unknown";
}

ExperimentMode parse_mode(std::string_view name) {
  for (ExperimentMode m : {ExperimentMode::Sweep, ExperimentMode::Compare, ExperimentMode::Adherence}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown experiment mode '" + std::string(name) + "'");
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::Kan, Variant::KanLayerNorm, Variant::KanAvg}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown variant '" + std::string(name) + "' (kan, kan-layernorm, kan-avg)");
}

int ExperimentConfig::effective_runs() const noexcept {
  if (runs > 0) return runs;
  return mode == ExperimentMode::Compare ? 20 : 1;
}

void ExperimentConfig::validate() const {
  if (datasets.empty()) throw ConfigError("experiment needs at least one dataset");
  if (runs < 0) throw ConfigError("runs must be at least 1");
  if (parallelism < 1) throw ConfigError("parallelism must be at least 1");
  if (hidden_width < 1) throw ConfigError("hidden width must be at least 1");
  train.validate();
  for (const auto& m : datasets) m.validate();
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    for (std::size_t j = i + 1; j < datasets.size(); ++j) {
      if (datasets[i].name == datasets[j].name) {
        throw ConfigError("dataset '" + datasets[i].name + "' listed twice");
      }
    }
  }
  if (mode == ExperimentMode::Sweep) {
    if (aggregators.empty()) throw ConfigError("sweep needs at least one aggregator");
    for (std::size_t i = 0; i < aggregators.size(); ++i) {
      for (std::size_t j = i + 1; j < aggregators.size(); ++j) {
        if (aggregators[i] == aggregators[j]) throw ConfigError("duplicate aggregator in sweep");
      }
    }
  } else {
    if (variants.empty()) throw ConfigError("at least one variant is required");
    for (std::size_t i = 0; i < variants.size(); ++i) {
      for (std::size_t j = i + 1; j < variants.size(); ++j) {
        if (variants[i] == variants[j]) throw ConfigError("duplicate variant");
      }
    }
  }
  (void)make_grid(range_lo, range_hi, grid_size, degree);
}

ExperimentConfig experiment_config_from_json(const json& doc, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  try {
    if (doc.contains("mode")) c.mode = parse_mode(doc.at("mode").get<std::string>());
    if (doc.contains("datasets")) {
      for (const auto& p : doc.at("datasets")) {
        std::filesystem::path path = p.get<std::string>();
        c.datasets.push_back(load_manifest(path.is_absolute() ? path : base_dir / path));
      }
    }
    if (doc.contains("variants")) {
      c.variants.clear();
      for (const auto& v : doc.at("variants")) c.variants.push_back(parse_variant(v.get<std::string>()));
    }
    if (doc.contains("aggregators")) {
      c.aggregators.clear();
      for (const auto& a : doc.at("aggregators")) {
        c.aggregators.push_back(parse_aggregator(a.get<std::string>()));
      }
    }
    c.runs = doc.value("runs", c.runs);
    c.train.iterations = doc.value("iterations", c.train.iterations);
    c.train.batch_size = doc.value("batch_size", c.train.batch_size);
    c.train.learning_rate = doc.value("learning_rate", c.train.learning_rate);
    c.train.trace_adherence = doc.value("trace_adherence", c.train.trace_adherence);
    c.hidden_width = doc.value("hidden_width", c.hidden_width);
    c.grid_size = doc.value("grid_size", c.grid_size);
    c.strict_replication = doc.value("strict_replication", c.strict_replication);
    c.seed = doc.value("seed", c.seed);
    c.parallelism = doc.value("parallelism", c.parallelism);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open experiment config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("experiment config " + path.string() + ": " + e.what());
  }
  return experiment_config_from_json(doc, path.parent_path());
}

json experiment_config_to_json(const ExperimentConfig& c) {
  json datasets = json::array();
  for (const auto& m : c.datasets) {
    json d = {{"name", m.name}, {"n_features", m.feature_count()}};
    if (m.synthetic) {
      d["synthetic"] = {{"kind", m.synthetic->kind == SyntheticKind::Xor ? "xor" : "blobs"},
                        {"features", m.synthetic->n_features},
                        {"instances", m.synthetic->n_instances},
                        {"classes", m.synthetic->n_classes},
                        {"seed", m.synthetic->seed}};
    } else {
      d["source"] = m.source.filename().string();
    }
    datasets.push_back(d);
  }
  json variants = json::array();
  for (Variant v : c.variants) variants.push_back(std::string(to_string(v)));
  json aggs = json::array();
  for (Aggregator a : c.aggregators) aggs.push_back(std::string(to_string(a)));
  json doc = {{"mode", std::string(to_string(c.mode))},
              {"datasets", datasets},
              {"runs", c.effective_runs()},
              {"seed", c.seed},
              {"hidden_width", c.hidden_width},
              {"grid_size", c.grid_size},
              {"degree", c.degree},
              {"grid_range", {c.range_lo, c.range_hi}},
              {"strict_replication", c.strict_replication},
              {"train",
               {{"iterations", c.train.iterations},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"adam_eps", c.train.adam_eps},
                {"trace_adherence", c.train.trace_adherence || c.mode == ExperimentMode::Adherence}}}};
  if (c.mode == ExperimentMode::Sweep) {
    doc["aggregators"] = aggs;
  } else {
    doc["variants"] = variants;
  }
  return doc;
}

namespace {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 14695981039346656037ULL) noexcept {
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::string config_hash(const ExperimentConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(experiment_config_to_json(config).dump())));
  return buf;
}

std::uint64_t derive_seed(std::uint64_t global, std::string_view dataset, std::string_view combo,
                          std::uint64_t run_index) noexcept {
  std::uint64_t h = fnv1a(std::to_string(global));
  h = fnv1a(std::string_view("\x1f", 1), h);
  h = fnv1a(dataset, h);
  h = fnv1a(std::string_view("\x1f", 1), h);
  h = fnv1a(combo, h);
  h = fnv1a(std::string_view("\x1f", 1), h);
  h = fnv1a(std::to_string(run_index), h);
  return splitmix64(h);
}

std::string SweepCombo::name() const {
  return std::string(to_string(first)) + "/" + std::string(to_string(second));
}

namespace {

struct RunSpec {
  std::size_t dataset = 0;
  std::string combo;
  int run_index = 0;
  std::vector<Aggregator> aggregators;  // per layer
  bool layer_norm = false;
};

// A loaded raw table, or the error that prevented loading it.
using LoadedTable = std::variant<RawTable, std::string>;

std::vector<LoadedTable> load_tables(const ExperimentConfig& cfg) {
  std::vector<LoadedTable> tables;
  for (const DatasetManifest& m : cfg.datasets) {
    try {
      tables.emplace_back(m.synthetic ? synthetic_table(*m.synthetic) : load_table(m));
    } catch (const std::exception& e) {
      tables.emplace_back(std::string(e.what()));
    }
  }
  return tables;
}

RunRecord execute_run(const ExperimentConfig& cfg, const DatasetManifest& manifest,
                      const LoadedTable& table, const RunSpec& spec, bool trace,
                      ExecutionPolicy policy) {
  RunRecord rec;
  rec.dataset = manifest.name;
  rec.combo = spec.combo;
  rec.run_index = spec.run_index;
  rec.run_id = manifest.name + ":" + spec.combo + ":" + std::to_string(spec.run_index);
  rec.seed = derive_seed(cfg.seed, manifest.name, spec.combo, static_cast<std::uint64_t>(spec.run_index));
  rec.data_seed = derive_seed(cfg.seed, manifest.name, "split", static_cast<std::uint64_t>(spec.run_index));
  try {
    if (const auto* err = std::get_if<std::string>(&table)) throw std::runtime_error(*err);
    const Dataset data = preprocess(std::get<RawTable>(table), manifest,
                                    PreprocessOptions{rec.data_seed, !cfg.strict_replication});
    NetworkConfig nc;
    const std::size_t n_out = cfg.head() == HeadMode::Softmax ? data.n_classes() : 1;
    nc.widths = {data.n_features(), cfg.hidden_width, n_out};
    nc.aggregators = spec.aggregators;
    nc.layer_norm = spec.layer_norm;
    nc.grid_size = cfg.grid_size;
    nc.degree = cfg.degree;
    nc.range_lo = cfg.range_lo;
    nc.range_hi = cfg.range_hi;
    nc.seed = rec.seed;
    Network net = build_network(nc);

    TrainConfig tc = cfg.train;
    tc.seed = splitmix64(rec.seed);
    tc.head = cfg.head();
    tc.trace_adherence = trace;
    tc.policy = policy;
    rec.result = train(net, data, tc);
    rec.status = rec.result.diverged ? RunStatus::Diverged : RunStatus::Ok;
  } catch (const std::exception& e) {
    rec.status = RunStatus::Failed;
    rec.error = e.what();
  } catch (...) {
    rec.status = RunStatus::Failed;
    rec.error = "unknown error";
  }
  return rec;
}

// Runs are independent; each worker owns its run's network, optimizer and RNG.
std::vector<RunRecord> execute_all(const ExperimentConfig& cfg, const std::vector<LoadedTable>& tables,
                                   const std::vector<RunSpec>& specs, bool trace) {
  std::vector<RunRecord> out(specs.size());
  const ExecutionPolicy policy =
      cfg.parallelism > 1 ? ExecutionPolicy::Serial : cfg.train.policy;
  const auto n = static_cast<std::ptrdiff_t>(specs.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(cfg.parallelism)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const RunSpec& spec = specs[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] =
        execute_run(cfg, cfg.datasets[spec.dataset], tables[spec.dataset], spec, trace, policy);
  }
  return out;
}

RunSpec variant_spec(Variant v, std::size_t dataset, int run) {
  RunSpec s;
  s.dataset = dataset;
  s.combo = std::string(to_string(v));
  s.run_index = run;
  const Aggregator agg = v == Variant::KanAvg ? Aggregator::Mean : Aggregator::Sum;
  s.aggregators = {agg, agg};
  s.layer_norm = v == Variant::KanLayerNorm;
  return s;
}

std::pair<double, double> mean_and_std(const std::vector<double>& v) {
  if (v.empty()) return {std::nan(""), std::nan("")};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

// Inside/total counts summed over the completed runs in [first, first + count).
std::vector<double> pooled_adherence(const std::vector<RunRecord>& runs, std::size_t first,
                                     std::size_t count) {
  std::vector<std::uint64_t> inside;
  std::vector<std::uint64_t> total;
  for (std::size_t i = first; i < first + count; ++i) {
    const RunRecord& rec = runs[i];
    if (!rec.completed()) continue;
    inside.resize(std::max(inside.size(), rec.result.adherence_inside.size()), 0);
    total.resize(std::max(total.size(), rec.result.adherence_total.size()), 0);
    for (std::size_t l = 0; l < rec.result.adherence_total.size(); ++l) {
      inside[l] += rec.result.adherence_inside[l];
      total[l] += rec.result.adherence_total[l];
    }
  }
  std::vector<double> fractions;
  for (std::size_t l = 0; l < total.size(); ++l) {
    fractions.push_back(total[l] > 0 ? static_cast<double>(inside[l]) / static_cast<double>(total[l])
                                     : 0.0);
  }
  return fractions;
}

std::size_t count_failed(const std::vector<RunRecord>& runs) {
  return static_cast<std::size_t>(std::count_if(runs.begin(), runs.end(),
                                                [](const RunRecord& r) { return !r.completed(); }));
}

}  // namespace

std::size_t SweepReport::failed_runs() const { return count_failed(runs); }
std::size_t ComparisonReport::failed_runs() const { return count_failed(runs); }
std::size_t AdherenceReport::failed_runs() const { return count_failed(runs); }

const VariantSummary* ComparisonReport::find(std::string_view dataset, Variant v) const {
  for (const auto& d : datasets) {
    if (d.dataset != dataset) continue;
    for (const auto& s : d.variants) {
      if (s.variant == v) return &s;
    }
  }
  return nullptr;
}

SweepReport run_sweep(const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  cfg.mode = ExperimentMode::Sweep;
  cfg.validate();
  SweepReport report;
  report.config = experiment_config_to_json(cfg);
  report.config_hash = config_hash(cfg);
  for (const auto& m : cfg.datasets) report.datasets.push_back(m.name);
  for (Aggregator a : cfg.aggregators) {
    for (Aggregator b : cfg.aggregators) report.combos.push_back({a, b});
  }

  const int runs = cfg.effective_runs();
  std::vector<RunSpec> specs;
  for (std::size_t d = 0; d < cfg.datasets.size(); ++d) {
    for (const SweepCombo& combo : report.combos) {
      for (int r = 0; r < runs; ++r) {
        specs.push_back({d, combo.name(), r, {combo.first, combo.second}, false});
      }
    }
  }
  const auto tables = load_tables(cfg);
  report.runs = execute_all(cfg, tables, specs, cfg.train.trace_adherence);

  const std::size_t n_combos = report.combos.size();
  const std::size_t n_data = cfg.datasets.size();
  report.accuracy.assign(n_combos, std::vector<double>(n_data, std::nan("")));
  std::vector<bool> excluded(n_combos, false);
  for (std::size_t d = 0; d < n_data; ++d) {
    for (std::size_t c = 0; c < n_combos; ++c) {
      std::vector<double> accs;
      for (int r = 0; r < runs; ++r) {
        const RunRecord& rec = report.runs[(d * n_combos + c) * static_cast<std::size_t>(runs) +
                                           static_cast<std::size_t>(r)];
        if (rec.completed()) {
          accs.push_back(rec.result.test_accuracy);
        } else {
          excluded[c] = true;
        }
      }
      if (!accs.empty()) report.accuracy[c][d] = mean_and_std(accs).first;
    }
  }
  for (std::size_t c = 0; c < n_combos; ++c) {
    (excluded[c] ? report.excluded_combos : report.ranked_combos).push_back(c);
  }
  if (!report.ranked_combos.empty()) {
    report.ranks.assign(report.ranked_combos.size(), std::vector<double>(n_data));
    for (std::size_t d = 0; d < n_data; ++d) {
      std::vector<double> scores;
      for (std::size_t c : report.ranked_combos) scores.push_back(report.accuracy[c][d]);
      const auto ranks = rank_with_ties(scores, /*higher_is_better=*/true);
      for (std::size_t i = 0; i < ranks.size(); ++i) report.ranks[i][d] = ranks[i];
    }
    report.table = average_rank(report.ranks);
  }
  return report;
}

ComparisonReport run_comparison(const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  cfg.mode = ExperimentMode::Compare;
  cfg.validate();
  ComparisonReport report;
  report.config = experiment_config_to_json(cfg);
  report.config_hash = config_hash(cfg);

  const int runs = cfg.effective_runs();
  std::vector<RunSpec> specs;
  for (std::size_t d = 0; d < cfg.datasets.size(); ++d) {
    for (Variant v : cfg.variants) {
      for (int r = 0; r < runs; ++r) specs.push_back(variant_spec(v, d, r));
    }
  }
  const auto tables = load_tables(cfg);
  report.runs = execute_all(cfg, tables, specs, cfg.train.trace_adherence);

  const std::size_t n_var = cfg.variants.size();
  for (std::size_t d = 0; d < cfg.datasets.size(); ++d) {
    DatasetComparison dc;
    dc.dataset = cfg.datasets[d].name;
    dc.n_features = cfg.datasets[d].feature_count();
    for (std::size_t vi = 0; vi < n_var; ++vi) {
      VariantSummary vs;
      vs.variant = cfg.variants[vi];
      for (int r = 0; r < runs; ++r) {
        const RunRecord& rec = report.runs[(d * n_var + vi) * static_cast<std::size_t>(runs) +
                                           static_cast<std::size_t>(r)];
        if (!rec.completed()) continue;
        vs.accuracies.push_back(rec.result.test_accuracy);
        vs.run_indices.push_back(r);
      }
      std::tie(vs.mean, vs.std) = mean_and_std(vs.accuracies);
      dc.variants.push_back(std::move(vs));
    }

    for (std::size_t vi = 0; vi < n_var; ++vi) {
      const std::size_t first = (d * n_var + vi) * static_cast<std::size_t>(runs);
      dc.variants[vi].adherence = pooled_adherence(report.runs, first, static_cast<std::size_t>(runs));
    }

    const std::pair<Variant, Variant> pairs[] = {{Variant::KanAvg, Variant::Kan},
                                                 {Variant::KanAvg, Variant::KanLayerNorm},
                                                 {Variant::KanLayerNorm, Variant::Kan}};
    auto summary_of = [&](Variant v) -> const VariantSummary* {
      for (const auto& s : dc.variants) {
        if (s.variant == v) return &s;
      }
      return nullptr;
    };
    for (const auto& [va, vb] : pairs) {
      const VariantSummary* sa = summary_of(va);
      const VariantSummary* sb = summary_of(vb);
      if (sa == nullptr || sb == nullptr) continue;
      std::vector<double> a;
      std::vector<double> b;
      for (std::size_t i = 0; i < sa->run_indices.size(); ++i) {
        const auto it = std::find(sb->run_indices.begin(), sb->run_indices.end(), sa->run_indices[i]);
        if (it == sb->run_indices.end()) continue;
        a.push_back(sa->accuracies[i]);
        b.push_back(sb->accuracies[static_cast<std::size_t>(it - sb->run_indices.begin())]);
      }
      PairwiseTest t{va, vb, {}};
      if (!a.empty()) {
        t.result = wilcoxon_signed_rank(a, b);
      } else {
        t.result.degenerate = true;
      }
      dc.tests.push_back(t);
    }

    double best_mean = -1.0;
    for (const auto& s : dc.variants) {
      if (!std::isnan(s.mean) && s.mean > best_mean) {
        best_mean = s.mean;
        dc.best = s.variant;
      }
    }
    report.datasets.push_back(std::move(dc));
  }
  return report;
}

AdherenceReport run_adherence(const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  cfg.mode = ExperimentMode::Adherence;
  cfg.train.trace_adherence = true;
  cfg.validate();
  AdherenceReport report;
  report.config = experiment_config_to_json(cfg);
  report.config_hash = config_hash(cfg);

  const int runs = cfg.effective_runs();
  std::vector<RunSpec> specs;
  for (std::size_t d = 0; d < cfg.datasets.size(); ++d) {
    for (Variant v : cfg.variants) {
      for (int r = 0; r < runs; ++r) specs.push_back(variant_spec(v, d, r));
    }
  }
  const auto tables = load_tables(cfg);
  report.runs = execute_all(cfg, tables, specs, /*trace=*/true);

  const std::size_t n_var = cfg.variants.size();
  for (std::size_t d = 0; d < cfg.datasets.size(); ++d) {
    for (std::size_t vi = 0; vi < n_var; ++vi) {
      AdherenceEntry e;
      e.dataset = cfg.datasets[d].name;
      e.n_features = cfg.datasets[d].feature_count();
      e.variant = cfg.variants[vi];
      e.fractions = pooled_adherence(report.runs, (d * n_var + vi) * static_cast<std::size_t>(runs),
                                     static_cast<std::size_t>(runs));
      report.entries.push_back(std::move(e));
    }
  }
  std::stable_sort(report.entries.begin(), report.entries.end(),
                   [](const AdherenceEntry& a, const AdherenceEntry& b) { return a.n_features < b.n_features; });
  return report;
}

std::string AdherenceReport::plot_csv() const {
  std::ostringstream out;
  out << "dataset,n_features,variant,layer,fraction\n";
  for (const auto& e : entries) {
    for (std::size_t l = 0; l < e.fractions.size(); ++l) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", e.fractions[l]);
      out << e.dataset << ',' << e.n_features << ',' << to_string(e.variant) << ',' << l << ','
          << buf << '\n';
    }
  }
  return out.str();
}

}  // namespace kanagg
