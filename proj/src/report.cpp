#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "kanagg/errors.hpp"
#include "kanagg/experiment.hpp"
#include "kanagg/kernels.hpp"

namespace kanagg {

using nlohmann::json;

namespace {

// NaN and infinities have no JSON form; they become null.
json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json numbers(const std::vector<double>& xs) {
  json out = json::array();
  for (double x : xs) out.push_back(number(x));
  return out;
}

std::string fixed(double x, int digits = 4) {
  if (!std::isfinite(x)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

json decisions(const json& config) {
  const bool strict = config.value("strict_replication", false);
  return {
      {"head", strict ? "regression on label index, rounded and clamped" : "softmax cross-entropy"},
      {"feature_scaling", strict ? "none" : "train min/max onto [-1, 1]"},
      {"categorical_encoding", "integer codes by first appearance in train; unseen -> reserved code"},
      {"imputation", "train mean (numeric), train mode (categorical)"},
      {"split", "seeded shuffle, 60/20/20 (val and test rounded, train takes the rest); shared across variants per run index"},
      {"adherence_window", "[-1, 1] inclusive, pooled over every training forward pass"},
      {"grid", "static, no grid updates"},
      {"seeds_per_combination", config.value("runs", 1)},
      {"divergence", "stops training; run kept with last finite parameters and ranked"},
  };
}

json wilcoxon_json(const WilcoxonResult& w) {
  return {{"w_plus", w.w_plus},
          {"w_minus", w.w_minus},
          {"n_effective", w.n_effective},
          {"p_value", number(w.p_value)},
          {"method", std::string(to_string(w.method))},
          {"degenerate", w.degenerate},
          {"significant", w.significant()}};
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("failed writing " + path.string());
}

template <typename Report>
void write_common(const Report& report, std::string_view mode, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  const json doc = {{"header", {{"generated_at", timestamp()}, {"tool", "kanagg"}, {"threads", max_threads()}}},
                    {"payload", report_payload(report)}};
  const std::string m(mode);
  write_text(dir / (m + "_report.json"), doc.dump(2) + "\n");
  std::string lines;
  for (const auto& run : report.runs) lines += run_record_to_json(run).dump() + "\n";
  write_text(dir / (m + "_runs.jsonl"), lines);
  write_text(dir / (m + "_summary.txt"), summary_table(report));
}

std::string marker(const DatasetComparison& dc, Variant v) {
  if (v == Variant::Kan) return "";
  int significant = 0;
  int tests = 0;
  bool vs_kan = false;
  for (const auto& t : dc.tests) {
    if (t.a != v && t.b != v) continue;
    ++tests;
    if (t.result.significant()) {
      ++significant;
      if (t.a == Variant::Kan || t.b == Variant::Kan) vs_kan = true;
    }
  }
  if (tests >= 2 && significant == tests) return "**";
  return vs_kan ? "*" : "";
}

}  // namespace

json run_record_to_json(const RunRecord& run) {
  json j = {{"run_id", run.run_id},
            {"dataset", run.dataset},
            {"combo", run.combo},
            {"run_index", run.run_index},
            {"seed", run.seed},
            {"data_seed", run.data_seed},
            {"status", std::string(to_string(run.status))}};
  if (run.status == RunStatus::Failed) {
    j["error"] = run.error;
    return j;
  }
  const TrainResult& r = run.result;
  j["train_accuracy"] = number(r.train_accuracy);
  j["val_accuracy"] = number(r.val_accuracy);
  j["test_accuracy"] = number(r.test_accuracy);
  j["iterations_run"] = r.iterations_run;
  if (r.diverged) j["diverged_at"] = r.diverged_at;
  j["loss_curve"] = numbers(r.loss_curve);
  if (!r.adherence.empty()) j["adherence"] = numbers(r.adherence);
  return j;
}

json report_payload(const SweepReport& report) {
  json combos = json::array();
  for (std::size_t c = 0; c < report.combos.size(); ++c) {
    combos.push_back({{"name", report.combos[c].name()},
                      {"first", std::string(to_string(report.combos[c].first))},
                      {"second", std::string(to_string(report.combos[c].second))},
                      {"accuracy", numbers(report.accuracy[c])}});
  }
  json table = json::array();
  for (const auto& row : report.table) {
    const std::size_t c = report.ranked_combos[row.row];
    table.push_back({{"combo", report.combos[c].name()},
                     {"mean_rank", row.mean},
                     {"std_rank", row.std},
                     {"ranks", report.ranks[row.row]}});
  }
  json excluded = json::array();
  for (std::size_t c : report.excluded_combos) excluded.push_back(report.combos[c].name());
  return {{"mode", "sweep"},
          {"config", report.config},
          {"config_hash", report.config_hash},
          {"decisions", decisions(report.config)},
          {"datasets", report.datasets},
          {"combos", combos},
          {"ranking", table},
          {"excluded_combos", excluded},
          {"failed_runs", report.failed_runs()}};
}

json report_payload(const ComparisonReport& report) {
  json datasets = json::array();
  for (const auto& dc : report.datasets) {
    json variants = json::array();
    for (const auto& v : dc.variants) {
      json entry = {{"variant", std::string(to_string(v.variant))},
                    {"mean", number(v.mean)},
                    {"std", number(v.std)},
                    {"accuracies", numbers(v.accuracies)},
                    {"run_indices", v.run_indices},
                    {"marker", marker(dc, v.variant)}};
      if (!v.adherence.empty()) entry["adherence"] = numbers(v.adherence);
      variants.push_back(entry);
    }
    json tests = json::array();
    for (const auto& t : dc.tests) {
      json tj = wilcoxon_json(t.result);
      tj["a"] = std::string(to_string(t.a));
      tj["b"] = std::string(to_string(t.b));
      tests.push_back(tj);
    }
    datasets.push_back({{"dataset", dc.dataset},
                        {"n_features", dc.n_features},
                        {"variants", variants},
                        {"tests", tests},
                        {"best", std::string(to_string(dc.best))}});
  }
  return {{"mode", "compare"},
          {"config", report.config},
          {"config_hash", report.config_hash},
          {"decisions", decisions(report.config)},
          {"datasets", datasets},
          {"failed_runs", report.failed_runs()}};
}

json report_payload(const AdherenceReport& report) {
  json entries = json::array();
  for (const auto& e : report.entries) {
    entries.push_back({{"dataset", e.dataset},
                       {"n_features", e.n_features},
                       {"variant", std::string(to_string(e.variant))},
                       {"fractions", numbers(e.fractions)}});
  }
  return {{"mode", "adherence"},
          {"config", report.config},
          {"config_hash", report.config_hash},
          {"decisions", decisions(report.config)},
          {"entries", entries},
          {"failed_runs", report.failed_runs()}};
}

std::string summary_table(const SweepReport& report) {
  std::ostringstream out;
  out << "Aggregator sweep (" << report.datasets.size() << " datasets, config " << report.config_hash
      << ")\n\n";
  out << pad("rank", 6) << pad("combo", 22) << pad("mean rank", 12) << "std\n";
  for (std::size_t i = 0; i < report.table.size(); ++i) {
    const auto& row = report.table[i];
    out << pad(std::to_string(i + 1), 6) << pad(report.combos[report.ranked_combos[row.row]].name(), 22)
        << pad(fixed(row.mean, 2), 12) << fixed(row.std, 2) << "\n";
  }
  if (!report.excluded_combos.empty()) {
    out << "\nexcluded (failed runs):";
    for (std::size_t c : report.excluded_combos) out << " " << report.combos[c].name();
    out << "\n";
  }
  for (const auto& run : report.runs) {
    if (!run.completed()) out << "failed " << run.run_id << ": " << run.error << "\n";
  }
  return out.str();
}

std::string summary_table(const ComparisonReport& report) {
  std::ostringstream out;
  out << "Variant comparison (config " << report.config_hash << ")\n";
  out << "* significant vs kan, ** significant vs both others (Wilcoxon, alpha 0.05)\n\n";
  for (const auto& dc : report.datasets) {
    out << dc.dataset << " (" << dc.n_features << " features)\n";
    for (const auto& v : dc.variants) {
      out << "  " << pad(std::string(to_string(v.variant)), 16) << pad(fixed(v.mean), 8) << "+- "
          << pad(fixed(v.std), 8) << pad(marker(dc, v.variant), 4) << "n=" << v.accuracies.size()
          << (v.variant == dc.best ? "  best" : "") << "\n";
    }
    for (const auto& t : dc.tests) {
      out << "  " << to_string(t.a) << " vs " << to_string(t.b) << ": p=" << fixed(t.result.p_value)
          << " (" << to_string(t.result.method) << ", n=" << t.result.n_effective << ")\n";
    }
    out << "\n";
  }
  for (const auto& run : report.runs) {
    if (!run.completed()) out << "failed " << run.run_id << ": " << run.error << "\n";
  }
  return out.str();
}

std::string summary_table(const AdherenceReport& report) {
  std::ostringstream out;
  out << "Hidden-node range adherence, fraction in [-1, 1] (config " << report.config_hash << ")\n\n";
  out << pad("dataset", 20) << pad("features", 10) << pad("variant", 16) << "fraction per hidden layer\n";
  for (const auto& e : report.entries) {
    out << pad(e.dataset, 20) << pad(std::to_string(e.n_features), 10)
        << pad(std::string(to_string(e.variant)), 16);
    for (double f : e.fractions) out << fixed(f) << " ";
    out << "\n";
  }
  for (const auto& run : report.runs) {
    if (!run.completed()) out << "failed " << run.run_id << ": " << run.error << "\n";
  }
  return out.str();
}

void write_report(const SweepReport& report, const std::filesystem::path& out_dir) {
  write_common(report, "sweep", out_dir);
}

void write_report(const ComparisonReport& report, const std::filesystem::path& out_dir) {
  write_common(report, "compare", out_dir);
}

void write_report(const AdherenceReport& report, const std::filesystem::path& out_dir) {
  write_common(report, "adherence", out_dir);
  write_text(out_dir / "adherence_plot.csv", report.plot_csv());
}

}  // namespace kanagg
