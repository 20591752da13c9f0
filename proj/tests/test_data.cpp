#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "kanagg/data.hpp"
#include "kanagg/errors.hpp"

using namespace kanagg;

namespace {

DatasetManifest manifest(std::size_t numeric_features, bool categorical_first = false) {
  DatasetManifest m;
  m.name = "t";
  if (categorical_first) m.columns.push_back({"color", ColumnRole::Feature, ColumnType::Categorical});
  for (std::size_t i = 0; i < numeric_features; ++i) {
    m.columns.push_back({"x" + std::to_string(i), ColumnRole::Feature, ColumnType::Numeric});
  }
  m.columns.push_back({"y", ColumnRole::Target, ColumnType::Categorical});
  return m;
}

RawTable parse(const std::string& text, const DatasetManifest& m) {
  std::istringstream in(text);
  return parse_table(in, m);
}

std::string numeric_rows(std::size_t n, std::size_t features, std::uint64_t salt = 0) {
  std::ostringstream out;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t f = 0; f < features; ++f) out << static_cast<double>((r * 7 + f * 13 + salt) % 23) << ",";
    out << (r % 3) << "\n";
  }
  return out.str();
}

}  // namespace

TEST_CASE("missing sentinels are recorded") {
  const RawTable t = parse("1,2,a\n?,3,b\n4,5,a\n", manifest(2));
  CHECK(t.rows == 3);
  CHECK(t.missing_cells == 1);
  CHECK_FALSE(t.columns[0].numbers[1].has_value());
}

TEST_CASE("column count must match the manifest") {
  DatasetManifest m = manifest(34);
  m.expected_features = 34;
  CHECK_NOTHROW(parse(numeric_rows(5, 34), m));
  try {
    parse(numeric_rows(5, 33), m);
    FAIL("33 feature columns were accepted");
  } catch (const IngestionError& e) {
    CHECK(e.row() == 1);
  }
  m.expected_features = 33;
  CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("empty input is an ingestion error") {
  CHECK_THROWS_AS(parse("", manifest(2)), IngestionError);
  CHECK_THROWS_AS(parse("\n\n", manifest(2)), IngestionError);
}

TEST_CASE("parse errors carry the location") {
  try {
    parse("1,2,a\n1,x,b\n", manifest(2));
    FAIL("bad number accepted");
  } catch (const IngestionError& e) {
    CHECK(e.row() == 2);
    CHECK(e.column() == 2);
  }
}

TEST_CASE("headers, comments, whitespace delimiters and ignored columns") {
  DatasetManifest m = manifest(2);
  m.whitespace_delimited = true;
  m.has_header = true;
  m.comment_prefix = "#";
  m.columns.insert(m.columns.begin(), {"id", ColumnRole::Ignore, ColumnType::Numeric});
  const RawTable t = parse("# note\nid a b y\n7  1.5 2 yes\n8\t-1 3e1 no\n", m);
  CHECK(t.rows == 2);
  REQUIRE(t.columns.size() == 3);
  CHECK(*t.columns[1].numbers[1] == 30.0);
}

TEST_CASE("rows with a missing target are dropped") {
  const RawTable t = parse("1,2,a\n3,4,?\n5,6,b\n", manifest(2));
  CHECK(t.rows == 2);
  CHECK(t.dropped_rows == 1);
}

TEST_CASE("split sizes") {
  CHECK(split_sizes(100).train == 60);
  CHECK(split_sizes(100).val == 20);
  CHECK(split_sizes(100).test == 20);
  for (std::size_t n = 5; n < 600; ++n) {
    const SplitSizes s = split_sizes(n);
    CHECK(s.train + s.val + s.test == n);
    CHECK(std::abs(static_cast<double>(s.train) - 0.6 * n) <= 1.0 + 1e-9);
    CHECK(std::abs(static_cast<double>(s.val) - 0.2 * n) <= 1.0);
    CHECK(std::abs(static_cast<double>(s.test) - 0.2 * n) <= 1.0);
  }
}

TEST_CASE("preprocess splits are disjoint and exhaustive") {
  const DatasetManifest m = manifest(3);
  const RawTable raw = parse(numeric_rows(101, 3), m);
  const Dataset d = preprocess(raw, m, {5, true});
  std::set<std::size_t> all;
  for (auto* s : {&d.train, &d.val, &d.test}) all.insert(s->begin(), s->end());
  CHECK(all.size() == 101);
  CHECK(d.train.size() + d.val.size() + d.test.size() == 101);
  std::set<std::size_t> sources(d.source_rows.begin(), d.source_rows.end());
  CHECK(sources.size() == 101);
  for (int y : d.labels) CHECK((y >= 0 && y < 3));
  for (double v : d.features.data()) CHECK(std::isfinite(v));
}

TEST_CASE("categorical codes follow first appearance on train") {
  // 5 rows: split 3/1/1. Find a seed whose shuffle leaves the three red/blue
  // rows in train, then check the codes.
  const DatasetManifest m = manifest(0, true);
  const RawTable raw = parse("red,a\nblue,b\nred,a\ngreen,b\ngreen,a\n", m);
  bool found = false;
  for (std::uint64_t seed = 0; seed < 200 && !found; ++seed) {
    const Dataset d = preprocess(raw, m, {seed, false});
    std::vector<std::size_t> train_sources;
    for (std::size_t r : d.train) train_sources.push_back(d.source_rows[r]);
    auto sorted = train_sources;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != std::vector<std::size_t>{0, 1, 2}) continue;
    found = true;
    const std::string first = train_sources[0] == 1 ? "blue" : "red";
    CHECK(d.stats[0].categories.size() == 2);
    CHECK(d.stats[0].categories[0] == first);
    for (std::size_t r : d.train) {
      const bool red = d.source_rows[r] != 1;
      CHECK(d.features(r, 0) == ((red == (first == "red")) ? 0.0 : 1.0));
    }
    // Unseen category in val/test maps to the reserved code.
    for (std::size_t r : d.test) CHECK(d.features(r, 0) == 2.0);
    CHECK(d.stats[0].impute_value == (first == "red" ? 0.0 : 1.0));
  }
  CHECK(found);
}

TEST_CASE("numeric scaling maps train min/max onto [-1, 1]") {
  const DatasetManifest m = manifest(1);
  std::string text;
  for (double v : {2.0, 10.0, 6.0, 4.0, 8.0}) text += std::to_string(v) + "," + (v < 6 ? "a" : "b") + "\n";
  const RawTable raw = parse(text, m);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Dataset d = preprocess(raw, m, {seed, true});
    const FeatureStats& s = d.stats[0];
    for (std::size_t r = 0; r < 5; ++r) {
      const double original = *raw.columns[0].numbers[d.source_rows[r]];
      CHECK(d.features(r, 0) == doctest::Approx(2.0 * (original - s.min) / (s.max - s.min) - 1.0));
    }
    if (s.min == 2.0 && s.max == 10.0) {
      for (std::size_t r = 0; r < 5; ++r) {
        const double original = *raw.columns[0].numbers[d.source_rows[r]];
        if (original == 2.0) CHECK(d.features(r, 0) == -1.0);
        if (original == 10.0) CHECK(d.features(r, 0) == 1.0);
        if (original == 6.0) CHECK(d.features(r, 0) == 0.0);
      }
    }
  }
}

TEST_CASE("constant features map to zero") {
  const DatasetManifest m = manifest(2);
  const RawTable raw = parse("3,1,a\n3,2,b\n3,3,a\n3,4,b\n3,5,a\n", m);
  const Dataset d = preprocess(raw, m, {1, true});
  for (std::size_t r = 0; r < 5; ++r) CHECK(d.features(r, 0) == 0.0);
}

TEST_CASE("imputation uses train statistics") {
  const DatasetManifest m = manifest(1);
  const RawTable raw = parse("1,a\n?,b\n3,a\n5,b\n?,a\n7,b\n9,a\n11,b\n13,a\n15,b\n", m);
  const Dataset d = preprocess(raw, m, {3, false});
  double sum = 0.0;
  int present = 0;
  for (std::size_t r : d.train) {
    if (const auto& v = raw.columns[0].numbers[d.source_rows[r]]) {
      sum += *v;
      ++present;
    }
  }
  CHECK(d.stats[0].impute_value == doctest::Approx(sum / present));
  for (std::size_t r = 0; r < 10; ++r) {
    if (!raw.columns[0].numbers[d.source_rows[r]]) CHECK(d.features(r, 0) == d.stats[0].impute_value);
  }
}

TEST_CASE("class names sort numerically when every label is a number") {
  DatasetManifest m = manifest(1);
  const RawTable raw = parse("1,10\n2,2\n3,1\n4,10\n5,2\n", m);
  const Dataset d = preprocess(raw, m, {0, true});
  CHECK(d.class_names == std::vector<std::string>{"1", "2", "10"});
}

TEST_CASE("preprocessing errors") {
  const DatasetManifest m = manifest(2);
  CHECK_THROWS_AS(preprocess(parse("?,1,a\n?,2,b\n?,3,a\n?,4,b\n?,5,a\n", m), m, {0, true}), PreprocessError);
  CHECK_THROWS_AS(preprocess(parse("1,1,a\n2,2,a\n3,3,a\n", m), m, {0, true}), PreprocessError);
}

TEST_CASE("no train/test leakage") {
  const DatasetManifest m = manifest(4, true);
  std::ostringstream text;
  const char* colors[] = {"red", "green", "blue", "cyan"};
  for (int r = 0; r < 200; ++r) {
    text << colors[(r * 7) % 4] << ",";
    for (int f = 0; f < 4; ++f) {
      if ((r + f) % 17 == 0) {
        text << "?,";
      } else {
        text << std::sin(r * 1.3 + f) * (f + 1) << ",";
      }
    }
    text << (r % 2) << "\n";
  }
  const RawTable raw = parse(text.str(), m);
  const Dataset base = preprocess(raw, m, {42, true});

  // Wildly change every feature of every val/test row.
  RawTable mutated = raw;
  std::vector<std::size_t> held_out;
  for (auto* split : {&base.val, &base.test}) {
    for (std::size_t r : *split) held_out.push_back(base.source_rows[r]);
  }
  for (std::size_t src : held_out) {
    mutated.columns[0].labels[src] = "never-seen";
    for (std::size_t c = 1; c <= 4; ++c) mutated.columns[c].numbers[src] = 1e6 + static_cast<double>(src);
  }
  const Dataset changed = preprocess(mutated, m, {42, true});

  CHECK(changed.source_rows == base.source_rows);
  for (std::size_t f = 0; f < base.stats.size(); ++f) {
    CHECK(changed.stats[f].impute_value == base.stats[f].impute_value);
    CHECK(changed.stats[f].min == base.stats[f].min);
    CHECK(changed.stats[f].max == base.stats[f].max);
    CHECK(changed.stats[f].categories == base.stats[f].categories);
  }
  for (std::size_t r : base.train) {
    const auto a = base.features.row(r);
    const auto b = changed.features.row(r);
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
}

TEST_CASE("preprocess is deterministic in the seed") {
  const DatasetManifest m = manifest(3);
  const RawTable raw = parse(numeric_rows(60, 3), m);
  const Dataset a = preprocess(raw, m, {9, true});
  const Dataset b = preprocess(raw, m, {9, true});
  const Dataset c = preprocess(raw, m, {10, true});
  CHECK(a.features == b.features);
  CHECK(a.source_rows == b.source_rows);
  CHECK(a.source_rows != c.source_rows);
  CHECK(dataset_to_json(a) == dataset_to_json(b));
}

TEST_CASE("synthetic datasets") {
  SUBCASE("xor is balanced") {
    const Dataset d = synthetic_dataset(SyntheticKind::Xor, 2, 200, 1);
    const auto ones = std::count(d.labels.begin(), d.labels.end(), 1);
    CHECK(std::abs(static_cast<double>(ones) / 200.0 - 0.5) <= 0.05);
    CHECK(d.n_features() == 2);
  }
  SUBCASE("same seed, same data") {
    const Dataset a = synthetic_dataset(SyntheticKind::Blobs, 30, 300, 4);
    const Dataset b = synthetic_dataset(SyntheticKind::Blobs, 30, 300, 4);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);
  }
  SUBCASE("train values in range, held-out values nearly so") {
    const Dataset d = synthetic_dataset(SyntheticKind::Blobs, 20, 500, 8);
    std::size_t inside = 0;
    std::size_t total = 0;
    for (std::size_t r : d.train) {
      for (double v : d.features.row(r)) CHECK((v >= -1.0 && v <= 1.0));
    }
    for (auto* split : {&d.val, &d.test}) {
      for (std::size_t r : *split) {
        for (double v : d.features.row(r)) {
          ++total;
          if (v >= -1.5 && v <= 1.5) ++inside;
        }
      }
    }
    CHECK(static_cast<double>(inside) / static_cast<double>(total) >= 0.99);
  }
  SUBCASE("invalid sizes") {
    CHECK_THROWS(synthetic_dataset(SyntheticKind::Xor, 1, 200, 1));
    CHECK_THROWS(synthetic_dataset(SyntheticKind::Xor, 2, 2, 1));
  }
}

TEST_CASE("manifests") {
  const std::string text = R"({
    "name": "demo", "source": "demo.csv", "delimiter": ";", "header": true,
    "missing": ["NA", "?"],
    "columns": [{"name": "f", "count": 3}, {"name": "c", "type": "categorical"},
                {"name": "id", "role": "ignore"}, {"name": "label", "role": "target"}],
    "expected": {"instances": 10, "features": 4, "classes": 2}
  })";
  const DatasetManifest m = manifest_from_json_text(text, "/data");
  CHECK(m.name == "demo");
  CHECK(m.source == std::filesystem::path("/data/demo.csv"));
  CHECK(m.delimiter == ';');
  CHECK(m.has_header);
  CHECK(m.columns.size() == 6);
  CHECK(m.columns[2].name == "f_3");
  CHECK(m.feature_count() == 4);
  CHECK(m.missing_values == std::vector<std::string>{"NA", "?"});

  CHECK_THROWS_AS(manifest_from_json_text(R"({"name": "x", "source": "a", "columns": [{"name": "a"}]})", "."),
                  ConfigError);
  CHECK_THROWS_AS(manifest_from_json_text(R"({"name": "x", "source": "a", "delimiter": "ab",
      "columns": [{"name": "a"}, {"name": "b", "role": "target"}]})", "."), ConfigError);
  CHECK_THROWS_AS(manifest_from_json_text("[", "."), ConfigError);
}

TEST_CASE("the bundled german credit data matches its manifest") {
  const std::filesystem::path path = std::filesystem::path(KANAGG_DATA_DIR) / "german.json";
  REQUIRE(std::filesystem::exists(path));
  const DatasetManifest m = load_manifest(path);
  const Dataset d = load_dataset(m, {1, true});
  CHECK(d.n_instances() == 1000);
  CHECK(d.n_features() == 24);
  CHECK(d.n_classes() == 2);
  CHECK(d.train.size() == 600);
}

TEST_CASE("synthetic manifests load through the same path") {
  const DatasetManifest m = manifest_from_json_text(
      R"({"name": "s", "synthetic": {"kind": "gaussian-blobs", "features": 5, "instances": 50, "classes": 3}})", ".");
  REQUIRE(m.synthetic);
  const Dataset d = load_dataset(m, {0, true});
  CHECK(d.n_features() == 5);
  CHECK(d.n_classes() == 3);
}
