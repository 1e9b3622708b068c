#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "test_util.hpp"

using namespace chronotoken;
namespace fs = std::filesystem;

namespace {

// Desk-scale cohort: few events per variable so the suites stay fast.
SynthConfig small_config(uint64_t seed = 1, int n = 400) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.n_encounters = n;
  cfg.n_variables = 10;
  cfg.rates.assign(10, 3600.0);
  cfg.d_note = 6;
  cfg.n_static = 4;
  cfg.max_note_chunks = 3;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double shared_timestamp_fraction(const DatasetSplit& split) {
  long long shared = 0, total = 0;
  auto scan = [&](const std::vector<EncounterRecord>& recs) {
    for (const auto& r : recs) {
      std::map<double, int> groups;
      for (const auto& e : r.events) ++groups[e.timestamp];
      for (const auto& e : r.events) {
        ++total;
        if (groups[e.timestamp] > 1) ++shared;
      }
    }
  };
  scan(split.train);
  scan(split.val);
  scan(split.test);
  return static_cast<double>(shared) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("generator is a pure function of the config") {
  SynthConfig cfg = small_config(77, 50);
  DatasetSplit a = generate_synthetic(cfg);
  DatasetSplit b = generate_synthetic(cfg);
  CHECK(datasets_equal(a, b));

  fs::path dir_a = fs::temp_directory_path() / "ct_det_a";
  fs::path dir_b = fs::temp_directory_path() / "ct_det_b";
  write_dataset(a, dir_a);
  write_dataset(b, dir_b);
  for (const char* f : {"train.jsonl", "val.jsonl", "test.jsonl", "manifest.json"}) {
    CHECK(slurp(dir_a / f) == slurp(dir_b / f));
  }
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  DatasetSplit c = generate_synthetic(small_config(78, 50));
  CHECK_FALSE(datasets_equal(a, c));
}

TEST_CASE("prevalence calibration within one percentage point") {
  SynthConfig cfg = small_config(5, 20000);
  cfg.prevalence[0] = 0.23;  // ICU-stay-like rate
  cfg.value_signal.assign(kNumTasks, 1.0);
  cfg.gap_signal.assign(kNumTasks, 0.5);
  DatasetSplit split = generate_synthetic(cfg);

  std::vector<const std::vector<EncounterRecord>*> parts{&split.train, &split.val,
                                                         &split.test};
  for (int k = 0; k < kNumTasks; ++k) {
    long long pos = 0, n = 0;
    for (const auto* part : parts) {
      for (const auto& r : *part) {
        pos += r.labels[k];
        ++n;
      }
    }
    double rate = static_cast<double>(pos) / n;
    CHECK(std::abs(rate - cfg.prevalence[k]) <= 0.01);
    if (k == 0) {
      CHECK(rate >= 0.22);
      CHECK(rate <= 0.24);
    }
  }
}

TEST_CASE("split disjointness by encounter id") {
  DatasetSplit split = generate_synthetic(small_config(9, 200));
  std::set<std::string> seen;
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    for (const auto& r : *part) {
      CHECK(seen.insert(r.encounter_id).second);
    }
  }
  CHECK(seen.size() == 200);
  CHECK(split.train.size() == 140);
  CHECK(split.val.size() == 30);
}

TEST_CASE("bayes oracle: zero signal is exactly 0.5, strong signal >= 0.9") {
  SynthConfig zero = small_config(3, 100);
  auto z = bayes_auroc_oracle(zero, 4000);
  for (int k = 0; k < kNumTasks; ++k) {
    CHECK(z[k] == doctest::Approx(0.5).epsilon(1e-12));
  }

  SynthConfig strong = small_config(3, 100);
  strong.value_signal.assign(kNumTasks, 3.0);  // true logit std about 3
  auto s = bayes_auroc_oracle(strong, 20000);
  for (int k = 0; k < kNumTasks; ++k) CHECK(s[k] >= 0.9);

  CHECK_THROWS_AS(bayes_auroc_oracle(zero, 999), std::invalid_argument);
}

TEST_CASE("bayes oracle: doubling signal strengths is non-decreasing per task") {
  SynthConfig base = small_config(4, 100);
  base.value_signal.assign(kNumTasks, 1.0);
  base.gap_signal.assign(kNumTasks, 0.5);
  base.note_signal.assign(kNumTasks, 0.5);
  SynthConfig doubled = base;
  for (int k = 0; k < kNumTasks; ++k) {
    doubled.value_signal[k] *= 2.0;
    doubled.gap_signal[k] *= 2.0;
    doubled.note_signal[k] *= 2.0;
  }
  auto lo = bayes_auroc_oracle(base, 20000);
  auto hi = bayes_auroc_oracle(doubled, 20000);
  for (int k = 0; k < kNumTasks; ++k) CHECK(hi[k] >= lo[k]);
}

TEST_CASE("duplicate-timestamp fraction is monotone in dup_cluster_prob") {
  double fractions[3];
  double probs[3] = {0.0, 0.5, 1.0};
  for (int i = 0; i < 3; ++i) {
    SynthConfig cfg = small_config(6, 150);
    cfg.rates.assign(10, 2400.0);  // equal counts so chains cover everyone
    cfg.dup_cluster_prob = probs[i];
    fractions[i] = shared_timestamp_fraction(generate_synthetic(cfg));
  }
  // p=0: unique up to measure-zero collisions. p=1: every event shares.
  CHECK(fractions[0] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(fractions[1] > fractions[0] + 0.1);
  CHECK(fractions[2] > fractions[1] + 0.1);
  CHECK(fractions[2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("dataset write/read round trip") {
  DatasetSplit split = generate_synthetic(small_config(21, 60));
  fs::path dir = fs::temp_directory_path() / "ct_roundtrip";
  write_dataset(split, dir);
  DatasetSplit back = read_dataset(dir);
  CHECK(datasets_equal(split, back));
  CHECK(back.n_variables == split.n_variables);
  CHECK(back.d_note == split.d_note);
  for (int v = 0; v < split.n_variables; ++v) {
    CHECK(back.stats.per_variable[v].mean == split.stats.per_variable[v].mean);
    CHECK(back.stats.per_variable[v].std == split.stats.per_variable[v].std);
  }
  CHECK(back.stats.time.mean == split.stats.time.mean);

  // Writing the read-back dataset reproduces the files byte for byte.
  fs::path dir2 = fs::temp_directory_path() / "ct_roundtrip2";
  write_dataset(back, dir2);
  CHECK(slurp(dir / "train.jsonl") == slurp(dir2 / "train.jsonl"));
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("reader errors name the line and field") {
  fs::path dir = fs::temp_directory_path() / "ct_badfile";
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "train.jsonl");
    out << R"({"id":"a","static":[0.0],"events":[],"notes":[],"labels":[0,1,0,1,0,1,0,1,0]})"
        << "\n";
    out << R"({"id":"b","static":[0.0],"events":[],"notes":[],"labels":[0,1,0,1,0,1,0,1]})"
        << "\n";
  }
  try {
    detail::read_jsonl(dir / "train.jsonl");
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    std::string msg = e.what();
    CHECK(msg.find("train.jsonl:2") != std::string::npos);
    CHECK(msg.find("labels: expected 9") != std::string::npos);
  }

  {
    std::ofstream out(dir / "notes.jsonl");
    out << R"({"id":"a","static":[],"events":[],"notes":[[1.0,2.0],[1.0]],"labels":[0,0,0,0,0,0,0,0,0]})"
        << "\n";
  }
  CHECK_THROWS_WITH_AS(detail::read_jsonl(dir / "notes.jsonl"),
                       doctest::Contains("inconsistent embedding dimension"),
                       DatasetError);

  {
    std::ofstream out(dir / "garbled.jsonl");
    out << "{not json\n";
  }
  CHECK_THROWS_WITH_AS(detail::read_jsonl(dir / "garbled.jsonl"),
                       doctest::Contains("garbled.jsonl:1"), DatasetError);

  // Empty events list is accepted and tokenizes to an empty sequence.
  {
    std::ofstream out(dir / "empty_events.jsonl");
    out << R"({"id":"a","static":[0.5],"events":[],"notes":[],"labels":[0,0,0,0,0,0,0,0,0]})"
        << "\n";
  }
  auto recs = detail::read_jsonl(dir / "empty_events.jsonl");
  REQUIRE(recs.size() == 1);
  NormStats stats;
  stats.per_variable.assign(1, MeanStd{});
  CHECK(tokenize(recs[0], stats).length() == 0);
  fs::remove_all(dir);
}

TEST_CASE("generator config validation") {
  SynthConfig bad = small_config();
  bad.n_encounters = 0;
  CHECK_THROWS_AS(generate_synthetic(bad), std::invalid_argument);

  SynthConfig bad2 = small_config();
  bad2.prevalence[3] = 1.5;
  CHECK_THROWS_WITH_AS(generate_synthetic(bad2),
                       doctest::Contains("prevalence[3] out of (0,1)"),
                       std::invalid_argument);

  SynthConfig bad3 = small_config();
  bad3.rates[2] = -1.0;
  CHECK_THROWS_AS(generate_synthetic(bad3), std::invalid_argument);
}
