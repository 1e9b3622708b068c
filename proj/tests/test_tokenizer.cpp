#include <doctest.h>

#include "test_util.hpp"

using namespace chronotoken;

namespace {

EncounterRecord record_with(std::vector<Event> events, int n_labels = kNumTasks) {
  EncounterRecord r;
  r.encounter_id = "t";
  r.events = std::move(events);
  r.labels.assign(n_labels, 0);
  return r;
}

}  // namespace

TEST_CASE("fit_norm_stats matches direct computation") {
  std::vector<EncounterRecord> train;
  train.push_back(record_with({{0, 1.0, 10.0}, {0, 2.0, 20.0}, {0, 3.0, 30.0},
                               {1, 5.0, 15.0}, {1, 5.0, 25.0}, {2, 7.0, 35.0}}));
  NormStats stats = fit_norm_stats(train, 4);

  // Population std: {1,2,3} -> mean 2, std sqrt(2/3).
  CHECK(stats.per_variable[0].mean == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(stats.per_variable[0].std == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
  // Constant channel: std stored as 0.
  CHECK(stats.per_variable[1].mean == doctest::Approx(5.0));
  CHECK(stats.per_variable[1].std == doctest::Approx(0.0));
  // Single value.
  CHECK(stats.per_variable[2].mean == doctest::Approx(7.0));
  CHECK(stats.per_variable[2].std == doctest::Approx(0.0));
  // Absent variable defaults to (0,1) with a recorded warning.
  CHECK(stats.per_variable[3].mean == 0.0);
  CHECK(stats.per_variable[3].std == 1.0);
  REQUIRE(stats.warnings.size() == 1);
  CHECK(stats.warnings[0].find("variable 3") != std::string::npos);

  double tmean = (10.0 + 20.0 + 30.0 + 15.0 + 25.0 + 35.0) / 6.0;
  CHECK(stats.time.mean == doctest::Approx(tmean).epsilon(1e-12));
}

TEST_CASE("assign_positions dense ranks") {
  CHECK(assign_positions({10, 10, 20}) == std::vector<int>{0, 0, 1});
  CHECK(assign_positions({}) == std::vector<int>{});
  CHECK(assign_positions({5, 7, 7, 9}) == std::vector<int>{0, 1, 1, 2});
  CHECK_THROWS_AS(assign_positions({1.0, std::nan("")}), std::invalid_argument);
}

TEST_CASE("tokenize: tie order, normalization, empty record") {
  std::vector<EncounterRecord> train;
  train.push_back(record_with({{0, 1.0, 0.0}, {0, 2.0, 1.0}, {0, 3.0, 2.0},
                               {1, 0.0, 0.5}, {3, 0.0, 0.7}}));
  NormStats stats = fit_norm_stats(train, 4);

  // Two events at the same timestamp sort by ascending variable_id and
  // share a positional index.
  EncounterRecord rec = record_with({{3, 0.0, 100.0}, {1, 0.0, 100.0}});
  TokenSequence seq = tokenize(rec, stats);
  CHECK(seq.variable_ids == std::vector<int>{1, 3});
  CHECK(seq.positions == std::vector<int>{0, 0});

  // Normalization against the independently computed oracle.
  EncounterRecord rec2 = record_with({{0, 3.0, 50.0}});
  TokenSequence seq2 = tokenize(rec2, stats);
  double expect = (3.0 - 2.0) / std::sqrt(2.0 / 3.0);
  CHECK(seq2.values[0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(expect == doctest::Approx(1.224744871).epsilon(1e-8));

  // Empty record tokenizes to the empty sequence.
  TokenSequence empty = tokenize(record_with({}), stats);
  CHECK(empty.length() == 0);

  // Unknown variable id is an error.
  CHECK_THROWS_AS(tokenize(record_with({{9, 0.0, 0.0}}), stats), std::invalid_argument);
}

TEST_CASE("zero-std channel normalizes through the epsilon guard") {
  std::vector<EncounterRecord> train;
  train.push_back(record_with({{0, 5.0, 0.0}, {0, 5.0, 1.0}}));
  NormStats stats = fit_norm_stats(train, 1);
  TokenSequence seq = tokenize(record_with({{0, 5.0, 2.0}}), stats);
  CHECK(seq.values[0] == 0.0);
  TokenSequence seq2 = tokenize(record_with({{0, 6.0, 2.0}}), stats);
  CHECK(std::isfinite(seq2.values[0]));
  CHECK(seq2.values[0] == doctest::Approx(1.0 / kNormEpsilon));
}

TEST_CASE("tokenize idempotence and shift invariance of positions") {
  Rng rng(11);
  std::vector<EncounterRecord> train;
  train.push_back(record_with({{0, 1.0, 5.0}, {1, 2.0, 6.0}, {2, 3.0, 7.0}}));
  NormStats stats = fit_norm_stats(train, 3);

  for (int trial = 0; trial < 50; ++trial) {
    EncounterRecord rec = record_with({});
    int n = 1 + rng.uniform_int(20);
    for (int i = 0; i < n; ++i) {
      rec.events.push_back(
          {rng.uniform_int(3), rng.normal(), static_cast<double>(rng.uniform_int(6))});
    }
    TokenSequence a = tokenize(rec, stats);
    TokenSequence b = tokenize(rec, stats);
    CHECK(a.positions == b.positions);
    CHECK(a.values == b.values);
    CHECK(a.times == b.times);

    // Uniform time shift leaves ranks unchanged; with stats shifted the
    // same way the normalized times match too.
    const double shift = 1234.5;
    EncounterRecord shifted = rec;
    for (auto& e : shifted.events) e.timestamp += shift;
    NormStats stats_shifted = stats;
    stats_shifted.time.mean += shift;
    TokenSequence c = tokenize(shifted, stats_shifted);
    CHECK(c.positions == a.positions);
    for (int i = 0; i < a.length(); ++i) {
      CHECK(c.times[i] == doctest::Approx(a.times[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("property: co-timed tokens share an index, distinct never do") {
  Rng rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    int n = rng.uniform_int(30);
    std::vector<double> ts(n);
    for (auto& t : ts) t = static_cast<double>(rng.uniform_int(8)) * 0.5;
    std::sort(ts.begin(), ts.end());
    std::vector<int> pos = assign_positions(ts);
    // Dense-rank contiguity: starts at 0, steps by exactly one.
    if (n > 0) CHECK(pos.front() == 0);
    for (int i = 1; i < n; ++i) {
      CHECK(pos[i] - pos[i - 1] == (ts[i] == ts[i - 1] ? 0 : 1));
      CHECK((pos[i] == pos[i - 1]) == (ts[i] == ts[i - 1]));
    }
  }
}

TEST_CASE("truncation keeps the most recent tokens and re-ranks") {
  std::vector<EncounterRecord> train;
  train.push_back(record_with({{0, 1.0, 0.0}}));
  NormStats stats = fit_norm_stats(train, 1);

  EncounterRecord rec = record_with({});
  for (int i = 0; i < 10; ++i) {
    rec.events.push_back({0, static_cast<double>(i), static_cast<double>(i / 2)});
  }
  TokenSequence seq = tokenize(rec, stats, 4);
  REQUIRE(seq.length() == 4);
  // The suffix of the time-sorted sequence: raw values 6..9.
  CHECK(seq.values[0] == doctest::Approx((6.0 - 1.0) / kNormEpsilon).epsilon(1e-6));
  CHECK(seq.positions == std::vector<int>{0, 0, 1, 1});
}
