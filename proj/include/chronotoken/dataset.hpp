#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "chronotoken/data.hpp"
#include "chronotoken/tokenizer.hpp"

namespace chronotoken {

// Train/validation/test splits plus the normalization statistics derived
// from the training split alone. Splits are disjoint by encounter_id.
struct DatasetSplit {
  std::vector<EncounterRecord> train;
  std::vector<EncounterRecord> val;
  std::vector<EncounterRecord> test;
  NormStats stats;
  int n_variables = 0;
  int d_note = 0;
  int static_dim = 0;
};

namespace detail {

using nlohmann::json;

inline json record_to_json(const EncounterRecord& r) {
  json j;
  j["id"] = r.encounter_id;
  j["static"] = r.static_features;
  json events = json::array();
  for (const Event& e : r.events) {
    events.push_back(json::array({e.variable_id, e.value, e.timestamp}));
  }
  j["events"] = std::move(events);
  j["notes"] = r.note_embeddings;
  j["labels"] = r.labels;
  return j;
}

inline EncounterRecord record_from_json(const json& j, const std::string& where) {
  auto need = [&](const char* key) -> const json& {
    auto it = j.find(key);
    if (it == j.end()) throw DatasetError(where + ": " + key + ": missing");
    return *it;
  };
  EncounterRecord r;
  const json& id = need("id");
  if (!id.is_string()) throw DatasetError(where + ": id: expected string");
  r.encounter_id = id.get<std::string>();

  const json& st = need("static");
  if (!st.is_array()) throw DatasetError(where + ": static: expected array");
  for (const auto& v : st) {
    if (!v.is_number()) throw DatasetError(where + ": static: expected numbers");
    r.static_features.push_back(v.get<double>());
  }

  const json& ev = need("events");
  if (!ev.is_array()) throw DatasetError(where + ": events: expected array");
  for (const auto& t : ev) {
    if (!t.is_array() || t.size() != 3 || !t[0].is_number_integer() ||
        !t[1].is_number() || !t[2].is_number()) {
      throw DatasetError(where + ": events: expected [variable_id, value, timestamp]");
    }
    r.events.push_back(Event{t[0].get<int>(), t[1].get<double>(), t[2].get<double>()});
  }

  const json& notes = need("notes");
  if (!notes.is_array()) throw DatasetError(where + ": notes: expected array");
  for (const auto& chunk : notes) {
    if (!chunk.is_array()) throw DatasetError(where + ": notes: expected array of arrays");
    std::vector<double> vec;
    for (const auto& v : chunk) {
      if (!v.is_number()) throw DatasetError(where + ": notes: expected numbers");
      vec.push_back(v.get<double>());
    }
    r.note_embeddings.push_back(std::move(vec));
  }

  const json& labels = need("labels");
  if (!labels.is_array() || labels.size() != kNumTasks) {
    throw DatasetError(where + ": labels: expected " + std::to_string(kNumTasks));
  }
  for (const auto& v : labels) {
    if (!v.is_number_integer()) throw DatasetError(where + ": labels: expected integers");
    r.labels.push_back(v.get<int>());
  }
  validate_record(r, where);
  return r;
}

inline void write_jsonl(const std::vector<EncounterRecord>& recs,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot open for write: " + path.string());
  for (const auto& r : recs) out << record_to_json(r).dump() << "\n";
}

inline std::vector<EncounterRecord> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open: " + path.string());
  std::vector<EncounterRecord> recs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::string where = path.filename().string() + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DatasetError(where + ": malformed JSON: " + e.what());
    }
    recs.push_back(record_from_json(j, where));
  }
  return recs;
}

inline json stats_to_json(const NormStats& s) {
  json per = json::array();
  for (const auto& ms : s.per_variable) {
    per.push_back(json{{"mean", ms.mean}, {"std", ms.std}});
  }
  return json{{"per_variable", per},
              {"time", json{{"mean", s.time.mean}, {"std", s.time.std}}}};
}

inline NormStats stats_from_json(const json& j) {
  NormStats s;
  for (const auto& ms : j.at("per_variable")) {
    s.per_variable.push_back({ms.at("mean").get<double>(), ms.at("std").get<double>()});
  }
  s.time = {j.at("time").at("mean").get<double>(), j.at("time").at("std").get<double>()};
  return s;
}

}  // namespace detail

// Writes train/val/test JSONL files plus manifest.json into dir.
inline void write_dataset(const DatasetSplit& split, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  detail::write_jsonl(split.train, dir / "train.jsonl");
  detail::write_jsonl(split.val, dir / "val.jsonl");
  detail::write_jsonl(split.test, dir / "test.jsonl");
  nlohmann::json manifest{{"train", "train.jsonl"},
                          {"val", "val.jsonl"},
                          {"test", "test.jsonl"},
                          {"stats", detail::stats_to_json(split.stats)},
                          {"n_variables", split.n_variables},
                          {"d_note", split.d_note},
                          {"static_dim", split.static_dim}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DatasetError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
}

// Reads a dataset from the directory holding manifest.json.
inline DatasetSplit read_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DatasetError("cannot open manifest: " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::parse_error& e) {
    throw DatasetError("manifest.json: malformed JSON: " + std::string(e.what()));
  }
  DatasetSplit split;
  split.train = detail::read_jsonl(dir / manifest.at("train").get<std::string>());
  split.val = detail::read_jsonl(dir / manifest.at("val").get<std::string>());
  split.test = detail::read_jsonl(dir / manifest.at("test").get<std::string>());
  split.stats = detail::stats_from_json(manifest.at("stats"));
  split.n_variables = manifest.at("n_variables").get<int>();
  split.d_note = manifest.at("d_note").get<int>();
  split.static_dim = manifest.at("static_dim").get<int>();
  return split;
}

inline bool records_equal(const EncounterRecord& a, const EncounterRecord& b) {
  if (a.encounter_id != b.encounter_id) return false;
  if (a.static_features != b.static_features) return false;
  if (a.labels != b.labels) return false;
  if (a.note_embeddings != b.note_embeddings) return false;
  if (a.events.size() != b.events.size()) return false;
  for (size_t i = 0; i < a.events.size(); ++i) {
    if (a.events[i].variable_id != b.events[i].variable_id ||
        a.events[i].value != b.events[i].value ||
        a.events[i].timestamp != b.events[i].timestamp)
      return false;
  }
  return true;
}

inline bool datasets_equal(const DatasetSplit& a, const DatasetSplit& b) {
  auto part_equal = [](const std::vector<EncounterRecord>& x,
                       const std::vector<EncounterRecord>& y) {
    if (x.size() != y.size()) return false;
    for (size_t i = 0; i < x.size(); ++i)
      if (!records_equal(x[i], y[i])) return false;
    return true;
  };
  return part_equal(a.train, b.train) && part_equal(a.val, b.val) &&
         part_equal(a.test, b.test);
}

}  // namespace chronotoken
