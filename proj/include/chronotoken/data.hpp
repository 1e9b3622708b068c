#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace chronotoken {

constexpr int kNumTasks = 9;

// One recorded measurement: which variable, its raw value, and when.
struct Event {
  int variable_id = 0;
  double value = 0.0;
  double timestamp = 0.0;  // unix-epoch-like seconds
};

// One surgery's worth of data: static features, the event stream, the
// precomputed note-chunk embeddings, and the nine binary outcome labels.
struct EncounterRecord {
  std::string encounter_id;
  std::vector<double> static_features;
  std::vector<Event> events;
  std::vector<std::vector<double>> note_embeddings;
  std::vector<int> labels;  // exactly kNumTasks entries of 0/1
};

class DatasetError : public std::runtime_error {
 public:
  explicit DatasetError(const std::string& what) : std::runtime_error(what) {}
};

inline void validate_record(const EncounterRecord& r, const std::string& where) {
  if (static_cast<int>(r.labels.size()) != kNumTasks) {
    throw DatasetError(where + ": labels: expected " + std::to_string(kNumTasks));
  }
  for (int v : r.labels) {
    if (v != 0 && v != 1) throw DatasetError(where + ": labels: values must be 0/1");
  }
  size_t d_note = r.note_embeddings.empty() ? 0 : r.note_embeddings[0].size();
  for (const auto& chunk : r.note_embeddings) {
    if (chunk.size() != d_note) {
      throw DatasetError(where + ": notes: inconsistent embedding dimension");
    }
  }
  for (const Event& e : r.events) {
    if (!std::isfinite(e.timestamp)) {
      throw DatasetError(where + ": events: non-finite timestamp");
    }
    if (e.variable_id < 0) {
      throw DatasetError(where + ": events: negative variable_id");
    }
  }
}

}  // namespace chronotoken
