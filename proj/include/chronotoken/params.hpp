#pragma once

#include <cmath>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "chronotoken/rng.hpp"
#include "chronotoken/tensor.hpp"

namespace chronotoken {

// Ordered collection of named tensors. Creation order is fixed by the
// architecture builder, which makes the flat-vector view a stable bijection:
// unflatten(flatten(p)) == p and the layout never depends on map iteration.
template <typename T>
class ParamStore {
 public:
  Mat<T>& add(const std::string& name, int rows, int cols) {
    if (index_.count(name)) throw std::logic_error("duplicate tensor: " + name);
    index_[name] = order_.size();
    order_.push_back(name);
    tensors_.emplace_back(rows, cols);
    return tensors_.back();
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Mat<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no tensor named " + name);
    return tensors_[it->second];
  }
  const Mat<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no tensor named " + name);
    return tensors_[it->second];
  }

  const std::vector<std::string>& names() const { return order_; }
  size_t count() const { return order_.size(); }
  Mat<T>& tensor(size_t i) { return tensors_[i]; }
  const Mat<T>& tensor(size_t i) const { return tensors_[i]; }

  size_t total_size() const {
    size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }

  std::vector<T> flatten() const {
    std::vector<T> out;
    out.reserve(total_size());
    for (const auto& t : tensors_) out.insert(out.end(), t.a.begin(), t.a.end());
    return out;
  }

  void unflatten(std::span<const T> flat) {
    if (flat.size() != total_size()) {
      throw std::invalid_argument("unflatten: expected " +
                                  std::to_string(total_size()) + " values, got " +
                                  std::to_string(flat.size()));
    }
    size_t off = 0;
    for (auto& t : tensors_) {
      std::copy(flat.begin() + off, flat.begin() + off + t.size(), t.a.begin());
      off += t.size();
    }
  }

  void zero() {
    for (auto& t : tensors_) t.fill(T(0));
  }

  // Same names and shapes, all zeros; used for gradients and optimizer state.
  ParamStore<T> zeros_like() const {
    ParamStore<T> out;
    for (size_t i = 0; i < order_.size(); ++i) {
      out.add(order_[i], tensors_[i].rows, tensors_[i].cols);
    }
    return out;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (size_t i = 0; i < order_.size(); ++i) {
      Mat<U>& t = out.add(order_[i], tensors_[i].rows, tensors_[i].cols);
      t = tensors_[i].template cast<U>();
    }
    return out;
  }

  bool all_finite(std::string* offender = nullptr) const {
    for (size_t i = 0; i < tensors_.size(); ++i) {
      for (T v : tensors_[i].a) {
        if (!std::isfinite(static_cast<double>(v))) {
          if (offender != nullptr) *offender = order_[i];
          return false;
        }
      }
    }
    return true;
  }

 private:
  std::vector<std::string> order_;
  std::vector<Mat<T>> tensors_;
  std::unordered_map<std::string, size_t> index_;
};

// Checkpoint container: name -> shape -> row-major values, plus a free-form
// config sidecar the caller supplies. Loading validates every name and shape
// against the architecture the caller built.
template <typename T>
inline nlohmann::json checkpoint_to_json(const ParamStore<T>& store,
                                         const std::string& arch,
                                         const nlohmann::json& config) {
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& name : store.names()) {
    const Mat<T>& t = store.at(name);
    nlohmann::json data = nlohmann::json::array();
    for (T v : t.a) data.push_back(static_cast<double>(v));
    tensors[name] = {{"shape", {t.rows, t.cols}}, {"data", std::move(data)}};
  }
  return nlohmann::json{{"format", "chronotoken-checkpoint-v1"},
                        {"arch", arch},
                        {"config", config},
                        {"tensors", std::move(tensors)}};
}

template <typename T>
inline void checkpoint_load_into(const nlohmann::json& j, ParamStore<T>& store,
                                 std::string* arch_out = nullptr,
                                 nlohmann::json* config_out = nullptr) {
  if (!j.contains("format") || j.at("format") != "chronotoken-checkpoint-v1") {
    throw std::invalid_argument("checkpoint: unknown format");
  }
  const auto& tensors = j.at("tensors");
  for (const auto& name : store.names()) {
    if (!tensors.contains(name)) {
      throw std::invalid_argument("checkpoint: missing tensor " + name);
    }
    const auto& entry = tensors.at(name);
    Mat<T>& t = store.at(name);
    const auto& shape = entry.at("shape");
    if (shape.at(0).template get<int>() != t.rows ||
        shape.at(1).template get<int>() != t.cols) {
      throw std::invalid_argument("checkpoint: shape mismatch for " + name);
    }
    const auto& data = entry.at("data");
    if (data.size() != t.size()) {
      throw std::invalid_argument("checkpoint: data size mismatch for " + name);
    }
    for (size_t i = 0; i < t.size(); ++i) {
      t.a[i] = static_cast<T>(data[i].template get<double>());
    }
  }
  for (auto it = tensors.begin(); it != tensors.end(); ++it) {
    if (!store.has(it.key())) {
      throw std::invalid_argument("checkpoint: unexpected tensor " + it.key());
    }
  }
  std::string offender;
  if (!store.all_finite(&offender)) {
    throw std::invalid_argument("checkpoint: non-finite values in tensor " + offender);
  }
  if (arch_out != nullptr) *arch_out = j.at("arch").get<std::string>();
  if (config_out != nullptr) *config_out = j.at("config");
}

template <typename T>
inline void save_checkpoint(const ParamStore<T>& store, const std::string& arch,
                            const nlohmann::json& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << checkpoint_to_json(store, arch, config).dump() << "\n";
}

template <typename T>
inline nlohmann::json load_checkpoint(const std::string& path, ParamStore<T>& store,
                                      std::string* arch_out = nullptr) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  nlohmann::json j;
  in >> j;
  nlohmann::json config;
  checkpoint_load_into(j, store, arch_out, &config);
  return config;
}

}  // namespace chronotoken
