#pragma once

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "e3/tensor.hpp"

namespace e3 {

/// Ordered, named collection of parameter handles. Handles alias the module
/// tensors, so optimizer updates and checkpoint loads are visible to modules.
template <class T>
class parameter_set {
 public:
  void add(std::string name, basic_tensor<T> t) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(t));
  }

  void extend(const parameter_set& other) {
    for (const auto& [name, t] : other.entries_) add(name, t);
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  basic_tensor<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return entries_[it->second].second;
  }

  const basic_tensor<T>& get(const std::string& name) const {
    return const_cast<parameter_set*>(this)->get(name);
  }

  std::size_t size() const { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad() {
    for (auto& [_, t] : entries_) t.zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : entries_) n += t.size();
    return n;
  }

  /// Deep copy of all values, keyed by name.
  std::map<std::string, std::vector<T>> snapshot() const {
    std::map<std::string, std::vector<T>> out;
    for (const auto& [name, t] : entries_) out.emplace(name, t.values());
    return out;
  }

  void restore(const std::map<std::string, std::vector<T>>& values) {
    for (auto& [name, t] : entries_) {
      auto it = values.find(name);
      if (it == values.end()) throw std::out_of_range("snapshot lacks parameter: " + name);
      if (it->second.size() != t.size())
        throw shape_error("snapshot size mismatch for " + name);
      std::copy(it->second.begin(), it->second.end(), t.mutable_data().begin());
    }
  }

 private:
  std::vector<std::pair<std::string, basic_tensor<T>>> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace e3
