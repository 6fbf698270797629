#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pgt/tensor.hpp"

namespace pgt {

/// Ordered registry of named parameters. Names are hierarchical and must
/// begin with `shared.` or `task.<name>.`; the shared/per-task partition is a
/// function of names only. Entries hold live tensor handles, so optimizer
/// updates and checkpoint loads are visible to the model that registered
/// them.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  size_t count() const { return entries_.size(); }
  size_t total_scalars() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace pgt
