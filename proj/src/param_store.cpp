#include "pgt/param_store.hpp"

#include "pgt/errors.hpp"

namespace pgt {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (index_.count(name)) throw RegistryError("duplicate parameter name: " + name);
  index_[name] = entries_.size();
  entries_.emplace_back(name, std::move(t));
  return entries_.back().second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw RegistryError("unknown parameter: " + name);
  return entries_[it->second].second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw RegistryError("unknown parameter: " + name);
  return entries_[it->second].second;
}

size_t ParamStore::total_scalars() const {
  size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

}  // namespace pgt
