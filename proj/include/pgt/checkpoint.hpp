#pragma once

#include <map>
#include <string>
#include <vector>

#include "pgt/model.hpp"
#include "pgt/param_store.hpp"

namespace pgt {

// Checkpoint archive: magic PGTA, u32 version, u64 manifest length, UTF-8
// manifest, then concatenated PGTT containers. The manifest echoes the model
// config (`config.<key> = <value>`) and maps each parameter name to its
// offset within the blob section, so the shared/per-task partition is
// recoverable from the file alone.
void save_checkpoint(const std::string& path, const ModelConfig& config, const ParamStore& store);

struct Checkpoint {
  ModelConfig config;
  std::vector<std::pair<std::string, Tensor>> params;  // in manifest order
};

Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint values into the model's parameters. Missing names or
// shape mismatches raise LoadError naming the offending parameter.
void apply_checkpoint(const Checkpoint& ckpt, PgtModel& model);

}  // namespace pgt
