#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pgt/model.hpp"
#include "pgt/param_store.hpp"

namespace pgt {

/// Exact integer parameter accounting over a ParamStore, classified purely by
/// name prefix: `shared.*` vs `task.<name>.*`, with `shared.decoder.*` and
/// the per-task `prompt.` / `head.` subtrees broken out.
struct ParamReport {
  size_t total = 0;
  size_t shared = 0;
  std::map<std::string, size_t> per_task;
  size_t decoder_shared = 0;
  double decoder_fraction = 0.0;  // percent, includes per-task heads
  std::map<std::string, size_t> prompt_params_per_task;
  std::map<std::string, size_t> head_params_per_task;

  std::vector<std::pair<std::string, std::string>> to_kv() const;
};

ParamReport partition(const ParamStore& store);

// total parameter count for n_tasks identical tasks given the single-task
// cost c and the per-task cost theta_t
size_t predict_total(size_t c, size_t theta_t, int n_tasks);

enum class ArchFamily { kMultiDecoder, kTaskConditionalLegacy, kPgt };
ArchFamily arch_family_from_string(const std::string& s);
std::string to_string(ArchFamily f);

struct GrowthPoint {
  int n_tasks;
  size_t total;
};

// Totals as a function of task count. The pgt family builds real models and
// counts; the reference families model a full decoder plus one interaction
// module per ordered task pair (multi_decoder) or a fixed-size adapter per
// task (task_conditional_legacy) on top of the same shared stem.
std::vector<GrowthPoint> growth_curves(ArchFamily family, const ModelConfig& base, int n_min,
                                       int n_max, size_t m_pair = 200000,
                                       size_t m_adapt = 800000);

}  // namespace pgt
