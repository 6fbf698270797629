#include "pgt/accounting.hpp"

#include <sstream>

#include "pgt/errors.hpp"

namespace pgt {

ParamReport partition(const ParamStore& store) {
  ParamReport r;
  size_t head_total = 0;
  for (const auto& [name, t] : store.entries()) {
    const size_t n = t.size();
    r.total += n;
    if (name.rfind("shared.", 0) == 0) {
      r.shared += n;
      if (name.rfind("shared.decoder.", 0) == 0) r.decoder_shared += n;
    } else if (name.rfind("task.", 0) == 0) {
      const size_t dot = name.find('.', 5);
      if (dot == std::string::npos)
        throw RegistryError("malformed task parameter name: " + name);
      const std::string task = name.substr(5, dot - 5);
      r.per_task[task] += n;
      const std::string rest = name.substr(dot + 1);
      if (rest.rfind("prompt.", 0) == 0) r.prompt_params_per_task[task] += n;
      if (rest.rfind("head.", 0) == 0) {
        r.head_params_per_task[task] += n;
        head_total += n;
      }
    } else {
      throw RegistryError("parameter name lacks shared./task. prefix: " + name);
    }
  }
  if (r.total > 0)
    r.decoder_fraction =
        100.0 * static_cast<double>(r.decoder_shared + head_total) / static_cast<double>(r.total);
  return r;
}

std::vector<std::pair<std::string, std::string>> ParamReport::to_kv() const {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("total", std::to_string(total));
  kv.emplace_back("shared", std::to_string(shared));
  kv.emplace_back("decoder_shared", std::to_string(decoder_shared));
  {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << decoder_fraction;
    kv.emplace_back("decoder_fraction_percent", os.str());
  }
  for (const auto& [task, n] : per_task) kv.emplace_back("task." + task + ".params", std::to_string(n));
  for (const auto& [task, n] : prompt_params_per_task)
    kv.emplace_back("task." + task + ".prompt_params", std::to_string(n));
  for (const auto& [task, n] : head_params_per_task)
    kv.emplace_back("task." + task + ".head_params", std::to_string(n));
  return kv;
}

size_t predict_total(size_t c, size_t theta_t, int n_tasks) {
  if (n_tasks < 1) throw ConfigError("predict_total: n_tasks must be >= 1");
  return c + static_cast<size_t>(n_tasks - 1) * theta_t;
}

ArchFamily arch_family_from_string(const std::string& s) {
  if (s == "multi_decoder") return ArchFamily::kMultiDecoder;
  if (s == "task_conditional_legacy") return ArchFamily::kTaskConditionalLegacy;
  if (s == "pgt") return ArchFamily::kPgt;
  throw ConfigError("unknown architecture family: " + s);
}

std::string to_string(ArchFamily f) {
  switch (f) {
    case ArchFamily::kMultiDecoder: return "multi_decoder";
    case ArchFamily::kTaskConditionalLegacy: return "task_conditional_legacy";
    case ArchFamily::kPgt: return "pgt";
  }
  return "?";
}

namespace {

ModelConfig with_n_tasks(const ModelConfig& base, int n) {
  if (base.tasks.empty()) throw ConfigError("growth_curves: base config has no tasks");
  ModelConfig cfg = base;
  cfg.tasks.clear();
  for (int i = 0; i < n; ++i) {
    TaskSpec t = base.tasks[0];
    t.name = base.tasks[0].name + (i == 0 ? "" : "_" + std::to_string(i));
    cfg.tasks.push_back(std::move(t));
  }
  return cfg;
}

}  // namespace

std::vector<GrowthPoint> growth_curves(ArchFamily family, const ModelConfig& base, int n_min,
                                       int n_max, size_t m_pair, size_t m_adapt) {
  if (n_min < 1 || n_max < n_min) throw ConfigError("growth_curves: empty task-count range");
  std::vector<GrowthPoint> points;

  // measured single-task partition of the real model, reused by the
  // synthetic reference families
  PgtModel probe(with_n_tasks(base, 1), 0, /*initialize=*/false);
  ParamReport rep = partition(probe.params());
  const size_t encoder_shared = rep.shared - rep.decoder_shared;
  const size_t decoder = rep.decoder_shared;
  const size_t per_task_full = rep.per_task.begin()->second;

  for (int n = n_min; n <= n_max; ++n) {
    size_t total = 0;
    switch (family) {
      case ArchFamily::kPgt: {
        PgtModel m(with_n_tasks(base, n), 0, /*initialize=*/false);
        total = partition(m.params()).total;
        break;
      }
      case ArchFamily::kMultiDecoder:
        // one full decoder per task plus an interaction module per ordered
        // task pair
        total = encoder_shared + static_cast<size_t>(n) * (decoder + per_task_full) +
                static_cast<size_t>(n) * static_cast<size_t>(n - 1) * m_pair;
        break;
      case ArchFamily::kTaskConditionalLegacy:
        total = encoder_shared + decoder + static_cast<size_t>(n) * (m_adapt + per_task_full);
        break;
    }
    points.push_back({n, total});
  }
  return points;
}

}  // namespace pgt
