#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pgt/metrics.hpp"
#include "pgt/model.hpp"
#include "pgt/synthdata.hpp"

namespace pgt::train {

enum class TaskSampling { kRoundRobin, kUniformRandom };
TaskSampling task_sampling_from_string(const std::string& s);
std::string to_string(TaskSampling s);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 8;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  int warmup_epochs = 5;
  uint64_t seed = 1;
  TaskSampling task_sampling = TaskSampling::kRoundRobin;
  bool augment = true;  // per-epoch scale/crop/flip/jitter on training scenes

  void validate() const;
};

// scalar training loss for one (pred, gt) pair under the task's loss kind
Tensor task_loss(const Tensor& pred, const Tensor& gt, const TaskSpec& task, Tape* tape = nullptr);

// linear warmup to base_lr over warmup_steps, then cosine decay to zero at
// total_steps
double lr_at(int64_t step, int64_t warmup_steps, int64_t total_steps, double base_lr);

/// Decoupled-weight-decay Adam. Moments are kept per parameter name; each
/// step touches exactly the parameter set it is given, so per-task updates
/// cannot disturb other tasks' state.
class AdamW {
 public:
  explicit AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& store, const std::vector<std::string>& names, double lr,
            double weight_decay);

 private:
  struct Moments {
    std::vector<double> m, v;
    int64_t t = 0;
  };
  double beta1_, beta2_, eps_;
  std::map<std::string, Moments> state_;
};

// names of the parameters a task's training step may update: shared.* plus
// task.<name>.*
std::vector<std::string> trainable_names(const ParamStore& store, const std::string& task);

struct StepResult {
  double loss = 0.0;
};

// forward/backward over one single-task batch followed by an AdamW update of
// the shared and task-owned parameters only
StepResult train_step(const std::vector<const synth::Scene*>& batch, const std::string& task,
                      PgtModel& model, AdamW& opt, double lr, double weight_decay);

struct EpochLogRow {
  int epoch = 0;
  std::string task;
  double loss = 0.0;
  std::string metric;
  double metric_value = 0.0;
  double lr = 0.0;
};

struct FitResult {
  std::vector<EpochLogRow> log;
  metrics::MetricsReport final_val;
};

// full training loop: per-step task selection, per-epoch validation metrics,
// deterministic given (config seed, dataset, model init)
FitResult fit(const synth::Dataset& train_set, const synth::Dataset& val_set, PgtModel& model,
              const TrainConfig& cfg);

// validation metrics for every configured task
metrics::MetricsReport evaluate(const synth::Dataset& ds, const PgtModel& model);

std::string log_to_csv(const std::vector<EpochLogRow>& log);

}  // namespace pgt::train
