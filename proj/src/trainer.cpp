#include "pgt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pgt/errors.hpp"
#include "pgt/ops.hpp"
#include "pgt/rng.hpp"

namespace pgt::train {

using namespace ops;

TaskSampling task_sampling_from_string(const std::string& s) {
  if (s == "round_robin") return TaskSampling::kRoundRobin;
  if (s == "uniform_random") return TaskSampling::kUniformRandom;
  throw ConfigError("unknown task_sampling: " + s);
}

std::string to_string(TaskSampling s) {
  return s == TaskSampling::kRoundRobin ? "round_robin" : "uniform_random";
}

void TrainConfig::validate() const {
  if (lr <= 0) throw ConfigError("lr must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
  if (epochs > 0 && warmup_epochs >= epochs)
    throw ConfigError("warmup_epochs must be smaller than epochs");
}

Tensor task_loss(const Tensor& pred, const Tensor& gt, const TaskSpec& task, Tape* tape) {
  const size_t h = pred.shape()[0], w = pred.shape()[1];
  switch (task.loss) {
    case LossKind::kCrossEntropy: {
      const size_t k = pred.shape()[2];
      if (gt.rank() != 2 || gt.shape()[0] != h || gt.shape()[1] != w)
        throw ShapeError("task_loss: gt " + gt.shape_str() + " does not match pred " +
                         pred.shape_str());
      return softmax_cross_entropy(reshape(pred, {h * w, k}, tape), gt, -1, tape);
    }
    case LossKind::kBinaryCrossEntropy: {
      if (pred.rank() != 3 || pred.shape()[2] != 1)
        throw ShapeError("task_loss: binary task expects a single-channel prediction");
      // boundary-style targets are sparse, so positives carry most weight
      return bce_with_logits(reshape(pred, {h, w}, tape), gt, 0.95, 0.05, tape);
    }
    case LossKind::kL1:
      return l1_loss(pred, gt, tape);
    case LossKind::kL2: {
      if (pred.rank() == 3 && pred.shape()[2] == 1 && gt.rank() == 2)
        return l2_loss(reshape(pred, {h, w}, tape), gt, tape);
      return l2_loss(pred, gt, tape);
    }
  }
  throw ConfigError("task_loss: unhandled loss kind");
}

double lr_at(int64_t step, int64_t warmup_steps, int64_t total_steps, double base_lr) {
  if (step < 0 || step > total_steps) throw ConfigError("lr_at: step outside [0, total_steps]");
  if (warmup_steps > 0 && step < warmup_steps)
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (total_steps <= warmup_steps) return base_lr;
  const double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(total_steps - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

void AdamW::step(ParamStore& store, const std::vector<std::string>& names, double lr,
                 double weight_decay) {
  for (const std::string& name : names) {
    Tensor p = store.at(name);
    Moments& mo = state_[name];
    const size_t n = p.size();
    if (mo.m.size() != n) {
      mo.m.assign(n, 0.0);
      mo.v.assign(n, 0.0);
      mo.t = 0;
    }
    ++mo.t;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(mo.t));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(mo.t));
    double* pd = p.data();
    const bool has_grad = p.has_grad();
    const double* g = has_grad ? p.grad().data() : nullptr;
    for (size_t i = 0; i < n; ++i) {
      const double gi = has_grad ? g[i] : 0.0;
      mo.m[i] = beta1_ * mo.m[i] + (1.0 - beta1_) * gi;
      mo.v[i] = beta2_ * mo.v[i] + (1.0 - beta2_) * gi * gi;
      const double mhat = mo.m[i] / bc1;
      const double vhat = mo.v[i] / bc2;
      pd[i] *= 1.0 - lr * weight_decay;  // decoupled decay, not via gradients
      pd[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

std::vector<std::string> trainable_names(const ParamStore& store, const std::string& task) {
  std::vector<std::string> names;
  const std::string task_prefix = "task." + task + ".";
  for (const auto& [name, t] : store.entries()) {
    (void)t;
    if (name.rfind("shared.", 0) == 0 || name.rfind(task_prefix, 0) == 0) names.push_back(name);
  }
  return names;
}

StepResult train_step(const std::vector<const synth::Scene*>& batch, const std::string& task,
                      PgtModel& model, AdamW& opt, double lr, double weight_decay) {
  if (batch.empty()) throw DataError("train_step: empty batch");
  for (const synth::Scene* s : batch)
    if (!s->labels.count(task))
      throw DataError("train_step: batch scene lacks labels for task '" + task + "'");

  for (const auto& [name, t] : model.params().entries()) {
    (void)name;
    Tensor h = t;
    h.zero_grad();
  }

  Tape tape;
  const TaskSpec& spec = model.config().task(task);
  Tensor total;
  for (const synth::Scene* s : batch) {
    Tensor pred = model.forward(s->image, task, &tape);
    Tensor loss = task_loss(pred, s->labels.at(task), spec, &tape);
    total = total.defined() ? add(total, loss, &tape) : loss;
  }
  Tensor mean_loss = scale(total, 1.0 / static_cast<double>(batch.size()), &tape);
  tape.backward(mean_loss);
  opt.step(model.params(), trainable_names(model.params(), task), lr, weight_decay);
  return {mean_loss.item()};
}

metrics::MetricsReport evaluate(const synth::Dataset& ds, const PgtModel& model) {
  metrics::MetricsReport report;
  for (const TaskSpec& task : model.config().tasks) {
    metrics::MetricRow row;
    row.task = task.name;
    row.metric = to_string(task.metric);
    row.lower_is_better = task.lower_is_better;

    std::vector<Tensor> edge_preds, edge_gts;
    double acc = 0.0;
    size_t n = 0;
    for (const synth::Scene& scene : ds.scenes) {
      if (!scene.labels.count(task.name))
        throw DataError("evaluate: dataset lacks labels for task '" + task.name + "'");
      Tensor pred = model.forward(scene.image, task.name);
      const Tensor& gt = scene.labels.at(task.name);
      const size_t h = pred.shape()[0], w = pred.shape()[1];
      switch (task.metric) {
        case MetricKind::kMiou: {
          if (task.out_channels == 1) {
            // binary task scored as 2-class segmentation of its sigmoid
            Tensor two = Tensor::zeros({h, w, 2});
            for (size_t i = 0; i < h * w; ++i) {
              two.data()[i * 2] = -pred.data()[i];
              two.data()[i * 2 + 1] = pred.data()[i];
            }
            acc += metrics::miou(two, gt, 2);
          } else {
            acc += metrics::miou(pred, gt, task.out_channels);
          }
          ++n;
          break;
        }
        case MetricKind::kRmse: {
          Tensor flat = ops::reshape(pred, {h, w});
          acc += metrics::rmse(flat, gt);
          ++n;
          break;
        }
        case MetricKind::kMeanAngle: {
          acc += metrics::mean_angle(pred, gt);
          ++n;
          break;
        }
        case MetricKind::kOdsF: {
          Tensor prob = Tensor::zeros({h, w});
          for (size_t i = 0; i < h * w; ++i)
            prob.data()[i] = 1.0 / (1.0 + std::exp(-pred.data()[i]));
          edge_preds.push_back(prob);
          edge_gts.push_back(gt);
          break;
        }
      }
    }
    row.value = task.metric == MetricKind::kOdsF ? metrics::ods_f(edge_preds, edge_gts)
                                                 : acc / static_cast<double>(n);
    report.rows.push_back(row);
  }
  return report;
}

FitResult fit(const synth::Dataset& train_set, const synth::Dataset& val_set, PgtModel& model,
              const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.scenes.empty() || val_set.scenes.empty())
    throw DataError("fit: train and val splits must be nonempty");
  const auto& tasks = model.config().tasks;
  if (tasks.empty()) throw ConfigError("fit: model has no tasks");

  const int64_t n_train = static_cast<int64_t>(train_set.scenes.size());
  const int64_t steps_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps = steps_per_epoch * cfg.epochs;
  const int64_t warmup_steps = steps_per_epoch * cfg.warmup_epochs;

  SplitMix64 rng(cfg.seed);
  AdamW opt;
  FitResult result;
  std::map<std::string, double> last_loss;

  int64_t global_step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<size_t> order(static_cast<size_t>(n_train));
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = 0; i + 1 < order.size(); ++i) {
      const size_t j =
          i + static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(order.size() - 1 - i)));
      std::swap(order[i], order[j]);
    }

    std::map<std::string, double> epoch_loss;
    std::map<std::string, int> epoch_steps;
    double epoch_lr = 0.0;
    for (int64_t s = 0; s < steps_per_epoch; ++s) {
      const std::string& task =
          cfg.task_sampling == TaskSampling::kRoundRobin
              ? tasks[static_cast<size_t>(global_step % static_cast<int64_t>(tasks.size()))].name
              : tasks[static_cast<size_t>(rng.uniform_int(
                         0, static_cast<int64_t>(tasks.size()) - 1))].name;

      std::vector<synth::Scene> augmented;
      std::vector<const synth::Scene*> batch;
      for (int b = 0; b < cfg.batch_size; ++b) {
        const int64_t pos = s * cfg.batch_size + b;
        if (pos >= n_train) break;
        const size_t idx = order[static_cast<size_t>(pos)];
        if (cfg.augment) {
          const uint64_t aug_seed =
              substream(cfg.seed, "aug." + std::to_string(epoch) + "." + std::to_string(idx))
                  .next_u64();
          augmented.push_back(synth::augment(train_set.scenes[idx], aug_seed));
        } else {
          batch.push_back(&train_set.scenes[idx]);
        }
      }
      for (const synth::Scene& sc : augmented) batch.push_back(&sc);

      const double lr = lr_at(global_step, warmup_steps, total_steps, cfg.lr);
      epoch_lr = lr;
      StepResult sr = train_step(batch, task, model, opt, lr, cfg.weight_decay);
      if (!std::isfinite(sr.loss))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(global_step) + ", task '" + task + "'");
      epoch_loss[task] += sr.loss;
      epoch_steps[task] += 1;
      ++global_step;
    }

    metrics::MetricsReport val = evaluate(val_set, model);
    for (const TaskSpec& t : tasks) {
      EpochLogRow row;
      row.epoch = epoch;
      row.task = t.name;
      if (epoch_steps.count(t.name))
        last_loss[t.name] = epoch_loss[t.name] / epoch_steps[t.name];
      row.loss = last_loss.count(t.name) ? last_loss[t.name] : 0.0;
      for (const auto& mr : val.rows)
        if (mr.task == t.name) {
          row.metric = mr.metric;
          row.metric_value = mr.value;
        }
      row.lr = epoch_lr;
      result.log.push_back(row);
    }
    result.final_val = std::move(val);
  }
  if (cfg.epochs == 0) result.final_val = evaluate(val_set, model);
  return result;
}

std::string log_to_csv(const std::vector<EpochLogRow>& log) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << "epoch,task,loss,metric,value,lr\n";
  for (const EpochLogRow& r : log)
    os << r.epoch << "," << r.task << "," << r.loss << "," << r.metric << "," << r.metric_value
       << "," << r.lr << "\n";
  return os.str();
}

}  // namespace pgt::train
