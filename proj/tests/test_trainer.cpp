#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pgt/errors.hpp"
#include "pgt/ops.hpp"
#include "pgt/rng.hpp"
#include "pgt/trainer.hpp"

using namespace pgt;
using namespace pgt::train;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.image_h = 32;
  cfg.image_w = 32;
  cfg.base_dim = 8;
  cfg.stage_depths = {1, 1, 1, 1};
  cfg.stage_heads = {2, 2, 4, 8};
  cfg.prompt_len = 2;
  cfg.decoder_depth = 1;
  cfg.tasks = {task_preset("semseg", 6), task_preset("edge", 1), task_preset("depth", 1)};
  return cfg;
}

synth::Dataset tiny_dataset(uint64_t seed, int n) {
  return synth::make_dataset(seed, n, 32, 32, {"semseg", "edge", "depth"});
}

std::vector<double> snapshot(const ParamStore& store, const std::string& prefix) {
  std::vector<double> values;
  for (const auto& [name, t] : store.entries())
    if (name.rfind(prefix, 0) == 0)
      values.insert(values.end(), t.values().begin(), t.values().end());
  return values;
}

}  // namespace

TEST_CASE("cross entropy of confident correct logits is near zero") {
  ModelConfig cfg = tiny_config();
  const TaskSpec& semseg = cfg.tasks[0];
  Tensor gt = Tensor::zeros({4, 4});
  for (size_t i = 0; i < 16; ++i) gt.data()[i] = static_cast<double>(i % 6);
  Tensor logits = Tensor::zeros({4, 4, 6});
  for (size_t i = 0; i < 16; ++i)
    logits.data()[i * 6 + static_cast<size_t>(gt.data()[i])] = 50.0;
  CHECK(task_loss(logits, gt, semseg).item() == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("l1 loss of identical tensors is zero") {
  ModelConfig cfg = tiny_config();
  TaskSpec normal = task_preset("normal", 1);
  Tensor field = Tensor::full({4, 4, 3}, 0.3);
  CHECK(task_loss(field, field, normal).item() == 0.0);
}

TEST_CASE("binary cross entropy of p=0.5 is ln 2 before class weighting") {
  Tensor logits = Tensor::zeros({3, 3});  // sigmoid(0) = 0.5
  Tensor gt = Tensor::zeros({3, 3});
  gt.data()[4] = 1.0;
  const double unweighted = ops::bce_with_logits(logits, gt, 1.0, 1.0).item();
  CHECK(unweighted == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // under 0.95/0.05 weighting each pixel contributes w * ln 2
  const double weighted = ops::bce_with_logits(logits, gt, 0.95, 0.05).item();
  const double expected = std::log(2.0) * (0.95 * 1 + 0.05 * 8) / 9.0;
  CHECK(weighted == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("lr schedule anchors") {
  const int64_t warmup = 50, total = 450;
  const double base = 1e-3;
  CHECK(lr_at(0, warmup, total, base) == 0.0);
  CHECK(lr_at(warmup, warmup, total, base) == doctest::Approx(base).epsilon(1e-15));
  CHECK(lr_at((warmup + total) / 2, warmup, total, base) ==
        doctest::Approx(base / 2).epsilon(1e-12));
  CHECK(lr_at(total, warmup, total, base) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK_THROWS_AS(lr_at(total + 1, warmup, total, base), ConfigError);
}

TEST_CASE("decoupled decay shrinks parameters by exactly lr*wd with zero gradients") {
  ParamStore store;
  Tensor p = store.add("shared.p", Tensor::from_data({3}, {1.0, -2.0, 0.5}, true));
  AdamW opt;
  const double lr = 0.01, wd = 0.1;
  const std::vector<double> before = p.values();
  opt.step(store, {"shared.p"}, lr, wd);
  for (size_t i = 0; i < 3; ++i) CHECK(p.values()[i] == before[i] * (1.0 - lr * wd));
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  ModelConfig cfg = tiny_config();
  PgtModel model(cfg, 3);
  synth::Dataset ds = tiny_dataset(11, 2);
  AdamW opt;
  const std::vector<double> before = snapshot(model.params(), "");
  std::vector<const synth::Scene*> batch{&ds.scenes[0], &ds.scenes[1]};
  train_step(batch, "semseg", model, opt, 0.0, 1e-4);
  CHECK(snapshot(model.params(), "") == before);
}

TEST_CASE("adam converges on a single-parameter quadratic") {
  ParamStore store;
  Tensor x = store.add("shared.x", Tensor::scalar(0.0, true));
  Tensor target = Tensor::scalar(3.0);
  AdamW opt;
  const int steps = 500;
  for (int s = 0; s < steps; ++s) {
    x.zero_grad();
    Tape tape;
    Tensor loss = ops::l2_loss(x, target, &tape);
    tape.backward(loss);
    // cosine decay keeps late steps small enough to settle at the optimum
    opt.step(store, {"shared.x"}, lr_at(s, 0, steps, 0.2), 0.0);
  }
  CHECK(std::abs(x.item() - 3.0) < 1e-6);
}

TEST_CASE("train_step updates only the shared and current-task parameters") {
  ModelConfig cfg = tiny_config();
  PgtModel model(cfg, 5);
  synth::Dataset ds = tiny_dataset(17, 2);
  AdamW opt;
  const std::vector<double> edge_before = snapshot(model.params(), "task.edge.");
  const std::vector<double> depth_before = snapshot(model.params(), "task.depth.");
  const std::vector<double> shared_before = snapshot(model.params(), "shared.");
  const std::vector<double> semseg_before = snapshot(model.params(), "task.semseg.");

  std::vector<const synth::Scene*> batch{&ds.scenes[0], &ds.scenes[1]};
  StepResult r = train_step(batch, "semseg", model, opt, 1e-3, 1e-4);
  CHECK(std::isfinite(r.loss));
  CHECK(r.loss > 0.0);

  CHECK(snapshot(model.params(), "task.edge.") == edge_before);
  CHECK(snapshot(model.params(), "task.depth.") == depth_before);
  CHECK(snapshot(model.params(), "shared.") != shared_before);
  CHECK(snapshot(model.params(), "task.semseg.") != semseg_before);
}

TEST_CASE("train_step demands labels for the task") {
  ModelConfig cfg = tiny_config();
  PgtModel model(cfg, 5);
  synth::Dataset ds = synth::make_dataset(3, 1, 32, 32, {"semseg"});
  AdamW opt;
  std::vector<const synth::Scene*> batch{&ds.scenes[0]};
  CHECK_THROWS_AS(train_step(batch, "edge", model, opt, 1e-3, 0.0), DataError);
}

TEST_CASE("fit with zero epochs leaves the checkpoint at initialization") {
  ModelConfig cfg = tiny_config();
  PgtModel model(cfg, 7);
  const std::vector<double> before = snapshot(model.params(), "");
  synth::Dataset train_set = tiny_dataset(23, 4);
  synth::Dataset val_set = tiny_dataset(31, 2);
  TrainConfig tc;
  tc.epochs = 0;
  tc.warmup_epochs = 0;
  FitResult result = fit(train_set, val_set, model, tc);
  CHECK(snapshot(model.params(), "") == before);
  CHECK(result.log.empty());
  CHECK(result.final_val.rows.size() == 3);
}

TEST_CASE("round robin touches every task once per cycle") {
  ModelConfig cfg = tiny_config();
  PgtModel model(cfg, 9);
  synth::Dataset train_set = tiny_dataset(41, 6);
  synth::Dataset val_set = tiny_dataset(43, 2);
  TrainConfig tc;
  tc.epochs = 1;
  tc.warmup_epochs = 0;
  tc.batch_size = 2;  // 3 steps, 3 tasks
  FitResult result = fit(train_set, val_set, model, tc);
  REQUIRE(result.log.size() == 3);
  for (const EpochLogRow& row : result.log) CHECK(row.loss > 0.0);
}

TEST_CASE("fit is deterministic end to end") {
  auto run = [](uint64_t seed) {
    ModelConfig cfg = tiny_config();
    PgtModel model(cfg, seed);
    synth::Dataset train_set = tiny_dataset(51, 4);
    synth::Dataset val_set = tiny_dataset(61, 2);
    TrainConfig tc;
    tc.epochs = 3;
    tc.warmup_epochs = 1;
    tc.batch_size = 2;
    tc.seed = seed;
    tc.lr = 1e-3;
    fit(train_set, val_set, model, tc);
    return snapshot(model.params(), "");
  };
  CHECK(run(77) == run(77));
  CHECK(run(77) != run(78));
}

TEST_CASE("nan loss aborts with a diagnostic naming step and task") {
  ModelConfig cfg = tiny_config();
  PgtModel model(cfg, 13);
  Tensor w = model.params().at("shared.encoder.patch_embed.proj.weight");
  w.data()[0] = std::numeric_limits<double>::quiet_NaN();
  synth::Dataset train_set = tiny_dataset(71, 2);
  synth::Dataset val_set = tiny_dataset(73, 1);
  TrainConfig tc;
  tc.epochs = 1;
  tc.warmup_epochs = 0;
  try {
    fit(train_set, val_set, model, tc);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step") != std::string::npos);
    CHECK(msg.find("task") != std::string::npos);
    CHECK(msg.find("epoch") != std::string::npos);
  }
}

TEST_CASE("uniform random sampling stays within the task set") {
  ModelConfig cfg = tiny_config();
  PgtModel model(cfg, 15);
  synth::Dataset train_set = tiny_dataset(81, 4);
  synth::Dataset val_set = tiny_dataset(83, 1);
  TrainConfig tc;
  tc.epochs = 2;
  tc.warmup_epochs = 1;
  tc.batch_size = 2;
  tc.task_sampling = TaskSampling::kUniformRandom;
  FitResult result = fit(train_set, val_set, model, tc);
  for (const EpochLogRow& row : result.log) {
    CHECK(model.config().has_task(row.task));
    CHECK(std::isfinite(row.metric_value));
  }
}
