#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pgt/accounting.hpp"
#include "pgt/errors.hpp"
#include "pgt/model.hpp"

using namespace pgt;

namespace {

// Swin-T-like reference: C=96, depths [2,2,6,2], N_p=10, four decoder blocks
ModelConfig reference_config(int n_tasks = 4, int prompt_len = 10) {
  ModelConfig cfg;
  cfg.image_h = 64;
  cfg.image_w = 64;
  cfg.base_dim = 96;
  cfg.stage_depths = {2, 2, 6, 2};
  cfg.stage_heads = {3, 6, 12, 24};
  cfg.prompt_len = prompt_len;
  cfg.decoder_depth = 4;
  const char* names[] = {"semseg", "edge", "depth", "normal", "saliency", "extra"};
  for (int i = 0; i < n_tasks; ++i) cfg.tasks.push_back(task_preset(names[i], 21));
  return cfg;
}

}  // namespace

TEST_CASE("prompt parameters per task on the reference config") {
  PgtModel model(reference_config(), 0, /*initialize=*/false);
  ParamReport report = partition(model.params());
  // 10 tokens across 2+2+6+2 encoder blocks at dims 96/192/384/768 plus 4
  // decoder blocks at 96
  for (const auto& [task, n] : report.prompt_params_per_task) CHECK(n == 48000);
}

TEST_CASE("prompt parameters scale linearly with prompt length") {
  PgtModel one(reference_config(4, 1), 0, false);
  for (const auto& [task, n] : partition(one.params()).prompt_params_per_task) CHECK(n == 4800);
  PgtModel zero(reference_config(4, 0), 0, false);
  ParamReport rep = partition(zero.params());
  CHECK(rep.prompt_params_per_task.empty());
  for (const auto& [task, n] : rep.per_task) {
    CHECK(n > 0);  // heads remain
  }
}

TEST_CASE("decoder shared parameters match the frozen enumeration") {
  PgtModel model(reference_config(), 0, false);
  ParamReport report = partition(model.params());
  CHECK(report.decoder_shared == 623904);
  CHECK(std::abs(static_cast<double>(report.decoder_shared) - 640000.0) / 640000.0 < 0.05);
}

TEST_CASE("partition arithmetic is exact") {
  PgtModel model(reference_config(3), 0, false);
  ParamReport report = partition(model.params());
  size_t sum = report.shared;
  for (const auto& [task, n] : report.per_task) sum += n;
  CHECK(sum == report.total);
  CHECK(report.total == model.params().total_scalars());

  size_t heads = 0;
  for (const auto& [task, n] : report.head_params_per_task) heads += n;
  CHECK(report.decoder_fraction ==
        doctest::Approx(100.0 * (report.decoder_shared + heads) / report.total).epsilon(1e-12));
}

TEST_CASE("partition rejects unprefixed names") {
  ParamStore store;
  store.add("weights.q", Tensor::zeros({2, 2}));
  CHECK_THROWS_AS(partition(store), RegistryError);
}

TEST_CASE("predict_total line") {
  CHECK(predict_total(100, 5, 1) == 100);
  CHECK(predict_total(100, 5, 3) == 110);
  CHECK_THROWS_AS(predict_total(100, 5, 0), ConfigError);
}

TEST_CASE("identical-task growth is exactly linear") {
  ModelConfig base = reference_config(1);
  std::vector<GrowthPoint> points = growth_curves(ArchFamily::kPgt, base, 1, 6);
  REQUIRE(points.size() == 6);

  PgtModel probe(base, 0, false);
  ParamReport rep = partition(probe.params());
  const size_t theta_t = rep.per_task.begin()->second;
  const size_t c = points[0].total;  // |Θ_s| + |Θ_t|
  CHECK(c == rep.total);
  for (const GrowthPoint& p : points)
    CHECK(p.total == predict_total(c, theta_t, p.n_tasks));  // zero error

  // per-task cost is constant up to head-size differences (the tasks here
  // differ only in their output channel counts)
  PgtModel four(reference_config(4), 0, false);
  ParamReport r4 = partition(four.params());
  size_t lo = SIZE_MAX, hi = 0, head_lo = SIZE_MAX, head_hi = 0;
  for (const auto& [task, n] : r4.per_task) {
    lo = std::min(lo, r4.shared + n);
    hi = std::max(hi, r4.shared + n);
    head_lo = std::min(head_lo, r4.head_params_per_task.at(task));
    head_hi = std::max(head_hi, r4.head_params_per_task.at(task));
  }
  CHECK(hi - lo <= head_hi - head_lo);

  // identical output channels collapse the spread to zero
  ModelConfig same = reference_config(1);
  same.tasks = {task_preset("semseg", 21), task_preset("saliency", 1)};
  same.tasks[1].out_channels = 21;
  PgtModel twin(same, 0, false);
  ParamReport rt = partition(twin.params());
  size_t first = rt.per_task.begin()->second;
  for (const auto& [task, n] : rt.per_task) CHECK(n == first);
}

TEST_CASE("pgt growth slope is prompts plus head") {
  ModelConfig base = reference_config(1);
  std::vector<GrowthPoint> points = growth_curves(ArchFamily::kPgt, base, 1, 4);
  PgtModel probe(base, 0, false);
  ParamReport rep = partition(probe.params());
  const std::string task = rep.per_task.begin()->first;
  const size_t slope = points[1].total - points[0].total;
  CHECK(slope ==
        rep.prompt_params_per_task.at(task) + rep.head_params_per_task.at(task));
  // near-flat curve: each task adds less than 0.3% of the 4-task total
  const double n4_total = static_cast<double>(points[3].total);
  CHECK(static_cast<double>(slope) / n4_total < 0.003);
}

TEST_CASE("multi-decoder growth is quadratic, legacy task-conditional linear") {
  ModelConfig base = reference_config(1);
  const size_t m_pair = 150000;
  std::vector<GrowthPoint> md =
      growth_curves(ArchFamily::kMultiDecoder, base, 1, 5, m_pair);
  for (size_t i = 0; i + 2 < md.size(); ++i) {
    const size_t second_diff =
        (md[i + 2].total - md[i + 1].total) - (md[i + 1].total - md[i].total);
    CHECK(second_diff == 2 * m_pair);
  }
  std::vector<GrowthPoint> legacy =
      growth_curves(ArchFamily::kTaskConditionalLegacy, base, 1, 5);
  for (size_t i = 0; i + 2 < legacy.size(); ++i)
    CHECK(legacy[i + 2].total - legacy[i + 1].total ==
          legacy[i + 1].total - legacy[i].total);
  // pgt grows slowest
  std::vector<GrowthPoint> pgt_curve = growth_curves(ArchFamily::kPgt, base, 1, 5);
  CHECK(pgt_curve[4].total - pgt_curve[0].total < legacy[4].total - legacy[0].total);
  CHECK(pgt_curve[4].total - pgt_curve[0].total < md[4].total - md[0].total);
}

TEST_CASE("growth_curves rejects an empty range") {
  CHECK_THROWS_AS(growth_curves(ArchFamily::kPgt, reference_config(1), 3, 2), ConfigError);
}
