#include "pgt/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pgt/errors.hpp"

namespace pgt::analysis {

namespace {

double cosine(const double* a, const double* b, size_t n) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw MetricError("prompt similarity: zero-vector prompt");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

SimilarityMatrix prompt_similarity(const PromptBank& bank, const std::vector<std::string>& tasks,
                                   const std::string& block_id, SimilarityReduction reduction) {
  if (!bank.has_block(block_id)) throw ConfigError("unknown block id: " + block_id);
  std::vector<const Tensor*> prompts;
  for (const std::string& t : tasks) prompts.push_back(&bank.at(t, block_id));

  const size_t n = tasks.size();
  SimilarityMatrix sim;
  sim.tasks = tasks;
  sim.values.assign(n * n, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i; j < n; ++j) {
      const Tensor& a = *prompts[i];
      const Tensor& b = *prompts[j];
      double value = 0.0;
      if (reduction == SimilarityReduction::kFlatten) {
        value = cosine(a.data(), b.data(), a.size());
      } else {
        const size_t np = a.shape()[0], d = a.shape()[1];
        for (size_t tok = 0; tok < np; ++tok)
          value += cosine(a.data() + tok * d, b.data() + tok * d, d);
        value /= static_cast<double>(np);
      }
      sim.values[i * n + j] = value;
      sim.values[j * n + i] = value;
    }
  return sim;
}

std::string SimilarityMatrix::to_csv() const {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << "task";
  for (const std::string& t : tasks) os << "," << t;
  os << "\n";
  for (size_t i = 0; i < tasks.size(); ++i) {
    os << tasks[i];
    for (size_t j = 0; j < tasks.size(); ++j) os << "," << at(i, j);
    os << "\n";
  }
  return os.str();
}

Tensor feature_heatmap(const Tensor& feature_map) {
  if (feature_map.rank() != 3 || feature_map.shape()[2] < 1)
    throw ShapeError("feature_heatmap: expected h x w x c map, got " + feature_map.shape_str());
  const size_t h = feature_map.shape()[0], w = feature_map.shape()[1], c = feature_map.shape()[2];
  Tensor heat = Tensor::zeros({h, w});
  const double* pf = feature_map.data();
  double* ph = heat.data();
  for (size_t i = 0; i < h * w; ++i) {
    double sum = 0.0;
    for (size_t ch = 0; ch < c; ++ch) sum += std::abs(pf[i * c + ch]);
    ph[i] = sum / static_cast<double>(c);
  }
  double lo = ph[0], hi = ph[0];
  for (size_t i = 1; i < h * w; ++i) {
    lo = std::min(lo, ph[i]);
    hi = std::max(hi, ph[i]);
  }
  if (hi == lo) {
    for (size_t i = 0; i < h * w; ++i) ph[i] = 0.0;  // constant maps carry no contrast
  } else {
    for (size_t i = 0; i < h * w; ++i) ph[i] = (ph[i] - lo) / (hi - lo);
  }
  return heat;
}

std::string to_pgm(const Tensor& heatmap) {
  if (heatmap.rank() != 2) throw ShapeError("to_pgm: expected h x w map");
  const size_t h = heatmap.shape()[0], w = heatmap.shape()[1];
  std::ostringstream os;
  os << "P2\n" << w << " " << h << "\n255\n";
  for (size_t y = 0; y < h; ++y) {
    for (size_t x = 0; x < w; ++x) {
      const double v = std::clamp(heatmap.data()[y * w + x], 0.0, 1.0);
      os << (x ? " " : "") << static_cast<int>(std::lround(v * 255.0));
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace pgt::analysis
