#include "pgt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "pgt/errors.hpp"

namespace pgt::metrics {

namespace {

constexpr double kRadToDeg = 57.29577951308232;

bool mask_on(const Tensor& mask, size_t i) { return !mask.defined() || mask.data()[i] > 0.5; }

}  // namespace

double miou(const Tensor& pred, const Tensor& gt, int num_classes, int ignore_label) {
  if (pred.rank() != 3 || gt.rank() != 2 || pred.shape()[0] != gt.shape()[0] ||
      pred.shape()[1] != gt.shape()[1])
    throw ShapeError("miou: pred " + pred.shape_str() + " incompatible with gt " + gt.shape_str());
  if (static_cast<int>(pred.shape()[2]) != num_classes)
    throw ShapeError("miou: pred has " + std::to_string(pred.shape()[2]) + " channels, expected " +
                     std::to_string(num_classes));
  const size_t h = gt.shape()[0], w = gt.shape()[1];
  const size_t k = static_cast<size_t>(num_classes);
  const double* pp = pred.data();
  const double* pg = gt.data();

  std::vector<size_t> tp(k, 0), fp(k, 0), fn(k, 0);
  std::vector<bool> present(k, false);
  size_t valid = 0;
  for (size_t i = 0; i < h * w; ++i) {
    const long label = static_cast<long>(std::llround(pg[i]));
    if (ignore_label >= 0 && label == ignore_label) continue;
    if (label < 0 || label >= static_cast<long>(k))
      throw ShapeError("miou: gt label " + std::to_string(label) + " outside [0," +
                       std::to_string(k) + ")");
    ++valid;
    present[static_cast<size_t>(label)] = true;
    const double* row = pp + i * k;
    size_t arg = 0;
    for (size_t c = 1; c < k; ++c)
      if (row[c] > row[arg]) arg = c;
    if (arg == static_cast<size_t>(label)) {
      ++tp[arg];
    } else {
      ++fp[arg];
      ++fn[static_cast<size_t>(label)];
    }
  }
  if (valid == 0) throw MetricError("miou: no valid pixels");

  double sum = 0.0;
  size_t classes = 0;
  for (size_t c = 0; c < k; ++c) {
    if (!present[c]) continue;
    const size_t denom = tp[c] + fp[c] + fn[c];
    sum += denom == 0 ? 0.0 : static_cast<double>(tp[c]) / static_cast<double>(denom);
    ++classes;
  }
  return sum / static_cast<double>(classes);
}

double rmse(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
  if (pred.shape() != gt.shape())
    throw ShapeError("rmse: shapes " + pred.shape_str() + " vs " + gt.shape_str());
  const double* pp = pred.data();
  const double* pg = gt.data();
  double sum = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (!mask_on(mask, i)) continue;
    const double d = pp[i] - pg[i];
    sum += d * d;
    ++n;
  }
  if (n == 0) throw MetricError("rmse: empty mask");
  return std::sqrt(sum / static_cast<double>(n));
}

double mean_angle(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
  if (pred.shape() != gt.shape() || pred.rank() != 3 || pred.shape()[2] != 3)
    throw ShapeError("mean_angle: expected matching H x W x 3 fields");
  const size_t pixels = pred.shape()[0] * pred.shape()[1];
  const double* pp = pred.data();
  const double* pg = gt.data();
  double sum = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < pixels; ++i) {
    if (!mask_on(mask, i)) continue;
    const double* a = pp + i * 3;
    const double* b = pg + i * 3;
    const double na = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
    const double nb = std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
    if (nb == 0.0) throw MetricError("mean_angle: zero-norm ground-truth vector in mask");
    double deg;
    if (na == 0.0) {
      deg = 90.0;  // undefined prediction direction
    } else {
      double dot = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (na * nb);
      dot = std::clamp(dot, -1.0, 1.0);
      deg = std::acos(dot) * kRadToDeg;
    }
    sum += deg;
    ++n;
  }
  if (n == 0) throw MetricError("mean_angle: empty mask");
  return sum / static_cast<double>(n);
}

double ods_f(const std::vector<Tensor>& preds, const std::vector<Tensor>& gts) {
  if (preds.size() != gts.size() || preds.empty())
    throw ShapeError("ods_f: pred/gt lists must align and be nonempty");
  size_t gt_positive = 0;
  for (const Tensor& g : gts)
    for (size_t i = 0; i < g.size(); ++i)
      if (g.data()[i] > 0.5) ++gt_positive;
  if (gt_positive == 0) throw MetricError("ods_f: no positive ground-truth pixels in dataset");

  // A predicted pixel is a true positive when a gt edge pixel lies within a
  // Chebyshev distance of 1; recall is counted over gt pixels symmetrically.
  auto near_positive = [](const Tensor& m, size_t h, size_t w, size_t y, size_t x) {
    const double* pm = m.data();
    for (long dy = -1; dy <= 1; ++dy)
      for (long dx = -1; dx <= 1; ++dx) {
        const long yy = static_cast<long>(y) + dy, xx = static_cast<long>(x) + dx;
        if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
        if (pm[yy * w + xx] > 0.5) return true;
      }
    return false;
  };

  double best_f = 0.0;
  for (int step = 1; step <= 99; ++step) {
    const double thr = 0.01 * step;
    size_t tp_pred = 0, n_pred = 0, tp_gt = 0;
    for (size_t img = 0; img < preds.size(); ++img) {
      const Tensor& p = preds[img];
      const Tensor& g = gts[img];
      if (p.shape() != g.shape())
        throw ShapeError("ods_f: pred/gt shape mismatch at image " + std::to_string(img));
      const size_t h = p.shape()[0], w = p.shape()[1];
      Tensor binary = Tensor::zeros({h, w});
      for (size_t i = 0; i < h * w; ++i) binary.data()[i] = p.data()[i] >= thr ? 1.0 : 0.0;
      for (size_t y = 0; y < h; ++y)
        for (size_t x = 0; x < w; ++x) {
          if (binary.data()[y * w + x] > 0.5) {
            ++n_pred;
            if (near_positive(g, h, w, y, x)) ++tp_pred;
          }
          if (g.data()[y * w + x] > 0.5 && near_positive(binary, h, w, y, x)) ++tp_gt;
        }
    }
    const double precision =
        n_pred == 0 ? 0.0 : static_cast<double>(tp_pred) / static_cast<double>(n_pred);
    const double recall = static_cast<double>(tp_gt) / static_cast<double>(gt_positive);
    const double f = (precision + recall) == 0.0 ? 0.0 : 2 * precision * recall / (precision + recall);
    best_f = std::max(best_f, f);
  }
  return best_f;
}

double delta_m(const std::vector<MetricRow>& rows) {
  if (rows.empty()) throw MetricError("delta_m: no rows");
  double sum = 0.0;
  for (const MetricRow& r : rows) {
    if (!r.baseline.has_value())
      throw MetricError("delta_m: row '" + r.task + "' has no baseline value");
    if (*r.baseline == 0.0) throw MetricError("delta_m: zero baseline for task '" + r.task + "'");
    const double rel = (r.value - *r.baseline) / *r.baseline;
    sum += (r.lower_is_better ? -1.0 : 1.0) * rel;
  }
  return 100.0 * sum / static_cast<double>(rows.size());
}

void MetricsReport::compute_delta_m() { delta_m_percent = delta_m(rows); }

std::string MetricsReport::to_kv_text() const {
  std::ostringstream os;
  os.precision(17);  // round-trip exact, so a report can serve as a baseline
  os << "tasks =";
  for (size_t i = 0; i < rows.size(); ++i) os << (i ? "," : " ") << rows[i].task;
  os << "\n";
  for (const MetricRow& r : rows) {
    os << "task." << r.task << ".metric = " << r.metric << "\n";
    os << "task." << r.task << ".value = " << r.value << "\n";
    os << "task." << r.task << ".lower_is_better = " << (r.lower_is_better ? 1 : 0) << "\n";
    if (r.baseline) os << "task." << r.task << ".baseline = " << *r.baseline << "\n";
  }
  if (delta_m_percent) os << "delta_m = " << *delta_m_percent << "\n";
  return os.str();
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << "task,metric,value,baseline,lower_is_better\n";
  for (const MetricRow& r : rows) {
    os << r.task << "," << r.metric << "," << r.value << ",";
    if (r.baseline) os << *r.baseline;
    os << "," << (r.lower_is_better ? 1 : 0) << "\n";
  }
  return os.str();
}

MetricsReport MetricsReport::from_kv_text(const std::string& text) {
  MetricsReport rep;
  std::istringstream is(text);
  std::string line;
  std::vector<std::string> order;
  std::map<std::string, MetricRow> rows;
  while (std::getline(is, line)) {
    const size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.rfind("task.", 0) != 0) continue;
    const size_t dot = key.find('.', 5);
    if (dot == std::string::npos) continue;
    const std::string task = key.substr(5, dot - 5);
    const std::string field = key.substr(dot + 1);
    if (!rows.count(task)) {
      order.push_back(task);
      rows[task].task = task;
    }
    MetricRow& r = rows[task];
    if (field == "metric") r.metric = value;
    else if (field == "value") r.value = std::stod(value);
    else if (field == "baseline") r.baseline = std::stod(value);
    else if (field == "lower_is_better") r.lower_is_better = value == "1" || value == "true";
  }
  for (const std::string& t : order) rep.rows.push_back(rows[t]);
  return rep;
}

}  // namespace pgt::metrics
