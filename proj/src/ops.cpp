#include "pgt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pgt/errors.hpp"

namespace pgt::ops {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

bool wants_grad(const Tensor& t) { return t.requires_grad() || t.tracked(); }

bool recording(Tape* tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape) return false;
  for (const Tensor* t : inputs)
    if (t->defined() && wants_grad(*t)) return true;
  return false;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    std::ostringstream os;
    os << op << ": shapes " << a.shape_str() << " and " << b.shape_str() << " differ";
    throw ShapeError(os.str());
  }
}

// accumulate src into t.grad if t participates in the graph
void accum(Tensor& t, const std::vector<double>& src) {
  if (!wants_grad(t)) return;
  t.ensure_grad();
  auto& g = t.grad();
  for (size_t i = 0; i < src.size(); ++i) g[i] += src[i];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (size_t i = 0; i < a.size(); ++i) po[i] = pa[i] + pb[i];
  if (recording(tape, {&a, &b})) {
    out.mark_tracked();
    Tensor ac = a, bc = b, oc = out;
    tape->record([ac, bc, oc]() mutable {
      if (!oc.has_grad()) return;
      accum(ac, oc.grad());
      accum(bc, oc.grad());
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double c, Tape* tape) {
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data();
  double* po = out.data();
  for (size_t i = 0; i < a.size(); ++i) po[i] = pa[i] * c;
  if (recording(tape, {&a})) {
    out.mark_tracked();
    Tensor ac = a, oc = out;
    tape->record([ac, oc, c]() mutable {
      if (!oc.has_grad()) return;
      if (!wants_grad(ac)) return;
      ac.ensure_grad();
      auto& g = ac.grad();
      const auto& og = oc.grad();
      for (size_t i = 0; i < og.size(); ++i) g[i] += c * og[i];
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    std::ostringstream os;
    os << "matmul: incompatible shapes " << a.shape_str() << " x " << b.shape_str();
    throw ShapeError(os.str());
  }
  const size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out = Tensor::zeros({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (size_t i = 0; i < m; ++i)
    for (size_t kk = 0; kk < k; ++kk) {
      const double aik = pa[i * k + kk];
      const double* brow = pb + kk * n;
      double* orow = po + i * n;
      for (size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  if (recording(tape, {&a, &b})) {
    out.mark_tracked();
    Tensor ac = a, bc = b, oc = out;
    tape->record([ac, bc, oc, m, k, n]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      if (wants_grad(ac)) {  // dA = dC . B^T
        ac.ensure_grad();
        auto& ga = ac.grad();
        const double* pb = bc.data();
        for (size_t i = 0; i < m; ++i)
          for (size_t j = 0; j < n; ++j) {
            const double d = og[i * n + j];
            if (d == 0.0) continue;
            const double* brow = pb + j;
            for (size_t kk = 0; kk < k; ++kk) ga[i * k + kk] += d * brow[kk * n];
          }
      }
      if (wants_grad(bc)) {  // dB = A^T . dC
        bc.ensure_grad();
        auto& gb = bc.grad();
        const double* pa = ac.data();
        for (size_t kk = 0; kk < k; ++kk)
          for (size_t i = 0; i < m; ++i) {
            const double av = pa[i * k + kk];
            if (av == 0.0) continue;
            const double* orow = og.data() + i * n;
            double* gbrow = gb.data() + kk * n;
            for (size_t j = 0; j < n; ++j) gbrow[j] += av * orow[j];
          }
      }
    });
  }
  return out;
}

Tensor add_rowwise(const Tensor& x, const Tensor& bias, Tape* tape) {
  if (x.rank() != 2 || bias.rank() != 1 || x.shape()[1] != bias.shape()[0]) {
    std::ostringstream os;
    os << "add_rowwise: " << x.shape_str() << " with bias " << bias.shape_str();
    throw ShapeError(os.str());
  }
  const size_t rows = x.shape()[0], cols = x.shape()[1];
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data();
  const double* pbias = bias.data();
  double* po = out.data();
  for (size_t i = 0; i < rows; ++i)
    for (size_t j = 0; j < cols; ++j) po[i * cols + j] = px[i * cols + j] + pbias[j];
  if (recording(tape, {&x, &bias})) {
    out.mark_tracked();
    Tensor xc = x, bc = bias, oc = out;
    tape->record([xc, bc, oc, rows, cols]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      accum(xc, og);
      if (wants_grad(bc)) {
        bc.ensure_grad();
        auto& gb = bc.grad();
        for (size_t i = 0; i < rows; ++i)
          for (size_t j = 0; j < cols; ++j) gb[j] += og[i * cols + j];
      }
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, int axis, Tape* tape) {
  const int rank = static_cast<int>(x.rank());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ShapeError("softmax: axis out of range for " + x.shape_str());
  const size_t dim = x.shape()[axis];
  size_t inner = 1;
  for (int i = axis + 1; i < rank; ++i) inner *= x.shape()[i];
  const size_t slices = x.size() / dim;

  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data();
  double* po = out.data();
  for (size_t s = 0; s < slices; ++s) {
    const size_t base = (s / inner) * dim * inner + (s % inner);
    double mx = px[base];
    for (size_t j = 1; j < dim; ++j) mx = std::max(mx, px[base + j * inner]);
    double z = 0.0;
    for (size_t j = 0; j < dim; ++j) {
      const double e = std::exp(px[base + j * inner] - mx);
      po[base + j * inner] = e;
      z += e;
    }
    for (size_t j = 0; j < dim; ++j) po[base + j * inner] /= z;
  }
  if (recording(tape, {&x})) {
    out.mark_tracked();
    Tensor xc = x, oc = out;
    tape->record([xc, oc, dim, inner, slices]() mutable {
      if (!oc.has_grad() || !wants_grad(xc)) return;
      xc.ensure_grad();
      auto& gx = xc.grad();
      const auto& og = oc.grad();
      const double* py = oc.data();
      for (size_t s = 0; s < slices; ++s) {
        const size_t base = (s / inner) * dim * inner + (s % inner);
        double dot = 0.0;
        for (size_t j = 0; j < dim; ++j) dot += py[base + j * inner] * og[base + j * inner];
        for (size_t j = 0; j < dim; ++j) {
          const size_t idx = base + j * inner;
          gx[idx] += py[idx] * (og[idx] - dot);
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                  Tape* tape) {
  if (x.rank() != 2) throw ShapeError("layer_norm: expected 2-D tokens, got " + x.shape_str());
  const size_t rows = x.shape()[0], d = x.shape()[1];
  if (gamma.size() != d || beta.size() != d)
    throw ShapeError("layer_norm: gamma/beta must have dim " + std::to_string(d));

  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  const double* px = x.data();
  const double* pg = gamma.data();
  const double* pb = beta.data();
  double* po = out.data();
  for (size_t i = 0; i < rows; ++i) {
    const double* row = px + i * d;
    double mean = 0.0;
    for (size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (size_t j = 0; j < d; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mean) * is;
      xhat[i * d + j] = h;
      po[i * d + j] = pg[j] * h + pb[j];
    }
  }
  if (recording(tape, {&x, &gamma, &beta})) {
    out.mark_tracked();
    Tensor xc = x, gc = gamma, bc = beta, oc = out;
    auto xh = std::make_shared<std::vector<double>>(std::move(xhat));
    auto istd = std::make_shared<std::vector<double>>(std::move(inv_std));
    tape->record([xc, gc, bc, oc, xh, istd, rows, d]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      const double* pg = gc.data();
      if (wants_grad(gc)) {
        gc.ensure_grad();
        auto& gg = gc.grad();
        for (size_t i = 0; i < rows; ++i)
          for (size_t j = 0; j < d; ++j) gg[j] += og[i * d + j] * (*xh)[i * d + j];
      }
      if (wants_grad(bc)) {
        bc.ensure_grad();
        auto& gb = bc.grad();
        for (size_t i = 0; i < rows; ++i)
          for (size_t j = 0; j < d; ++j) gb[j] += og[i * d + j];
      }
      if (wants_grad(xc)) {
        xc.ensure_grad();
        auto& gx = xc.grad();
        for (size_t i = 0; i < rows; ++i) {
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (size_t j = 0; j < d; ++j) {
            const double dh = og[i * d + j] * pg[j];
            mean_dh += dh;
            mean_dh_h += dh * (*xh)[i * d + j];
          }
          mean_dh /= static_cast<double>(d);
          mean_dh_h /= static_cast<double>(d);
          for (size_t j = 0; j < d; ++j) {
            const double dh = og[i * d + j] * pg[j];
            gx[i * d + j] += (dh - mean_dh - (*xh)[i * d + j] * mean_dh_h) * (*istd)[i];
          }
        }
      }
    });
  }
  return out;
}

Tensor gelu(const Tensor& x, Tape* tape) {
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data();
  double* po = out.data();
  for (size_t i = 0; i < x.size(); ++i)
    po[i] = 0.5 * px[i] * (1.0 + std::erf(px[i] * kInvSqrt2));
  if (recording(tape, {&x})) {
    out.mark_tracked();
    Tensor xc = x, oc = out;
    tape->record([xc, oc]() mutable {
      if (!oc.has_grad() || !wants_grad(xc)) return;
      xc.ensure_grad();
      auto& gx = xc.grad();
      const auto& og = oc.grad();
      const double* px = xc.data();
      for (size_t i = 0; i < gx.size(); ++i) {
        const double cdf = 0.5 * (1.0 + std::erf(px[i] * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * px[i] * px[i]);
        gx[i] += og[i] * (cdf + px[i] * pdf);
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& x, Tape* tape) {
  if (x.rank() != 2) throw ShapeError("transpose: expected 2-D, got " + x.shape_str());
  const size_t r = x.shape()[0], c = x.shape()[1];
  Tensor out = Tensor::zeros({c, r});
  const double* px = x.data();
  double* po = out.data();
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j) po[j * r + i] = px[i * c + j];
  if (recording(tape, {&x})) {
    out.mark_tracked();
    Tensor xc = x, oc = out;
    tape->record([xc, oc, r, c]() mutable {
      if (!oc.has_grad() || !wants_grad(xc)) return;
      xc.ensure_grad();
      auto& gx = xc.grad();
      const auto& og = oc.grad();
      for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) gx[i * c + j] += og[j * r + i];
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, std::vector<size_t> shape, Tape* tape) {
  if (shape_numel(shape) != x.size()) {
    std::ostringstream os;
    os << "reshape: cannot view " << x.shape_str() << " as " << shape_numel(shape) << " elements";
    throw ShapeError(os.str());
  }
  Tensor out = Tensor::from_data(std::move(shape), x.values());
  if (recording(tape, {&x})) {
    out.mark_tracked();
    Tensor xc = x, oc = out;
    tape->record([xc, oc]() mutable {
      if (!oc.has_grad()) return;
      accum(xc, oc.grad());
    });
  }
  return out;
}

Tensor take(const Tensor& x, std::vector<size_t> flat_indices, Tape* tape) {
  for (size_t idx : flat_indices)
    if (idx >= x.size()) throw ShapeError("take: index " + std::to_string(idx) + " out of range");
  Tensor out = Tensor::zeros({flat_indices.size()});
  const double* px = x.data();
  double* po = out.data();
  for (size_t i = 0; i < flat_indices.size(); ++i) po[i] = px[flat_indices[i]];
  if (recording(tape, {&x})) {
    out.mark_tracked();
    Tensor xc = x, oc = out;
    auto idx = std::make_shared<std::vector<size_t>>(std::move(flat_indices));
    tape->record([xc, oc, idx]() mutable {
      if (!oc.has_grad() || !wants_grad(xc)) return;
      xc.ensure_grad();
      auto& gx = xc.grad();
      const auto& og = oc.grad();
      for (size_t i = 0; i < idx->size(); ++i) gx[(*idx)[i]] += og[i];
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts, Tape* tape) {
  size_t cols = 0, rows = 0;
  for (const Tensor& p : parts) {
    if (!p.defined() || p.size() == 0) continue;
    if (p.rank() != 2) throw ShapeError("concat_rows: expected 2-D parts");
    if (cols == 0) cols = p.shape()[1];
    if (p.shape()[1] != cols) throw ShapeError("concat_rows: column counts differ");
    rows += p.shape()[0];
  }
  Tensor out = Tensor::zeros({rows, cols});
  double* po = out.data();
  size_t r = 0;
  for (const Tensor& p : parts) {
    if (!p.defined() || p.size() == 0) continue;
    std::copy(p.data(), p.data() + p.size(), po + r * cols);
    r += p.shape()[0];
  }
  bool rec = false;
  if (tape)
    for (const Tensor& p : parts)
      if (p.defined() && p.size() > 0 && wants_grad(p)) rec = true;
  if (rec) {
    out.mark_tracked();
    std::vector<Tensor> pc = parts;
    Tensor oc = out;
    tape->record([pc, oc, cols]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      size_t r = 0;
      for (Tensor& p : pc) {
        if (!p.defined() || p.size() == 0) continue;
        const size_t n = p.size();
        if (wants_grad(p)) {
          p.ensure_grad();
          auto& gp = p.grad();
          for (size_t i = 0; i < n; ++i) gp[i] += og[r * cols + i];
        }
        r += p.shape()[0];
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& x, size_t row0, size_t row1, Tape* tape) {
  if (x.rank() != 2 || row1 > x.shape()[0] || row0 > row1)
    throw ShapeError("slice_rows: range [" + std::to_string(row0) + "," + std::to_string(row1) +
                     ") invalid for " + x.shape_str());
  const size_t cols = x.shape()[1];
  Tensor out = Tensor::zeros({row1 - row0, cols});
  std::copy(x.data() + row0 * cols, x.data() + row1 * cols, out.data());
  if (recording(tape, {&x})) {
    out.mark_tracked();
    Tensor xc = x, oc = out;
    tape->record([xc, oc, row0, cols]() mutable {
      if (!oc.has_grad() || !wants_grad(xc)) return;
      xc.ensure_grad();
      auto& gx = xc.grad();
      const auto& og = oc.grad();
      for (size_t i = 0; i < og.size(); ++i) gx[row0 * cols + i] += og[i];
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts, Tape* tape) {
  size_t rows = 0, cols = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != 2) throw ShapeError("concat_cols: expected 2-D parts");
    if (rows == 0) rows = p.shape()[0];
    if (p.shape()[0] != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.shape()[1];
  }
  Tensor out = Tensor::zeros({rows, cols});
  double* po = out.data();
  size_t c0 = 0;
  for (const Tensor& p : parts) {
    const size_t pc = p.shape()[1];
    const double* pp = p.data();
    for (size_t i = 0; i < rows; ++i)
      std::copy(pp + i * pc, pp + (i + 1) * pc, po + i * cols + c0);
    c0 += pc;
  }
  bool rec = false;
  if (tape)
    for (const Tensor& p : parts)
      if (wants_grad(p)) rec = true;
  if (rec) {
    out.mark_tracked();
    std::vector<Tensor> pc = parts;
    Tensor oc = out;
    tape->record([pc, oc, rows, cols]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      size_t c0 = 0;
      for (Tensor& p : pc) {
        const size_t w = p.shape()[1];
        if (wants_grad(p)) {
          p.ensure_grad();
          auto& gp = p.grad();
          for (size_t i = 0; i < rows; ++i)
            for (size_t j = 0; j < w; ++j) gp[i * w + j] += og[i * cols + c0 + j];
        }
        c0 += w;
      }
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, size_t col0, size_t col1, Tape* tape) {
  if (x.rank() != 2 || col1 > x.shape()[1] || col0 > col1)
    throw ShapeError("slice_cols: range invalid for " + x.shape_str());
  const size_t rows = x.shape()[0], cols = x.shape()[1], w = col1 - col0;
  Tensor out = Tensor::zeros({rows, w});
  const double* px = x.data();
  double* po = out.data();
  for (size_t i = 0; i < rows; ++i)
    std::copy(px + i * cols + col0, px + i * cols + col1, po + i * w);
  if (recording(tape, {&x})) {
    out.mark_tracked();
    Tensor xc = x, oc = out;
    tape->record([xc, oc, rows, cols, col0, w]() mutable {
      if (!oc.has_grad() || !wants_grad(xc)) return;
      xc.ensure_grad();
      auto& gx = xc.grad();
      const auto& og = oc.grad();
      for (size_t i = 0; i < rows; ++i)
        for (size_t j = 0; j < w; ++j) gx[i * cols + col0 + j] += og[i * w + j];
    });
  }
  return out;
}

Tensor sum_all(const Tensor& x, Tape* tape) {
  double s = 0.0;
  const double* px = x.data();
  for (size_t i = 0; i < x.size(); ++i) s += px[i];
  Tensor out = Tensor::scalar(s);
  if (recording(tape, {&x})) {
    out.mark_tracked();
    Tensor xc = x, oc = out;
    tape->record([xc, oc]() mutable {
      if (!oc.has_grad() || !wants_grad(xc)) return;
      xc.ensure_grad();
      auto& gx = xc.grad();
      const double d = oc.grad()[0];
      for (double& g : gx) g += d;
    });
  }
  return out;
}

Tensor mean_all(const Tensor& x, Tape* tape) {
  if (x.size() == 0) throw ShapeError("mean_all: empty tensor");
  return scale(sum_all(x, tape), 1.0 / static_cast<double>(x.size()), tape);
}

Tensor upsample_bilinear(const Tensor& map, int factor, Tape* tape) {
  if (factor != 2 && factor != 4 && factor != 8)
    throw ConfigError("upsample_bilinear: factor must be 2, 4 or 8, got " +
                      std::to_string(factor));
  if (map.rank() != 3) throw ShapeError("upsample_bilinear: expected h x w x c map");
  const size_t h = map.shape()[0], w = map.shape()[1], c = map.shape()[2];
  const size_t oh = h * factor, ow = w * factor;
  Tensor out = Tensor::zeros({oh, ow, c});

  // half-pixel centers, clamped to the border (align_corners=false)
  auto src_coord = [factor](size_t dst, size_t limit, size_t& lo, size_t& hi, double& frac) {
    double s = (static_cast<double>(dst) + 0.5) / factor - 0.5;
    if (s < 0) s = 0;
    if (s > static_cast<double>(limit - 1)) s = static_cast<double>(limit - 1);
    lo = static_cast<size_t>(std::floor(s));
    hi = std::min(lo + 1, limit - 1);
    frac = s - static_cast<double>(lo);
  };

  const double* pm = map.data();
  double* po = out.data();
  for (size_t y = 0; y < oh; ++y) {
    size_t y0, y1;
    double fy;
    src_coord(y, h, y0, y1, fy);
    for (size_t x = 0; x < ow; ++x) {
      size_t x0, x1;
      double fx;
      src_coord(x, w, x0, x1, fx);
      const double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
      const double w10 = fy * (1 - fx), w11 = fy * fx;
      for (size_t ch = 0; ch < c; ++ch) {
        po[(y * ow + x) * c + ch] = w00 * pm[(y0 * w + x0) * c + ch] +
                                    w01 * pm[(y0 * w + x1) * c + ch] +
                                    w10 * pm[(y1 * w + x0) * c + ch] +
                                    w11 * pm[(y1 * w + x1) * c + ch];
      }
    }
  }
  if (recording(tape, {&map})) {
    out.mark_tracked();
    Tensor mc = map, oc = out;
    tape->record([mc, oc, h, w, c, oh, ow, factor, src_coord]() mutable {
      if (!oc.has_grad() || !wants_grad(mc)) return;
      mc.ensure_grad();
      auto& gm = mc.grad();
      const auto& og = oc.grad();
      for (size_t y = 0; y < oh; ++y) {
        size_t y0, y1;
        double fy;
        src_coord(y, h, y0, y1, fy);
        for (size_t x = 0; x < ow; ++x) {
          size_t x0, x1;
          double fx;
          src_coord(x, w, x0, x1, fx);
          const double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
          const double w10 = fy * (1 - fx), w11 = fy * fx;
          for (size_t ch = 0; ch < c; ++ch) {
            const double d = og[(y * ow + x) * c + ch];
            gm[(y0 * w + x0) * c + ch] += w00 * d;
            gm[(y0 * w + x1) * c + ch] += w01 * d;
            gm[(y1 * w + x0) * c + ch] += w10 * d;
            gm[(y1 * w + x1) * c + ch] += w11 * d;
          }
        }
      }
    });
  }
  return out;
}

Tensor conv2d(const Tensor& map, const Tensor& kernel, const Tensor& bias, Tape* tape) {
  if (map.rank() != 3 || kernel.rank() != 4)
    throw ShapeError("conv2d: expected h x w x c_in map and k x k x c_in x c_out kernel");
  const size_t h = map.shape()[0], w = map.shape()[1], cin = map.shape()[2];
  const size_t k = kernel.shape()[0];
  if (kernel.shape()[1] != k || k % 2 == 0) throw ShapeError("conv2d: kernel must be square, odd");
  if (kernel.shape()[2] != cin)
    throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.shape()[2]) +
                     " input channels, map has " + std::to_string(cin));
  const size_t cout = kernel.shape()[3];
  if (bias.size() != cout) throw ShapeError("conv2d: bias size mismatch");
  const long pad = static_cast<long>(k - 1) / 2;

  Tensor out = Tensor::zeros({h, w, cout});
  const double* pm = map.data();
  const double* pk = kernel.data();
  const double* pb = bias.data();
  double* po = out.data();
  for (size_t y = 0; y < h; ++y)
    for (size_t x = 0; x < w; ++x) {
      double* opix = po + (y * w + x) * cout;
      for (size_t co = 0; co < cout; ++co) opix[co] = pb[co];
      for (size_t dy = 0; dy < k; ++dy) {
        const long sy = static_cast<long>(y) + static_cast<long>(dy) - pad;
        if (sy < 0 || sy >= static_cast<long>(h)) continue;
        for (size_t dx = 0; dx < k; ++dx) {
          const long sx = static_cast<long>(x) + static_cast<long>(dx) - pad;
          if (sx < 0 || sx >= static_cast<long>(w)) continue;
          const double* ipix = pm + (sy * w + sx) * cin;
          const double* kk = pk + (dy * k + dx) * cin * cout;
          for (size_t ci = 0; ci < cin; ++ci) {
            const double iv = ipix[ci];
            if (iv == 0.0) continue;
            const double* krow = kk + ci * cout;
            for (size_t co = 0; co < cout; ++co) opix[co] += iv * krow[co];
          }
        }
      }
    }
  if (recording(tape, {&map, &kernel, &bias})) {
    out.mark_tracked();
    Tensor mc = map, kc = kernel, bc = bias, oc = out;
    tape->record([mc, kc, bc, oc, h, w, cin, k, cout, pad]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      const bool g_map = wants_grad(mc), g_k = wants_grad(kc), g_b = wants_grad(bc);
      if (g_map) mc.ensure_grad();
      if (g_k) kc.ensure_grad();
      if (g_b) bc.ensure_grad();
      const double* pm = mc.data();
      const double* pk = kc.data();
      for (size_t y = 0; y < h; ++y)
        for (size_t x = 0; x < w; ++x) {
          const double* dpix = og.data() + (y * w + x) * cout;
          if (g_b) {
            auto& gb = bc.grad();
            for (size_t co = 0; co < cout; ++co) gb[co] += dpix[co];
          }
          for (size_t dy = 0; dy < k; ++dy) {
            const long sy = static_cast<long>(y) + static_cast<long>(dy) - pad;
            if (sy < 0 || sy >= static_cast<long>(h)) continue;
            for (size_t dx = 0; dx < k; ++dx) {
              const long sx = static_cast<long>(x) + static_cast<long>(dx) - pad;
              if (sx < 0 || sx >= static_cast<long>(w)) continue;
              const size_t in_off = (sy * w + sx) * cin;
              const size_t k_off = (dy * k + dx) * cin * cout;
              for (size_t ci = 0; ci < cin; ++ci) {
                for (size_t co = 0; co < cout; ++co) {
                  const double d = dpix[co];
                  if (d == 0.0) continue;
                  if (g_map) mc.grad()[in_off + ci] += pk[k_off + ci * cout + co] * d;
                  if (g_k) kc.grad()[k_off + ci * cout + co] += pm[in_off + ci] * d;
                }
              }
            }
          }
        }
    });
  }
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& labels, int ignore_label,
                             Tape* tape) {
  if (logits.rank() != 2) throw ShapeError("softmax_cross_entropy: logits must be N x K");
  const size_t n = logits.shape()[0], kclasses = logits.shape()[1];
  if (labels.size() != n)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  const double* pl = logits.data();
  const double* py = labels.data();

  double total = 0.0;
  size_t valid = 0;
  std::vector<double> probs(logits.size());
  for (size_t i = 0; i < n; ++i) {
    const double* row = pl + i * kclasses;
    double mx = row[0];
    for (size_t j = 1; j < kclasses; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (size_t j = 0; j < kclasses; ++j) {
      const double e = std::exp(row[j] - mx);
      probs[i * kclasses + j] = e;
      z += e;
    }
    for (size_t j = 0; j < kclasses; ++j) probs[i * kclasses + j] /= z;
    const long lbl = static_cast<long>(std::llround(py[i]));
    if (ignore_label >= 0 && lbl == ignore_label) continue;
    if (lbl < 0 || lbl >= static_cast<long>(kclasses))
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(lbl) +
                       " outside [0," + std::to_string(kclasses) + ")");
    total += -(std::log(probs[i * kclasses + lbl]));
    ++valid;
  }
  if (valid == 0) throw DataError("softmax_cross_entropy: no valid pixels");
  Tensor out = Tensor::scalar(total / static_cast<double>(valid));
  if (recording(tape, {&logits})) {
    out.mark_tracked();
    Tensor lc = logits, yc = labels, oc = out;
    auto pr = std::make_shared<std::vector<double>>(std::move(probs));
    tape->record([lc, yc, oc, pr, n, kclasses, ignore_label, valid]() mutable {
      if (!oc.has_grad() || !wants_grad(lc)) return;
      lc.ensure_grad();
      auto& gl = lc.grad();
      const double d = oc.grad()[0] / static_cast<double>(valid);
      const double* py = yc.data();
      for (size_t i = 0; i < n; ++i) {
        const long lbl = static_cast<long>(std::llround(py[i]));
        if (ignore_label >= 0 && lbl == ignore_label) continue;
        for (size_t j = 0; j < kclasses; ++j) {
          double g = (*pr)[i * kclasses + j];
          if (static_cast<long>(j) == lbl) g -= 1.0;
          gl[i * kclasses + j] += d * g;
        }
      }
    });
  }
  return out;
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& target, double pos_weight,
                       double neg_weight, Tape* tape) {
  check_same_shape(logits, target, "bce_with_logits");
  const size_t n = logits.size();
  if (n == 0) throw ShapeError("bce_with_logits: empty input");
  const double* px = logits.data();
  const double* py = target.data();
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double x = px[i], y = py[i];
    const double wgt = y > 0.5 ? pos_weight : neg_weight;
    // stable: max(x,0) - x*y + log(1+exp(-|x|))
    total += wgt * (std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x))));
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(n));
  if (recording(tape, {&logits})) {
    out.mark_tracked();
    Tensor lc = logits, yc = target, oc = out;
    tape->record([lc, yc, oc, pos_weight, neg_weight, n]() mutable {
      if (!oc.has_grad() || !wants_grad(lc)) return;
      lc.ensure_grad();
      auto& gl = lc.grad();
      const double d = oc.grad()[0] / static_cast<double>(n);
      const double* px = lc.data();
      const double* py = yc.data();
      for (size_t i = 0; i < n; ++i) {
        const double y = py[i];
        const double wgt = y > 0.5 ? pos_weight : neg_weight;
        const double sig = 1.0 / (1.0 + std::exp(-px[i]));
        gl[i] += d * wgt * (sig - y);
      }
    });
  }
  return out;
}

Tensor l1_loss(const Tensor& pred, const Tensor& target, Tape* tape) {
  check_same_shape(pred, target, "l1_loss");
  const size_t n = pred.size();
  const double* pp = pred.data();
  const double* pt = target.data();
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) total += std::abs(pp[i] - pt[i]);
  Tensor out = Tensor::scalar(total / static_cast<double>(n));
  if (recording(tape, {&pred})) {
    out.mark_tracked();
    Tensor pc = pred, tc = target, oc = out;
    tape->record([pc, tc, oc, n]() mutable {
      if (!oc.has_grad() || !wants_grad(pc)) return;
      pc.ensure_grad();
      auto& gp = pc.grad();
      const double d = oc.grad()[0] / static_cast<double>(n);
      const double* pp = pc.data();
      const double* pt = tc.data();
      for (size_t i = 0; i < n; ++i) {
        const double diff = pp[i] - pt[i];
        gp[i] += d * (diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0));
      }
    });
  }
  return out;
}

Tensor l2_loss(const Tensor& pred, const Tensor& target, Tape* tape) {
  check_same_shape(pred, target, "l2_loss");
  const size_t n = pred.size();
  const double* pp = pred.data();
  const double* pt = target.data();
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double diff = pp[i] - pt[i];
    total += diff * diff;
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(n));
  if (recording(tape, {&pred})) {
    out.mark_tracked();
    Tensor pc = pred, tc = target, oc = out;
    tape->record([pc, tc, oc, n]() mutable {
      if (!oc.has_grad() || !wants_grad(pc)) return;
      pc.ensure_grad();
      auto& gp = pc.grad();
      const double d = oc.grad()[0] / static_cast<double>(n);
      const double* pp = pc.data();
      const double* pt = tc.data();
      for (size_t i = 0; i < n; ++i) gp[i] += d * 2.0 * (pp[i] - pt[i]);
    });
  }
  return out;
}

double grad_check(const std::function<Tensor(const Tensor&, Tape*)>& f, const Tensor& x,
                  double eps, size_t max_coords) {
  if (eps < 1e-7 || eps > 1e-4)
    throw ConfigError("grad_check: eps must lie in [1e-7, 1e-4]");

  Tensor xa = x.clone();
  xa.set_requires_grad(true);
  Tape tape;
  Tensor y = f(xa, &tape);
  if (y.size() != 1)
    throw ShapeError("grad_check: f returned " + y.shape_str() + ", expected a scalar");
  tape.backward(y);
  std::vector<double> analytic(x.size(), 0.0);
  if (xa.has_grad()) analytic = xa.grad();

  Tensor xn = x.clone();
  const size_t n = x.size();
  size_t step = 1;
  if (max_coords > 0 && n > max_coords) step = (n + max_coords - 1) / max_coords;

  double worst = 0.0;
  for (size_t i = 0; i < n; i += step) {
    double* px = xn.data();
    const double saved = px[i];
    px[i] = saved + eps;
    const double fp = f(xn, nullptr).item();
    px[i] = saved - eps;
    const double fm = f(xn, nullptr).item();
    px[i] = saved;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace pgt::ops
