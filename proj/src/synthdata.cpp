#include "pgt/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pgt/errors.hpp"
#include "pgt/rng.hpp"

namespace pgt::synth {

namespace fs = std::filesystem;

namespace {

// fixed palette of distinct base colors, indexed by class id
constexpr double kPalette[][3] = {
    {0.35, 0.35, 0.38},  // background
    {0.85, 0.20, 0.18}, {0.18, 0.62, 0.85}, {0.22, 0.78, 0.30}, {0.92, 0.78, 0.15},
    {0.70, 0.25, 0.80}, {0.95, 0.50, 0.12}, {0.15, 0.75, 0.70}, {0.80, 0.35, 0.55},
    {0.45, 0.55, 0.15}, {0.25, 0.30, 0.85},
};
constexpr size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

constexpr double kLight[3] = {0.40, 0.25, 0.88};
constexpr double kBackgroundDepth = 0.5;

struct ShapeSpec {
  bool is_circle;
  double cx, cy, rx, ry;  // center and half-extents in pixels
  int class_id;
  double depth;
  double normal[3];
};

bool covers(const ShapeSpec& s, double x, double y) {
  const double dx = (x - s.cx) / s.rx, dy = (y - s.cy) / s.ry;
  if (s.is_circle) return dx * dx + dy * dy <= 1.0;
  return std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
}

}  // namespace

Tensor boundary_from_semseg(const Tensor& semseg) {
  if (semseg.rank() != 2) throw ShapeError("boundary: expected H x W label map");
  const size_t h = semseg.shape()[0], w = semseg.shape()[1];
  Tensor edge = Tensor::zeros({h, w});
  const double* ps = semseg.data();
  double* pe = edge.data();
  for (size_t y = 0; y < h; ++y)
    for (size_t x = 0; x < w; ++x) {
      const double c = ps[y * w + x];
      const bool diff = (y > 0 && ps[(y - 1) * w + x] != c) ||
                        (y + 1 < h && ps[(y + 1) * w + x] != c) ||
                        (x > 0 && ps[y * w + x - 1] != c) ||
                        (x + 1 < w && ps[y * w + x + 1] != c);
      if (diff) pe[y * w + x] = 1.0;
    }
  return edge;
}

Scene gen_scene(uint64_t seed, int h, int w, const std::vector<std::string>& tasks,
                const GenOptions& opts) {
  if (h % 32 != 0 || w % 32 != 0)
    throw ConfigError("gen_scene: dims must be divisible by 32, got " + std::to_string(h) + "x" +
                      std::to_string(w));
  if (opts.min_shapes < 0 || opts.max_shapes < opts.min_shapes)
    throw ConfigError("gen_scene: bad shape-count range");
  if (opts.num_classes < 2) throw ConfigError("gen_scene: need at least 2 classes");
  if (opts.max_shapes > opts.num_classes - 1)
    throw ConfigError("gen_scene: " + std::to_string(opts.max_shapes) +
                      " shapes need at least " + std::to_string(opts.max_shapes + 1) +
                      " classes (one distinct class per shape)");
  for (const std::string& t : tasks)
    if (t != "semseg" && t != "edge" && t != "depth" && t != "normal" && t != "saliency")
      throw ConfigError("gen_scene: unsupported task name: " + t);

  SplitMix64 rng(seed);
  const int n_shapes =
      opts.max_shapes == 0 ? 0 : static_cast<int>(rng.uniform_int(opts.min_shapes, opts.max_shapes));

  // distinct class per shape, drawn by partial shuffle
  std::vector<int> class_pool;
  for (int c = 1; c < opts.num_classes; ++c) class_pool.push_back(c);
  for (size_t i = 0; i + 1 < class_pool.size(); ++i) {
    const size_t j = i + static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(class_pool.size() - 1 - i)));
    std::swap(class_pool[i], class_pool[j]);
  }

  const double min_side = static_cast<double>(std::min(h, w));
  std::vector<ShapeSpec> shapes;
  for (int i = 0; i < n_shapes; ++i) {
    ShapeSpec s;
    s.is_circle = rng.bernoulli(0.5);
    s.cx = rng.uniform(0.15 * w, 0.85 * w);
    s.cy = rng.uniform(0.15 * h, 0.85 * h);
    s.rx = rng.uniform(min_side / 6.0, min_side / 3.0);
    s.ry = s.is_circle ? s.rx : rng.uniform(min_side / 6.0, min_side / 3.0);
    s.class_id = class_pool[static_cast<size_t>(i)];
    // later shapes are painted on top, hence strictly nearer; depths stay
    // O(1) so the depth regression loss is comparable to the other tasks
    s.depth = 0.4 - 0.06 * i;
    double nx = rng.uniform(-0.55, 0.55);
    double ny = rng.uniform(-0.55, 0.55);
    double nz = rng.uniform(0.7, 1.0);
    const double norm = std::sqrt(nx * nx + ny * ny + nz * nz);
    s.normal[0] = nx / norm;
    s.normal[1] = ny / norm;
    s.normal[2] = nz / norm;
    shapes.push_back(s);
  }

  const size_t hh = static_cast<size_t>(h), ww = static_cast<size_t>(w);
  Tensor semseg = Tensor::zeros({hh, ww});
  Tensor depth = Tensor::full({hh, ww}, kBackgroundDepth);
  Tensor normal = Tensor::zeros({hh, ww, 3});
  Tensor saliency = Tensor::zeros({hh, ww});
  std::vector<int> owner(hh * ww, -1);

  for (size_t i = 0; i < hh * ww; ++i) normal.data()[i * 3 + 2] = 1.0;  // background faces up

  for (size_t y = 0; y < hh; ++y)
    for (size_t x = 0; x < ww; ++x) {
      const size_t i = y * ww + x;
      for (int si = 0; si < n_shapes; ++si) {
        const ShapeSpec& s = shapes[static_cast<size_t>(si)];
        if (!covers(s, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) continue;
        owner[i] = si;
        semseg.data()[i] = s.class_id;
        depth.data()[i] = s.depth;
        for (int c = 0; c < 3; ++c) normal.data()[i * 3 + c] = s.normal[c];
      }
    }
  if (n_shapes > 0) {
    const int top = n_shapes - 1;  // last painted is fully visible and nearest
    for (size_t i = 0; i < hh * ww; ++i)
      if (owner[i] == top) saliency.data()[i] = 1.0;
  }

  // per-class jittered base color, then a mild normal-dependent shade and a
  // depth brightness cue; shading is kept gentle so class identity stays
  // readable in the image
  std::vector<std::array<double, 3>> color(static_cast<size_t>(opts.num_classes));
  for (int c = 0; c < opts.num_classes; ++c)
    for (int ch = 0; ch < 3; ++ch)
      color[static_cast<size_t>(c)][static_cast<size_t>(ch)] =
          std::clamp(kPalette[static_cast<size_t>(c) % kPaletteSize][ch] + rng.uniform(-0.02, 0.02),
                     0.05, 0.98);

  Tensor image = Tensor::zeros({hh, ww, 3});
  for (size_t i = 0; i < hh * ww; ++i) {
    const double* n = normal.data() + i * 3;
    const double lambert =
        std::clamp(n[0] * kLight[0] + n[1] * kLight[1] + n[2] * kLight[2], 0.0, 1.0);
    const double shade = (0.88 + 0.12 * lambert) * (1.03 - 0.16 * depth.data()[i]);
    const auto& base = color[static_cast<size_t>(std::llround(semseg.data()[i]))];
    for (int ch = 0; ch < 3; ++ch) {
      const double noise = rng.uniform(-0.02, 0.02);
      image.data()[i * 3 + static_cast<size_t>(ch)] =
          std::clamp(base[static_cast<size_t>(ch)] * shade + noise, 0.0, 1.0);
    }
  }

  Scene scene;
  scene.image = image;
  for (const std::string& t : tasks) {
    if (t == "semseg") scene.labels[t] = semseg;
    else if (t == "edge") scene.labels[t] = boundary_from_semseg(semseg);
    else if (t == "depth") scene.labels[t] = depth;
    else if (t == "normal") scene.labels[t] = normal;
    else if (t == "saliency") scene.labels[t] = saliency;
  }
  return scene;
}

namespace {

double sample_bilinear_clamped(const Tensor& img, double sy, double sx, size_t c) {
  const size_t h = img.shape()[0], w = img.shape()[1], ch = img.shape()[2];
  sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
  sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
  const size_t y0 = static_cast<size_t>(std::floor(sy));
  const size_t x0 = static_cast<size_t>(std::floor(sx));
  const size_t y1 = std::min(y0 + 1, h - 1);
  const size_t x1 = std::min(x0 + 1, w - 1);
  const double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
  auto at = [&](size_t y, size_t x) { return img.data()[(y * w + x) * ch + c]; };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
         fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
}

size_t nearest_index(double s, size_t limit) {
  const long i = std::lround(std::clamp(s, 0.0, static_cast<double>(limit - 1)));
  return static_cast<size_t>(std::clamp<long>(i, 0, static_cast<long>(limit - 1)));
}

Tensor flip_x(const Tensor& t) {
  Tensor out = Tensor::zeros(t.shape());
  const size_t h = t.shape()[0], w = t.shape()[1];
  const size_t ch = t.rank() == 3 ? t.shape()[2] : 1;
  for (size_t y = 0; y < h; ++y)
    for (size_t x = 0; x < w; ++x)
      for (size_t c = 0; c < ch; ++c)
        out.data()[(y * w + x) * ch + c] = t.data()[(y * w + (w - 1 - x)) * ch + c];
  return out;
}

}  // namespace

Scene augment(const Scene& scene, uint64_t seed) {
  SplitMix64 rng(seed);
  const size_t h = scene.image.shape()[0], w = scene.image.shape()[1];

  const double s = rng.uniform(0.75, 1.25);
  const double win_h = static_cast<double>(h) / s, win_w = static_cast<double>(w) / s;
  // window larger than the source (s < 1) is centered and sampled with
  // border clamping; smaller windows are placed uniformly at random
  const double oy = win_h <= static_cast<double>(h)
                        ? rng.uniform(0.0, static_cast<double>(h) - win_h)
                        : (static_cast<double>(h) - win_h) / 2.0;
  const double ox = win_w <= static_cast<double>(w)
                        ? rng.uniform(0.0, static_cast<double>(w) - win_w)
                        : (static_cast<double>(w) - win_w) / 2.0;
  const bool flip = rng.bernoulli(0.5);
  const double brightness = rng.uniform(-0.1, 0.1);
  const double contrast = rng.uniform(0.9, 1.1);

  auto src_y = [&](size_t y) { return oy + (static_cast<double>(y) + 0.5) / s - 0.5; };
  auto src_x = [&](size_t x) { return ox + (static_cast<double>(x) + 0.5) / s - 0.5; };

  Scene out;
  out.image = Tensor::zeros(scene.image.shape());
  for (size_t y = 0; y < h; ++y)
    for (size_t x = 0; x < w; ++x)
      for (size_t c = 0; c < 3; ++c)
        out.image.data()[(y * w + x) * 3 + c] =
            sample_bilinear_clamped(scene.image, src_y(y), src_x(x), c);

  for (const auto& [task, label] : scene.labels) {
    const size_t ch = label.rank() == 3 ? label.shape()[2] : 1;
    Tensor moved = Tensor::zeros(label.shape());
    for (size_t y = 0; y < h; ++y) {
      const size_t sy = nearest_index(src_y(y), h);
      for (size_t x = 0; x < w; ++x) {
        const size_t sx = nearest_index(src_x(x), w);
        for (size_t c = 0; c < ch; ++c)
          moved.data()[(y * w + x) * ch + c] = label.data()[(sy * w + sx) * ch + c];
      }
    }
    out.labels[task] = moved;
  }

  if (flip) {
    out.image = flip_x(out.image);
    for (auto& [task, label] : out.labels) {
      label = flip_x(label);
      if (task == "normal")
        for (size_t i = 0; i < h * w; ++i) label.data()[i * 3] = -label.data()[i * 3];
    }
  }

  // geometric resampling can thicken boundary pixels, so the edge label is
  // re-derived from the transformed class map when both are present
  if (out.labels.count("edge") && out.labels.count("semseg"))
    out.labels["edge"] = boundary_from_semseg(out.labels.at("semseg"));

  for (size_t i = 0; i < out.image.size(); ++i)
    out.image.data()[i] =
        std::clamp((out.image.data()[i] - 0.5) * contrast + 0.5 + brightness, 0.0, 1.0);

  return out;
}

Dataset make_dataset(uint64_t base_seed, int n, int h, int w,
                     const std::vector<std::string>& tasks, const GenOptions& opts) {
  if (n < 1) throw ConfigError("make_dataset: need at least one scene");
  Dataset ds;
  ds.height = h;
  ds.width = w;
  ds.tasks = tasks;
  ds.opts = opts;
  for (int i = 0; i < n; ++i) {
    const uint64_t seed = base_seed + static_cast<uint64_t>(i);
    ds.seeds.push_back(seed);
    ds.scenes.push_back(gen_scene(seed, h, w, tasks, opts));
  }
  return ds;
}

void save_dataset(const std::string& dir, const Dataset& ds) {
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) throw DataError("cannot write manifest in " + dir);
  manifest << "pgt-dataset v1\n";
  manifest << "count = " << ds.scenes.size() << "\n";
  manifest << "height = " << ds.height << "\n";
  manifest << "width = " << ds.width << "\n";
  manifest << "tasks =";
  for (size_t i = 0; i < ds.tasks.size(); ++i) manifest << (i ? "," : " ") << ds.tasks[i];
  manifest << "\n";
  manifest << "classes = " << ds.opts.num_classes << "\n";
  manifest << "min_shapes = " << ds.opts.min_shapes << "\n";
  manifest << "max_shapes = " << ds.opts.max_shapes << "\n";
  for (size_t i = 0; i < ds.seeds.size(); ++i)
    manifest << "seed." << i << " = " << ds.seeds[i] << "\n";

  for (size_t i = 0; i < ds.scenes.size(); ++i) {
    const Scene& sc = ds.scenes[i];
    write_pgtt_file((fs::path(dir) / (std::to_string(i) + ".image.pgtt")).string(), sc.image);
    for (const auto& [task, label] : sc.labels)
      write_pgtt_file((fs::path(dir) / (std::to_string(i) + "." + task + ".pgtt")).string(),
                      label);
  }
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) throw DataError("no dataset manifest in " + dir);
  std::string line;
  std::getline(manifest, line);
  if (line != "pgt-dataset v1") throw LoadError("unrecognized dataset manifest header: " + line);

  Dataset ds;
  size_t count = 0;
  std::map<size_t, uint64_t> seeds;
  while (std::getline(manifest, line)) {
    const size_t eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    if (key == "count") count = std::stoul(value);
    else if (key == "height") ds.height = std::stoi(value);
    else if (key == "width") ds.width = std::stoi(value);
    else if (key == "classes") ds.opts.num_classes = std::stoi(value);
    else if (key == "min_shapes") ds.opts.min_shapes = std::stoi(value);
    else if (key == "max_shapes") ds.opts.max_shapes = std::stoi(value);
    else if (key == "tasks") {
      std::istringstream ts(value);
      std::string t;
      while (std::getline(ts, t, ',')) ds.tasks.push_back(t);
    } else if (key.rfind("seed.", 0) == 0) {
      seeds[std::stoul(key.substr(5))] = std::stoull(value);
    }
  }
  for (size_t i = 0; i < count; ++i) {
    auto it = seeds.find(i);
    ds.seeds.push_back(it == seeds.end() ? 0 : it->second);
    Scene sc;
    sc.image = read_pgtt_file((fs::path(dir) / (std::to_string(i) + ".image.pgtt")).string());
    for (const std::string& task : ds.tasks)
      sc.labels[task] =
          read_pgtt_file((fs::path(dir) / (std::to_string(i) + "." + task + ".pgtt")).string());
    ds.scenes.push_back(std::move(sc));
  }
  return ds;
}

}  // namespace pgt::synth
