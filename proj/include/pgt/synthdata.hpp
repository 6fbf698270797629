#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pgt/tensor.hpp"

namespace pgt::synth {

/// One synthetic multi-task scene. The image holds values in [0,1]; labels
/// are derived jointly from the same shape layout so they stay mutually
/// consistent: the edge map is exactly the 4-connected boundary set of the
/// semseg map, depth is constant per object and strictly ordered by z-order,
/// and normals are unit-length per-object plane normals.
struct Scene {
  Tensor image;                           // H x W x 3
  std::map<std::string, Tensor> labels;   // task name -> label tensor
};

struct GenOptions {
  int num_classes = 6;   // semseg channels incl. background class 0
  int min_shapes = 2;    // shapes carry distinct classes, so max_shapes
  int max_shapes = 5;    // must stay below num_classes
};

// Fully determined by (seed, h, w, tasks, opts). Supported task names:
// semseg, edge, depth, normal, saliency.
Scene gen_scene(uint64_t seed, int h, int w, const std::vector<std::string>& tasks,
                const GenOptions& opts = {});

// Random scale in [0.75,1.25] with crop back to H x W, horizontal flip with
// p=0.5, brightness/contrast jitter on the image only. Geometric transforms
// use bilinear sampling for the image and nearest for labels; the edge label
// is re-derived from the transformed semseg map and flipped normals have
// their x component negated.
Scene augment(const Scene& scene, uint64_t seed);

// recomputes the 4-connected boundary set of a semseg map (test oracle and
// augmentation helper)
Tensor boundary_from_semseg(const Tensor& semseg);

struct Dataset {
  int height = 0, width = 0;
  std::vector<uint64_t> seeds;
  std::vector<std::string> tasks;
  GenOptions opts;
  std::vector<Scene> scenes;
};

// n scenes from consecutive seeds base_seed..base_seed+n-1
Dataset make_dataset(uint64_t base_seed, int n, int h, int w,
                     const std::vector<std::string>& tasks, const GenOptions& opts = {});

// On-disk layout: <dir>/manifest.txt plus <index>.<field>.pgtt per scene.
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

}  // namespace pgt::synth
