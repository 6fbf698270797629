#pragma once

#include <string>
#include <vector>

#include "pgt/model.hpp"
#include "pgt/tensor.hpp"

namespace pgt::analysis {

struct SimilarityMatrix {
  std::vector<std::string> tasks;
  std::vector<double> values;  // row-major N x N, cosines in [-1, 1]

  double at(size_t i, size_t j) const { return values[i * tasks.size() + j]; }
  std::string to_csv() const;
};

enum class SimilarityReduction {
  kFlatten,        // cosine of the whole N_p x d matrices as vectors
  kMeanPerToken,   // mean over per-token cosines
};

// pairwise prompt similarity across tasks at one block (ids like enc.s1.b0,
// dec.b2); zero-vector prompts are an error
SimilarityMatrix prompt_similarity(const PromptBank& bank, const std::vector<std::string>& tasks,
                                   const std::string& block_id,
                                   SimilarityReduction reduction = SimilarityReduction::kFlatten);

// per-pixel mean absolute activation, min-max normalized to [0,1]; constant
// maps normalize to all zeros
Tensor feature_heatmap(const Tensor& feature_map);

// portable graymap (P2) with 256 gray levels, for [0,1]-valued maps
std::string to_pgm(const Tensor& heatmap);

}  // namespace pgt::analysis
