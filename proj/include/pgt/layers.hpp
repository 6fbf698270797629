#pragma once

#include <string>
#include <utility>

#include "pgt/param_store.hpp"
#include "pgt/tensor.hpp"

namespace pgt {

struct LinearLayer {
  Tensor weight;  // d_in x d_out
  Tensor bias;    // d_out

  static LinearLayer create(ParamStore& store, const std::string& prefix, size_t d_in,
                            size_t d_out);
  Tensor forward(const Tensor& x, Tape* tape = nullptr) const;  // x: L x d_in
  size_t param_count() const { return weight.size() + bias.size(); }
};

struct LayerNormLayer {
  Tensor gamma, beta;
  double eps = 1e-5;

  static LayerNormLayer create(ParamStore& store, const std::string& prefix, size_t d);
  Tensor forward(const Tensor& x, Tape* tape = nullptr) const;
  size_t param_count() const { return gamma.size() + beta.size(); }
};

struct MlpLayer {
  LinearLayer fc1, fc2;  // d -> ratio*d -> d, gelu between

  static MlpLayer create(ParamStore& store, const std::string& prefix, size_t d, int ratio);
  Tensor forward(const Tensor& x, Tape* tape = nullptr) const;
  size_t param_count() const { return fc1.param_count() + fc2.param_count(); }
};

/// Multi-head self-attention over a token sequence, optionally prepending
/// prompt tokens. Prompts join the sequence for attention only; the output is
/// split back so callers can drop the prompt rows. An undefined or zero-row
/// prompt tensor behaves exactly like no prompt at all.
struct MsaLayer {
  int heads = 1;
  LinearLayer qkv;   // d -> 3d
  LinearLayer proj;  // d -> d

  static MsaLayer create(ParamStore& store, const std::string& prefix, size_t d, int heads);
  // returns (tokens_out, prompts_out); prompts_out is undefined when no prompt was given
  std::pair<Tensor, Tensor> forward(const Tensor& tokens, const Tensor& prompts,
                                    Tape* tape = nullptr) const;
  size_t param_count() const { return qkv.param_count() + proj.param_count(); }
};

/// Non-overlapping 4x4 patches of an H x W x 3 image, flattened in (y, x,
/// channel) order and projected to dimension C. Token order is row-major over
/// the patch grid.
struct PatchEmbedLayer {
  static constexpr int kPatch = 4;
  LinearLayer proj;  // 48 -> C

  static PatchEmbedLayer create(ParamStore& store, const std::string& prefix, size_t dim);
  Tensor forward(const Tensor& image, Tape* tape = nullptr) const;
  size_t param_count() const { return proj.param_count(); }
};

/// Concatenates each 2x2 token neighborhood (top-left, top-right,
/// bottom-left, bottom-right) into 4d and projects to 2d; quarters the token
/// count.
struct PatchMergeLayer {
  LinearLayer reduce;  // 4d -> 2d

  static PatchMergeLayer create(ParamStore& store, const std::string& prefix, size_t d);
  Tensor forward(const Tensor& tokens, size_t h, size_t w, Tape* tape = nullptr) const;
  size_t param_count() const { return reduce.param_count(); }
};

struct ConvLayer {
  Tensor kernel;  // k x k x c_in x c_out
  Tensor bias;    // c_out

  static ConvLayer create(ParamStore& store, const std::string& prefix, size_t k, size_t c_in,
                          size_t c_out);
  Tensor forward(const Tensor& map, Tape* tape = nullptr) const;
  size_t param_count() const { return kernel.size() + bias.size(); }
};

}  // namespace pgt
