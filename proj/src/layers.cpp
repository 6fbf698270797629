#include "pgt/layers.hpp"

#include <cmath>
#include <sstream>

#include "pgt/errors.hpp"
#include "pgt/ops.hpp"

namespace pgt {

using namespace ops;

LinearLayer LinearLayer::create(ParamStore& store, const std::string& prefix, size_t d_in,
                                size_t d_out) {
  LinearLayer l;
  l.weight = store.add(prefix + ".weight", Tensor::zeros({d_in, d_out}, true));
  l.bias = store.add(prefix + ".bias", Tensor::zeros({d_out}, true));
  return l;
}

Tensor LinearLayer::forward(const Tensor& x, Tape* tape) const {
  return add_rowwise(matmul(x, weight, tape), bias, tape);
}

LayerNormLayer LayerNormLayer::create(ParamStore& store, const std::string& prefix, size_t d) {
  LayerNormLayer l;
  l.gamma = store.add(prefix + ".gamma", Tensor::full({d}, 1.0, true));
  l.beta = store.add(prefix + ".beta", Tensor::zeros({d}, true));
  return l;
}

Tensor LayerNormLayer::forward(const Tensor& x, Tape* tape) const {
  return layer_norm(x, gamma, beta, eps, tape);
}

MlpLayer MlpLayer::create(ParamStore& store, const std::string& prefix, size_t d, int ratio) {
  MlpLayer l;
  l.fc1 = LinearLayer::create(store, prefix + ".fc1", d, d * static_cast<size_t>(ratio));
  l.fc2 = LinearLayer::create(store, prefix + ".fc2", d * static_cast<size_t>(ratio), d);
  return l;
}

Tensor MlpLayer::forward(const Tensor& x, Tape* tape) const {
  return fc2.forward(gelu(fc1.forward(x, tape), tape), tape);
}

MsaLayer MsaLayer::create(ParamStore& store, const std::string& prefix, size_t d, int heads) {
  if (heads <= 0 || d % static_cast<size_t>(heads) != 0)
    throw ConfigError("msa: dim " + std::to_string(d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  MsaLayer l;
  l.heads = heads;
  l.qkv = LinearLayer::create(store, prefix + ".qkv", d, 3 * d);
  l.proj = LinearLayer::create(store, prefix + ".proj", d, d);
  return l;
}

std::pair<Tensor, Tensor> MsaLayer::forward(const Tensor& tokens, const Tensor& prompts,
                                            Tape* tape) const {
  const size_t d = tokens.shape()[1];
  const size_t n_prompt = (prompts.defined() && prompts.size() > 0) ? prompts.shape()[0] : 0;
  if (n_prompt > 0 && prompts.shape()[1] != d) {
    std::ostringstream os;
    os << "prompt conditioning: prompt dim " << prompts.shape()[1] << " does not match token dim "
       << d;
    throw ShapeError(os.str());
  }

  // Prompts are prepended for the attention computation and split off after.
  Tensor seq = concat_rows({prompts, tokens}, tape);
  const size_t s = seq.shape()[0];
  const size_t dh = d / static_cast<size_t>(heads);
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor qkv_out = qkv.forward(seq, tape);
  Tensor q = slice_cols(qkv_out, 0, d, tape);
  Tensor k = slice_cols(qkv_out, d, 2 * d, tape);
  Tensor v = slice_cols(qkv_out, 2 * d, 3 * d, tape);

  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const size_t c0 = static_cast<size_t>(h) * dh, c1 = c0 + dh;
    Tensor qh = slice_cols(q, c0, c1, tape);
    Tensor kh = slice_cols(k, c0, c1, tape);
    Tensor vh = slice_cols(v, c0, c1, tape);
    Tensor scores = scale(matmul(qh, transpose(kh, tape), tape), att_scale, tape);
    Tensor attn = softmax(scores, -1, tape);
    head_outs.push_back(matmul(attn, vh, tape));
  }
  Tensor merged = heads == 1 ? head_outs[0] : concat_cols(head_outs, tape);
  Tensor out = proj.forward(merged, tape);

  Tensor prompts_out;
  if (n_prompt > 0) prompts_out = slice_rows(out, 0, n_prompt, tape);
  Tensor tokens_out = slice_rows(out, n_prompt, s, tape);
  return {tokens_out, prompts_out};
}

PatchEmbedLayer PatchEmbedLayer::create(ParamStore& store, const std::string& prefix, size_t dim) {
  PatchEmbedLayer l;
  l.proj = LinearLayer::create(store, prefix + ".proj", kPatch * kPatch * 3, dim);
  return l;
}

Tensor PatchEmbedLayer::forward(const Tensor& image, Tape* tape) const {
  if (image.rank() != 3 || image.shape()[2] != 3)
    throw ShapeError("patch_embed: expected H x W x 3 image, got " + image.shape_str());
  const size_t h = image.shape()[0], w = image.shape()[1];
  if (h % kPatch != 0 || w % kPatch != 0)
    throw ShapeError("patch_embed: image " + image.shape_str() + " not divisible by patch size " +
                     std::to_string(kPatch));
  const size_t gh = h / kPatch, gw = w / kPatch;

  std::vector<size_t> idx;
  idx.reserve(gh * gw * kPatch * kPatch * 3);
  for (size_t py = 0; py < gh; ++py)
    for (size_t px = 0; px < gw; ++px)
      for (size_t dy = 0; dy < kPatch; ++dy)
        for (size_t dx = 0; dx < kPatch; ++dx)
          for (size_t c = 0; c < 3; ++c)
            idx.push_back(((py * kPatch + dy) * w + (px * kPatch + dx)) * 3 + c);

  Tensor patches = reshape(take(image, std::move(idx), tape),
                           {gh * gw, static_cast<size_t>(kPatch * kPatch * 3)}, tape);
  return proj.forward(patches, tape);
}

PatchMergeLayer PatchMergeLayer::create(ParamStore& store, const std::string& prefix, size_t d) {
  PatchMergeLayer l;
  l.reduce = LinearLayer::create(store, prefix + ".reduce", 4 * d, 2 * d);
  return l;
}

Tensor PatchMergeLayer::forward(const Tensor& tokens, size_t h, size_t w, Tape* tape) const {
  if (tokens.rank() != 2 || tokens.shape()[0] != h * w)
    throw ShapeError("patch_merge: token count does not match grid " + std::to_string(h) + "x" +
                     std::to_string(w));
  if (h % 2 != 0 || w % 2 != 0)
    throw ShapeError("patch_merge: grid " + std::to_string(h) + "x" + std::to_string(w) +
                     " must have even sides");
  const size_t d = tokens.shape()[1];

  std::vector<size_t> idx;
  idx.reserve(tokens.size());
  for (size_t y = 0; y < h; y += 2)
    for (size_t x = 0; x < w; x += 2)
      for (size_t corner = 0; corner < 4; ++corner) {
        const size_t sy = y + corner / 2, sx = x + corner % 2;
        for (size_t c = 0; c < d; ++c) idx.push_back((sy * w + sx) * d + c);
      }

  Tensor grouped = reshape(take(tokens, std::move(idx), tape), {(h / 2) * (w / 2), 4 * d}, tape);
  return reduce.forward(grouped, tape);
}

ConvLayer ConvLayer::create(ParamStore& store, const std::string& prefix, size_t k, size_t c_in,
                            size_t c_out) {
  ConvLayer l;
  l.kernel = store.add(prefix + ".weight", Tensor::zeros({k, k, c_in, c_out}, true));
  l.bias = store.add(prefix + ".bias", Tensor::zeros({c_out}, true));
  return l;
}

Tensor ConvLayer::forward(const Tensor& map, Tape* tape) const {
  return conv2d(map, kernel, bias, tape);
}

}  // namespace pgt
