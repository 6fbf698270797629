#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pgt/layers.hpp"
#include "pgt/param_store.hpp"
#include "pgt/tensor.hpp"

namespace pgt {

enum class LossKind { kCrossEntropy, kBinaryCrossEntropy, kL1, kL2 };
enum class MetricKind { kMiou, kRmse, kMeanAngle, kOdsF };

std::string to_string(LossKind k);
std::string to_string(MetricKind k);
LossKind loss_kind_from_string(const std::string& s);
MetricKind metric_kind_from_string(const std::string& s);

struct TaskSpec {
  std::string name;
  int out_channels = 1;
  LossKind loss = LossKind::kL2;
  MetricKind metric = MetricKind::kRmse;
  bool lower_is_better = false;
};

// Built-in task families understood by the synthetic data generator.
// semseg_classes sets the channel count of the segmentation head.
TaskSpec task_preset(const std::string& name, int semseg_classes);

struct ModelConfig {
  int image_h = 64;
  int image_w = 64;
  int base_dim = 96;
  std::array<int, 4> stage_depths{2, 2, 6, 2};
  std::array<int, 4> stage_heads{3, 6, 12, 24};
  int prompt_len = 10;
  int decoder_depth = 4;
  int mlp_ratio = 4;
  bool pct_in_encoder = true;
  bool pct_in_decoder = true;
  std::vector<TaskSpec> tasks;

  int stage_dim(int stage) const { return base_dim << stage; }  // stage in [0,4)
  const TaskSpec& task(const std::string& name) const;          // ConfigError when unknown
  bool has_task(const std::string& name) const;
  void validate() const;

  std::vector<std::pair<std::string, std::string>> to_kv() const;
  static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
};

struct MultiScaleFeatures {
  Tensor e1;  // H/4  x W/4  x C
  Tensor e2;  // H/8  x W/8  x 2C
  Tensor e3;  // H/16 x W/16 x 4C
  Tensor e4;  // H/32 x W/32 x 8C
};

/// Per-(task, block) learnable prompt matrices of shape N_p x d_block.
/// Block ids: enc.s<stage>.b<idx> and dec.b<idx>.
class PromptBank {
 public:
  void put(const std::string& task, const std::string& block_id, Tensor t);
  const Tensor* find(const std::string& task, const std::string& block_id) const;
  const Tensor& at(const std::string& task, const std::string& block_id) const;
  const std::vector<std::string>& block_ids() const { return block_ids_; }
  bool has_block(const std::string& block_id) const;

 private:
  std::map<std::pair<std::string, std::string>, Tensor> prompts_;
  std::vector<std::string> block_ids_;
};

/// One transformer block with optional prompt conditioning: the prompts join
/// the LayerNormed tokens for self-attention and are dropped before the MLP;
/// both sublayers carry residual connections. With no prompt this is a plain
/// pre-norm transformer block.
struct PctBlock {
  LayerNormLayer ln1, ln2;
  MsaLayer msa;
  MlpLayer mlp;

  static PctBlock create(ParamStore& store, const std::string& prefix, size_t d, int heads,
                         int mlp_ratio);
  Tensor forward(const Tensor& tokens, const Tensor& prompt, Tape* tape = nullptr) const;
  size_t param_count() const;
};

struct PredictionHead {
  ConvLayer conv1;  // 3x3, C -> C/4, after first x2 upsample
  ConvLayer conv2;  // 3x3, C/4 -> C/4, after second x2 upsample
  ConvLayer out;    // 1x1, C/4 -> C_t

  static PredictionHead create(ParamStore& store, const std::string& prefix, size_t dim,
                               size_t out_channels);
  Tensor forward(const Tensor& map, Tape* tape = nullptr) const;
  size_t param_count() const;
};

/// The full task-conditional model: hierarchical prompt-conditioned encoder,
/// lightweight fusion decoder and per-task prediction heads. Each forward
/// pass activates the shared parameters plus exactly one task's prompts and
/// head, so distinct tasks can never influence each other's outputs or
/// gradients.
class PgtModel {
 public:
  // initialize=false leaves all parameters at their structural defaults
  // (zeros / unit gamma), which is enough for parameter accounting.
  PgtModel(ModelConfig config, uint64_t seed, bool initialize = true);

  MultiScaleFeatures encoder_forward(const Tensor& image, const std::string& task,
                                     Tape* tape = nullptr) const;
  Tensor fuse_features(const MultiScaleFeatures& feats, Tape* tape = nullptr) const;
  Tensor decoder_forward(const Tensor& fused, const std::string& task,
                         Tape* tape = nullptr) const;
  Tensor head_forward(const Tensor& decoded, const std::string& task, Tape* tape = nullptr) const;
  Tensor forward(const Tensor& image, const std::string& task, Tape* tape = nullptr) const;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const PromptBank& prompt_bank() const { return prompts_; }

 private:
  struct Fusion {
    std::array<LinearLayer, 4> proj;      // stage dim -> C
    std::array<LayerNormLayer, 4> norm;   // over C
    LinearLayer out;                      // 4C -> C
    LayerNormLayer out_norm;              // over C
  };

  const PctBlock& decoder_block(size_t i) const { return decoder_[i]; }
  const Tensor* prompt_for(const std::string& task, const std::string& block_id) const;

  ModelConfig config_;
  ParamStore store_;
  PatchEmbedLayer patch_embed_;
  Tensor pos_embed_;  // (H/4 * W/4) x C, shared
  std::array<std::vector<PctBlock>, 4> stages_;
  std::array<PatchMergeLayer, 3> merges_;
  Fusion fusion_;
  std::vector<PctBlock> decoder_;
  std::map<std::string, PredictionHead> heads_;
  PromptBank prompts_;
};

// Deterministic initialization: every parameter draws from a SplitMix64
// substream keyed by (seed, parameter name). Weights are Xavier-uniform,
// biases/betas zero, gammas one, positional embeddings and prompts
// uniform(-0.02, 0.02).
void init_params(ParamStore& store, uint64_t seed);

}  // namespace pgt
