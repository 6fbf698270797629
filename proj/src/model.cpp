#include "pgt/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pgt/errors.hpp"
#include "pgt/ops.hpp"
#include "pgt/rng.hpp"

namespace pgt {

using namespace ops;

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::kCrossEntropy: return "cross_entropy";
    case LossKind::kBinaryCrossEntropy: return "binary_cross_entropy";
    case LossKind::kL1: return "l1";
    case LossKind::kL2: return "l2";
  }
  return "?";
}

std::string to_string(MetricKind k) {
  switch (k) {
    case MetricKind::kMiou: return "miou";
    case MetricKind::kRmse: return "rmse";
    case MetricKind::kMeanAngle: return "mean_angle";
    case MetricKind::kOdsF: return "odsF";
  }
  return "?";
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "cross_entropy") return LossKind::kCrossEntropy;
  if (s == "binary_cross_entropy") return LossKind::kBinaryCrossEntropy;
  if (s == "l1") return LossKind::kL1;
  if (s == "l2") return LossKind::kL2;
  throw ConfigError("unknown loss kind: " + s);
}

MetricKind metric_kind_from_string(const std::string& s) {
  if (s == "miou") return MetricKind::kMiou;
  if (s == "rmse") return MetricKind::kRmse;
  if (s == "mean_angle") return MetricKind::kMeanAngle;
  if (s == "odsF") return MetricKind::kOdsF;
  throw ConfigError("unknown metric kind: " + s);
}

TaskSpec task_preset(const std::string& name, int semseg_classes) {
  if (name == "semseg")
    return {name, semseg_classes, LossKind::kCrossEntropy, MetricKind::kMiou, false};
  if (name == "edge")
    return {name, 1, LossKind::kBinaryCrossEntropy, MetricKind::kOdsF, false};
  if (name == "depth") return {name, 1, LossKind::kL2, MetricKind::kRmse, true};
  if (name == "normal") return {name, 3, LossKind::kL1, MetricKind::kMeanAngle, true};
  if (name == "saliency")
    return {name, 1, LossKind::kBinaryCrossEntropy, MetricKind::kMiou, false};
  throw ConfigError("unknown task preset: " + name);
}

const TaskSpec& ModelConfig::task(const std::string& name) const {
  for (const TaskSpec& t : tasks)
    if (t.name == name) return t;
  throw ConfigError("task not registered in model config: " + name);
}

bool ModelConfig::has_task(const std::string& name) const {
  return std::any_of(tasks.begin(), tasks.end(),
                     [&](const TaskSpec& t) { return t.name == name; });
}

void ModelConfig::validate() const {
  if (image_h % 32 != 0 || image_w % 32 != 0)
    throw ConfigError("image dims must be divisible by 32, got " + std::to_string(image_h) + "x" +
                      std::to_string(image_w));
  if (base_dim < 4) throw ConfigError("base_dim must be at least 4");
  for (int s = 0; s < 4; ++s) {
    if (stage_depths[s] < 0) throw ConfigError("stage depths must be non-negative");
    if (stage_heads[s] <= 0 || stage_dim(s) % stage_heads[s] != 0)
      throw ConfigError("stage " + std::to_string(s + 1) + " dim " +
                        std::to_string(stage_dim(s)) + " not divisible by " +
                        std::to_string(stage_heads[s]) + " heads");
  }
  if (prompt_len < 0) throw ConfigError("prompt_len must be non-negative");
  if (decoder_depth < 0) throw ConfigError("decoder_depth must be non-negative");
  if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be positive");
  std::vector<std::string> seen;
  for (const TaskSpec& t : tasks) {
    if (t.out_channels < 1) throw ConfigError("task " + t.name + ": out_channels must be >= 1");
    if (std::find(seen.begin(), seen.end(), t.name) != seen.end())
      throw ConfigError("duplicate task name: " + t.name);
    seen.push_back(t.name);
  }
}

namespace {

std::string join_ints(const std::array<int, 4>& a) {
  std::ostringstream os;
  for (int i = 0; i < 4; ++i) os << (i ? "," : "") << a[i];
  return os.str();
}

std::array<int, 4> split_ints4(const std::string& s) {
  std::array<int, 4> out{};
  std::istringstream is(s);
  std::string item;
  int i = 0;
  while (std::getline(is, item, ',')) {
    if (i >= 4) throw ConfigError("expected 4 comma-separated integers, got: " + s);
    out[i++] = std::stoi(item);
  }
  if (i != 4) throw ConfigError("expected 4 comma-separated integers, got: " + s);
  return out;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> ModelConfig::to_kv() const {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("image_h", std::to_string(image_h));
  kv.emplace_back("image_w", std::to_string(image_w));
  kv.emplace_back("base_dim", std::to_string(base_dim));
  kv.emplace_back("stage_depths", join_ints(stage_depths));
  kv.emplace_back("stage_heads", join_ints(stage_heads));
  kv.emplace_back("prompt_len", std::to_string(prompt_len));
  kv.emplace_back("decoder_depth", std::to_string(decoder_depth));
  kv.emplace_back("mlp_ratio", std::to_string(mlp_ratio));
  kv.emplace_back("pct_in_encoder", pct_in_encoder ? "true" : "false");
  kv.emplace_back("pct_in_decoder", pct_in_decoder ? "true" : "false");
  std::ostringstream ts;
  for (size_t i = 0; i < tasks.size(); ++i) {
    const TaskSpec& t = tasks[i];
    ts << (i ? "," : "") << t.name << ":" << t.out_channels << ":" << to_string(t.loss) << ":"
       << to_string(t.metric) << ":" << (t.lower_is_better ? 1 : 0);
  }
  kv.emplace_back("tasks", ts.str());
  return kv;
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
  ModelConfig cfg;
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError(std::string("missing model config key: ") + key);
    return it->second;
  };
  cfg.image_h = std::stoi(get("image_h"));
  cfg.image_w = std::stoi(get("image_w"));
  cfg.base_dim = std::stoi(get("base_dim"));
  cfg.stage_depths = split_ints4(get("stage_depths"));
  cfg.stage_heads = split_ints4(get("stage_heads"));
  cfg.prompt_len = std::stoi(get("prompt_len"));
  cfg.decoder_depth = std::stoi(get("decoder_depth"));
  cfg.mlp_ratio = std::stoi(get("mlp_ratio"));
  cfg.pct_in_encoder = get("pct_in_encoder") == "true";
  cfg.pct_in_decoder = get("pct_in_decoder") == "true";
  std::istringstream ts(get("tasks"));
  std::string item;
  while (std::getline(ts, item, ',')) {
    std::array<std::string, 5> fields;
    std::istringstream fs(item);
    for (int i = 0; i < 5; ++i)
      if (!std::getline(fs, fields[i], ':'))
        throw ConfigError("bad task spec entry: " + item);
    TaskSpec t;
    t.name = fields[0];
    t.out_channels = std::stoi(fields[1]);
    t.loss = loss_kind_from_string(fields[2]);
    t.metric = metric_kind_from_string(fields[3]);
    t.lower_is_better = fields[4] == "1";
    cfg.tasks.push_back(std::move(t));
  }
  return cfg;
}

void PromptBank::put(const std::string& task, const std::string& block_id, Tensor t) {
  prompts_[{task, block_id}] = std::move(t);
  if (std::find(block_ids_.begin(), block_ids_.end(), block_id) == block_ids_.end())
    block_ids_.push_back(block_id);
}

const Tensor* PromptBank::find(const std::string& task, const std::string& block_id) const {
  auto it = prompts_.find({task, block_id});
  return it == prompts_.end() ? nullptr : &it->second;
}

const Tensor& PromptBank::at(const std::string& task, const std::string& block_id) const {
  const Tensor* t = find(task, block_id);
  if (!t) throw ConfigError("no prompt for task '" + task + "' at block '" + block_id + "'");
  return *t;
}

bool PromptBank::has_block(const std::string& block_id) const {
  return std::find(block_ids_.begin(), block_ids_.end(), block_id) != block_ids_.end();
}

PctBlock PctBlock::create(ParamStore& store, const std::string& prefix, size_t d, int heads,
                          int mlp_ratio) {
  PctBlock b;
  b.ln1 = LayerNormLayer::create(store, prefix + ".ln1", d);
  b.msa = MsaLayer::create(store, prefix + ".msa", d, heads);
  b.ln2 = LayerNormLayer::create(store, prefix + ".ln2", d);
  b.mlp = MlpLayer::create(store, prefix + ".mlp", d, mlp_ratio);
  return b;
}

Tensor PctBlock::forward(const Tensor& tokens, const Tensor& prompt, Tape* tape) const {
  // attention over Concat(prompt, LN(z)); prompt rows are dropped afterwards
  auto [attn_tokens, attn_prompts] = msa.forward(ln1.forward(tokens, tape), prompt, tape);
  (void)attn_prompts;
  Tensor mid = add(attn_tokens, tokens, tape);
  return add(mlp.forward(ln2.forward(mid, tape), tape), mid, tape);
}

size_t PctBlock::param_count() const {
  return ln1.param_count() + msa.param_count() + ln2.param_count() + mlp.param_count();
}

PredictionHead PredictionHead::create(ParamStore& store, const std::string& prefix, size_t dim,
                                      size_t out_channels) {
  // quarter-width trunk with a floor so tiny configs keep a usable head
  const size_t mid = std::max<size_t>(4, dim / 4);
  PredictionHead h;
  h.conv1 = ConvLayer::create(store, prefix + ".conv1", 3, dim, mid);
  h.conv2 = ConvLayer::create(store, prefix + ".conv2", 3, mid, mid);
  h.out = ConvLayer::create(store, prefix + ".out", 1, mid, out_channels);
  return h;
}

Tensor PredictionHead::forward(const Tensor& map, Tape* tape) const {
  Tensor x = gelu(conv1.forward(upsample_bilinear(map, 2, tape), tape), tape);
  x = gelu(conv2.forward(upsample_bilinear(x, 2, tape), tape), tape);
  return out.forward(x, tape);
}

size_t PredictionHead::param_count() const {
  return conv1.param_count() + conv2.param_count() + out.param_count();
}

PgtModel::PgtModel(ModelConfig config, uint64_t seed, bool initialize)
    : config_(std::move(config)) {
  config_.validate();
  const size_t dim = static_cast<size_t>(config_.base_dim);
  const size_t tokens1 =
      static_cast<size_t>(config_.image_h / 4) * static_cast<size_t>(config_.image_w / 4);

  patch_embed_ = PatchEmbedLayer::create(store_, "shared.encoder.patch_embed", dim);
  pos_embed_ = store_.add("shared.encoder.pos", Tensor::zeros({tokens1, dim}, true));

  for (int s = 0; s < 4; ++s) {
    const size_t d = static_cast<size_t>(config_.stage_dim(s));
    for (int b = 0; b < config_.stage_depths[s]; ++b) {
      std::string prefix = "shared.encoder.stage" + std::to_string(s + 1) + ".block" +
                           std::to_string(b);
      stages_[s].push_back(
          PctBlock::create(store_, prefix, d, config_.stage_heads[s], config_.mlp_ratio));
    }
    if (s < 3)
      merges_[s] = PatchMergeLayer::create(
          store_, "shared.encoder.merge" + std::to_string(s + 1), d);
  }

  for (int i = 0; i < 4; ++i) {
    const size_t d_in = static_cast<size_t>(config_.stage_dim(i));
    fusion_.proj[i] = LinearLayer::create(
        store_, "shared.decoder.fusion.proj" + std::to_string(i + 1), d_in, dim);
    fusion_.norm[i] = LayerNormLayer::create(
        store_, "shared.decoder.fusion.norm" + std::to_string(i + 1), dim);
  }
  fusion_.out = LinearLayer::create(store_, "shared.decoder.fusion.out", 4 * dim, dim);
  fusion_.out_norm = LayerNormLayer::create(store_, "shared.decoder.fusion.out_norm", dim);

  for (int b = 0; b < config_.decoder_depth; ++b) {
    decoder_.push_back(PctBlock::create(store_, "shared.decoder.block" + std::to_string(b), dim,
                                        config_.stage_heads[0], config_.mlp_ratio));
  }

  const size_t np = static_cast<size_t>(config_.prompt_len);
  for (const TaskSpec& t : config_.tasks) {
    if (np > 0) {
      if (config_.pct_in_encoder) {
        for (int s = 0; s < 4; ++s) {
          const size_t d = static_cast<size_t>(config_.stage_dim(s));
          for (int b = 0; b < config_.stage_depths[s]; ++b) {
            std::string block_id = "enc.s" + std::to_string(s + 1) + ".b" + std::to_string(b);
            Tensor p = store_.add("task." + t.name + ".prompt." + block_id,
                                  Tensor::zeros({np, d}, true));
            prompts_.put(t.name, block_id, p);
          }
        }
      }
      if (config_.pct_in_decoder) {
        for (int b = 0; b < config_.decoder_depth; ++b) {
          std::string block_id = "dec.b" + std::to_string(b);
          Tensor p = store_.add("task." + t.name + ".prompt." + block_id,
                                Tensor::zeros({np, dim}, true));
          prompts_.put(t.name, block_id, p);
        }
      }
    }
    heads_.emplace(t.name, PredictionHead::create(store_, "task." + t.name + ".head", dim,
                                                  static_cast<size_t>(t.out_channels)));
  }

  if (initialize) init_params(store_, seed);
}

const Tensor* PgtModel::prompt_for(const std::string& task, const std::string& block_id) const {
  if (config_.prompt_len == 0) return nullptr;
  return prompts_.find(task, block_id);
}

MultiScaleFeatures PgtModel::encoder_forward(const Tensor& image, const std::string& task,
                                             Tape* tape) const {
  const TaskSpec& spec = config_.task(task);  // throws for unknown tasks
  (void)spec;
  if (image.rank() != 3 || image.shape()[0] != static_cast<size_t>(config_.image_h) ||
      image.shape()[1] != static_cast<size_t>(config_.image_w) || image.shape()[2] != 3)
    throw ShapeError("encoder: image " + image.shape_str() + " does not match configured " +
                     std::to_string(config_.image_h) + "x" + std::to_string(config_.image_w) +
                     "x3");

  Tensor tokens = add(patch_embed_.forward(image, tape), pos_embed_, tape);
  size_t h = static_cast<size_t>(config_.image_h) / 4;
  size_t w = static_cast<size_t>(config_.image_w) / 4;

  MultiScaleFeatures feats;
  for (int s = 0; s < 4; ++s) {
    const size_t d = static_cast<size_t>(config_.stage_dim(s));
    for (size_t b = 0; b < stages_[s].size(); ++b) {
      const Tensor* prompt =
          config_.pct_in_encoder
              ? prompt_for(task, "enc.s" + std::to_string(s + 1) + ".b" + std::to_string(b))
              : nullptr;
      tokens = stages_[s][b].forward(tokens, prompt ? *prompt : Tensor(), tape);
    }
    Tensor map = ops::reshape(tokens, {h, w, d}, tape);
    (s == 0 ? feats.e1 : s == 1 ? feats.e2 : s == 2 ? feats.e3 : feats.e4) = map;
    if (s < 3) {
      tokens = merges_[s].forward(tokens, h, w, tape);
      h /= 2;
      w /= 2;
    }
  }
  return feats;
}

Tensor PgtModel::fuse_features(const MultiScaleFeatures& feats, Tape* tape) const {
  const size_t dim = static_cast<size_t>(config_.base_dim);
  const size_t h1 = static_cast<size_t>(config_.image_h) / 4;
  const size_t w1 = static_cast<size_t>(config_.image_w) / 4;

  std::array<const Tensor*, 4> maps{&feats.e1, &feats.e2, &feats.e3, &feats.e4};
  std::vector<Tensor> branches;
  for (int i = 0; i < 4; ++i) {
    const Tensor& e = *maps[i];
    const size_t h = e.shape()[0], w = e.shape()[1], d = e.shape()[2];
    Tensor proj = fusion_.norm[i].forward(
        fusion_.proj[i].forward(ops::reshape(e, {h * w, d}, tape), tape), tape);
    if (i == 0) {
      branches.push_back(proj);
    } else {
      Tensor up = ops::upsample_bilinear(ops::reshape(proj, {h, w, dim}, tape), 1 << i, tape);
      branches.push_back(ops::reshape(up, {h1 * w1, dim}, tape));
    }
  }
  Tensor fused = fusion_.out_norm.forward(
      fusion_.out.forward(ops::concat_cols(branches, tape), tape), tape);
  return ops::reshape(fused, {h1, w1, dim}, tape);
}

Tensor PgtModel::decoder_forward(const Tensor& fused, const std::string& task, Tape* tape) const {
  config_.task(task);
  const size_t h = fused.shape()[0], w = fused.shape()[1], d = fused.shape()[2];
  Tensor tokens = ops::reshape(fused, {h * w, d}, tape);
  for (size_t b = 0; b < decoder_.size(); ++b) {
    const Tensor* prompt =
        config_.pct_in_decoder ? prompt_for(task, "dec.b" + std::to_string(b)) : nullptr;
    tokens = decoder_[b].forward(tokens, prompt ? *prompt : Tensor(), tape);
  }
  return ops::reshape(tokens, {h, w, d}, tape);
}

Tensor PgtModel::head_forward(const Tensor& decoded, const std::string& task, Tape* tape) const {
  config_.task(task);
  return heads_.at(task).forward(decoded, tape);
}

Tensor PgtModel::forward(const Tensor& image, const std::string& task, Tape* tape) const {
  MultiScaleFeatures feats = encoder_forward(image, task, tape);
  Tensor fused = fuse_features(feats, tape);
  Tensor decoded = decoder_forward(fused, task, tape);
  return head_forward(decoded, task, tape);
}

void init_params(ParamStore& store, uint64_t seed) {
  for (const auto& [name, entry] : store.entries()) {
    Tensor t = entry;  // handle copy, same storage
    SplitMix64 rng = substream(seed, name);
    const bool is_prompt = name.find(".prompt.") != std::string::npos;
    const bool is_pos = name.size() >= 4 && name.rfind(".pos") == name.size() - 4;
    if (is_prompt || is_pos) {
      for (double& v : t.values()) v = rng.uniform(-0.02, 0.02);
    } else if (name.ends_with(".weight")) {
      double fan_in = 0, fan_out = 0;
      const auto& sh = t.shape();
      if (sh.size() == 2) {
        fan_in = static_cast<double>(sh[0]);
        fan_out = static_cast<double>(sh[1]);
      } else if (sh.size() == 4) {
        fan_in = static_cast<double>(sh[0] * sh[1] * sh[2]);
        fan_out = static_cast<double>(sh[0] * sh[1] * sh[3]);
      } else {
        fan_in = fan_out = static_cast<double>(t.size());
      }
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (double& v : t.values()) v = rng.uniform(-limit, limit);
    }
    // biases and LN beta stay zero, LN gamma stays one
  }
}

}  // namespace pgt
