#include "pgt/run_config.hpp"

#include <fstream>
#include <sstream>

#include "pgt/errors.hpp"

namespace pgt::cli {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  const auto b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + value + "'");
}

std::array<int, 4> parse_ints4(const std::string& key, const std::string& value) {
  std::array<int, 4> out{};
  std::istringstream is(value);
  std::string item;
  int i = 0;
  while (std::getline(is, item, ',')) {
    if (i >= 4) throw ConfigError("key '" + key + "': expected 4 integers");
    out[i++] = std::stoi(trim(item));
  }
  if (i != 4) throw ConfigError("key '" + key + "': expected 4 integers");
  return out;
}

std::vector<std::string> parse_list(const std::string& value) {
  std::vector<std::string> out;
  std::istringstream is(value);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

std::string join(const std::array<int, 4>& a) {
  std::ostringstream os;
  for (int i = 0; i < 4; ++i) os << (i ? "," : "") << a[i];
  return os.str();
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  try {
    if (key == "image_h") image_h = std::stoi(value);
    else if (key == "image_w") image_w = std::stoi(value);
    else if (key == "base_dim") base_dim = std::stoi(value);
    else if (key == "stage_depths") stage_depths = parse_ints4(key, value);
    else if (key == "stage_heads") stage_heads = parse_ints4(key, value);
    else if (key == "prompt_len") prompt_len = std::stoi(value);
    else if (key == "decoder_depth") decoder_depth = std::stoi(value);
    else if (key == "mlp_ratio") mlp_ratio = std::stoi(value);
    else if (key == "pct_in_encoder") pct_in_encoder = parse_bool(key, value);
    else if (key == "pct_in_decoder") pct_in_decoder = parse_bool(key, value);
    else if (key == "tasks") tasks = parse_list(value);
    else if (key == "semseg_classes") semseg_classes = std::stoi(value);
    else if (key == "epochs") epochs = std::stoi(value);
    else if (key == "batch_size") batch_size = std::stoi(value);
    else if (key == "lr") lr = std::stod(value);
    else if (key == "weight_decay") weight_decay = std::stod(value);
    else if (key == "warmup_epochs") warmup_epochs = std::stoi(value);
    else if (key == "task_sampling") task_sampling = value;
    else if (key == "augment") augment = parse_bool(key, value);
    else if (key == "seed") seed = std::stoull(value);
    else if (key == "data_dir") data_dir = value;
    else if (key == "val_dir") val_dir = value;
    else if (key == "count") count = std::stoi(value);
    else if (key == "val_count") val_count = std::stoi(value);
    else if (key == "min_shapes") min_shapes = std::stoi(value);
    else if (key == "max_shapes") max_shapes = std::stoi(value);
    else if (key == "out") out = value;
    else if (key == "checkpoint") checkpoint = value;
    else if (key == "metrics_file") metrics_file = value;
    else if (key == "baseline") baseline = value;
    else if (key == "analyze_which") analyze_which = value;
    else if (key == "analyze_selector") analyze_selector = value;
    else if (key == "scene_index") scene_index = std::stoi(value);
    else if (key == "growth_min") growth_min = std::stoi(value);
    else if (key == "growth_max") growth_max = std::stoi(value);
    else if (key == "force") force = parse_bool(key, value);
    else throw ConfigError("unknown config key: " + key);
  } catch (const std::invalid_argument&) {
    throw ConfigError("key '" + key + "': cannot parse value '" + value + "'");
  } catch (const std::out_of_range&) {
    throw ConfigError("key '" + key + "': value out of range: '" + value + "'");
  }
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line.substr(0, line.find('#')));
    if (stripped.empty()) continue;
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    cfg.set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
  return cfg;
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "image_h = " << image_h << "\n";
  os << "image_w = " << image_w << "\n";
  os << "base_dim = " << base_dim << "\n";
  os << "stage_depths = " << join(stage_depths) << "\n";
  os << "stage_heads = " << join(stage_heads) << "\n";
  os << "prompt_len = " << prompt_len << "\n";
  os << "decoder_depth = " << decoder_depth << "\n";
  os << "mlp_ratio = " << mlp_ratio << "\n";
  os << "pct_in_encoder = " << (pct_in_encoder ? "true" : "false") << "\n";
  os << "pct_in_decoder = " << (pct_in_decoder ? "true" : "false") << "\n";
  os << "tasks = " << join(tasks) << "\n";
  os << "semseg_classes = " << semseg_classes << "\n";
  os << "epochs = " << epochs << "\n";
  os << "batch_size = " << batch_size << "\n";
  os << "lr = " << lr << "\n";
  os << "weight_decay = " << weight_decay << "\n";
  os << "warmup_epochs = " << warmup_epochs << "\n";
  os << "task_sampling = " << task_sampling << "\n";
  os << "augment = " << (augment ? "true" : "false") << "\n";
  os << "seed = " << seed << "\n";
  os << "data_dir = " << data_dir << "\n";
  os << "val_dir = " << val_dir << "\n";
  os << "count = " << count << "\n";
  os << "val_count = " << val_count << "\n";
  os << "min_shapes = " << min_shapes << "\n";
  os << "max_shapes = " << max_shapes << "\n";
  os << "out = " << out << "\n";
  os << "checkpoint = " << checkpoint << "\n";
  os << "metrics_file = " << metrics_file << "\n";
  os << "baseline = " << baseline << "\n";
  os << "analyze_which = " << analyze_which << "\n";
  os << "analyze_selector = " << analyze_selector << "\n";
  os << "scene_index = " << scene_index << "\n";
  os << "growth_min = " << growth_min << "\n";
  os << "growth_max = " << growth_max << "\n";
  os << "force = " << (force ? "true" : "false") << "\n";
  return os.str();
}

ModelConfig RunConfig::model_config() const {
  ModelConfig cfg;
  cfg.image_h = image_h;
  cfg.image_w = image_w;
  cfg.base_dim = base_dim;
  cfg.stage_depths = stage_depths;
  cfg.stage_heads = stage_heads;
  cfg.prompt_len = prompt_len;
  cfg.decoder_depth = decoder_depth;
  cfg.mlp_ratio = mlp_ratio;
  cfg.pct_in_encoder = pct_in_encoder;
  cfg.pct_in_decoder = pct_in_decoder;
  for (const std::string& name : tasks) cfg.tasks.push_back(task_preset(name, semseg_classes));
  cfg.validate();
  return cfg;
}

train::TrainConfig RunConfig::train_config() const {
  train::TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch_size;
  cfg.lr = lr;
  cfg.weight_decay = weight_decay;
  cfg.warmup_epochs = warmup_epochs;
  cfg.seed = seed;
  cfg.task_sampling = train::task_sampling_from_string(task_sampling);
  cfg.augment = augment;
  cfg.validate();
  return cfg;
}

synth::GenOptions RunConfig::gen_options() const {
  synth::GenOptions opts;
  opts.num_classes = semseg_classes;
  opts.min_shapes = min_shapes;
  opts.max_shapes = max_shapes;
  return opts;
}

}  // namespace pgt::cli
