#include "pgt/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "pgt/accounting.hpp"
#include "pgt/analysis.hpp"
#include "pgt/checkpoint.hpp"
#include "pgt/errors.hpp"
#include "pgt/metrics.hpp"

namespace pgt::cli {

namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spill(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write: " + path);
  out << text;
}

}  // namespace

void cmd_synth(const RunConfig& cfg, std::ostream& out) {
  if (cfg.out.empty()) throw ConfigError("synth: set `out` to the dataset directory");
  if (fs::exists(cfg.out) && !fs::is_empty(cfg.out) && !cfg.force)
    throw DataError("synth: directory '" + cfg.out + "' is not empty (pass --force to overwrite)");
  synth::Dataset ds = synth::make_dataset(cfg.seed, cfg.count, cfg.image_h, cfg.image_w, cfg.tasks,
                                          cfg.gen_options());
  synth::save_dataset(cfg.out, ds);
  out << "wrote " << ds.scenes.size() << " scenes to " << cfg.out << " (seeds " << cfg.seed << ".."
      << cfg.seed + static_cast<uint64_t>(cfg.count) - 1 << ")\n";
}

void cmd_train(const RunConfig& cfg, std::ostream& out) {
  if (cfg.data_dir.empty()) throw ConfigError("train: set `data_dir` to the training split");
  if (cfg.val_dir.empty()) throw ConfigError("train: set `val_dir` to the validation split");
  if (cfg.out.empty()) throw ConfigError("train: set `out` to the checkpoint path");
  if (!fs::exists(cfg.data_dir)) throw DataError("train: no dataset at " + cfg.data_dir);
  if (!fs::exists(cfg.val_dir)) throw DataError("train: no dataset at " + cfg.val_dir);

  synth::Dataset train_set = synth::load_dataset(cfg.data_dir);
  synth::Dataset val_set = synth::load_dataset(cfg.val_dir);
  ModelConfig model_cfg = cfg.model_config();
  if (train_set.height != model_cfg.image_h || train_set.width != model_cfg.image_w)
    throw ConfigError("train: dataset is " + std::to_string(train_set.height) + "x" +
                      std::to_string(train_set.width) + " but the model expects " +
                      std::to_string(model_cfg.image_h) + "x" + std::to_string(model_cfg.image_w));

  PgtModel model(model_cfg, cfg.seed);
  train::FitResult result = train::fit(train_set, val_set, model, cfg.train_config());
  save_checkpoint(cfg.out, model.config(), model.params());
  spill(cfg.out + ".log.csv", train::log_to_csv(result.log));

  out << "checkpoint = " << cfg.out << "\n";
  out << "log = " << cfg.out << ".log.csv\n";
  for (const auto& row : result.final_val.rows)
    out << "val." << row.task << "." << row.metric << " = " << row.value << "\n";
}

void cmd_eval(const RunConfig& cfg, std::ostream& out) {
  metrics::MetricsReport report;
  if (!cfg.metrics_file.empty()) {
    report = metrics::MetricsReport::from_kv_text(slurp(cfg.metrics_file));
  } else if (!cfg.checkpoint.empty()) {
    if (cfg.data_dir.empty()) throw ConfigError("eval: set `data_dir` to the evaluation split");
    if (!fs::exists(cfg.data_dir)) throw DataError("eval: no dataset at " + cfg.data_dir);
    Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
    PgtModel model(ckpt.config, 0, /*initialize=*/false);
    apply_checkpoint(ckpt, model);
    report = train::evaluate(synth::load_dataset(cfg.data_dir), model);
  } else {
    throw ConfigError("eval: set `checkpoint` (+ data_dir) or `metrics_file`");
  }

  if (!cfg.baseline.empty()) {
    metrics::MetricsReport base = metrics::MetricsReport::from_kv_text(slurp(cfg.baseline));
    for (auto& row : report.rows) {
      bool found = false;
      for (const auto& b : base.rows)
        if (b.task == row.task) {
          row.baseline = b.value;
          found = true;
        }
      if (!found) throw DataError("eval: baseline file lacks task '" + row.task + "'");
    }
    report.compute_delta_m();
  }

  out << report.to_kv_text();
  if (!cfg.out.empty()) {
    spill(cfg.out, report.to_kv_text());
    spill(cfg.out + ".csv", report.to_csv());
  }
}

void cmd_params(const RunConfig& cfg, std::ostream& out) {
  ModelConfig model_cfg = cfg.model_config();
  PgtModel model(model_cfg, cfg.seed, /*initialize=*/false);
  ParamReport report = partition(model.params());
  for (const auto& [k, v] : report.to_kv()) out << k << " = " << v << "\n";

  if (!report.per_task.empty()) {
    const size_t theta_t = report.per_task.begin()->second;
    const size_t c = report.shared + theta_t;
    out << "eq5.single_task_cost = " << c << "\n";
    out << "eq5.per_task_increment = " << theta_t << "\n";
    out << "eq5.predicted_total " << report.per_task.size() << " tasks = "
        << predict_total(c, theta_t, static_cast<int>(report.per_task.size())) << "\n";
  }

  if (!cfg.out.empty()) {
    std::ostringstream csv;
    csv << "family,n_tasks,total_params\n";
    for (ArchFamily family :
         {ArchFamily::kPgt, ArchFamily::kTaskConditionalLegacy, ArchFamily::kMultiDecoder}) {
      for (const GrowthPoint& p :
           growth_curves(family, model_cfg, cfg.growth_min, cfg.growth_max))
        csv << to_string(family) << "," << p.n_tasks << "," << p.total << "\n";
    }
    spill(cfg.out, csv.str());
    out << "growth_csv = " << cfg.out << "\n";
  }
}

void cmd_analyze(const RunConfig& cfg, std::ostream& out) {
  if (cfg.checkpoint.empty()) throw ConfigError("analyze: set `checkpoint`");
  if (cfg.out.empty()) throw ConfigError("analyze: set `out` to an output directory");
  Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
  PgtModel model(ckpt.config, 0, /*initialize=*/false);
  apply_checkpoint(ckpt, model);
  fs::create_directories(cfg.out);

  std::vector<std::string> task_names;
  for (const TaskSpec& t : model.config().tasks) task_names.push_back(t.name);

  if (cfg.analyze_which == "prompt-sim") {
    analysis::SimilarityMatrix flat = analysis::prompt_similarity(
        model.prompt_bank(), task_names, cfg.analyze_selector,
        analysis::SimilarityReduction::kFlatten);
    analysis::SimilarityMatrix per_token = analysis::prompt_similarity(
        model.prompt_bank(), task_names, cfg.analyze_selector,
        analysis::SimilarityReduction::kMeanPerToken);
    const std::string stem = (fs::path(cfg.out) / ("prompt_sim_" + cfg.analyze_selector)).string();
    spill(stem + ".csv", flat.to_csv());
    spill(stem + ".token_mean.csv", per_token.to_csv());
    out << flat.to_csv();
  } else if (cfg.analyze_which == "heatmap") {
    if (cfg.analyze_selector != "E1" && cfg.analyze_selector != "E2" &&
        cfg.analyze_selector != "E3" && cfg.analyze_selector != "E4")
      throw ConfigError("analyze: heatmap selector must be one of E1..E4, got '" +
                        cfg.analyze_selector + "'");
    if (cfg.data_dir.empty()) throw ConfigError("analyze: heatmap needs `data_dir`");
    synth::Dataset ds = synth::load_dataset(cfg.data_dir);
    if (cfg.scene_index < 0 || static_cast<size_t>(cfg.scene_index) >= ds.scenes.size())
      throw ConfigError("analyze: scene_index out of range");
    const Tensor& image = ds.scenes[static_cast<size_t>(cfg.scene_index)].image;
    for (const std::string& task : task_names) {
      MultiScaleFeatures feats = model.encoder_forward(image, task);
      const Tensor& stage = cfg.analyze_selector == "E1"   ? feats.e1
                            : cfg.analyze_selector == "E2" ? feats.e2
                            : cfg.analyze_selector == "E3" ? feats.e3
                                                           : feats.e4;
      Tensor heat = analysis::feature_heatmap(stage);
      const std::string stem =
          (fs::path(cfg.out) / ("heatmap_" + cfg.analyze_selector + "_" + task)).string();
      write_pgtt_file(stem + ".pgtt", heat);
      spill(stem + ".pgm", analysis::to_pgm(heat));
      out << "heatmap " << task << " -> " << stem << ".pgm\n";
    }
  } else {
    throw ConfigError("analyze: `analyze_which` must be prompt-sim or heatmap, got '" +
                      cfg.analyze_which + "'");
  }
}

void cmd_verify(const RunConfig& cfg, std::ostream& out) {
  if (cfg.data_dir.empty()) throw ConfigError("verify: set `data_dir`");
  if (!fs::exists(cfg.data_dir)) throw DataError("verify: no dataset at " + cfg.data_dir);
  synth::Dataset ds = synth::load_dataset(cfg.data_dir);

  size_t violations = 0;
  auto complain = [&](size_t scene, const std::string& what) {
    ++violations;
    out << "scene " << scene << ": " << what << "\n";
  };

  for (size_t i = 0; i < ds.scenes.size(); ++i) {
    const synth::Scene& sc = ds.scenes[i];
    for (size_t j = 0; j < sc.image.size(); ++j) {
      const double v = sc.image.data()[j];
      if (v < 0.0 || v > 1.0) {
        complain(i, "image value outside [0,1]");
        break;
      }
    }
    if (sc.labels.count("semseg") && sc.labels.count("edge")) {
      Tensor oracle = synth::boundary_from_semseg(sc.labels.at("semseg"));
      const Tensor& edge = sc.labels.at("edge");
      bool same = oracle.shape() == edge.shape();
      if (same)
        for (size_t j = 0; j < oracle.size(); ++j)
          if (oracle.data()[j] != edge.data()[j]) {
            same = false;
            break;
          }
      if (!same) complain(i, "edge label differs from the semseg boundary set");
    }
    if (sc.labels.count("normal")) {
      const Tensor& normal = sc.labels.at("normal");
      for (size_t j = 0; j < normal.size() / 3; ++j) {
        const double* n = normal.data() + j * 3;
        const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
        if (std::abs(len - 1.0) > 1e-9) {
          complain(i, "normal vector is not unit length");
          break;
        }
      }
    }
    if (sc.labels.count("depth")) {
      const Tensor& depth = sc.labels.at("depth");
      for (size_t j = 0; j < depth.size(); ++j)
        if (depth.data()[j] <= 0.0) {
          complain(i, "non-positive depth");
          break;
        }
    }
  }
  if (violations > 0)
    throw DataError("verify: " + std::to_string(violations) + " violation(s) in " + cfg.data_dir);
  out << "ok: " << ds.scenes.size() << " scenes, all label-consistency checks passed\n";
}

}  // namespace pgt::cli
