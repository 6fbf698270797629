#include <CLI11.hpp>
#include <iostream>

#include "pgt/commands.hpp"
#include "pgt/errors.hpp"
#include "pgt/run_config.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out;
  std::string baseline;
  uint64_t seed = 0;
  bool force = false;
  bool print_config = false;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;
  CLI::Option* baseline_opt = nullptr;
};

void attach_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "key = value configuration file");
  flags.seed_opt = cmd->add_option("--seed", flags.seed, "override the config seed");
  flags.out_opt = cmd->add_option("--out", flags.out, "override the config `out` path");
  flags.baseline_opt =
      cmd->add_option("--baseline", flags.baseline, "baseline metrics file for delta-m");
  cmd->add_flag("--force", flags.force, "allow overwriting non-empty output directories");
  cmd->add_flag("--print-config", flags.print_config, "echo the fully resolved configuration");
}

pgt::cli::RunConfig resolve(const CommonFlags& flags) {
  pgt::cli::RunConfig cfg = flags.config_path.empty()
                                ? pgt::cli::RunConfig()
                                : pgt::cli::RunConfig::from_file(flags.config_path);
  if (flags.seed_opt && flags.seed_opt->count() > 0) cfg.seed = flags.seed;
  if (flags.out_opt && flags.out_opt->count() > 0) cfg.out = flags.out;
  if (flags.baseline_opt && flags.baseline_opt->count() > 0) cfg.baseline = flags.baseline;
  if (flags.force) cfg.force = true;
  if (flags.print_config) std::cout << cfg.to_text();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pgt: task-conditional multi-task dense prediction at desk scale"};
  app.require_subcommand(1);

  CommonFlags synth_flags, train_flags, eval_flags, params_flags, analyze_flags, verify_flags;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  attach_common(synth, synth_flags);
  CLI::App* train = app.add_subcommand("train", "train a model and write a checkpoint");
  attach_common(train, train_flags);
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint or a metrics file");
  attach_common(eval, eval_flags);
  CLI::App* params = app.add_subcommand("params", "parameter accounting and growth curves");
  attach_common(params, params_flags);
  CLI::App* analyze = app.add_subcommand("analyze", "prompt similarity and feature heatmaps");
  attach_common(analyze, analyze_flags);
  std::string which, selector;
  analyze->add_option("which", which, "prompt-sim or heatmap");
  analyze->add_option("selector", selector, "block id (enc.s1.b0, dec.b2) or stage (E1..E4)");
  CLI::App* verify = app.add_subcommand("verify", "run dataset label-consistency checks");
  attach_common(verify, verify_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      pgt::cli::cmd_synth(resolve(synth_flags), std::cout);
    } else if (train->parsed()) {
      pgt::cli::cmd_train(resolve(train_flags), std::cout);
    } else if (eval->parsed()) {
      pgt::cli::cmd_eval(resolve(eval_flags), std::cout);
    } else if (params->parsed()) {
      pgt::cli::cmd_params(resolve(params_flags), std::cout);
    } else if (analyze->parsed()) {
      pgt::cli::RunConfig cfg = resolve(analyze_flags);
      if (!which.empty()) cfg.analyze_which = which;
      if (!selector.empty()) cfg.analyze_selector = selector;
      pgt::cli::cmd_analyze(cfg, std::cout);
    } else if (verify->parsed()) {
      pgt::cli::cmd_verify(resolve(verify_flags), std::cout);
    }
  } catch (const pgt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const pgt::ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const pgt::RegistryError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const pgt::NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return 4;
  } catch (const pgt::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const pgt::LoadError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const pgt::MetricError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
