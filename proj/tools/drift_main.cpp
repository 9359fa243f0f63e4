#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <string>

#include "drift/experiments.hpp"

namespace {

// Exit codes: 0 success, 1 config error, 2 numerical failure, 3 property
// suite failure.
int dispatch(const std::string& task, const std::string& config_path,
             const std::optional<std::uint64_t>& seed, const std::string& out,
             bool perturb) {
  drift::ExperimentConfig cfg;
  try {
    cfg = config_path.empty() ? drift::default_config(task)
                              : drift::load_config(config_path, task);
    cfg.task = task;
    if (seed) cfg.seed = *seed;
    if (!out.empty()) cfg.out_dir = out;
    cfg.perturb = perturb;
    cfg.validate();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  }

  try {
    if (task == "toy2d") {
      const auto r = drift::run_toy2d(cfg);
      std::printf("toy2d: mmd2 %.6g -> %.6g (ratio %.3f)\n", r.initial_mmd2,
                  r.final_mmd2, r.final_mmd2 / r.initial_mmd2);
      std::printf("trace: %s\n", r.trace_csv.c_str());
    } else if (task == "denoise") {
      const auto r = drift::run_denoise(cfg);
      std::printf("denoise: noisy SI-SDR %.2f dB, enhanced %.2f dB (epoch %d)\n",
                  r.noisy_si_sdr, r.eval_history.back().second,
                  r.eval_history.back().first);
      std::printf("trace: %s\n", r.trace_csv.c_str());
    } else if (task == "unpaired") {
      const auto r = drift::run_unpaired(cfg);
      std::printf("unpaired: pool mmd2 %.6g -> %.6g; SI-SDR unpaired %.2f dB "
                  "vs paired %.2f dB\n",
                  r.initial_mmd2_pool, r.final_mmd2_pool,
                  r.final_si_sdr_unpaired, r.final_si_sdr_paired);
    } else if (task == "drift-eval") {
      const auto rep = drift::run_drift_properties(
          *cfg.seed, cfg.perturb, cfg.oracle_instances, cfg.gradient_instances);
      rep.print();
      if (!rep.all_pass()) return 3;
    } else if (task == "stft-check") {
      const auto rep = drift::run_signal_properties(*cfg.seed);
      rep.print();
      if (!rep.all_pass()) return 3;
    }
  } catch (const drift::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const drift::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failure: %s\n", e.what());
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drifting-field training and evaluation runner"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  bool perturb = false;

  const char* tasks[] = {"toy2d", "denoise", "unpaired", "drift-eval",
                         "stft-check"};
  for (const char* t : tasks) {
    CLI::App* sub = app.add_subcommand(t);
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--seed", seed, "experiment seed");
    sub->add_option("--out", out_dir, "output directory");
    if (std::string(t) == "drift-eval")
      sub->add_flag("--perturb", perturb,
                    "inject a deliberate defect (negative control)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  return dispatch(app.get_subcommands().front()->get_name(), config_path, seed,
                  out_dir, perturb);
}
