// `ont` — self-supervised speech denoiser toolkit.
//
// Subcommands: synth, train, denoise, eval, ablate, subsample, spectrogram,
// gradcheck. Exit codes: 0 success, 2 configuration/validation error,
// 3 runtime/data error.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ont/commands.hpp"
#include "ont/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised speech denoising: corpus synthesis, training, evaluation, "
               "and signal debug tools"};
  app.require_subcommand(1);

  std::string config_path;
  std::string preset;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool verify = false;

  app.add_option("--config", config_path, "Run configuration file (flat key = value)");
  auto* seed_opt =
      app.add_option("--seed", seed, "Override both train.seed and data.seed");
  app.add_option("--preset", preset, "Model preset override")
      ->check(CLI::IsMember({"tiny", "paper"}));
  app.add_option("--out", out_dir, "Output directory (default: out)");
  app.add_flag("--verify", verify, "Double-precision deterministic mode");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic noisy/clean corpus");

  auto* train = app.add_subcommand("train", "Train a denoiser on a corpus manifest");

  std::string model_path, in_wav, out_wav;
  auto* denoise = app.add_subcommand("denoise", "Run a saved model over one WAV file");
  denoise->add_option("--model", model_path, "Model file (.ontm)")->required();
  denoise->add_option("input", in_wav, "Input WAV")->required();
  denoise->add_option("output", out_wav, "Output WAV")->required();

  std::string eval_model, eval_split = "test";
  auto* eval = app.add_subcommand("eval", "Score a saved model against clean references");
  eval->add_option("--model", eval_model, "Model file (.ontm)")->required();
  eval->add_option("--split", eval_split, "Manifest split to score (default: test)");

  std::string sweep;
  std::size_t reps = 5;
  auto* ablate = app.add_subcommand("ablate", "Train/eval sweep over one knob");
  ablate->add_option("--sweep", sweep, "One of: k, gamma, tstb, sampler-mode")->required();
  ablate->add_option("--reps", reps, "Repetition seeds per cell (default: 5)");

  std::string sub_in, sub_mode = "random", sub_prefix;
  int sub_k = 2;
  auto* subsample = app.add_subcommand("subsample", "Split one WAV into a sub-sampled pair");
  subsample->add_option("input", sub_in, "Input WAV")->required();
  subsample->add_option("--k", sub_k, "Sampling interval (default: 2)");
  subsample->add_option("--mode", sub_mode, "random or fixed (default: random)");
  subsample->add_option("--prefix", sub_prefix,
                        "Output prefix (default: <out>/subsample)");

  std::string spec_in, spec_out;
  auto* spectrogram = app.add_subcommand("spectrogram", "Magnitude spectrogram as plain PGM");
  spectrogram->add_option("input", spec_in, "Input WAV")->required();
  spectrogram->add_option("output", spec_out, "Output PGM")->required();

  std::size_t coords = 200;
  auto* gradcheck =
      app.add_subcommand("gradcheck", "Finite-difference spot check of the loss gradient");
  gradcheck->add_option("--coords", coords, "Parameter coordinates to test (default: 200)");

  // Let the global options (--config, --seed, ...) appear either before or
  // after the subcommand name.
  for (CLI::App* sub : app.get_subcommands(nullptr)) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ont::RunConfig cfg =
        config_path.empty() ? ont::RunConfig{} : ont::load_run_config(config_path);
    if (!preset.empty()) cfg.model_preset = preset;
    if (seed_opt->count() > 0) {
      cfg.train.seed = seed;
      cfg.data.seed = seed;
    }
    if (verify) cfg.train.verify_mode = true;
    cfg.resolve_model();

    if (*synth) {
      ont::cmd_synth(cfg, out_dir);
      std::cout << "wrote corpus and manifest under " << out_dir << '\n';
    } else if (*train) {
      const ont::TrainResult result = ont::cmd_train(cfg, out_dir);
      std::cout << "trained " << result.steps << " steps; final epoch mean loss "
                << result.last_epoch_mean_loss << "; model at " << result.model_path << '\n';
    } else if (*denoise) {
      ont::cmd_denoise(model_path, in_wav, out_wav, cfg);
      std::cout << "wrote " << out_wav << '\n';
    } else if (*eval) {
      const ont::MetricsReport report = ont::cmd_eval(eval_model, cfg, out_dir, eval_split);
      for (const auto& [strategy, metrics] : report.aggregates) {
        std::cout << strategy << ":";
        for (const auto& [name, agg] : metrics)
          std::cout << ' ' << name << ' ' << agg.mean << " +- " << agg.stddev;
        std::cout << '\n';
      }
      std::cout << "wrote metrics under " << out_dir << '\n';
    } else if (*ablate) {
      ont::cmd_ablate(cfg, sweep, reps, out_dir);
      std::cout << "wrote ablate.csv and ablate_runs.csv under " << out_dir << '\n';
    } else if (*subsample) {
      if (sub_prefix.empty()) sub_prefix = out_dir + "/subsample";
      ont::cmd_subsample(sub_in, sub_k, sub_mode, cfg.train.seed, sub_prefix);
      std::cout << "wrote " << sub_prefix << "_s1.wav, _s2.wav, _map.txt\n";
    } else if (*spectrogram) {
      ont::cmd_spectrogram(spec_in, spec_out, cfg);
      std::cout << "wrote " << spec_out << '\n';
    } else if (*gradcheck) {
      const double max_rel = ont::cmd_gradcheck(cfg, coords, cfg.train.seed);
      return max_rel <= 1e-4 ? 0 : 3;
    }
    return 0;
  } catch (const ont::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ont::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
