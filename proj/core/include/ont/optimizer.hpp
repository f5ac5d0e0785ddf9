#pragma once

// Adam optimizer with step-decay scheduling. Moments are kept in double
// precision regardless of the training tape precision; parameters remain
// canonically float32 (each update truncates on write-back). Because the
// forward pass only ever sees the float32 parameters, an interrupted run
// resumed from a checkpoint continues bit-identically to an uninterrupted
// one in either precision mode.

#include <cstdint>
#include <string>
#include <vector>

#include "ont/model.hpp"

namespace ont {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::uint32_t completed_epochs = 0;
  std::vector<std::vector<double>> m;  // first moments, aligned with the registry
  std::vector<std::vector<double>> v;  // second moments

  static AdamState for_model(const DenoiserModel& model);
  void check_shapes(const DenoiserModel& model) const;
};

// One bias-corrected Adam step over every parameter tensor. `grads` must be
// aligned with the model registry.
void adam_update(DenoiserModel& model, const std::vector<std::vector<double>>& grads,
                 AdamState& state, double lr);

// Step decay: base_lr * factor^floor(epoch / interval).
double lr_schedule(double base_lr, double factor, std::size_t interval_epochs, std::size_t epoch);

// Optimizer-state sidecar accompanying a model checkpoint.
void save_adam(const AdamState& state, const std::string& path);
AdamState load_adam(const std::string& path, const DenoiserModel& model);

}  // namespace ont
