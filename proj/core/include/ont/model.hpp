#pragma once

// Model definition: configuration, parameter registry, and serialization.
// The compute graph itself lives in network.hpp; this header owns everything
// that must be stable across save/load — parameters are stored canonically as
// 32-bit floats in a fixed registry order, so a save→load→save round trip is
// byte-identical.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ont/error.hpp"

namespace ont {

enum class MaskMode { bounded, unbounded };
enum class TstmKind { complex_pair, shared_real };

std::string to_string(MaskMode m);
std::string to_string(TstmKind k);
MaskMode mask_mode_from_string(std::string_view s);
TstmKind tstm_kind_from_string(std::string_view s);

struct ModelConfig {
  std::string preset = "tiny";
  // Full layer list: first half encoder output channels, second half decoder
  // output channels. When the final entry is not 1, a 1x1 complex projection
  // down to one mask channel is appended automatically.
  std::vector<std::size_t> channels;
  // Per-layer (freq, time) strides, same length as channels; the decoder half
  // must mirror the encoder half so spatial extents can be restored.
  std::vector<std::pair<std::size_t, std::size_t>> strides;
  std::size_t kernel_freq = 3;
  std::size_t kernel_time = 3;
  std::size_t n_tstb = 1;
  std::size_t model_dim = 16;
  std::size_t head_count = 2;
  std::size_t ff_dim = 64;
  MaskMode mask_mode = MaskMode::bounded;
  TstmKind tstm_kind = TstmKind::complex_pair;

  std::size_t n_layers() const { return channels.size(); }
  std::size_t n_encoder_layers() const { return channels.size() / 2; }
  bool needs_mask_projection() const { return !channels.empty() && channels.back() != 1; }

  void validate() const;

  // Canonical key=value text block embedded in model files; parse() accepts
  // exactly what canonical_text() emits.
  std::string canonical_text() const;
  static ModelConfig parse(std::string_view text);

  static ModelConfig tiny();
  static ModelConfig paper_scale();
  static ModelConfig preset_by_name(std::string_view name);
};

struct ParamTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> data;

  std::size_t numel() const {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
  }
};

class DenoiserModel {
 public:
  DenoiserModel() = default;
  explicit DenoiserModel(ModelConfig cfg) : config_(std::move(cfg)) { build_registry(); }

  const ModelConfig& config() const { return config_; }
  std::vector<ParamTensor>& params() { return params_; }
  const std::vector<ParamTensor>& params() const { return params_; }

  std::size_t scalar_count() const;
  ParamTensor& find(std::string_view name);
  const ParamTensor& find(std::string_view name) const;

  // Seeded initialization: uniform fan-in scaling for weights, zeros for
  // biases, ones for normalization gains. Deterministic given the seed.
  void init_params(std::uint64_t seed);

  void zero_params();

  // Throws DataError when any parameter is non-finite.
  void check_finite() const;

 private:
  void build_registry();

  ModelConfig config_;
  std::vector<ParamTensor> params_;
  // Per-tensor initialization tag recorded while building the registry:
  // 0 = zeros, SIZE_MAX = ones, otherwise the fan-in for uniform scaling.
  std::vector<std::size_t> fan_in_;
};

// Binary model file: magic "ONTM", u32 version, length-prefixed canonical
// config text, u32 tensor count, then per-tensor records (u32 name length,
// name bytes, u32 rank, u32 extents, little-endian float32 payload).
void save_model(const DenoiserModel& model, const std::string& path);
DenoiserModel load_model(const std::string& path);

}  // namespace ont
