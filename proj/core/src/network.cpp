#include "ont/network.hpp"

namespace ont {

Waveform denoise_waveform(const DenoiserModel& model, const Waveform& x, const StftConfig& cfg) {
  return denoise_waveform_t<float>(model, x, cfg);
}

}  // namespace ont
