#include "ont/optimizer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace ont {

AdamState AdamState::for_model(const DenoiserModel& model) {
  AdamState st;
  st.m.reserve(model.params().size());
  st.v.reserve(model.params().size());
  for (const auto& p : model.params()) {
    st.m.emplace_back(p.numel(), 0.0);
    st.v.emplace_back(p.numel(), 0.0);
  }
  return st;
}

void AdamState::check_shapes(const DenoiserModel& model) const {
  if (m.size() != model.params().size() || v.size() != model.params().size())
    throw Error("adam: moment tensor count does not match the model");
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i].size() != model.params()[i].numel() || v[i].size() != model.params()[i].numel())
      throw Error("adam: moment shape mismatch for '" + model.params()[i].name + "'");
}

void adam_update(DenoiserModel& model, const std::vector<std::vector<double>>& grads,
                 AdamState& state, double lr) {
  state.check_shapes(model);
  if (grads.size() != model.params().size())
    throw Error("adam: gradient tensor count does not match the model");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& p = model.params()[i];
    if (grads[i].size() != p.numel())
      throw Error("adam: gradient shape mismatch for '" + p.name + "'");
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.data.size(); ++j) {
      const double g = grads[i][j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      const double updated =
          static_cast<double>(p.data[j]) - lr * m_hat / (std::sqrt(v_hat) + state.eps);
      p.data[j] = static_cast<float>(updated);
    }
  }
}

double lr_schedule(double base_lr, double factor, std::size_t interval_epochs,
                   std::size_t epoch) {
  if (interval_epochs == 0) throw ConfigError("lr schedule: interval must be positive");
  return base_lr * std::pow(factor, static_cast<double>(epoch / interval_epochs));
}

namespace {

constexpr char kMagic[4] = {'O', 'N', 'T', 'S'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t x) {
  unsigned char b[4] = {static_cast<unsigned char>(x & 0xff),
                        static_cast<unsigned char>((x >> 8) & 0xff),
                        static_cast<unsigned char>((x >> 16) & 0xff),
                        static_cast<unsigned char>((x >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t x) {
  write_u32(os, static_cast<std::uint32_t>(x & 0xffffffffULL));
  write_u32(os, static_cast<std::uint32_t>(x >> 32));
}

std::uint32_t read_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError(std::string("optimizer file: truncated reading ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t read_u64(std::istream& is, const char* what) {
  const std::uint64_t lo = read_u32(is, what);
  const std::uint64_t hi = read_u32(is, what);
  return lo | (hi << 32);
}

void write_doubles(std::ostream& os, const std::vector<double>& d) {
  static_assert(sizeof(double) == 8);
  os.write(reinterpret_cast<const char*>(d.data()),
           static_cast<std::streamsize>(d.size() * 8));
}

void read_doubles(std::istream& is, std::vector<double>& d, const char* what) {
  is.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(d.size() * 8));
  if (!is) throw DataError(std::string("optimizer file: truncated reading ") + what);
}

}  // namespace

void save_adam(const AdamState& state, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("optimizer file: cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u32(os, state.completed_epochs);
  write_u64(os, state.step);
  write_u32(os, static_cast<std::uint32_t>(state.m.size()));
  for (std::size_t i = 0; i < state.m.size(); ++i) {
    write_u32(os, static_cast<std::uint32_t>(state.m[i].size()));
    write_doubles(os, state.m[i]);
    write_doubles(os, state.v[i]);
  }
  if (!os) throw DataError("optimizer file: write failed for '" + path + "'");
}

AdamState load_adam(const std::string& path, const DenoiserModel& model) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("optimizer file: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("optimizer file: bad magic in '" + path + "'");
  if (read_u32(is, "version") != kVersion)
    throw DataError("optimizer file: unsupported format version");
  AdamState st;
  st.completed_epochs = read_u32(is, "epoch counter");
  st.step = read_u64(is, "step counter");
  const std::uint32_t count = read_u32(is, "tensor count");
  if (count != model.params().size())
    throw DataError("optimizer file: tensor count does not match the model");
  st.m.resize(count);
  st.v.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t numel = read_u32(is, "tensor size");
    if (numel != model.params()[i].numel())
      throw DataError("optimizer file: moment shape mismatch for '" + model.params()[i].name +
                      "'");
    st.m[i].assign(numel, 0.0);
    st.v[i].assign(numel, 0.0);
    read_doubles(is, st.m[i], "first moments");
    read_doubles(is, st.v[i], "second moments");
  }
  is.peek();
  if (!is.eof()) throw DataError("optimizer file: trailing bytes");
  return st;
}

}  // namespace ont
