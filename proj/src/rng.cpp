#include "spde/rng.hpp"

#include <cmath>
#include <numbers>

namespace spde {

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c,
                                        std::array<std::uint32_t, 2> k) {
  constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
  constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    std::uint64_t p0 = std::uint64_t(M0) * c[0];
    std::uint64_t p1 = std::uint64_t(M1) * c[2];
    std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
    std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += W0;
    k[1] += W1;
  }
  return c;
}

NormalStream::NormalStream(std::uint64_t seed, std::uint64_t trajectory, std::uint64_t step)
    : key_{std::uint32_t(seed), std::uint32_t(seed >> 32)},
      ctr_{0u, std::uint32_t(step), std::uint32_t(trajectory), std::uint32_t(trajectory >> 32)} {
  // high step bits folded into the block counter's upper half
  ctr_[0] = std::uint32_t(step >> 32) << 24;
}

void NormalStream::refill() {
  buf_ = philox4x32(ctr_, key_);
  ++ctr_[0];
  used_ = 0;
}

double NormalStream::next_uniform() {
  if (used_ > 2) refill();
  std::uint64_t a = buf_[used_], b = buf_[used_ + 1];
  used_ += 2;
  std::uint64_t bits = ((a << 32) | b) >> 11;
  return (double(bits) + 0.5) * 0x1.0p-53;
}

double NormalStream::next() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = next_uniform(), u2 = next_uniform();
  double r = std::sqrt(-2 * std::log(u1));
  double th = 2 * std::numbers::pi * u2;
  spare_ = r * std::sin(th);
  has_spare_ = true;
  return r * std::cos(th);
}

}  // namespace spde
