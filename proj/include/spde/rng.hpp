#pragma once

#include <array>
#include <cstdint>

namespace spde {

// Philox4x32-10 counter-based generator.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key);

// Standard normals for one (seed, trajectory, step) key. Draws are a pure
// function of the key and the draw index, so streams can be replayed and
// generated in any order.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t trajectory, std::uint64_t step);
  double next();
  // Uniform on (0, 1) with 53-bit resolution.
  double next_uniform();

 private:
  void refill();
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> ctr_;
  std::array<std::uint32_t, 4> buf_{};
  int used_ = 4;
  double spare_ = 0;
  bool has_spare_ = false;
};

}  // namespace spde
