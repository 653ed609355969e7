#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace cwmp {

/// splitmix64 finalizer. Used to derive independent substream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seedable, splittable generator. Every random quantity in the library is
/// drawn from an Rng obtained by splitting a root seed along a fixed path
/// (e.g. root.split(round).split(client)), so results never depend on the
/// order in which independent work items are evaluated.
class Rng {
 public:
  using result_type = std::mt19937_64::result_type;

  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

  Rng split(std::uint64_t stream) const { return Rng(mix64(seed_ ^ mix64(stream + 0x632be59bd9b4e019ULL))); }

  Rng split(std::initializer_list<std::uint64_t> path) const {
    Rng out = *this;
    for (auto s : path) out = out.split(s);
    return out;
  }

  std::uint64_t seed() const noexcept { return seed_; }

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace cwmp
