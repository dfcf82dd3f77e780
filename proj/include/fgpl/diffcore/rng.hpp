#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace fgpl {

// Stable 64-bit FNV-1a hash; used for stream tags and config hashes.
std::uint64_t fnv1a64(std::string_view text);

// Derives a stream key from (seed, stage tag, group, member). Identical inputs
// give identical keys on every platform.
std::uint64_t derive_stream_key(std::uint64_t seed, std::string_view stage,
                                std::uint64_t group, std::uint64_t member);

// Independent random stream for one logical task. Never share across threads.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view stage, std::uint64_t group = 0,
            std::uint64_t member = 0);

  std::uint64_t key() const { return key_; }

  double uniform();                     // [0, 1)
  double uniform(double lo, double hi);
  std::size_t uniform_index(std::size_t n);
  double normal();
  std::vector<double> gaussian(std::size_t n);
  void fill_gaussian(std::span<double> out);
  // Draws an index with probability proportional to `probs`.
  std::size_t categorical(std::span<const double> probs);

 private:
  std::uint64_t key_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline std::vector<double> gaussian_draw(RngStream& stream, std::size_t n) {
  return stream.gaussian(n);
}

}  // namespace fgpl
