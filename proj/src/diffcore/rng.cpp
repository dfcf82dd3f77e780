#include "fgpl/diffcore/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fgpl {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_stream_key(std::uint64_t seed, std::string_view stage, std::uint64_t group,
                                std::uint64_t member) {
  std::uint64_t k = splitmix64(seed);
  k = splitmix64(k ^ fnv1a64(stage));
  k = splitmix64(k ^ group);
  k = splitmix64(k ^ (member * 0xd1b54a32d192ed03ULL));
  return k;
}

RngStream::RngStream(std::uint64_t seed, std::string_view stage, std::uint64_t group,
                     std::uint64_t member)
    : key_(derive_stream_key(seed, stage, group, member)), engine_(key_) {}

double RngStream::uniform() {
  // 53 random mantissa bits; the standard uniform_real_distribution is not
  // specified bit-exactly across library implementations.
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::size_t RngStream::uniform_index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller on (0, 1] to keep log finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

std::vector<double> RngStream::gaussian(std::size_t n) {
  std::vector<double> out(n);
  fill_gaussian(out);
  return out;
}

void RngStream::fill_gaussian(std::span<double> out) {
  for (double& v : out) v = normal();
}

std::size_t RngStream::categorical(std::span<const double> probs) {
  if (probs.empty()) throw std::invalid_argument("categorical: no outcomes");
  double total = 0.0;
  for (double p : probs) total += p;
  const double u = uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

}  // namespace fgpl
