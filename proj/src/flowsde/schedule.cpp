#include "fgpl/flowsde/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fgpl::flow {
namespace {
constexpr double kGridTol = 1e-12;
}

void NoiseSchedule::validate() const {
  if (steps == 0) throw std::invalid_argument("schedule: steps must be positive");
  if (!(eta > 0.0)) throw std::invalid_argument("schedule: eta must be positive");
  if (!(0.0 < t_min && t_min < t_max && t_max < 1.0)) {
    throw std::invalid_argument("schedule: require 0 < t_min < t_max < 1");
  }
}

bool NoiseSchedule::sde_eligible(std::size_t k) const {
  if (k >= steps) return false;
  const double t = time(k);
  return t >= t_min - kGridTol && t <= t_max + kGridTol;
}

std::vector<std::size_t> NoiseSchedule::eligible_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < steps; ++k)
    if (sde_eligible(k)) out.push_back(k);
  return out;
}

double sigma(const NoiseSchedule& schedule, double t) {
  if (!(t >= schedule.t_min - kGridTol && t <= schedule.t_max + kGridTol)) {
    throw std::domain_error("sigma: t=" + std::to_string(t) + " outside [" +
                            std::to_string(schedule.t_min) + ", " +
                            std::to_string(schedule.t_max) + "]");
  }
  return schedule.eta * std::sqrt(t / (1.0 - t));
}

double lambda_rect(double t, double dt, double sigma_t) {
  if (!(t > 0.0 && t < 1.0)) throw std::domain_error("lambda_rect: t must lie in (0, 1)");
  if (!(dt > 0.0)) throw std::domain_error("lambda_rect: dt must be positive");
  if (!(sigma_t > 0.0)) throw std::domain_error("lambda_rect: sigma_t must be positive");
  const double sdt = std::sqrt(dt);
  return sdt / sigma_t + sigma_t * sdt * (1.0 - t) / (2.0 * t);
}

}  // namespace fgpl::flow
