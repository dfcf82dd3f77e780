#include "fgpl/genmodel/prompts.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace fgpl::gen {

std::string task_name(Task task) { return task == Task::Point ? "point" : "sequence"; }

Task parse_task(const std::string& name) {
  if (name == "point") return Task::Point;
  if (name == "sequence") return Task::Sequence;
  throw std::invalid_argument("unknown task '" + name + "' (expected point|sequence)");
}

MixtureLaw::MixtureLaw(std::vector<Component> components) : comps_(std::move(components)) {
  if (comps_.empty()) throw std::invalid_argument("mixture needs at least one component");
  double wsum = 0.0;
  const auto d = comps_.front().mean.size();
  for (const auto& c : comps_) {
    if (c.mean.size() != d || c.cov.rows() != d || c.cov.cols() != d) {
      throw std::invalid_argument("mixture components disagree on dimension");
    }
    if (!(c.weight > 0.0)) throw std::invalid_argument("mixture weights must be positive");
    wsum += c.weight;
    Cached k{Eigen::LLT<Eigen::MatrixXd>(c.cov), 0.0};
    if (k.llt.info() != Eigen::Success) {
      throw std::invalid_argument("mixture covariance is not positive definite");
    }
    const Eigen::MatrixXd l = k.llt.matrixL();
    const double logdet = 2.0 * l.diagonal().array().log().sum();
    k.log_norm = std::log(c.weight) -
                 0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + logdet);
    cache_.push_back(std::move(k));
  }
  if (std::abs(wsum - 1.0) > 1e-9) throw std::invalid_argument("mixture weights must sum to 1");
}

std::size_t MixtureLaw::dim() const {
  return comps_.empty() ? 0 : static_cast<std::size_t>(comps_.front().mean.size());
}

double MixtureLaw::mahalanobis(std::size_t c, std::span<const double> x) const {
  Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  const Eigen::VectorXd r = xv - comps_[c].mean;
  const Eigen::VectorXd w = cache_[c].llt.matrixL().solve(r);
  return w.norm();
}

double MixtureLaw::component_log_density(std::size_t c, std::span<const double> x) const {
  const double m = mahalanobis(c, x);
  return cache_[c].log_norm - 0.5 * m * m;
}

double MixtureLaw::log_density(std::span<const double> x) const {
  if (x.size() != dim()) throw std::invalid_argument("log_density: dimension mismatch");
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(comps_.size());
  for (std::size_t c = 0; c < comps_.size(); ++c) {
    terms[c] = component_log_density(c, x);
    mx = std::max(mx, terms[c]);
  }
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - mx);
  return mx + std::log(s);
}

double MixtureLaw::nearest_mode_sqdist(std::span<const double> x) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : comps_) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < c.mean.size(); ++i) s += std::pow(x[i] - c.mean[i], 2);
    best = std::min(best, s);
  }
  return best;
}

std::vector<double> MixtureLaw::sample(RngStream& rng) const {
  std::vector<double> w;
  for (const auto& c : comps_) w.push_back(c.weight);
  const std::size_t k = comps_.size() == 1 ? 0 : rng.categorical(w);
  const auto z = rng.gaussian(dim());
  const Eigen::VectorXd x =
      comps_[k].mean +
      cache_[k].llt.matrixL() * Eigen::Map<const Eigen::VectorXd>(z.data(), z.size());
  return std::vector<double>(x.data(), x.data() + x.size());
}

std::vector<double> SequenceDynamics::nominal() const {
  std::vector<double> out(frames * 2);
  for (std::size_t i = 0; i < frames; ++i) {
    const double a = phase + angular_velocity * static_cast<double>(i);
    out[2 * i] = center_x + radius * std::cos(a);
    out[2 * i + 1] = center_y + radius * std::sin(a);
  }
  return out;
}

std::vector<double> SequenceDynamics::anchored(std::span<const double> seq) const {
  if (seq.size() != frames * 2) throw std::invalid_argument("sequence length mismatch");
  auto a = nominal();
  const double bx = seq[0] - a[0], by = seq[1] - a[1];
  for (std::size_t i = 0; i < frames; ++i) {
    a[2 * i] += bx;
    a[2 * i + 1] += by;
  }
  return a;
}

std::vector<double> SequenceDynamics::frame_deviation(std::span<const double> seq) const {
  const auto a = anchored(seq);
  std::vector<double> out(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    out[i] = std::hypot(seq[2 * i] - a[2 * i], seq[2 * i + 1] - a[2 * i + 1]);
  }
  return out;
}

MixtureLaw SequenceDynamics::sequence_law() const {
  const auto n = static_cast<Eigen::Index>(frames * 2);
  const auto a = nominal();
  Eigen::VectorXd mean = Eigen::Map<const Eigen::VectorXd>(a.data(), n);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i % 2 == j % 2) cov(i, j) = offset_std * offset_std;
  cov += frame_noise_std * frame_noise_std * Eigen::MatrixXd::Identity(n, n);
  return MixtureLaw({{mean, cov, 1.0}});
}

MixtureLaw SequenceDynamics::frame_law(std::size_t i) const {
  const auto a = nominal();
  Eigen::Vector2d mean(a[2 * i], a[2 * i + 1]);
  const double v = offset_std * offset_std + frame_noise_std * frame_noise_std;
  return MixtureLaw({{mean, v * Eigen::Matrix2d::Identity(), 1.0}});
}

std::vector<double> SequenceDynamics::sample(RngStream& rng) const {
  auto x = nominal();
  const double bx = offset_std * rng.normal();
  const double by = offset_std * rng.normal();
  for (std::size_t i = 0; i < frames; ++i) {
    x[2 * i] += bx + frame_noise_std * rng.normal();
    x[2 * i + 1] += by + frame_noise_std * rng.normal();
  }
  return x;
}

PromptSet::PromptSet(Task task, std::vector<PromptSpec> prompts)
    : task_(task), prompts_(std::move(prompts)) {
  if (prompts_.empty()) throw std::invalid_argument("prompt set is empty");
  dim_ = prompts_.front().law.dim();
  for (std::size_t i = 0; i < prompts_.size(); ++i) {
    if (prompts_[i].id != static_cast<int>(i)) {
      throw std::invalid_argument("prompt ids must be 0..n-1 in order");
    }
    if (prompts_[i].law.dim() != dim_) throw std::invalid_argument("prompt dimensions differ");
    if (task_ == Task::Sequence && !prompts_[i].dynamics) {
      throw std::invalid_argument("sequence prompt without dynamics");
    }
  }
}

std::size_t PromptSet::frames() const {
  return task_ == Task::Sequence ? prompts_.front().dynamics->frames : 1;
}

const PromptSpec& PromptSet::at(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= prompts_.size()) {
    throw std::out_of_range("unknown prompt id " + std::to_string(id));
  }
  return prompts_[static_cast<std::size_t>(id)];
}

std::vector<int> PromptSet::ids() const {
  std::vector<int> out;
  for (const auto& p : prompts_) out.push_back(p.id);
  return out;
}

std::vector<int> PromptSet::curated_ids() const {
  std::vector<int> out;
  for (const auto& p : prompts_)
    if (p.curated) out.push_back(p.id);
  return out;
}

std::string PromptSet::manifest() const {
  std::ostringstream os;
  os.precision(9);
  os << "task " << task_name(task_) << "\n";
  for (const auto& p : prompts_) {
    os << "prompt " << p.id << " name=" << p.name << " curated=" << (p.curated ? 1 : 0);
    if (p.dynamics) {
      const auto& d = *p.dynamics;
      os << " center=" << d.center_x << "," << d.center_y << " radius=" << d.radius
         << " omega=" << d.angular_velocity << " phase=" << d.phase
         << " offset_std=" << d.offset_std << " frame_noise=" << d.frame_noise_std
         << " frames=" << d.frames;
    } else {
      for (const auto& c : p.law.components()) {
        os << " comp(w=" << c.weight << " mean=";
        for (Eigen::Index i = 0; i < c.mean.size(); ++i) os << (i ? "," : "") << c.mean[i];
        os << " cov=";
        for (Eigen::Index i = 0; i < c.cov.size(); ++i) os << (i ? "," : "") << c.cov.data()[i];
        os << ")";
      }
    }
    os << "\n";
  }
  return os.str();
}

namespace {

MixtureLaw::Component comp(double x, double y, double sxx, double sxy, double syy, double w) {
  Eigen::Matrix2d cov;
  cov << sxx, sxy, sxy, syy;
  return {Eigen::Vector2d(x, y), cov, w};
}

}  // namespace

PromptSet default_point_prompts() {
  std::vector<PromptSpec> p;
  p.push_back({0, "northeast", true, MixtureLaw({comp(2.5, 2.0, 0.16, 0.0, 0.16, 1.0)}), {}});
  p.push_back({1, "west-pair", true,
               MixtureLaw({comp(-2.5, 2.0, 0.12, 0.0, 0.12, 0.5),
                           comp(-2.5, -0.5, 0.12, 0.0, 0.12, 0.5)}),
               {}});
  p.push_back({2, "south", true, MixtureLaw({comp(0.0, -2.5, 0.3, 0.1, 0.12, 1.0)}), {}});
  p.push_back({3, "scatter", false,
               MixtureLaw({comp(3.0, -2.0, 0.16, 0.0, 0.16, 0.6),
                           comp(0.5, 0.5, 0.1, 0.0, 0.1, 0.4)}),
               {}});
  return PromptSet(Task::Point, std::move(p));
}

PromptSet default_sequence_prompts(std::size_t frames) {
  std::vector<SequenceDynamics> dyn = {
      {0.0, 0.0, 1.0, 0.4, 0.0, 0.3, 0.05, frames},
      {0.5, -0.5, 0.8, -0.5, std::numbers::pi / 2, 0.3, 0.05, frames},
      {-0.5, 0.5, 1.2, 0.3, std::numbers::pi, 0.3, 0.05, frames},
  };
  const char* names[] = {"orbit-ccw", "orbit-cw", "orbit-wide"};
  std::vector<PromptSpec> p;
  for (std::size_t i = 0; i < dyn.size(); ++i) {
    p.push_back({static_cast<int>(i), names[i], true, dyn[i].sequence_law(), dyn[i]});
  }
  return PromptSet(Task::Sequence, std::move(p));
}

PromptSet default_prompts(Task task) {
  return task == Task::Point ? default_point_prompts() : default_sequence_prompts();
}

}  // namespace fgpl::gen
