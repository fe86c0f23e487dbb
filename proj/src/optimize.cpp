#include "atelier/optimize.hpp"

#include "atelier/error.hpp"

namespace atelier {

namespace {
constexpr int kMaxHalvings = 40;
}

AscentResult gradient_ascent(Vector x0, const Objective& f, int steps, double step_size, double max_step_norm) {
  if (steps < 0) throw Error(ErrorCode::invalid_argument, "steps must be >= 0");
  if (!(step_size > 0.0)) throw Error(ErrorCode::invalid_argument, "step size must be positive");
  if (!(max_step_norm > 0.0)) throw Error(ErrorCode::invalid_argument, "max step norm must be positive");
  AscentResult result;
  result.x = std::move(x0);
  if (steps == 0) return result;

  Vector grad(result.x.size());
  double value = f(result.x, &grad);
  if (!std::isfinite(value)) throw Error(ErrorCode::numeric, "non-finite objective");
  result.trace.push_back(value);
  for (int step = 0; step < steps; ++step) {
    if (!grad.allFinite()) throw Error(ErrorCode::numeric, "non-finite gradient");
    bool accepted = false;
    double eta = step_size;
    const double g = grad.norm();
    if (eta * g > max_step_norm) eta = max_step_norm / g;
    for (int h = 0; h < kMaxHalvings; ++h, eta *= 0.5) {
      Vector candidate = result.x + eta * grad;
      const double v = f(candidate, nullptr);
      if (std::isfinite(v) && v >= value) {
        result.x = std::move(candidate);
        value = v;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    result.trace.push_back(value);
    ++result.accepted_steps;
    if (step + 1 < steps) value = f(result.x, &grad);
  }
  return result;
}

Vector masked_softmax(const Vector& logits, double temperature, const std::vector<bool>* mask) {
  Vector p(logits.size());
  double m = -INFINITY;
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    if (!mask || (*mask)[static_cast<std::size_t>(i)]) m = std::max(m, logits[i] / temperature);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const bool on = !mask || (*mask)[static_cast<std::size_t>(i)];
    p[i] = on ? std::exp(logits[i] / temperature - m) : 0.0;
    total += p[i];
  }
  if (total > 0.0) p /= total;
  return p;
}

}  // namespace atelier
