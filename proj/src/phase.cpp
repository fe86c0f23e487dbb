#include "atelier/phase.hpp"

#include "atelier/error.hpp"
#include "atelier/numeric.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <tuple>

namespace atelier::phase {

namespace {

constexpr int kRefineSweeps = 2;
constexpr int kSubBins = 16;
constexpr double kAmplitudeThreshold = 1e-6;

void check_signal(std::span<const double> signal, double sample_rate, int k_max) {
  if (signal.size() < 8) throw Error(ErrorCode::invalid_argument, "signal too short: need at least 8 samples");
  if (!(sample_rate > 0.0)) throw Error(ErrorCode::invalid_argument, "sample rate must be positive");
  if (k_max < 0 || k_max > kMaxElements) throw Error(ErrorCode::invalid_argument, "k_max must be in [0, 8]");
  for (double x : signal)
    if (!std::isfinite(x)) throw Error(ErrorCode::numeric, "non-finite sample in signal");
}

double mean_of(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double rms_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x * x;
  return std::sqrt(s / static_cast<double>(xs.size()));
}

struct Peak {
  double frequency;
  double amplitude;
  double phase;
};

/// Local maxima of the one-sided discrete spectrum of the demeaned signal,
/// strongest first. Direct summation, O(N^2).
std::vector<Peak> spectral_peaks(std::span<const double> signal, double sample_rate, double threshold) {
  const std::size_t n = signal.size();
  const double mean = mean_of(signal);
  const std::size_t bins = (n - 1) / 2;
  std::vector<std::complex<double>> spectrum(bins + 2, {0.0, 0.0});
  for (std::size_t k = 1; k <= bins; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      const double angle = -2.0 * kPi * static_cast<double>((k * i) % n) / static_cast<double>(n);
      acc += (signal[i] - mean) * std::complex<double>(std::cos(angle), std::sin(angle));
    }
    spectrum[k] = acc;
  }
  std::vector<Peak> peaks;
  for (std::size_t k = 1; k <= bins; ++k) {
    const double m = std::abs(spectrum[k]);
    const double left = std::abs(spectrum[k - 1]);
    const double right = k + 1 <= bins ? std::abs(spectrum[k + 1]) : 0.0;
    if (!(m > left && m >= right)) continue;
    const double amplitude = 2.0 * m / static_cast<double>(n);
    if (!(amplitude > threshold)) continue;
    const double phase = std::arg(std::complex<double>(0.0, 1.0) * spectrum[k]);
    peaks.push_back({static_cast<double>(k) * sample_rate / static_cast<double>(n), amplitude, phase});
  }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const Peak& a, const Peak& b) { return a.amplitude > b.amplitude; });
  return peaks;
}

struct LeastSquares {
  Vector coefficients;  // sin_k, cos_k pairs, then offset
  double sse = 0.0;
};

LeastSquares solve(std::span<const double> signal, double sample_rate, const std::vector<double>& freqs) {
  const auto n = static_cast<Eigen::Index>(signal.size());
  const auto k = static_cast<Eigen::Index>(freqs.size());
  Matrix design(n, 2 * k + 1);
  Vector target(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    for (Eigen::Index e = 0; e < k; ++e) {
      const double angle = 2.0 * kPi * freqs[static_cast<std::size_t>(e)] * t;
      design(i, 2 * e) = std::sin(angle);
      design(i, 2 * e + 1) = std::cos(angle);
    }
    design(i, 2 * k) = 1.0;
    target[i] = signal[static_cast<std::size_t>(i)];
  }
  LeastSquares out;
  out.coefficients = design.colPivHouseholderQr().solve(target);
  out.sse = (design * out.coefficients - target).squaredNorm();
  return out;
}

/// Coordinate search of each frequency over +/- one bin at 1/16-bin steps.
/// Only strict improvements are taken, so the error never increases.
double refine(std::span<const double> signal, double sample_rate, std::vector<double>& freqs, double sse) {
  const double bin = sample_rate / static_cast<double>(signal.size());
  const double step = bin / kSubBins;
  for (int sweep = 0; sweep < kRefineSweeps; ++sweep) {
    for (std::size_t e = 0; e < freqs.size(); ++e) {
      const double center = freqs[e];
      double best_f = center;
      for (int j = -kSubBins; j <= kSubBins; ++j) {
        if (j == 0) continue;
        const double f = center + j * step;
        if (!(f > 0.0)) continue;
        freqs[e] = f;
        const double candidate = solve(signal, sample_rate, freqs).sse;
        if (candidate < sse) {
          sse = candidate;
          best_f = f;
        }
      }
      freqs[e] = best_f;
    }
  }
  return sse;
}

PhaseFit assemble(std::span<const double> signal, double sample_rate, const std::vector<double>& freqs,
                  double threshold) {
  const LeastSquares ls = solve(signal, sample_rate, freqs);
  PhaseFit fit;
  fit.offset = ls.coefficients[ls.coefficients.size() - 1];
  std::vector<double> kept;
  for (std::size_t e = 0; e < freqs.size(); ++e) {
    const double s = ls.coefficients[static_cast<Eigen::Index>(2 * e)];
    const double c = ls.coefficients[static_cast<Eigen::Index>(2 * e + 1)];
    const double amplitude = std::hypot(s, c);
    if (!(amplitude > threshold)) continue;
    kept.push_back(freqs[e]);
    fit.elements.push_back({freqs[e], amplitude, wrap_phase(std::atan2(c, s)), 0.0});
  }
  if (kept.size() != freqs.size()) return assemble(signal, sample_rate, kept, threshold);
  for (auto& e : fit.elements) e.offset = fit.offset;
  std::stable_sort(fit.elements.begin(), fit.elements.end(), [](const CyclicElement& a, const CyclicElement& b) {
    return std::tie(b.amplitude, a.frequency) < std::tie(a.amplitude, b.frequency);
  });
  fit.residual_rms = residual_rms(fit, signal, sample_rate);
  return fit;
}

}  // namespace

double wrap_phase(double radians) {
  if (radians >= -kPi && radians < kPi) return radians;
  double r = std::fmod(radians + kPi, 2.0 * kPi);
  if (r < 0.0) r += 2.0 * kPi;
  r -= kPi;
  return r >= kPi ? -kPi : r;
}

double evaluate(const PhaseFit& fit, double t) {
  double sum = 0.0;
  for (const auto& e : fit.elements) sum += e.amplitude * std::sin(2.0 * kPi * e.frequency * t + e.phase);
  return sum + fit.offset;
}

std::vector<double> reconstruct_signal(const PhaseFit& fit, std::span<const double> times) {
  std::vector<double> out;
  out.reserve(times.size());
  for (double t : times) out.push_back(evaluate(fit, t));
  return out;
}

double residual_rms(const PhaseFit& fit, std::span<const double> signal, double sample_rate) {
  double s = 0.0;
  for (std::size_t i = 0; i < signal.size(); ++i) {
    const double r = signal[i] - evaluate(fit, static_cast<double>(i) / sample_rate);
    s += r * r;
  }
  return std::sqrt(s / static_cast<double>(signal.size()));
}

PhaseFit spectral_peak_fit(std::span<const double> signal, double sample_rate, int k_max) {
  check_signal(signal, sample_rate, k_max);
  const double threshold = kAmplitudeThreshold * rms_of(signal);
  auto peaks = spectral_peaks(signal, sample_rate, threshold);
  if (peaks.size() > static_cast<std::size_t>(k_max)) peaks.resize(static_cast<std::size_t>(k_max));
  PhaseFit fit;
  fit.offset = mean_of(signal);
  for (const auto& p : peaks) fit.elements.push_back({p.frequency, p.amplitude, wrap_phase(p.phase), fit.offset});
  fit.residual_rms = residual_rms(fit, signal, sample_rate);
  return fit;
}

PhaseFit fit_cyclic_elements(std::span<const double> signal, double sample_rate, int k_max) {
  check_signal(signal, sample_rate, k_max);
  const double threshold = kAmplitudeThreshold * rms_of(signal);
  auto peaks = spectral_peaks(signal, sample_rate, threshold);
  if (peaks.size() > static_cast<std::size_t>(k_max)) peaks.resize(static_cast<std::size_t>(k_max));

  // Element k starts from whichever is better: the raw top-k peaks, or the
  // refined (k-1)-element frequencies plus the k-th peak. The second option
  // nests the previous solution, so error is non-increasing in k.
  std::vector<double> freqs;
  for (std::size_t k = 1; k <= peaks.size(); ++k) {
    std::vector<double> raw;
    for (std::size_t j = 0; j < k; ++j) raw.push_back(peaks[j].frequency);
    std::vector<double> nested = freqs;
    nested.push_back(peaks[k - 1].frequency);
    const double raw_sse = solve(signal, sample_rate, raw).sse;
    const double nested_sse = solve(signal, sample_rate, nested).sse;
    freqs = raw_sse <= nested_sse ? raw : nested;
    refine(signal, sample_rate, freqs, std::min(raw_sse, nested_sse));
  }
  return assemble(signal, sample_rate, freqs, threshold);
}

Blend::Blend(PhaseFit from, PhaseFit to, double seam, double width)
    : from_(std::move(from)), to_(std::move(to)), seam_(seam), width_(width) {
  if (!(width > 0.0)) throw Error(ErrorCode::invalid_argument, "blend width must be positive");

  std::vector<std::tuple<double, std::size_t, std::size_t>> candidates;
  for (std::size_t i = 0; i < from_.elements.size(); ++i)
    for (std::size_t j = 0; j < to_.elements.size(); ++j)
      candidates.emplace_back(std::abs(from_.elements[i].frequency - to_.elements[j].frequency), i, j);
  std::sort(candidates.begin(), candidates.end());

  std::vector<bool> used_from(from_.elements.size(), false);
  std::vector<bool> used_to(to_.elements.size(), false);
  for (const auto& [dist, i, j] : candidates) {
    if (used_from[i] || used_to[j]) continue;
    used_from[i] = used_to[j] = true;
    const CyclicElement& a = from_.elements[i];
    CyclicElement& b = to_.elements[j];
    const double theta_a = 2.0 * kPi * a.frequency * seam + a.phase;
    const double theta_b = 2.0 * kPi * b.frequency * seam + b.phase;
    b.phase = wrap_phase(b.phase + wrap_phase(theta_a - theta_b));
    const double residue = wrap_phase(2.0 * kPi * b.frequency * seam + b.phase - theta_a);
    pairs_.push_back({i, j, residue});
  }
  std::sort(pairs_.begin(), pairs_.end(), [](const Pair& x, const Pair& y) { return x.from < y.from; });
  for (std::size_t i = 0; i < used_from.size(); ++i)
    if (!used_from[i]) unmatched_from_.push_back(i);
  for (std::size_t j = 0; j < used_to.size(); ++j)
    if (!used_to[j]) unmatched_to_.push_back(j);
}

double Blend::weight(double t) const {
  const double u = std::clamp((t - window_start()) / width_, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

double Blend::instantaneous_phase(std::size_t pair, double t) const {
  const Pair& p = pairs_.at(pair);
  const CyclicElement& a = from_.elements[p.from];
  const CyclicElement& b = to_.elements[p.to];
  if (t >= window_end()) return wrap_phase(2.0 * kPi * b.frequency * t + b.phase);
  const double theta_a = 2.0 * kPi * a.frequency * t + a.phase;
  if (t < window_start()) return wrap_phase(theta_a);
  const double diff = 2.0 * kPi * (b.frequency - a.frequency) * (t - seam_) + p.residue;
  return wrap_phase(theta_a + weight(t) * diff);
}

double Blend::operator()(double t) const {
  if (t < window_start()) return evaluate(from_, t);
  if (t >= window_end()) return evaluate(to_, t);
  const double w = weight(t);
  double sum = 0.0;
  for (const Pair& p : pairs_) {
    const CyclicElement& a = from_.elements[p.from];
    const CyclicElement& b = to_.elements[p.to];
    const double theta_a = 2.0 * kPi * a.frequency * t + a.phase;
    const double diff = 2.0 * kPi * (b.frequency - a.frequency) * (t - seam_) + p.residue;
    sum += (a.amplitude + w * (b.amplitude - a.amplitude)) * std::sin(theta_a + w * diff);
  }
  for (std::size_t i : unmatched_from_) {
    const CyclicElement& a = from_.elements[i];
    sum += (1.0 - w) * a.amplitude * std::sin(2.0 * kPi * a.frequency * t + a.phase);
  }
  for (std::size_t j : unmatched_to_) {
    const CyclicElement& b = to_.elements[j];
    sum += w * b.amplitude * std::sin(2.0 * kPi * b.frequency * t + b.phase);
  }
  return sum + (from_.offset + w * (to_.offset - from_.offset));
}

std::vector<double> Blend::sample(std::span<const double> times) const {
  std::vector<double> out;
  out.reserve(times.size());
  for (double t : times) out.push_back((*this)(t));
  return out;
}

Blend blend_transition(const PhaseFit& from, const PhaseFit& to, double seam_time, double blend_width) {
  return Blend(from, to, seam_time, blend_width);
}

}  // namespace atelier::phase
