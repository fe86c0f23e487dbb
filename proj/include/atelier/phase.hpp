#pragma once

// Cyclic-element decomposition of motion channels and phase-aligned blending
// between two decompositions.

#include <span>
#include <vector>

namespace atelier::phase {

inline constexpr int kMaxElements = 8;

/// a * sin(2*pi*f*t + phase) + offset, with t in beats.
struct CyclicElement {
  double frequency = 1.0;  // cycles per beat, > 0
  double amplitude = 0.0;  // >= 0
  double phase = 0.0;      // radians, in [-pi, pi)
  double offset = 0.0;
};

struct PhaseFit {
  std::vector<CyclicElement> elements;  // descending amplitude
  double offset = 0.0;
  double residual_rms = 0.0;
};

/// Wraps an angle into [-pi, pi); values already in range are returned unchanged.
double wrap_phase(double radians);

/// Least-squares cyclic decomposition with spectral-peak initialization and
/// frequency refinement on a 1/16-bin grid.
PhaseFit fit_cyclic_elements(std::span<const double> signal, double sample_rate, int k_max);

/// Elements read straight off the discrete spectrum, without refinement.
PhaseFit spectral_peak_fit(std::span<const double> signal, double sample_rate, int k_max);

double evaluate(const PhaseFit& fit, double t);
std::vector<double> reconstruct_signal(const PhaseFit& fit, std::span<const double> times);

/// RMS of signal minus reconstruction at k / sample_rate.
double residual_rms(const PhaseFit& fit, std::span<const double> signal, double sample_rate);

/// Transition from one decomposition to another around a seam. Matched element
/// pairs share instantaneous phase at the seam; parameters blend with a
/// smoothstep weight over [seam - width/2, seam + width/2].
class Blend {
 public:
  Blend(PhaseFit from, PhaseFit to, double seam, double width);

  double operator()(double t) const;
  std::vector<double> sample(std::span<const double> times) const;

  double window_start() const { return seam_ - width_ / 2; }
  double window_end() const { return seam_ + width_ / 2; }

  /// The target decomposition with matched phases pre-shifted; the output
  /// equals its reconstruction after the window.
  const PhaseFit& aligned_target() const { return to_; }

  /// Output instantaneous phase of matched pair `pair` at time t.
  double instantaneous_phase(std::size_t pair, double t) const;
  std::size_t matched_pairs() const { return pairs_.size(); }

 private:
  struct Pair {
    std::size_t from;
    std::size_t to;
    double residue;  // aligned phase difference at the seam, near zero
  };

  double weight(double t) const;

  PhaseFit from_;
  PhaseFit to_;
  double seam_;
  double width_;
  std::vector<Pair> pairs_;
  std::vector<std::size_t> unmatched_from_;
  std::vector<std::size_t> unmatched_to_;
};

Blend blend_transition(const PhaseFit& from, const PhaseFit& to, double seam_time, double blend_width);

}  // namespace atelier::phase
