#include "atelier/labanstr.hpp"
#include "atelier/numeric.hpp"
#include "atelier/phase.hpp"

#include <doctest.h>

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

using namespace atelier;
using namespace atelier::phase;

namespace {

std::vector<double> sample(double rate, double beats, const std::function<double(double)>& f) {
  std::vector<double> x;
  const int n = static_cast<int>(rate * beats);
  for (int i = 0; i < n; ++i) x.push_back(f(i / rate));
  return x;
}

std::vector<double> times(double rate, std::size_t n) {
  std::vector<double> t;
  for (std::size_t i = 0; i < n; ++i) t.push_back(static_cast<double>(i) / rate);
  return t;
}

/// Peak frequency of |sum x_n e^{-2 pi i f t_n}| over a fine grid, by direct summation.
double spectrum_peak(const std::vector<double>& x, double rate, double lo, double hi) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double best_f = lo, best = -1.0;
  for (double f = lo; f <= hi; f += 1e-4) {
    std::complex<double> acc = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n)
      acc += (x[n] - mean) * std::polar(1.0, -2 * kPi * f * static_cast<double>(n) / rate);
    if (std::abs(acc) > best) {
      best = std::abs(acc);
      best_f = f;
    }
  }
  return best_f;
}

}  // namespace

TEST_CASE("constant signal has no elements") {
  const std::vector<double> x(64, 5.0);
  const PhaseFit fit = fit_cyclic_elements(x, 16, 2);
  CHECK(fit.elements.empty());
  CHECK(fit.offset == doctest::Approx(5.0));
  CHECK(fit.residual_rms == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("single sinusoid recovery") {
  const double rate = 64;
  const auto x = sample(rate, 4, [](double t) { return 2 * std::sin(2 * kPi * 3 * t) + 1; });
  const PhaseFit fit = fit_cyclic_elements(x, rate, 1);
  REQUIRE(fit.elements.size() == 1);
  const auto& e = fit.elements[0];
  CHECK(std::abs(e.frequency - 3) / 3 < 0.01);
  CHECK(std::abs(e.amplitude - 2) / 2 < 0.02);
  CHECK(std::abs(fit.offset - 1) < 0.02);
  CHECK(e.offset == fit.offset);
  CHECK(std::abs(wrap_phase(e.phase)) < 0.05);
  CHECK(std::abs(e.frequency - spectrum_peak(x, rate, 2.5, 3.5)) < 0.03);
}

TEST_CASE("two sinusoids recovery") {
  const double rate = 64;
  const auto x = sample(rate, 4, [](double t) { return std::sin(2 * kPi * 2 * t) + 0.5 * std::sin(2 * kPi * 5 * t); });
  const PhaseFit fit = fit_cyclic_elements(x, rate, 2);
  REQUIRE(fit.elements.size() == 2);
  CHECK(std::abs(fit.elements[0].frequency - 2) / 2 < 0.01);
  CHECK(std::abs(fit.elements[0].amplitude - 1) < 0.02);
  CHECK(std::abs(fit.elements[1].frequency - 5) / 5 < 0.01);
  CHECK(std::abs(fit.elements[1].amplitude - 0.5) / 0.5 < 0.02);
  for (const auto& e : fit.elements) CHECK(std::abs(e.phase) < 0.05);
}

TEST_CASE("fit errors") {
  CHECK_THROWS(fit_cyclic_elements(std::vector<double>(4, 0.0), 8, 1));
  CHECK_THROWS(fit_cyclic_elements(std::vector<double>(16, NAN), 8, 1));
  CHECK_THROWS(fit_cyclic_elements(std::vector<double>(16, 0.0), 8, 9));
}

TEST_CASE("reconstruction") {
  PhaseFit constant;
  constant.offset = 3;
  for (double v : reconstruct_signal(constant, times(4, 8))) CHECK(v == 3.0);

  PhaseFit one;
  one.elements.push_back({1.0, 1.0, 0.0, 0.0});
  CHECK(evaluate(one, 0.25) == doctest::Approx(1.0));

  const double rate = 32;
  const auto x = sample(rate, 4, [](double t) { return std::sin(2 * kPi * 1.3 * t) + 0.2 * std::cos(2 * kPi * 4 * t); });
  const PhaseFit fit = fit_cyclic_elements(x, rate, 3);
  const auto y = reconstruct_signal(fit, times(rate, x.size()));
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sse += (x[i] - y[i]) * (x[i] - y[i]);
  CHECK(std::sqrt(sse / static_cast<double>(x.size())) == doctest::Approx(fit.residual_rms).epsilon(1e-9));
}

TEST_CASE("refinement never loses to the raw spectral peaks") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const double f1 = rng.uniform(0.7, 3.0), f2 = rng.uniform(3.5, 7.0);
    const double a1 = rng.uniform(0.5, 2.0), p1 = rng.uniform(-3.0, 3.0);
    const auto x = sample(32, 4, [&](double t) { return a1 * std::sin(2 * kPi * f1 * t + p1) + 0.3 * std::sin(2 * kPi * f2 * t); });
    const PhaseFit refined = fit_cyclic_elements(x, 32, 2);
    const PhaseFit raw = spectral_peak_fit(x, 32, 2);
    CHECK(refined.residual_rms <= residual_rms(raw, x, 32) + 1e-12);
  }
}

TEST_CASE("residual is monotone in k_max") {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> x(96);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    double prev = INFINITY;
    for (int k = 0; k <= kMaxElements; ++k) {
      const double r = fit_cyclic_elements(x, 24, k).residual_rms;
      CHECK(r <= prev + 1e-12);
      prev = r;
    }
  }
}

TEST_CASE("refitting a reconstruction is a fixed point") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const double rate = 64;
    const auto x = sample(rate, 4, [&](double t) {
      return rng.uniform(-0.001, 0.001) + 1.5 * std::sin(2 * kPi * 2.2 * t + 0.4) + 0.6 * std::sin(2 * kPi * 6.1 * t - 1.0);
    });
    const PhaseFit fit = fit_cyclic_elements(x, rate, 2);
    const PhaseFit again = fit_cyclic_elements(reconstruct_signal(fit, times(rate, x.size())), rate, 2);
    REQUIRE(again.elements.size() == fit.elements.size());
    for (std::size_t k = 0; k < fit.elements.size(); ++k) {
      CHECK(std::abs(again.elements[k].frequency / fit.elements[k].frequency - 1) < 0.01);
      CHECK(std::abs(again.elements[k].amplitude / fit.elements[k].amplitude - 1) < 0.02);
      CHECK(std::abs(wrap_phase(again.elements[k].phase - fit.elements[k].phase)) < 0.05);
    }
  }
}

TEST_CASE("phases are wrapped") {
  CHECK(wrap_phase(kPi) == doctest::Approx(-kPi));
  CHECK(wrap_phase(0.5) == 0.5);
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(64);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    for (const auto& e : fit_cyclic_elements(x, 16, 4).elements) {
      CHECK(e.phase >= -kPi);
      CHECK(e.phase < kPi);
    }
  }
}

TEST_CASE("blend of a fit with itself is the identity") {
  PhaseFit a;
  a.offset = 0.3;
  a.elements.push_back({2.0, 1.0, 0.5, 0.0});
  const Blend b = blend_transition(a, a, 2.0, 1.0);
  for (double t = 0; t < 4; t += 0.01) CHECK(b(t) == doctest::Approx(evaluate(a, t)).epsilon(1e-12));
}

TEST_CASE("phase-only difference leaves no phase jump at the seam") {
  PhaseFit a, c;
  a.elements.push_back({1.5, 1.0, 0.2, 0.0});
  c.elements.push_back({1.5, 1.0, 2.7, 0.0});
  const Blend b = blend_transition(a, c, 2.0, 0.5);
  REQUIRE(b.matched_pairs() == 1);
  const double before = b.instantaneous_phase(0, 2.0 - 1e-12);
  const double after = b.instantaneous_phase(0, 2.0 + 1e-12);
  CHECK(std::abs(wrap_phase(after - before)) < 1e-9);
  const double expected = wrap_phase(2 * kPi * 1.5 * 2.0 + 0.2);
  CHECK(std::abs(wrap_phase(b.instantaneous_phase(0, 2.0) - expected)) < 1e-9);
}

TEST_CASE("blend is exact outside the window and has no seam jump") {
  Rng rng(100);
  for (int trial = 0; trial < 100; ++trial) {
    auto random_fit = [&] {
      PhaseFit f;
      f.offset = rng.uniform(-0.5, 0.5);
      const int k = 1 + static_cast<int>(rng.index(3));
      for (int i = 0; i < k; ++i) f.elements.push_back({rng.uniform(0.5, 3.0), rng.uniform(0.1, 1.0), rng.uniform(-3.0, 3.0), 0.0});
      return f;
    };
    const PhaseFit a = random_fit(), c = random_fit();
    const double seam = 4.0, width = 1.0, rate = 64;
    const Blend b = blend_transition(a, c, seam, width);
    const auto ts = times(rate, static_cast<std::size_t>(8 * rate));
    const auto y = b.sample(ts);
    const auto ya = reconstruct_signal(a, ts);
    const auto yc = reconstruct_signal(b.aligned_target(), ts);
    double pure_jump = 0.0, window_jump = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      if (ts[i] < b.window_start()) REQUIRE(y[i] == ya[i]);
      if (ts[i] > b.window_end()) REQUIRE(y[i] == yc[i]);
      if (i == 0) continue;
      const double jump = std::abs(y[i] - y[i - 1]);
      if (ts[i] <= b.window_start()) pure_jump = std::max(pure_jump, std::abs(ya[i] - ya[i - 1]));
      if (ts[i - 1] >= b.window_end()) pure_jump = std::max(pure_jump, std::abs(yc[i] - yc[i - 1]));
      if (ts[i] > b.window_start() - 1 / rate && ts[i - 1] < b.window_end() + 1 / rate)
        window_jump = std::max(window_jump, jump);
    }
    CHECK(window_jump <= pure_jump + 1e-12);
  }
}

TEST_CASE("decoded channels can be fitted") {
  laban::Score s;
  for (int i = 0; i < 8; ++i) {
    laban::LabanToken t;
    t.action.column = laban::Column::arm_r;
    t.action.direction = i % 2 ? laban::Direction::right : laban::Direction::left;
    t.time.start = Rational(i);
    s.tokens.push_back(t);
  }
  const auto ch = decode_channels(s, 16);
  std::vector<double> dx;
  for (const auto& v : ch.columns[laban::index_of(laban::Column::arm_r)]) dx.push_back(v[0]);
  const PhaseFit fit = fit_cyclic_elements(dx, 16, 1);
  REQUIRE(fit.elements.size() == 1);
  CHECK(fit.elements[0].frequency == doctest::Approx(0.5).epsilon(0.05));
}
