#pragma once

#include "atelier/numeric.hpp"

namespace atelier {

/// Parameter bundles expose `visit(f)` calling f(name, tensor) for every
/// trainable tensor in a fixed order; these helpers view a bundle as one flat
/// vector in that order.

template <class P>
std::size_t parameter_count(const P& p) {
  std::size_t n = 0;
  p.visit([&](std::string_view, const auto& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

template <class P>
Vector flatten(const P& p) {
  Vector out(static_cast<Eigen::Index>(parameter_count(p)));
  Eigen::Index at = 0;
  p.visit([&](std::string_view, const auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) out[at++] = m.data()[i];
  });
  return out;
}

template <class P>
void assign_flat(P& p, const Vector& flat) {
  Eigen::Index at = 0;
  p.visit([&](std::string_view, auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = flat[at++];
  });
}

template <class P>
P zeros_like(P p) {
  p.visit([](std::string_view, auto& m) { m.setZero(); });
  return p;
}

}  // namespace atelier
