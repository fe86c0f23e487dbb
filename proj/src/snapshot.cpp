#include "atelier/snapshot.hpp"

#include "atelier/error.hpp"

#include <charconv>
#include <map>

namespace atelier {

namespace {

constexpr std::string_view kHeader = "params 1";

std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

template <class T>
Matrix as_matrix(const T& m) {
  if constexpr (T::ColsAtCompileTime == 1) return m.transpose();
  else return m;
}

}  // namespace

std::string write_matrices(const NamedMatrices& mats) {
  std::string out(kHeader);
  out += '\n';
  for (const auto& [name, m] : mats) {
    out += "mat " + name + " " + std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (c) out += ' ';
        out += format_double(m(r, c));
      }
      out += '\n';
    }
  }
  return out;
}

NamedMatrices read_matrices(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos < text.size();) {
    const std::size_t nl = text.find('\n', pos);
    const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
    lines.push_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  if (lines.empty() || lines[0].substr(0, 7) != "params ")
    throw ParseError(ErrorCode::syntax, 1, 1, "expected snapshot header 'params 1'");
  if (lines[0] != kHeader) throw ParseError(ErrorCode::version_mismatch, 1, 8, "unsupported snapshot version");

  NamedMatrices out;
  std::size_t i = 1;
  const auto fail = [&](std::size_t line, const std::string& msg) {
    throw ParseError(ErrorCode::syntax, static_cast<int>(line + 1), 1, msg);
  };
  while (i < lines.size()) {
    const std::string_view header = lines[i];
    if (header.empty()) {
      ++i;
      continue;
    }
    if (header.substr(0, 4) != "mat ") fail(i, "expected 'mat <name> <rows> <cols>'");
    std::vector<std::string_view> parts;
    for (std::size_t p = 4; p <= header.size();) {
      const std::size_t sp = header.find(' ', p);
      const std::size_t e = sp == std::string_view::npos ? header.size() : sp;
      parts.push_back(header.substr(p, e - p));
      if (sp == std::string_view::npos) break;
      p = sp + 1;
    }
    if (parts.size() != 3) fail(i, "expected 'mat <name> <rows> <cols>'");
    long rows = -1;
    long cols = -1;
    std::from_chars(parts[1].data(), parts[1].data() + parts[1].size(), rows);
    std::from_chars(parts[2].data(), parts[2].data() + parts[2].size(), cols);
    if (rows < 0 || cols < 0) fail(i, "bad matrix shape");
    Matrix m(rows, cols);
    for (long r = 0; r < rows; ++r) {
      const std::size_t li = i + 1 + static_cast<std::size_t>(r);
      if (li >= lines.size()) fail(li, "missing matrix row");
      const std::string_view row = lines[li];
      const char* p = row.data();
      const char* end = row.data() + row.size();
      for (long c = 0; c < cols; ++c) {
        if (c) {
          if (p >= end || *p != ' ') fail(li, "expected single space between values");
          ++p;
        }
        double v = 0.0;
        const auto res = std::from_chars(p, end, v);
        if (res.ec != std::errc{}) fail(li, "malformed number");
        m(r, c) = v;
        p = res.ptr;
      }
      if (p != end) fail(li, "trailing characters in matrix row");
    }
    out.emplace_back(std::string(parts[0]), std::move(m));
    i += 1 + static_cast<std::size_t>(rows);
  }
  return out;
}

std::string write_snapshot(const EncoderDecoderParams& enc, const ComposerParams& comp) {
  NamedMatrices mats;
  enc.visit([&](std::string_view name, const auto& m) { mats.emplace_back("encoder." + std::string(name), as_matrix(m)); });
  mats.emplace_back("encoder.pooling_scale", Matrix::Constant(1, 1, enc.pooling_scale));
  std::size_t k = 0;
  comp.visit([&](std::string_view name, const auto& m) {
    const std::string prefix = k < kHeads ? "composer.head." : k < 2 * kHeads ? "composer.bias." : "composer.";
    mats.emplace_back(prefix + std::string(name), as_matrix(m));
    ++k;
  });
  mats.emplace_back("composer.temperature", Matrix::Constant(1, 1, comp.temperature));
  return write_matrices(mats);
}

Snapshot read_snapshot(std::string_view text) {
  std::map<std::string, Matrix> by_name;
  for (auto& [name, m] : read_matrices(text)) by_name[name] = std::move(m);
  const auto take = [&](const std::string& name) -> const Matrix& {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw Error(ErrorCode::syntax, "snapshot missing matrix '" + name + "'");
    return it->second;
  };
  const auto assign = [&](const std::string& name, auto& target) {
    const Matrix& m = take(name);
    using T = std::decay_t<decltype(target)>;
    if constexpr (T::ColsAtCompileTime == 1) {
      if (m.rows() != 1) throw Error(ErrorCode::syntax, "matrix '" + name + "' must be a row vector");
      target = m.row(0).transpose();
    } else {
      target = m;
    }
  };
  Snapshot s;
  s.encoder.visit([&](std::string_view name, auto& m) { assign("encoder." + std::string(name), m); });
  s.encoder.pooling_scale = take("encoder.pooling_scale")(0, 0);
  std::size_t k = 0;
  s.composer.visit([&](std::string_view name, auto& m) {
    const std::string prefix = k < kHeads ? "composer.head." : k < 2 * kHeads ? "composer.bias." : "composer.";
    assign(prefix + std::string(name), m);
    ++k;
  });
  s.composer.temperature = take("composer.temperature")(0, 0);
  const Eigen::Index d = s.encoder.dim();
  for (std::size_t f = 0; f < kFamilies; ++f)
    if (s.encoder.motion[f].rows() != static_cast<Eigen::Index>(kFamilySizes[f]) || s.encoder.motion[f].cols() != d)
      throw Error(ErrorCode::syntax, "snapshot motion table has the wrong shape");
  for (std::size_t h = 0; h < kHeads; ++h)
    if (s.composer.heads[h].rows() != d || s.composer.heads[h].cols() != static_cast<Eigen::Index>(kHeadSizes[h]) ||
        s.composer.bias[h].size() != static_cast<Eigen::Index>(kHeadSizes[h]))
      throw Error(ErrorCode::syntax, "snapshot composer head has the wrong shape");
  return s;
}

}  // namespace atelier
