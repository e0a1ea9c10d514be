#pragma once

// Built-in interactions and the plain-text model file formats.
//
// Nearest-neighbour file:
//   d=<int>
//   d^2 rows of d^2 entries "re,im", whitespace separated
// Finite-range file:
//   d=<int>
//   R=<odd int>
//   per shape: "S= (x,y,z);(x,y,z);..." then d^|S| rows as above

#include <charconv>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "gapcert/coarsegrain.hpp"
#include "gapcert/error.hpp"
#include "gapcert/operator.hpp"

namespace gapcert {

struct ModelDescriptor {
  std::string name;
  int d = 2;
  std::uint64_t seed = 0;
  int rank = 0;
  std::string note;
};

/// Projection onto the two-site singlet, (I - SWAP) / 2.
inline NNInteraction heisenberg_ferro() {
  cmat swap = cmat::Zero(4, 4);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) swap(2 * b + a, 2 * a + b) = 1.0;
  return NNInteraction::checked(2, 0.5 * (cmat::Identity(4, 4) - swap));
}

/// Projection onto total spin 2 of two spin-1 sites, basis S^z = +1, 0, -1.
inline NNInteraction aklt() {
  cmat sz = cmat::Zero(3, 3), sp = cmat::Zero(3, 3);
  sz(0, 0) = 1.0;
  sz(2, 2) = -1.0;
  sp(0, 1) = std::sqrt(2.0);
  sp(1, 2) = std::sqrt(2.0);
  const cmat sm = sp.adjoint();
  const cmat x = detail::kron(sz, sz) + 0.5 * (detail::kron(sp, sm) + detail::kron(sm, sp));
  const cmat id = cmat::Identity(9, 9);
  cmat p = (x + 2.0 * id) * (x + id) / 6.0;
  p = 0.5 * (p + p.adjoint()).eval();
  return NNInteraction::checked(3, p);
}

/// Projection onto `rank` columns of a seeded Haar unitary on C^d (x) C^d.
inline NNInteraction random_projection(int d, int rank, std::uint64_t seed) {
  if (d < 2) throw ConfigError("random projection needs d >= 2");
  const int dim = d * d;
  if (rank < 1 || rank >= dim)
    throw ConfigError("rank must satisfy 1 <= rank < d^2 = " + std::to_string(dim) + ", got " + std::to_string(rank));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  cmat z(dim, dim);
  for (Index j = 0; j < dim; ++j)
    for (Index i = 0; i < dim; ++i) z(i, j) = cplx(gauss(rng), gauss(rng));
  Eigen::HouseholderQR<cmat> qr(z);
  cmat q = qr.householderQ() * cmat::Identity(dim, dim);
  const cmat r = qr.matrixQR();
  for (Index j = 0; j < dim; ++j) {
    const double mag = std::abs(r(j, j));
    if (mag > 0.0) q.col(j) *= r(j, j) / mag;
  }
  const cmat v = q.leftCols(rank);
  cmat p = v * v.adjoint();
  p = 0.5 * (p + p.adjoint()).eval();
  return NNInteraction::checked(d, p);
}

/// Nearest-neighbour Heisenberg ferromagnet on Z^3 as a finite-range spec.
inline FiniteRangeSpec heisenberg_ferro_fr(int R) {
  require_odd_range(R);
  const auto h = heisenberg_ferro();
  FiniteRangeSpec spec{2, R, {}};
  for (int a = 0; a < 3; ++a) {
    Site3 e{0, 0, 0};
    e[a] = 1;
    spec.shapes.push_back(InteractionShape::checked(2, {{0, 0, 0}, e}, h.P));
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Parsing

using LoadedModel = std::variant<NNInteraction, FiniteRangeSpec>;

namespace detail {

class LineReader {
 public:
  explicit LineReader(std::istream& in) {
    for (std::string s; std::getline(in, s);) {
      if (!s.empty() && s.back() == '\r') s.pop_back();
      lines_.push_back(std::move(s));
    }
  }

  // Advances to the next non-blank line; false at end of input.
  bool next() {
    while (idx_ < lines_.size()) {
      line = lines_[idx_++];
      line_no = idx_;
      if (line.find_first_not_of(" \t") != std::string::npos) return true;
    }
    line_no = lines_.size() + 1;
    line.clear();
    return false;
  }

  // The next non-blank line without consuming it, or "" at end of input.
  std::string peek() const {
    for (std::size_t i = idx_; i < lines_.size(); ++i)
      if (lines_[i].find_first_not_of(" \t") != std::string::npos) return lines_[i];
    return {};
  }

  std::size_t line_no = 0;
  std::string line;

 private:
  std::vector<std::string> lines_;
  std::size_t idx_ = 0;
};

inline std::size_t first_non_space(const std::string& s, std::size_t from = 0) {
  const auto p = s.find_first_not_of(" \t", from);
  return p == std::string::npos ? s.size() : p;
}

inline int parse_int_field(LineReader& r, std::string_view key) {
  if (!r.next()) throw ParseError("expected '" + std::string(key) + "<int>', found end of file", r.line_no, 1);
  const auto start = first_non_space(r.line);
  if (r.line.compare(start, key.size(), key) != 0)
    throw ParseError("expected '" + std::string(key) + "<int>'", r.line_no, start + 1);
  const char* b = r.line.data() + start + key.size();
  const char* e = r.line.data() + r.line.size();
  int value = 0;
  auto [ptr, ec] = std::from_chars(b, e, value);
  if (ec != std::errc() || first_non_space(r.line, static_cast<std::size_t>(ptr - r.line.data())) != r.line.size())
    throw ParseError("malformed integer after '" + std::string(key) + "'", r.line_no,
                     static_cast<std::size_t>(b - r.line.data()) + 1);
  return value;
}

inline double parse_double(const std::string& line, std::size_t from, std::size_t to, std::size_t line_no,
                           const char* what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(line.data() + from, line.data() + to, v);
  if (ec != std::errc() || ptr != line.data() + to)
    throw ParseError(std::string("malformed ") + what + " part '" + line.substr(from, to - from) + "'", line_no,
                     from + 1);
  return v;
}

inline cmat parse_matrix(LineReader& r, Index dim) {
  cmat m(dim, dim);
  for (Index row = 0; row < dim; ++row) {
    if (!r.next())
      throw ParseError("expected matrix row " + std::to_string(row + 1) + " of " + std::to_string(dim) +
                           ", found end of file",
                       r.line_no, 1);
    const std::string& s = r.line;
    std::size_t pos = first_non_space(s);
    Index col = 0;
    while (pos < s.size()) {
      const auto end = std::min(s.find_first_of(" \t", pos), s.size());
      if (col >= dim) throw ParseError("too many entries in row (expected " + std::to_string(dim) + ")", r.line_no, pos + 1);
      const auto comma = s.find(',', pos);
      if (comma == std::string::npos || comma >= end)
        throw ParseError("entry '" + s.substr(pos, end - pos) + "' is missing the imaginary part (expected re,im)",
                         r.line_no, pos + 1);
      const double re = parse_double(s, pos, comma, r.line_no, "real");
      const double im = parse_double(s, comma + 1, end, r.line_no, "imaginary");
      m(row, col++) = cplx(re, im);
      pos = first_non_space(s, end);
    }
    if (col != dim)
      throw ParseError("row has " + std::to_string(col) + " entries, expected " + std::to_string(dim), r.line_no,
                       s.size() + 1);
  }
  return m;
}

inline std::vector<Site3> parse_shape_line(const LineReader& r) {
  const std::string& s = r.line;
  const auto start = first_non_space(s);
  if (s.compare(start, 2, "S=") != 0) throw ParseError("expected 'S= (x,y,z);...'", r.line_no, start + 1);
  std::vector<Site3> out;
  std::size_t pos = start + 2;
  while (true) {
    pos = first_non_space(s, pos);
    if (pos >= s.size() || s[pos] != '(') throw ParseError("expected '(' starting an offset", r.line_no, pos + 1);
    const auto close = s.find(')', pos);
    if (close == std::string::npos) throw ParseError("unterminated offset", r.line_no, pos + 1);
    Site3 v{};
    std::size_t p = pos + 1;
    for (int a = 0; a < 3; ++a) {
      p = first_non_space(s, p);
      auto [ptr, ec] = std::from_chars(s.data() + p, s.data() + close, v[a]);
      if (ec != std::errc()) throw ParseError("malformed offset coordinate", r.line_no, p + 1);
      p = first_non_space(s, static_cast<std::size_t>(ptr - s.data()));
      if (a < 2) {
        if (p >= close || s[p] != ',') throw ParseError("expected ',' between coordinates", r.line_no, p + 1);
        ++p;
      } else if (p != close) {
        throw ParseError("expected ')' after three coordinates", r.line_no, p + 1);
      }
    }
    out.push_back(v);
    pos = first_non_space(s, close + 1);
    if (pos >= s.size()) break;
    if (s[pos] != ';') throw ParseError("expected ';' between offsets", r.line_no, pos + 1);
    ++pos;
  }
  return out;
}

}  // namespace detail

/// Reads either file format. Matrices are projection-checked; failures throw
/// ConfigError with the defect norms.
inline LoadedModel parse_model(std::istream& in) {
  detail::LineReader r(in);
  const int d = detail::parse_int_field(r, "d=");
  if (d < 2) throw ParseError("local dimension must be >= 2", r.line_no, 1);
  const std::string ahead = r.peek();
  const bool finite_range = ahead.compare(detail::first_non_space(ahead), 2, "R=") == 0;

  if (!finite_range) {
    const Index dim = static_cast<Index>(d) * d;
    cmat P = detail::parse_matrix(r, dim);
    if (r.next()) throw ParseError("unexpected content after the matrix", r.line_no, 1);
    return NNInteraction::checked(d, std::move(P));
  }

  FiniteRangeSpec spec;
  spec.d = d;
  spec.R = detail::parse_int_field(r, "R=");
  if (spec.R < 1 || spec.R % 2 == 0) throw ParseError("R must be odd and positive", r.line_no, 1);
  while (r.next()) {
    const auto offsets = detail::parse_shape_line(r);
    const std::size_t shape_line = r.line_no;
    const Index dim = static_cast<Index>(hilbert_dimension(d, offsets.size(), kDefaultDenseLimit));
    cmat P = detail::parse_matrix(r, dim);
    try {
      spec.shapes.push_back(InteractionShape::checked(d, offsets, std::move(P)));
    } catch (const ConfigError& e) {
      throw ConfigError("shape on line " + std::to_string(shape_line) + ": " + e.what());
    }
  }
  return spec;
}

inline LoadedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file '" + path + "'");
  return parse_model(in);
}

namespace detail {

inline void write_matrix(std::ostream& out, const cmat& m) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << ' ';
      out << m(i, j).real() << ',' << m(i, j).imag();
    }
    out << '\n';
  }
}

}  // namespace detail

inline void write_model(std::ostream& out, const NNInteraction& inter) {
  out << "d=" << inter.d << '\n';
  detail::write_matrix(out, inter.P);
}

inline void write_model(std::ostream& out, const FiniteRangeSpec& spec) {
  out << "d=" << spec.d << '\n' << "R=" << spec.R << '\n';
  for (const auto& s : spec.shapes) {
    out << "S=";
    for (std::size_t i = 0; i < s.offsets.size(); ++i)
      out << (i ? ";" : " ") << '(' << s.offsets[i][0] << ',' << s.offsets[i][1] << ',' << s.offsets[i][2] << ')';
    out << '\n';
    detail::write_matrix(out, s.projection);
  }
}

template <typename Model>
void save_model(const std::string& path, const Model& m) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write model file '" + path + "'");
  write_model(out, m);
}

// ---------------------------------------------------------------------------
// Lookup by name

struct ModelRequest {
  std::string name;       // built-in name or file path
  int d = 2;              // random
  int rank = 1;           // random
  std::uint64_t seed = 1; // random
  int R = 1;              // finite-range built-ins
};

inline bool is_builtin_model(const std::string& name) {
  return name == "heisenberg-ferro" || name == "aklt" || name == "random" || name == "heisenberg-ferro-fr";
}

inline std::pair<LoadedModel, ModelDescriptor> resolve_model(const ModelRequest& req) {
  if (req.name == "heisenberg-ferro")
    return {heisenberg_ferro(), {req.name, 2, 0, 1, "singlet projection, gapless"}};
  if (req.name == "aklt") return {aklt(), {req.name, 3, 0, 5, "spin-2 projection of two spin-1 sites"}};
  if (req.name == "random")
    return {random_projection(req.d, req.rank, req.seed),
            {req.name, req.d, req.seed, req.rank, "seeded Haar projection, generally frustrated"}};
  if (req.name == "heisenberg-ferro-fr")
    return {heisenberg_ferro_fr(req.R), {req.name, 2, 0, 1, "nearest-neighbour shapes on Z^3"}};
  auto m = load_model(req.name);
  const int d = std::visit([](const auto& x) { return x.d; }, m);
  return {std::move(m), {req.name, d, 0, 0, "loaded from file"}};
}

}  // namespace gapcert
