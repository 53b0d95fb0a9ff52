#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace otflow {

struct Vec2 {
  double x = 0.0, y = 0.0;

  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator-() const { return {-x, -y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator/(double s) const { return {x / s, y / s}; }
  Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
  Vec2& operator-=(const Vec2& o) { x -= o.x; y -= o.y; return *this; }

  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm2() const { return x * x + y * y; }
  double norm() const { return std::sqrt(norm2()); }
  Vec2 normalized() const { double n = norm(); return {x / n, y / n}; }
  Vec2 perp() const { return {-y, x}; }
  double operator[](int i) const { return i == 0 ? x : y; }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

// Row-major 2x2 matrix; (i,j) uses mathematical row/column indices 0..1.
struct Mat2 {
  double a11 = 0.0, a12 = 0.0, a21 = 0.0, a22 = 0.0;

  Mat2() = default;
  Mat2(double m11, double m12, double m21, double m22)
      : a11(m11), a12(m12), a21(m21), a22(m22) {}

  static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
  static Mat2 zero() { return {}; }
  static Mat2 outer(const Vec2& a, const Vec2& b) {
    return {a.x * b.x, a.x * b.y, a.y * b.x, a.y * b.y};
  }

  double operator()(int i, int j) const {
    return i == 0 ? (j == 0 ? a11 : a12) : (j == 0 ? a21 : a22);
  }
  double& at(int i, int j) {
    return i == 0 ? (j == 0 ? a11 : a12) : (j == 0 ? a21 : a22);
  }

  Mat2 operator+(const Mat2& o) const {
    return {a11 + o.a11, a12 + o.a12, a21 + o.a21, a22 + o.a22};
  }
  Mat2 operator-(const Mat2& o) const {
    return {a11 - o.a11, a12 - o.a12, a21 - o.a21, a22 - o.a22};
  }
  Mat2 operator*(double s) const { return {a11 * s, a12 * s, a21 * s, a22 * s}; }
  Mat2 operator*(const Mat2& o) const {
    return {a11 * o.a11 + a12 * o.a21, a11 * o.a12 + a12 * o.a22,
            a21 * o.a11 + a22 * o.a21, a21 * o.a12 + a22 * o.a22};
  }
  Vec2 operator*(const Vec2& v) const {
    return {a11 * v.x + a12 * v.y, a21 * v.x + a22 * v.y};
  }

  Mat2 transpose() const { return {a11, a21, a12, a22}; }
  double det() const { return a11 * a22 - a12 * a21; }
  double trace() const { return a11 + a22; }
  Mat2 inverse() const {
    double d = det();
    return {a22 / d, -a12 / d, -a21 / d, a11 / d};
  }
  double quad(const Vec2& u, const Vec2& v) const { return u.dot((*this) * v); }
  double max_abs() const {
    return std::max(std::max(std::abs(a11), std::abs(a12)),
                    std::max(std::abs(a21), std::abs(a22)));
  }
  double asym() const { return std::abs(a12 - a21); }

  // Eigenvalues of the symmetric part, ascending.
  std::array<double, 2> eig_sym() const {
    double m = 0.5 * (a11 + a22);
    double b = 0.5 * (a12 + a21);
    double d = 0.5 * (a11 - a22);
    double r = std::sqrt(d * d + b * b);
    return {m - r, m + r};
  }
  double min_eig() const { return eig_sym()[0]; }
  double max_eig() const { return eig_sym()[1]; }
  // Spectral norm of the symmetric part.
  double spectral_norm() const {
    auto e = eig_sym();
    return std::max(std::abs(e[0]), std::abs(e[1]));
  }
  // Smallest singular value (2x2 closed form).
  double min_singular() const {
    Mat2 s = transpose() * (*this);
    double e = s.eig_sym()[0];
    return std::sqrt(std::max(0.0, e));
  }
};

// Third-derivative block: ten[l](i,j) holds the (i,j) matrix for slot l.
using Ten3 = std::array<Mat2, 2>;

struct Box {
  Vec2 lo{-1.0, -1.0}, hi{1.0, 1.0};
  bool contains(const Vec2& v) const {
    return v.x >= lo.x && v.x <= hi.x && v.y >= lo.y && v.y <= hi.y;
  }
  Vec2 clamp(const Vec2& v) const {
    return {std::min(std::max(v.x, lo.x), hi.x),
            std::min(std::max(v.y, lo.y), hi.y)};
  }
  Vec2 center() const { return {(lo.x + hi.x) * 0.5, (lo.y + hi.y) * 0.5}; }
  Box inflate(double m) const { return {{lo.x - m, lo.y - m}, {hi.x + m, hi.y + m}}; }
};

// Deterministic RNG. Avoids std::uniform_real_distribution on purpose: its
// output is implementation defined and would break byte-identical reports.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform01() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }
  double uniform(double a, double b) { return a + (b - a) * uniform01(); }
  Vec2 in_box(const Box& b) {
    return {uniform(b.lo.x, b.hi.x), uniform(b.lo.y, b.hi.y)};
  }
  Vec2 unit() {
    double t = uniform(0.0, 2.0 * pi());
    return {std::cos(t), std::sin(t)};
  }
  std::uint64_t next_u64() { return eng_(); }

  static constexpr double pi() { return 3.14159265358979323846; }

 private:
  std::mt19937_64 eng_;
};

constexpr double kPi = 3.14159265358979323846;

struct OtError : std::runtime_error {
  explicit OtError(const std::string& what) : std::runtime_error(what) {}
};
struct NoConvergence : OtError { using OtError::OtError; };
struct SingularJacobian : OtError { using OtError::OtError; };
struct BadParameters : OtError { using OtError::OtError; };
struct NoAdmissibleC : OtError { using OtError::OtError; };
struct CollarTooThin : OtError { using OtError::OtError; };
struct BadConstants : OtError { using OtError::OtError; };
struct InadmissibleInitial : OtError { using OtError::OtError; };
struct NonconvexNode : OtError { using OtError::OtError; };
struct BoundaryNewtonFail : OtError { using OtError::OtError; };
struct StepRejectedForever : OtError { using OtError::OtError; };
struct InsufficientHistory : OtError { using OtError::OtError; };
struct PoorLocalFit : OtError { using OtError::OtError; };
struct NotConverged : OtError { using OtError::OtError; };
struct IoError : OtError { using OtError::OtError; };

// Accumulated winding angle of a closed loop of points around `center`,
// in units of full turns.
inline double winding_turns(const std::vector<Vec2>& loop, const Vec2& center) {
  if (loop.size() < 3) return 0.0;
  double total = 0.0;
  double prev = std::atan2(loop[0].y - center.y, loop[0].x - center.x);
  for (std::size_t k = 1; k <= loop.size(); ++k) {
    const Vec2& q = loop[k % loop.size()];
    double ang = std::atan2(q.y - center.y, q.x - center.x);
    double d = ang - prev;
    while (d > kPi) d -= 2.0 * kPi;
    while (d < -kPi) d += 2.0 * kPi;
    total += d;
    prev = ang;
  }
  return total / (2.0 * kPi);
}

}  // namespace otflow
