#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace trs {

using Real = double;

constexpr Real kPi = 3.14159265358979323846;

struct Vec3 {
  Real x = 0, y = 0, z = 0;

  Real& operator[](int i) { return (&x)[i]; }
  Real operator[](int i) const { return (&x)[i]; }

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(Real s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(Real s) const { return {x / s, y / s, z / s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  Vec3& operator*=(Real s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }
  bool operator==(const Vec3& o) const = default;
};

inline Vec3 operator*(Real s, const Vec3& v) { return v * s; }

inline Real dot(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline Real norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

inline Vec3 normalized(const Vec3& v) {
  Real n = norm(v);
  if (n == 0) throw std::invalid_argument("cannot normalize zero vector");
  return v / n;
}

// Row-major 3x3 matrix.
struct Mat3 {
  std::array<Real, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  Real& operator()(int r, int c) { return m[r * 3 + c]; }
  Real operator()(int r, int c) const { return m[r * 3 + c]; }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        Real s = 0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }

  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }

  static Mat3 from_columns(const Vec3& c0, const Vec3& c1, const Vec3& c2) {
    Mat3 r;
    r.m = {c0.x, c1.x, c2.x, c0.y, c1.y, c2.y, c0.z, c1.z, c2.z};
    return r;
  }

  static Mat3 rotation_about(const Vec3& axis, Real angle) {
    Vec3 u = normalized(axis);
    Real c = std::cos(angle), s = std::sin(angle), t = 1 - c;
    Mat3 r;
    r.m = {c + u.x * u.x * t,       u.x * u.y * t - u.z * s, u.x * u.z * t + u.y * s,
           u.y * u.x * t + u.z * s, c + u.y * u.y * t,       u.y * u.z * t - u.x * s,
           u.z * u.x * t - u.y * s, u.z * u.y * t + u.x * s, c + u.z * u.z * t};
    return r;
  }
};

inline Real det(const Mat3& a) {
  return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
         a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
         a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

inline Real clamp01(Real v) { return std::clamp<Real>(v, 0, 1); }

// Deterministic 64-bit RNG with explicit uniform helpers. The standard
// distributions are implementation-defined, so reproducible artifacts draw
// through these instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  Real uniform() { return Real(next_u64() >> 11) * 0x1.0p-53; }

  Real uniform(Real lo, Real hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller.
  Real normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    Real u1 = 0;
    while (u1 == 0) u1 = uniform();
    Real u2 = uniform();
    Real r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2 * kPi * u2);
    have_spare_ = true;
    return r * std::cos(2 * kPi * u2);
  }

 private:
  std::uint64_t state_;
  Real spare_ = 0;
  bool have_spare_ = false;
};

// Runs fn(chunk_index, begin, end) over [0, n) split into `threads` contiguous
// chunks. With threads == 1 everything runs inline on the caller's thread.
// Callers that accumulate must keep per-chunk buffers and merge them in chunk
// order so results are independent of scheduling.
template <typename Fn>
void parallel_chunks(std::size_t n, int threads, Fn&& fn) {
  if (threads < 1) threads = 1;
  std::size_t chunks = std::min<std::size_t>(threads, std::max<std::size_t>(n, 1));
  if (chunks <= 1) {
    fn(std::size_t{0}, std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(chunks);
  std::size_t per = (n + chunks - 1) / chunks;
  for (std::size_t c = 0; c < chunks; ++c) {
    std::size_t b = std::min(c * per, n), e = std::min(b + per, n);
    pool.emplace_back([&fn, c, b, e] { fn(c, b, e); });
  }
  for (auto& t : pool) t.join();
}

inline int hardware_threads() {
  unsigned n = std::thread::hardware_concurrency();
  return n ? int(n) : 1;
}

inline bool all_finite(const std::vector<Real>& v) {
  for (Real x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace trs
