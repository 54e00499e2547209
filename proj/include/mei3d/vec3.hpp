#pragma once
#include <cmath>

namespace mei3d {

// 3D point/vector, double precision throughout.
struct Vec3 {
    double x{}, y{}, z{};

    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
};

inline Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
inline Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
inline Vec3 operator*(Vec3 a, double s) { return a *= s; }
inline Vec3 operator*(double s, Vec3 a) { return a *= s; }
inline Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm2(const Vec3& a) { return dot(a, a); }
inline double norm(const Vec3& a) { return std::sqrt(norm2(a)); }

// Returns the zero vector for inputs below the degeneracy cutoff.
inline Vec3 normalized(const Vec3& a, double eps = 1e-300) {
    double n = norm(a);
    if (n < eps) return {0.0, 0.0, 0.0};
    return a * (1.0 / n);
}

inline bool finite(const Vec3& a) {
    return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}

// Column-major-free tiny rotation helpers (row vectors of the matrix).
struct Mat3 {
    // rows
    Vec3 r0{1, 0, 0}, r1{0, 1, 0}, r2{0, 0, 1};

    Vec3 apply(const Vec3& v) const { return {dot(r0, v), dot(r1, v), dot(r2, v)}; }
};

inline Mat3 rotation_x(double angle_rad) {
    double c = std::cos(angle_rad), s = std::sin(angle_rad);
    Mat3 m;
    m.r0 = {1, 0, 0};
    m.r1 = {0, c, -s};
    m.r2 = {0, s, c};
    return m;
}

inline Mat3 rotation_z(double angle_rad) {
    double c = std::cos(angle_rad), s = std::sin(angle_rad);
    Mat3 m;
    m.r0 = {c, -s, 0};
    m.r1 = {s, c, 0};
    m.r2 = {0, 0, 1};
    return m;
}

inline Mat3 matmul(const Mat3& a, const Mat3& b) {
    // c[i][j] = sum_k a[i][k] b[k][j]
    Vec3 col0{b.r0.x, b.r1.x, b.r2.x};
    Vec3 col1{b.r0.y, b.r1.y, b.r2.y};
    Vec3 col2{b.r0.z, b.r1.z, b.r2.z};
    Mat3 c;
    c.r0 = {dot(a.r0, col0), dot(a.r0, col1), dot(a.r0, col2)};
    c.r1 = {dot(a.r1, col0), dot(a.r1, col1), dot(a.r1, col2)};
    c.r2 = {dot(a.r2, col0), dot(a.r2, col1), dot(a.r2, col2)};
    return c;
}

}  // namespace mei3d
