#pragma once

#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace layersim {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    Vec3 operator+(const Vec3& v) const { return {x + v.x, y + v.y, z + v.z}; }
    Vec3 operator-(const Vec3& v) const { return {x - v.x, y - v.y, z - v.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& v) { x += v.x; y += v.y; z += v.z; return *this; }
    Vec3& operator-=(const Vec3& v) { x -= v.x; y -= v.y; z -= v.z; return *this; }
    Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

    double dot(const Vec3& v) const { return x * v.x + y * v.y + z * v.z; }
    Vec3 cross(const Vec3& v) const {
        return {y * v.z - z * v.y, z * v.x - x * v.z, x * v.y - y * v.x};
    }
    double norm2() const { return x * x + y * y + z * z; }
    double norm() const { return std::sqrt(norm2()); }
    Vec3 normalized() const {
        double n = norm();
        return {x / n, y / n, z / n};
    }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Row-major 3x3 matrix. Rows of a rotation are the local axes, so
// world -> local is m * v and local -> world is m.transposed() * v.
struct Mat3 {
    double m[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

    static Mat3 identity() { return Mat3{}; }

    Vec3 row(int i) const { return {m[i][0], m[i][1], m[i][2]}; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
                m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
                m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; i++)
            for (int j = 0; j < 3; j++) {
                r.m[i][j] = m[i][0] * o.m[0][j] + m[i][1] * o.m[1][j] + m[i][2] * o.m[2][j];
            }
        return r;
    }

    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; i++)
            for (int j = 0; j < 3; j++) r.m[i][j] = m[j][i];
        return r;
    }

    double det() const {
        return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
               m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
               m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    }

    // max |R R^T - I| entry; 0 for an exact rotation
    double orthogonality_error() const {
        Mat3 g = (*this) * transposed();
        double e = 0.0;
        for (int i = 0; i < 3; i++)
            for (int j = 0; j < 3; j++) e = std::max(e, std::abs(g.m[i][j] - (i == j ? 1.0 : 0.0)));
        return e;
    }

    bool is_rotation(double tol = 1e-9) const {
        return orthogonality_error() <= tol && std::abs(det() - 1.0) <= tol;
    }
};

// Unit quaternion, scalar-first storage.
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
};

// Rotation matrix of a unit quaternion. Every entry is a sum of two-element
// products, so q and -q map to bit-identical matrices.
inline Mat3 quat_to_matrix(const Quat& q) {
    if (std::abs(q.norm() - 1.0) > 1e-6) throw std::invalid_argument("quat_to_matrix: quaternion not unit length");
    Mat3 r;
    r.m[0][0] = 1 - 2 * (q.y * q.y + q.z * q.z);
    r.m[0][1] = 2 * (q.x * q.y - q.z * q.w);
    r.m[0][2] = 2 * (q.x * q.z + q.y * q.w);
    r.m[1][0] = 2 * (q.x * q.y + q.z * q.w);
    r.m[1][1] = 1 - 2 * (q.x * q.x + q.z * q.z);
    r.m[1][2] = 2 * (q.y * q.z - q.x * q.w);
    r.m[2][0] = 2 * (q.x * q.z - q.y * q.w);
    r.m[2][1] = 2 * (q.y * q.z + q.x * q.w);
    r.m[2][2] = 1 - 2 * (q.x * q.x + q.y * q.y);
    return r;
}

}  // namespace layersim
