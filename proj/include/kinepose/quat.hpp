#pragma once

// Rotation algebra: quaternions, rotation matrices, axis-angle, and the
// conversions among them. Self-contained, header-only.
//
// Conventions (used everywhere in this project):
//   * Quaternions are Hamilton (i*j = k), stored scalar-first (w, x, y, z).
//   * Composition: (a * b) acts as "apply b first, then a", i.e.
//     to_matrix(a * b) == to_matrix(a) * to_matrix(b) on column vectors.
//   * Rotating a vector: rotate(q, v) == to_matrix(q) * v.
//   * Canonical hemisphere: w >= 0; when w == 0 the first nonzero of
//     (x, y, z) is made positive. q and -q denote the same rotation, so
//     canonicalization never changes the action on vectors.

#include <array>
#include <cmath>
#include <limits>

#include "kinepose/error.hpp"

namespace kinepose {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    double norm2() const { return dot(*this); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline Vec3 normalized(const Vec3& v) {
    const double n = v.norm();
    if (n <= 0.0)
        throw Error(ErrorCode::DegenerateVector, "cannot normalize zero vector");
    return v / n;
}

struct Mat3 {
    // Row-major.
    std::array<std::array<double, 3>, 3> m{};

    static Mat3 identity() {
        Mat3 r;
        r.m = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
        return r;
    }

    Vec3 operator*(const Vec3& v) const {
        return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
                m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
                m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += m[i][k] * o.m[k][j];
                r.m[i][j] = s;
            }
        return r;
    }

    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.m[i][j] = m[j][i];
        return r;
    }

    double det() const {
        return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
               m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
               m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    }
};

using RotationMatrix = Mat3;

struct AxisAngle {
    Vec3 axis{0, 0, 1};   // unit
    double angle = 0.0;   // radians, [0, pi]
};

struct UnitQuaternion {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    UnitQuaternion() = default;

    // Normalizes and canonicalizes. Throws on the zero quaternion.
    UnitQuaternion(double w_, double x_, double y_, double z_) {
        const double n = std::sqrt(w_ * w_ + x_ * x_ + y_ * y_ + z_ * z_);
        if (n <= 0.0 || !std::isfinite(n))
            throw Error(ErrorCode::DegenerateVector,
                        "cannot build unit quaternion from zero/non-finite components");
        w = w_ / n;
        x = x_ / n;
        y = y_ / n;
        z = z_ / n;
        canonicalize();
    }

    // Components stored as given: no normalization, no hemisphere flip.
    // For internal plumbing that manages the invariant itself.
    static UnitQuaternion from_components_unchecked(double w_, double x_, double y_, double z_) {
        UnitQuaternion q;
        q.w = w_;
        q.x = x_;
        q.y = y_;
        q.z = z_;
        return q;
    }

    static UnitQuaternion identity() { return UnitQuaternion{}; }

    void canonicalize() {
        bool flip = w < 0.0;
        if (w == 0.0) {
            if (x != 0.0)
                flip = x < 0.0;
            else if (y != 0.0)
                flip = y < 0.0;
            else
                flip = z < 0.0;
        }
        if (flip) {
            w = -w;
            x = -x;
            y = -y;
            z = -z;
        }
    }

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    double dot(const UnitQuaternion& o) const {
        return w * o.w + x * o.x + y * o.y + z * o.z;
    }
};

// Hamilton product, renormalized and canonicalized.
inline UnitQuaternion quat_mul(const UnitQuaternion& a, const UnitQuaternion& b) {
    return UnitQuaternion(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w);
}

// Inverse of a unit quaternion is its conjugate.
inline UnitQuaternion quat_inv(const UnitQuaternion& q) {
    return UnitQuaternion(q.w, -q.x, -q.y, -q.z);
}

// rotate(q, v) = q v q*, equal to to_matrix(q) * v.
inline Vec3 quat_rotate_vec(const UnitQuaternion& q, const Vec3& v) {
    const Vec3 u{q.x, q.y, q.z};
    const Vec3 uv = u.cross(v);
    return v + 2.0 * q.w * uv + 2.0 * u.cross(uv);
}

inline RotationMatrix quat_to_matrix(const UnitQuaternion& q) {
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    Mat3 r;
    r.m[0][0] = 1 - 2 * (y * y + z * z);
    r.m[0][1] = 2 * (x * y - w * z);
    r.m[0][2] = 2 * (x * z + w * y);
    r.m[1][0] = 2 * (x * y + w * z);
    r.m[1][1] = 1 - 2 * (x * x + z * z);
    r.m[1][2] = 2 * (y * z - w * x);
    r.m[2][0] = 2 * (x * z - w * y);
    r.m[2][1] = 2 * (y * z + w * x);
    r.m[2][2] = 1 - 2 * (x * x + y * y);
    return r;
}

// Shepperd's method with the four stability branches. Rejects inputs that
// fail orthonormality or properness beyond 1e-6.
inline UnitQuaternion matrix_to_quat(const RotationMatrix& r) {
    const Mat3 rrt = r * r.transposed();
    double max_dev = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            const double target = (i == j) ? 1.0 : 0.0;
            max_dev = std::max(max_dev, std::abs(rrt.m[i][j] - target));
        }
    if (max_dev > 1e-6 || std::abs(r.det() - 1.0) > 1e-6)
        throw Error(ErrorCode::InvalidArgument, "matrix is not a proper rotation");

    const auto& m = r.m;
    const double trace = m[0][0] + m[1][1] + m[2][2];
    double w, x, y, z;
    if (trace > 0.0) {
        const double s = std::sqrt(trace + 1.0) * 2.0;
        w = 0.25 * s;
        x = (m[2][1] - m[1][2]) / s;
        y = (m[0][2] - m[2][0]) / s;
        z = (m[1][0] - m[0][1]) / s;
    } else if (m[0][0] > m[1][1] && m[0][0] > m[2][2]) {
        const double s = std::sqrt(1.0 + m[0][0] - m[1][1] - m[2][2]) * 2.0;
        w = (m[2][1] - m[1][2]) / s;
        x = 0.25 * s;
        y = (m[0][1] + m[1][0]) / s;
        z = (m[0][2] + m[2][0]) / s;
    } else if (m[1][1] > m[2][2]) {
        const double s = std::sqrt(1.0 + m[1][1] - m[0][0] - m[2][2]) * 2.0;
        w = (m[0][2] - m[2][0]) / s;
        x = (m[0][1] + m[1][0]) / s;
        y = 0.25 * s;
        z = (m[1][2] + m[2][1]) / s;
    } else {
        const double s = std::sqrt(1.0 + m[2][2] - m[0][0] - m[1][1]) * 2.0;
        w = (m[1][0] - m[0][1]) / s;
        x = (m[0][2] + m[2][0]) / s;
        y = (m[1][2] + m[2][1]) / s;
        z = 0.25 * s;
    }
    return UnitQuaternion(w, x, y, z);
}

inline UnitQuaternion axis_angle_to_quat(const AxisAngle& aa) {
    const double h = 0.5 * aa.angle;
    const double s = std::sin(h);
    return UnitQuaternion(std::cos(h), aa.axis.x * s, aa.axis.y * s, aa.axis.z * s);
}

// Rotation about an arbitrary (not necessarily unit) axis.
inline UnitQuaternion quat_from_axis_angle(const Vec3& axis, double angle) {
    return axis_angle_to_quat(AxisAngle{normalized(axis), angle});
}

// R = I + sin(t) K + (1 - cos(t)) K^2, K the skew matrix of the unit axis.
inline RotationMatrix rodrigues(const AxisAngle& aa) {
    const Vec3& a = aa.axis;
    Mat3 k;
    k.m = {{{0, -a.z, a.y}, {a.z, 0, -a.x}, {-a.y, a.x, 0}}};
    const Mat3 k2 = k * k;
    const double s = std::sin(aa.angle);
    const double c1 = 1.0 - std::cos(aa.angle);
    Mat3 r = Mat3::identity();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r.m[i][j] += s * k.m[i][j] + c1 * k2.m[i][j];
    return r;
}

// Rotation-vector (axis * angle) exponential/log. angle of the log is in [0, pi].
inline UnitQuaternion quat_exp_rotvec(const Vec3& r) {
    const double angle = r.norm();
    if (angle < 1e-300) return UnitQuaternion::identity();
    return axis_angle_to_quat(AxisAngle{r / angle, angle});
}

inline double quat_angle(const UnitQuaternion& q) {
    // Geodesic rotation angle, in [0, pi].
    const double vn = std::sqrt(q.x * q.x + q.y * q.y + q.z * q.z);
    return 2.0 * std::atan2(vn, std::abs(q.w));
}

inline AxisAngle quat_to_axis_angle(const UnitQuaternion& q0) {
    UnitQuaternion q = q0;
    if (q.w < 0.0) {  // keep angle in [0, pi]
        q.w = -q.w; q.x = -q.x; q.y = -q.y; q.z = -q.z;
    }
    const double vn = std::sqrt(q.x * q.x + q.y * q.y + q.z * q.z);
    const double angle = 2.0 * std::atan2(vn, q.w);
    if (vn < 1e-12) return AxisAngle{{0, 0, 1}, 0.0};
    return AxisAngle{Vec3{q.x, q.y, q.z} / vn, angle};
}

// Geodesic distance between two rotations, in [0, pi].
inline double quat_geodesic_angle(const UnitQuaternion& a, const UnitQuaternion& b) {
    return quat_angle(quat_mul(quat_inv(a), b));
}

inline constexpr double kDegenerateVecEps = 1e-9;  // mm

// atan2 form: stable near 0 and pi where threshold screening operates.
inline double angle_between(const Vec3& u, const Vec3& v) {
    if (u.norm() <= kDegenerateVecEps || v.norm() <= kDegenerateVecEps)
        throw Error(ErrorCode::DegenerateVector, "angle_between: degenerate vector");
    return std::atan2(u.cross(v).norm(), u.dot(v));
}

}  // namespace kinepose
