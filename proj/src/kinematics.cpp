#include "kinepose/kinematics.hpp"

#include <cmath>

#include "kinepose/error.hpp"

namespace kinepose {

namespace {

// Plain 4-component quaternion for the FK internals: no renormalization and
// no hemisphere flips inside the accumulation, so the backward pass mirrors
// the forward computation exactly.
struct Q4 {
    double w, x, y, z;

    static Q4 from(const UnitQuaternion& q) { return {q.w, q.x, q.y, q.z}; }
    static Q4 ident() { return {1, 0, 0, 0}; }
};

inline Q4 mul(const Q4& a, const Q4& b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

inline Q4 conj(const Q4& q) { return {q.w, -q.x, -q.y, -q.z}; }

inline Vec3 rotate(const Q4& q, const Vec3& v) {
    const Vec3 u{q.x, q.y, q.z};
    const Vec3 uv = u.cross(v);
    return v + 2.0 * q.w * uv + 2.0 * u.cross(uv);
}

// d(rotate(q, v)) contracted with an upstream 3-vector g, for unit q.
inline std::array<double, 4> rotate_backward(const Q4& q, const Vec3& v, const Vec3& g) {
    const Vec3 u{q.x, q.y, q.z};
    const Vec3 uv = u.cross(v);
    const double gw = 2.0 * uv.dot(g);
    const Vec3 gu = 2.0 * (q.w * v.cross(g) + uv.cross(g) + v.cross(u.cross(g)));
    return {gw, gu.x, gu.y, gu.z};
}

// g_a = (d(a*b)/da)^T g, the pullback through right-multiplication by b.
inline std::array<double, 4> mul_backward_left(const Q4& b, const std::array<double, 4>& g) {
    return {b.w * g[0] + b.x * g[1] + b.y * g[2] + b.z * g[3],
            -b.x * g[0] + b.w * g[1] - b.z * g[2] + b.y * g[3],
            -b.y * g[0] + b.z * g[1] + b.w * g[2] - b.x * g[3],
            -b.z * g[0] - b.y * g[1] + b.x * g[2] + b.w * g[3]};
}

// g_b = (d(a*b)/db)^T g, the pullback through left-multiplication by a.
inline std::array<double, 4> mul_backward_right(const Q4& a, const std::array<double, 4>& g) {
    return {a.w * g[0] + a.x * g[1] + a.y * g[2] + a.z * g[3],
            -a.x * g[0] + a.w * g[1] + a.z * g[2] - a.y * g[3],
            -a.y * g[0] - a.z * g[1] + a.w * g[2] + a.x * g[3],
            -a.z * g[0] + a.y * g[1] - a.x * g[2] + a.w * g[3]};
}

struct FkCache {
    std::vector<Q4> rel;     // per bone: inverse of the relative rest rotation
    std::vector<Q4> h;       // per bone: G_pa * rel
    std::vector<Q4> g;       // per bone: total rotation
    std::vector<Q4> q_hat;   // per bone: normalized pose rotation
    std::vector<double> q_norm;
    Pose3D pose;
};

void check_dims(const PoseParams& params, const RestPose& rest, const KinematicTree& tree) {
    if (static_cast<int>(params.local_rotations.size()) != tree.bone_count())
        throw Error(ErrorCode::DimensionMismatch, "pose params sized for a different tree");
    if (rest.positions.joints() != tree.joint_count)
        throw Error(ErrorCode::DimensionMismatch, "rest pose sized for a different tree");
}

FkCache fk_forward(const PoseParams& params, const RestPose& rest, const KinematicTree& tree) {
    check_dims(params, rest, tree);
    FkCache c;
    const int bones = tree.bone_count();
    c.rel.resize(bones);
    c.h.resize(bones);
    c.g.resize(bones);
    c.q_hat.resize(bones);
    c.q_norm.resize(bones);
    c.pose.p.resize(tree.joint_count);

    std::vector<Q4> accum(tree.joint_count);
    accum[tree.root] = Q4::ident();
    c.pose.p[tree.root] = params.root_translation;

    for (const int j : tree.topo_order) {
        if (tree.is_root(j)) continue;
        const int b = tree.non_root_index[j];
        const int pa = tree.parent[j];

        const UnitQuaternion& q_raw = params.local_rotations[b];
        const double n = q_raw.norm();
        if (!(n > 1e-300))
            throw Error(ErrorCode::NumericFailure, "pose rotation has zero norm");
        c.q_norm[b] = n;
        c.q_hat[b] = {q_raw.w / n, q_raw.x / n, q_raw.y / n, q_raw.z / n};

        c.rel[b] = conj(Q4::from(relative_rest_rotation(tree, rest, j)));
        c.h[b] = mul(accum[pa], c.rel[b]);
        c.g[b] = mul(c.h[b], c.q_hat[b]);
        accum[j] = c.g[b];

        c.pose.p[j] = c.pose.p[pa] + rotate(c.g[b], rest.bone_local[b]);
    }
    return c;
}

}  // namespace

Pose3D fk(const PoseParams& params, const RestPose& rest, const KinematicTree& tree) {
    return fk_forward(params, rest, tree).pose;
}

std::vector<UnitQuaternion> fk_total_rotations(const PoseParams& params, const RestPose& rest,
                                               const KinematicTree& tree) {
    const FkCache c = fk_forward(params, rest, tree);
    std::vector<UnitQuaternion> total(tree.bone_count());
    for (int i = 0; i < tree.bone_count(); ++i)
        total[i] = UnitQuaternion(c.g[i].w, c.g[i].x, c.g[i].y, c.g[i].z);
    return total;
}

FkGradients fk_backward(const PoseParams& params, const RestPose& rest,
                        const KinematicTree& tree, const std::vector<Vec3>& upstream_grad) {
    if (static_cast<int>(upstream_grad.size()) != tree.joint_count)
        throw Error(ErrorCode::DimensionMismatch, "upstream gradient sized for a different tree");
    const FkCache c = fk_forward(params, rest, tree);

    FkGradients out;
    out.local_rotations.assign(tree.bone_count(), {0, 0, 0, 0});

    // Reverse topological order: children are folded into parents before the
    // parent itself is processed.
    std::vector<Vec3> gpos = upstream_grad;                          // per joint
    std::vector<std::array<double, 4>> g_rot(tree.joint_count, {0, 0, 0, 0});  // per joint accum

    for (auto it = tree.topo_order.rbegin(); it != tree.topo_order.rend(); ++it) {
        const int j = *it;
        if (tree.is_root(j)) continue;
        const int b = tree.non_root_index[j];
        const int pa = tree.parent[j];

        // p_j = p_pa + rotate(G_j, bone): position grad flows to the parent
        // unchanged and into G_j through the rotation.
        gpos[pa] += gpos[j];
        std::array<double, 4> gG = rotate_backward(c.g[b], rest.bone_local[b], gpos[j]);
        gG[0] += g_rot[j][0];
        gG[1] += g_rot[j][1];
        gG[2] += g_rot[j][2];
        gG[3] += g_rot[j][3];

        // G_j = H_j * q_hat, H_j = G_pa * rel_j.
        const std::array<double, 4> gq_hat = mul_backward_right(c.h[b], gG);
        const std::array<double, 4> gH = mul_backward_left(mul(c.rel[b], c.q_hat[b]), gG);
        if (!tree.is_root(pa)) {
            for (int k = 0; k < 4; ++k) g_rot[pa][k] += gH[k];
        }

        // Through the normalization q_hat = q / ||q||: tangent projection.
        const Q4& qh = c.q_hat[b];
        const double proj =
            qh.w * gq_hat[0] + qh.x * gq_hat[1] + qh.y * gq_hat[2] + qh.z * gq_hat[3];
        const double inv_n = 1.0 / c.q_norm[b];
        out.local_rotations[b] = {(gq_hat[0] - proj * qh.w) * inv_n,
                                  (gq_hat[1] - proj * qh.x) * inv_n,
                                  (gq_hat[2] - proj * qh.y) * inv_n,
                                  (gq_hat[3] - proj * qh.z) * inv_n};
    }
    out.root_translation = gpos[tree.root];
    return out;
}

AxisAngle canonical_solve(const Vec3& b_ref, const Vec3& b_cur) {
    const double nr = b_ref.norm();
    const double nc = b_cur.norm();
    if (nr <= kDegenerateVecEps || nc <= kDegenerateVecEps)
        throw Error(ErrorCode::DegenerateVector, "canonical_solve: degenerate bone vector");

    const Vec3 cr = b_ref.cross(b_cur);
    const double cn = cr.norm();
    const double d = b_ref.dot(b_cur);
    if (cn < 1e-8 * nr * nc) {
        if (d >= 0.0) return AxisAngle{{0, 0, 1}, 0.0};
        // Antiparallel: rotate pi about the rejection of the smallest-component
        // basis vector, which is a deterministic perpendicular.
        const Vec3 bhat = b_ref / nr;
        const double ax = std::abs(bhat.x), ay = std::abs(bhat.y), az = std::abs(bhat.z);
        Vec3 e{1, 0, 0};
        if (ay <= ax && ay <= az)
            e = {0, 1, 0};
        else if (az <= ax && az <= ay)
            e = {0, 0, 1};
        const Vec3 rej = e - bhat * e.dot(bhat);
        return AxisAngle{normalized(rej), 3.14159265358979323846};
    }
    return AxisAngle{cr / cn, std::atan2(cn, d)};
}

PoseParams ik_with_override(const Pose3D& pose, const RestPose& rest,
                            const KinematicTree& tree, const TotalRotationOverride& override_fn) {
    if (pose.joints() != tree.joint_count)
        throw Error(ErrorCode::DimensionMismatch, "pose sized for a different tree");

    PoseParams out;
    out.root_translation = pose.p[tree.root];
    out.local_rotations.resize(tree.bone_count());

    std::vector<Q4> total(tree.joint_count);
    total[tree.root] = Q4::ident();

    for (const int j : tree.topo_order) {
        if (tree.is_root(j)) continue;
        const int b = tree.non_root_index[j];
        const int pa = tree.parent[j];

        const Vec3 bone_vis = pose.p[j] - pose.p[pa];
        if (bone_vis.norm() <= kDegenerateVecEps)
            throw Error(ErrorCode::DegenerateVector,
                        "zero-length bone ending at joint " + std::to_string(j));

        Q4 q_total;
        std::optional<UnitQuaternion> replaced;
        if (override_fn) replaced = override_fn(j, bone_vis);
        if (replaced) {
            q_total = Q4::from(*replaced);
        } else {
            q_total = Q4::from(axis_angle_to_quat(canonical_solve(rest.bone_local[b], bone_vis)));
        }

        // Unwind the solved ancestors and the rest relative rotation to get
        // the local parameter: q_j = rel_eq1_j * G_pa^-1 * q_total.
        const Q4 rel_eq1 = Q4::from(relative_rest_rotation(tree, rest, j));
        const Q4 local = mul(rel_eq1, mul(conj(total[pa]), q_total));
        out.local_rotations[b] = UnitQuaternion(local.w, local.x, local.y, local.z);
        total[j] = q_total;
    }
    return out;
}

PoseParams ik(const Pose3D& pose, const RestPose& rest, const KinematicTree& tree) {
    return ik_with_override(pose, rest, tree, nullptr);
}

}  // namespace kinepose
