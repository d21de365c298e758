#include "kinepose/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "kinepose/error.hpp"

namespace kinepose {

namespace {

constexpr double kFdStep = 1e-5;

double rel_error(double analytic, double fd) {
    return std::abs(analytic - fd) / std::max({1.0, std::abs(analytic), std::abs(fd)});
}

UnitQuaternion random_rotation(Rng& rng, double max_angle) {
    Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
    while (axis.norm() < 1e-6) axis = {rng.normal(), rng.normal(), rng.normal()};
    return quat_from_axis_angle(axis, rng.uniform(0.0, max_angle));
}

}  // namespace

PoseParams random_params(const KinematicTree& tree, const RestPose& rest, Rng& rng,
                         double max_angle, double root_range_mm) {
    PoseParams p;
    p.root_translation = rest.positions.p[tree.root] +
                         Vec3{rng.uniform(-root_range_mm, root_range_mm),
                              rng.uniform(-root_range_mm, root_range_mm),
                              rng.uniform(-root_range_mm, root_range_mm)};
    p.local_rotations.resize(tree.bone_count());
    for (auto& q : p.local_rotations) q = random_rotation(rng, max_angle);
    return p;
}

GradCheckResult gradcheck_fk(const KinematicTree& tree, const RestPose& rest, int trials,
                             std::uint64_t seed, double tolerance) {
    Rng rng(seed);
    GradCheckResult result;
    result.trials = trials;
    result.tolerance = tolerance;

    for (int t = 0; t < trials; ++t) {
        const PoseParams params = random_params(tree, rest, rng);
        std::vector<Vec3> upstream(tree.joint_count);
        for (auto& g : upstream)
            g = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};

        const auto scalar = [&](const PoseParams& p) {
            const Pose3D pose = fk(p, rest, tree);
            double s = 0.0;
            for (int j = 0; j < tree.joint_count; ++j) s += upstream[j].dot(pose.p[j]);
            return s;
        };

        const FkGradients analytic = fk_backward(params, rest, tree, upstream);

        for (int c = 0; c < 3; ++c) {
            PoseParams hi = params, lo = params;
            double* hv = c == 0 ? &hi.root_translation.x
                                : c == 1 ? &hi.root_translation.y : &hi.root_translation.z;
            double* lv = c == 0 ? &lo.root_translation.x
                                : c == 1 ? &lo.root_translation.y : &lo.root_translation.z;
            *hv += kFdStep;
            *lv -= kFdStep;
            const double fd = (scalar(hi) - scalar(lo)) / (2.0 * kFdStep);
            const double a = c == 0 ? analytic.root_translation.x
                                    : c == 1 ? analytic.root_translation.y
                                             : analytic.root_translation.z;
            result.max_rel_error = std::max(result.max_rel_error, rel_error(a, fd));
        }

        for (int b = 0; b < tree.bone_count(); ++b) {
            for (int c = 0; c < 4; ++c) {
                const auto bump = [&](double h) {
                    PoseParams p = params;
                    const UnitQuaternion& q = p.local_rotations[b];
                    double comps[4] = {q.w, q.x, q.y, q.z};
                    comps[c] += h;
                    p.local_rotations[b] = UnitQuaternion::from_components_unchecked(
                        comps[0], comps[1], comps[2], comps[3]);
                    return scalar(p);
                };
                const double fd = (bump(kFdStep) - bump(-kFdStep)) / (2.0 * kFdStep);
                result.max_rel_error =
                    std::max(result.max_rel_error, rel_error(analytic.local_rotations[b][c], fd));
            }
        }
    }
    result.pass = result.max_rel_error <= tolerance;
    return result;
}

GradCheckResult gradcheck_ada_loss(const KinematicTree& tree, int trials, std::uint64_t seed,
                                   double tolerance) {
    Rng rng(seed);
    GradCheckResult result;
    result.trials = trials;
    result.tolerance = tolerance;

    const int joints = tree.joint_count;
    const int bones = tree.bone_count();
    const double alpha = 1e-2;
    const double beta = 1.0;

    for (int t = 0; t < trials; ++t) {
        Pose3D p_fused, p_gt;
        std::vector<UnitQuaternion> q_fused(bones), q_gt(bones);

        // Keep residual components away from the smooth-L1 kink at |x| = beta
        // and the hemisphere-alignment boundary, where finite differences
        // straddle a derivative jump.
        bool ok = false;
        while (!ok) {
            p_fused.p.clear();
            p_gt.p.clear();
            for (int j = 0; j < joints; ++j) {
                p_gt.p.push_back({rng.uniform(-500, 500), rng.uniform(-500, 500),
                                  rng.uniform(-500, 500)});
                p_fused.p.push_back(p_gt.p.back() + Vec3{rng.normal(30.0), rng.normal(30.0),
                                                         rng.normal(30.0)});
            }
            for (int b = 0; b < bones; ++b) {
                q_gt[b] = random_rotation(rng, 2.8);
                q_fused[b] = quat_mul(random_rotation(rng, 0.5), q_gt[b]);
            }
            ok = true;
            for (int j = 0; j < joints && ok; ++j) {
                const Vec3 d = p_fused.p[j] - p_gt.p[j];
                for (const double v : {d.x, d.y, d.z})
                    if (std::abs(std::abs(v) - beta) < 1e-3) ok = false;
            }
            for (int b = 0; b < bones && ok; ++b) {
                const double dot = q_fused[b].dot(q_gt[b]);
                if (std::abs(dot) < 0.05) ok = false;
                const double s = dot >= 0 ? 1.0 : -1.0;
                const double f[4] = {q_fused[b].w, q_fused[b].x, q_fused[b].y, q_fused[b].z};
                const double g[4] = {q_gt[b].w, q_gt[b].x, q_gt[b].y, q_gt[b].z};
                for (int c = 0; c < 4; ++c)
                    if (std::abs(std::abs(s * f[c] - g[c]) - beta) < 1e-3) ok = false;
            }
        }

        const AdaLossResult analytic = ada_loss(p_fused, p_gt, q_fused, q_gt, alpha, beta);

        for (int j = 0; j < joints; ++j) {
            for (int c = 0; c < 3; ++c) {
                const auto bump = [&](double h) {
                    Pose3D p = p_fused;
                    double* v = c == 0 ? &p.p[j].x : c == 1 ? &p.p[j].y : &p.p[j].z;
                    *v += h;
                    return ada_loss(p, p_gt, q_fused, q_gt, alpha, beta).loss;
                };
                const double fd = (bump(kFdStep) - bump(-kFdStep)) / (2.0 * kFdStep);
                const double a = c == 0 ? analytic.d_pose[j].x
                                        : c == 1 ? analytic.d_pose[j].y : analytic.d_pose[j].z;
                result.max_rel_error = std::max(result.max_rel_error, rel_error(a, fd));
            }
        }
        for (int b = 0; b < bones; ++b) {
            for (int c = 0; c < 4; ++c) {
                const auto bump = [&](double h) {
                    std::vector<UnitQuaternion> q = q_fused;
                    double comps[4] = {q[b].w, q[b].x, q[b].y, q[b].z};
                    comps[c] += h;
                    q[b] = UnitQuaternion::from_components_unchecked(comps[0], comps[1], comps[2],
                                                                     comps[3]);
                    return ada_loss(p_fused, p_gt, q, q_gt, alpha, beta).loss;
                };
                const double fd = (bump(kFdStep) - bump(-kFdStep)) / (2.0 * kFdStep);
                result.max_rel_error =
                    std::max(result.max_rel_error, rel_error(analytic.d_quat[b][c], fd));
            }
        }
    }
    result.pass = result.max_rel_error <= tolerance;
    return result;
}

RoundTripResult roundtrip_suite(const KinematicTree& tree, const RestPose& rest, int trials,
                                std::uint64_t seed) {
    Rng rng(seed);
    RoundTripResult result;
    result.trials = trials;

    const Pose3D identity_pose = fk(PoseParams::identity(tree, rest), rest, tree);
    for (int j = 0; j < tree.joint_count; ++j)
        result.identity_err_mm = std::max(
            result.identity_err_mm, (identity_pose.p[j] - rest.positions.p[j]).norm());

    for (int t = 0; t < trials; ++t) {
        const PoseParams params = random_params(tree, rest, rng);
        const Pose3D pose = fk(params, rest, tree);

        const std::vector<double> lengths = bone_lengths(pose, tree);
        for (int b = 0; b < tree.bone_count(); ++b)
            result.max_len_rel_err =
                std::max(result.max_len_rel_err,
                         std::abs(lengths[b] - rest.bone_length[b]) / rest.bone_length[b]);

        const Pose3D rebuilt = fk(ik(pose, rest, tree), rest, tree);
        for (int j = 0; j < tree.joint_count; ++j)
            result.max_pos_err_mm =
                std::max(result.max_pos_err_mm, (rebuilt.p[j] - pose.p[j]).norm());
    }
    result.pass = result.identity_err_mm <= 1e-9 &&
                  result.max_pos_err_mm <= result.pos_tolerance_mm &&
                  result.max_len_rel_err <= result.len_tolerance;
    return result;
}

}  // namespace kinepose
