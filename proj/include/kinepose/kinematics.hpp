#pragma once

// The two parameter-free layers: forward kinematics with analytic gradients,
// and the canonical axis-angle inverse-kinematics solve.
//
// FK accumulates one total rotation per joint down the tree:
//
//     G_root = identity
//     G_j    = G_pa(j) * rel_j * q_j        (rel_j = relative_rest_rotation(j)^-1)
//     bone_j = rotate(G_j, rest.bone_local[j])
//     p_j    = p_pa(j) + bone_j,  p_root = T_1
//
// Algebraically identical to expanding the full per-joint product of rest
// relative rotations interleaved with pose rotations; with identity params
// the rel_j factors telescope into the rest frames, so fk(identity) is
// exactly the rest pose. Each pose rotation q_j is expressed in joint j's
// local frame and moves the bone that ends at j.
//
// IK solves the same recursion in reverse: the canonical total rotation per
// bone comes from canonical_solve (cross-product axis, vector angle), then
// ancestor rest and pose rotations are unwound to recover the local q_j.
// Twist about the bone axis is unobservable from positions, so recovered
// parameters are twist-free; positions of length-consistent poses round-trip.

#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "kinepose/skeleton.hpp"

namespace kinepose {

struct PoseParams {
    Vec3 root_translation;                    // T_1, mm
    std::vector<UnitQuaternion> local_rotations;  // per non-root joint

    static PoseParams identity(const KinematicTree& tree, const RestPose& rest) {
        PoseParams p;
        p.root_translation = rest.positions.p[tree.root];
        p.local_rotations.assign(tree.bone_count(), UnitQuaternion::identity());
        return p;
    }
};

// Gradients of a scalar loss, contracted with the upstream d(loss)/d(positions).
// Quaternion gradients are taken in the ambient 4-space (w,x,y,z), with the
// forward pass's renormalization included in the chain.
struct FkGradients {
    Vec3 root_translation;
    std::vector<std::array<double, 4>> local_rotations;
};

Pose3D fk(const PoseParams& params, const RestPose& rest, const KinematicTree& tree);

// The accumulated total rotation per bone (the chain product above), indexed
// by non_root_index. rotate(total[j], rest.bone_local[j]) is the current
// global bone vector.
std::vector<UnitQuaternion> fk_total_rotations(const PoseParams& params, const RestPose& rest,
                                               const KinematicTree& tree);

FkGradients fk_backward(const PoseParams& params, const RestPose& rest,
                        const KinematicTree& tree, const std::vector<Vec3>& upstream_grad);

// Rotation taking the direction of b_ref onto the direction of b_cur:
// axis = normalize(b_ref x b_cur), angle = angle_between(b_ref, b_cur).
// Parallel inputs return angle 0 about (0,0,1); antiparallel inputs return
// angle pi about a deterministic perpendicular axis (the normalized rejection
// of the smallest-|component| basis vector from b_ref).
AxisAngle canonical_solve(const Vec3& b_ref, const Vec3& b_cur);

PoseParams ik(const Pose3D& pose, const RestPose& rest, const KinematicTree& tree);

// IK body with a per-bone hook that may replace the canonical total rotation
// (the fused-rotation branch of the kinematic fusion loop). The hook receives
// the joint index and the input bone vector; returning nullopt keeps the
// canonical solution. With a hook that always declines, this is exactly ik().
using TotalRotationOverride =
    std::function<std::optional<UnitQuaternion>(int joint, const Vec3& vis_bone)>;

PoseParams ik_with_override(const Pose3D& pose, const RestPose& rest,
                            const KinematicTree& tree, const TotalRotationOverride& override_fn);

}  // namespace kinepose
