#pragma once

// Kinematic tree topology, rest T-pose geometry, rest local frames, and the
// relative rest rotations between adjacent frames.
//
// Rest frames are stored as frame_global_to_local[j]: the rotation carrying
// global coordinates into joint j's local system. The root frame is fixed to
// identity. With the default (all-identity) frames, local rest bone vectors
// coincide with global rest bone vectors.

#include <optional>
#include <string>
#include <vector>

#include "kinepose/quat.hpp"

namespace kinepose {

struct ImuAssignment {
    int joint = -1;   // bone endpoint (non-root joint)
    int sensor = -1;  // sensor id, distinct, 1-based by convention
};

struct KinematicTree {
    int joint_count = 0;
    std::vector<int> parent;        // -1 for the root
    std::vector<std::string> names;
    std::vector<ImuAssignment> imus;  // sorted by sensor id

    int root = -1;
    std::vector<int> topo_order;      // parents precede children; starts at root
    std::vector<int> non_root_index;  // joint -> index into per-bone arrays; -1 at root

    bool is_root(int j) const { return j == root; }
    int bone_count() const { return joint_count - 1; }

    // Sensor id -> endpoint joint; throws on unknown sensor.
    int joint_of_sensor(int sensor) const;
    // Endpoint joint -> sensor id, if any.
    std::optional<int> sensor_of_joint(int joint) const;
    // Endpoint joints of all IMU-assigned bones, ascending joint index.
    std::vector<int> imu_joints() const;
};

struct Pose3D {
    std::vector<Vec3> p;  // mm, global frame

    int joints() const { return static_cast<int>(p.size()); }
};

struct RestPose {
    Pose3D positions;  // the T-pose
    // Per-joint q_j^g (global -> local); identity at the root.
    std::vector<UnitQuaternion> frame_global_to_local;
    // Derived, per non-root joint (indexed by non_root_index).
    std::vector<Vec3> bone_local;      // rest bone vector in the joint's local frame, mm
    std::vector<double> bone_length;   // mm
};

KinematicTree build_tree(const std::vector<int>& parents,
                         const std::vector<std::string>& names,
                         const std::vector<ImuAssignment>& imu_assignments);

// Derives local bones and lengths; frames default to identity when empty.
RestPose build_rest_pose(const KinematicTree& tree, const Pose3D& t_pose,
                         std::vector<UnitQuaternion> frames = {});

// Ordered immediate parent -> root; empty for the root.
std::vector<int> ancestor_chain(const KinematicTree& tree, int j);

// The relative rest rotation q_j^g * (q_pa(j)^g)^-1 (parent-local -> j-local).
UnitQuaternion relative_rest_rotation(const KinematicTree& tree, const RestPose& rest, int j);

// ||p_j - p_pa(j)|| per non-root joint, ordered by non_root_index.
std::vector<double> bone_lengths(const Pose3D& pose, const KinematicTree& tree);

struct Skeleton {
    KinematicTree tree;
    RestPose rest;
};

// Built-in 16-joint / 8-IMU profile (ships as configs/skeleton16.json too).
Skeleton default_skeleton();

Skeleton load_skeleton_file(const std::string& path);
void save_skeleton_file(const Skeleton& skel, const std::string& path);

}  // namespace kinepose
