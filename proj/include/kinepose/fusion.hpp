#pragma once

// The three fusion algorithms.
//
//  * naive_fuse: threshold screening in euclidean space. IMU bones whose
//    angle to the vision bone exceeds theta_t replace the vision bone vector;
//    positions are rebuilt top-down. Joints with no replaced bone on their
//    root path are left bit-identical to the input.
//  * kine_fuse: the same screening inside the IK loop. The screened bones'
//    total rotations come from the IMU local rotation; the final pose is
//    rebuilt through FK, so every output bone has exact rest length.
//  * AdaDeepFuse: an MLP maps concatenated vision and IMU pose parameters to
//    fused parameters, trained end-to-end through the FK layer with a
//    smoothed-L1 loss on positions plus a weighted smoothed-L1 on
//    hemisphere-aligned quaternion components.

#include <cstdint>
#include <string>
#include <vector>

#include "kinepose/imu.hpp"
#include "kinepose/kinematics.hpp"
#include "kinepose/skeleton.hpp"

namespace kinepose {

// Which vector the screening angle is measured against. Vision is the
// default; Rest matches the alternative reading of the fusion loop and is
// kept for comparison.
enum class ScreenReference { Vision, Rest };

struct FusionConfig {
    double theta_t = 0.25;  // radians
    ScreenReference screen_reference = ScreenReference::Vision;

    // AdaDeepFuse.
    double alpha = 1e-2;          // weight of the parameter loss term
    double smooth_l1_beta = 1.0;
    std::vector<int> mlp_hidden = {256, 256};
    bool residual = true;         // add vision rotations to the MLP output
    double learning_rate = 1e-3;
    int epochs = 40;
    int batch_size = 64;
    double val_fraction = 0.1;    // deterministic tail split
    std::uint64_t seed = 7;
};

struct FuseStats {
    std::vector<int> replaced_joints;  // bone endpoints, ascending
};

Pose3D naive_fuse(const Pose3D& p_vis, const AlignedImu& imu, const KinematicTree& tree,
                  const RestPose& rest, double theta_t, FuseStats* stats = nullptr);

struct KineFuseResult {
    PoseParams params;
    Pose3D pose;
};

KineFuseResult kine_fuse(const Pose3D& p_vis, const AlignedImu& imu, const RestPose& rest,
                         const KinematicTree& tree, double theta_t,
                         ScreenReference ref = ScreenReference::Vision,
                         FuseStats* stats = nullptr);

// ---------------------------------------------------------------------------
// AdaDeepFuse

struct DenseLayer {
    int in = 0, out = 0;
    std::vector<double> w;  // row-major, out x in
    std::vector<double> b;
};

struct AdaFuseModel {
    int bones = 0;    // J - 1
    int sensors = 0;  // K
    bool residual = true;
    std::vector<DenseLayer> layers;  // hidden layers ReLU, final linear

    int input_dim() const { return (bones + sensors) * 4; }
    int output_dim() const { return bones * 4; }
};

// He-initialized hidden layers, zero final layer: with the residual
// connection the initial output equals the vision rotations.
AdaFuseModel make_ada_model(const KinematicTree& tree, const FusionConfig& config);

// MLP forward + per-joint normalization, hemisphere-canonicalized.
std::vector<UnitQuaternion> ada_forward(const AdaFuseModel& model,
                                        const std::vector<UnitQuaternion>& q_vis,
                                        const AlignedImu& imu);

struct AdaLossResult {
    double loss = 0.0;
    double pose_term = 0.0;
    double param_term = 0.0;
    std::vector<Vec3> d_pose;                    // d loss / d p_fused
    std::vector<std::array<double, 4>> d_quat;   // d loss / d q_fused
};

// Smoothed-L1 over position components plus alpha x smoothed-L1 over
// quaternion components, the latter after per-joint hemisphere alignment of
// q_fused against q_gt. Means are taken over components within each term.
AdaLossResult ada_loss(const Pose3D& p_fused, const Pose3D& p_gt,
                       const std::vector<UnitQuaternion>& q_fused,
                       const std::vector<UnitQuaternion>& q_gt, double alpha, double beta);

struct TrainFrame {
    Vec3 t1_vis;
    std::vector<UnitQuaternion> q_vis;  // IK of the vision pose
    AlignedImu imu;
    Pose3D p_gt;
    std::vector<UnitQuaternion> q_gt;   // IK of the ground-truth pose
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double train_mpjpe = 0.0;
    double val_mpjpe = 0.0;
};

struct TrainResult {
    AdaFuseModel model;
    std::vector<EpochLog> log;
};

TrainResult train_ada(const std::vector<TrainFrame>& frames, const KinematicTree& tree,
                      const RestPose& rest, const FusionConfig& config);

void save_checkpoint(const AdaFuseModel& model, const FusionConfig& config,
                     const KinematicTree& tree, const std::string& path);
AdaFuseModel load_checkpoint(const std::string& path, const KinematicTree& tree,
                             FusionConfig* config_out = nullptr);

}  // namespace kinepose
