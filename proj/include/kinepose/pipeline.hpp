#pragma once

// Dataset-level runs of the fusion methods: per-frame IMU alignment, vision
// IK, fusion, and FK rebuild, over a whole SequenceDataset.

#include <vector>

#include "kinepose/fusion.hpp"
#include "kinepose/synth.hpp"

namespace kinepose {

std::vector<Pose3D> gt_poses(const SequenceDataset& ds);
std::vector<Pose3D> vision_poses(const SequenceDataset& ds);

struct FusionRun {
    std::vector<Pose3D> fused;
    long replaced_bones = 0;
};

FusionRun run_naive(const SequenceDataset& ds, double theta_t);
FusionRun run_kine(const SequenceDataset& ds, double theta_t,
                   ScreenReference ref = ScreenReference::Vision);
std::vector<Pose3D> run_ada(const SequenceDataset& ds, const AdaFuseModel& model);

// Per-frame (Q_vis, Q_imu, Q_gt, P_gt) tuples: vision and ground-truth poses
// through the IK layer, IMU samples calibrated and aligned.
std::vector<TrainFrame> prepare_training_frames(const SequenceDataset& ds);

}  // namespace kinepose
