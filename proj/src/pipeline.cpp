#include "kinepose/pipeline.hpp"

namespace kinepose {

std::vector<Pose3D> gt_poses(const SequenceDataset& ds) {
    std::vector<Pose3D> out;
    out.reserve(ds.frames.size());
    for (const auto& f : ds.frames) out.push_back(f.gt_pose);
    return out;
}

std::vector<Pose3D> vision_poses(const SequenceDataset& ds) {
    std::vector<Pose3D> out;
    out.reserve(ds.frames.size());
    for (const auto& f : ds.frames) out.push_back(f.vis_pose);
    return out;
}

FusionRun run_naive(const SequenceDataset& ds, double theta_t) {
    FusionRun run;
    run.fused.reserve(ds.frames.size());
    for (const auto& f : ds.frames) {
        const AlignedImu imu =
            align_frame(f.imu_samples, ds.calibration, ds.skeleton.rest, ds.skeleton.tree);
        FuseStats stats;
        run.fused.push_back(
            naive_fuse(f.vis_pose, imu, ds.skeleton.tree, ds.skeleton.rest, theta_t, &stats));
        run.replaced_bones += static_cast<long>(stats.replaced_joints.size());
    }
    return run;
}

FusionRun run_kine(const SequenceDataset& ds, double theta_t, ScreenReference ref) {
    FusionRun run;
    run.fused.reserve(ds.frames.size());
    for (const auto& f : ds.frames) {
        const AlignedImu imu =
            align_frame(f.imu_samples, ds.calibration, ds.skeleton.rest, ds.skeleton.tree);
        FuseStats stats;
        run.fused.push_back(
            kine_fuse(f.vis_pose, imu, ds.skeleton.rest, ds.skeleton.tree, theta_t, ref, &stats)
                .pose);
        run.replaced_bones += static_cast<long>(stats.replaced_joints.size());
    }
    return run;
}

std::vector<Pose3D> run_ada(const SequenceDataset& ds, const AdaFuseModel& model) {
    std::vector<Pose3D> out;
    out.reserve(ds.frames.size());
    for (const auto& f : ds.frames) {
        const AlignedImu imu =
            align_frame(f.imu_samples, ds.calibration, ds.skeleton.rest, ds.skeleton.tree);
        const PoseParams vis = ik(f.vis_pose, ds.skeleton.rest, ds.skeleton.tree);
        PoseParams fused;
        fused.root_translation = vis.root_translation;  // root passes through from vision
        fused.local_rotations = ada_forward(model, vis.local_rotations, imu);
        out.push_back(fk(fused, ds.skeleton.rest, ds.skeleton.tree));
    }
    return out;
}

std::vector<TrainFrame> prepare_training_frames(const SequenceDataset& ds) {
    std::vector<TrainFrame> out;
    out.reserve(ds.frames.size());
    for (const auto& f : ds.frames) {
        TrainFrame tf;
        const PoseParams vis = ik(f.vis_pose, ds.skeleton.rest, ds.skeleton.tree);
        tf.t1_vis = vis.root_translation;
        tf.q_vis = vis.local_rotations;
        tf.imu = align_frame(f.imu_samples, ds.calibration, ds.skeleton.rest, ds.skeleton.tree);
        tf.p_gt = f.gt_pose;
        tf.q_gt = ik(f.gt_pose, ds.skeleton.rest, ds.skeleton.tree).local_rotations;
        out.push_back(std::move(tf));
    }
    return out;
}

}  // namespace kinepose
