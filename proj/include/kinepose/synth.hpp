#pragma once

// Seeded synthetic motion, vision noise, and drifting IMU streams, plus the
// dataset file format (line-delimited JSON records; see docs/FORMATS.md).
//
// All generators are pure functions of (config, seed): the RNG is mt19937_64
// with the explicit value mappings in rng.hpp, so a dataset regenerates
// byte-identically from its provenance record.

#include <cstdint>
#include <string>
#include <vector>

#include "kinepose/imu.hpp"
#include "kinepose/kinematics.hpp"
#include "kinepose/rng.hpp"
#include "kinepose/skeleton.hpp"

namespace kinepose {

struct MotionConfig {
    // Per-joint swing: bounded random walk in rotation-vector space.
    double step_sigma = 0.025;   // rad/frame
    double step_cap = 0.08;      // rad, hard cap on one swing step
    double amp_cap = 0.8;        // rad, cap on the swing rotation magnitude
    // Twist about each bone's own axis, walked separately.
    double twist_step_sigma = 0.015;  // rad/frame
    double twist_step_cap = 0.05;     // rad
    double twist_amp_cap = 0.6;       // rad
    // Root translation walk around the rest root.
    double root_step_sigma = 4.0;  // mm/frame
    double root_amp_cap = 250.0;   // mm
    int burn_in = 100;             // steps taken before the first emitted frame
};

struct NoiseConfig {
    double vision_jitter_sigma = 0.0;  // mm, isotropic, all joints
    double occlusion_prob = 0.0;       // per limb joint per frame
    double occlusion_sigma = 0.0;      // mm, spike magnitude
    double bone_scale_sigma = 0.0;     // multiplicative length noise
    double imu_drift_rate = 0.0;       // rad/frame random-walk step std
    std::uint64_t seed = 0;
};

struct FrameRecord {
    int index = 0;
    int sequence = 0;
    PoseParams gt_params;
    Pose3D gt_pose;
    Pose3D vis_pose;
    std::vector<ImuSample> imu_samples;  // sorted by sensor
};

struct SequenceDataset {
    Skeleton skeleton;
    CalibrationSet calibration;
    std::vector<FrameRecord> frames;
    // Provenance.
    std::uint64_t seed = 0;
    int sequences = 1;
    int frames_per_sequence = 0;
    MotionConfig motion;
    NoiseConfig noise;
    std::string generator = "kinepose-synth/1";
};

// Temporally smooth random motion; deterministic per seed. Swing steps are
// norm-capped so consecutive-frame rotation deltas never exceed
// step_cap + twist_step_cap.
std::vector<PoseParams> generate_motion(const KinematicTree& tree, const RestPose& rest,
                                        int n_frames, std::uint64_t seed,
                                        const MotionConfig& config = {});

// Jitter on all joints, occlusion spikes on IMU-limb joints, multiplicative
// bone-length noise. Stages whose parameter is zero are skipped, so the
// zero-noise output is bit-identical to the input.
Pose3D simulate_vision(const Pose3D& gt_pose, const KinematicTree& tree,
                       const NoiseConfig& noise, Rng& rng);

// Per-sensor drift state for one sequence.
struct ImuDriftState {
    std::vector<UnitQuaternion> drift;  // per sensor, identity at start
};

// Inverts the calibration composition so that calibrate() recovers the true
// global bone rotation when drift is zero; otherwise the accumulated
// random-walk rotation is left-composed onto the truth.
std::vector<ImuSample> simulate_imu(const PoseParams& gt_params, const RestPose& rest,
                                    const KinematicTree& tree, const CalibrationSet& cal,
                                    double drift_rate, ImuDriftState& state, Rng& rng);

CalibrationSet random_calibration(const KinematicTree& tree, Rng& rng);
CalibrationSet identity_calibration(const KinematicTree& tree);

// Full generator: `sequences` independently seeded motion/noise streams with
// a single calibration set, concatenated into one dataset.
SequenceDataset make_dataset(const Skeleton& skeleton, int sequences, int frames_per_sequence,
                             std::uint64_t seed, const MotionConfig& motion,
                             const NoiseConfig& noise);

void write_dataset(const SequenceDataset& ds, const std::string& path);
SequenceDataset read_dataset(const std::string& path);

}  // namespace kinepose
