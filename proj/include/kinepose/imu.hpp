#pragma once

// IMU raw-data calibration and IMU-vision alignment.
//
// Raw sensor output q_k integrates gyro data from the sensor's reference
// frame. Calibration composes the two fixed offsets into the global bone
// rotation:
//
//     q_k_imu = inv(q_kb) * q_kg * q_k
//
// Alignment converts that into the two homogeneous representations used by
// the fusion stage: the local rotation q_bar = q_k_imu * inv(q_j^g), and the
// predicted bone vector b_imu = rotate(q_bar, rest.bone_local[j]). With
// noise-free sensors, q_bar equals the FK total rotation of the bone, so
// b_imu reproduces the true global bone vector exactly.

#include <vector>

#include "kinepose/skeleton.hpp"

namespace kinepose {

struct ImuSample {
    int sensor = -1;
    UnitQuaternion orientation;  // raw reference-frame-to-current rotation
};

struct SensorCalibration {
    int sensor = -1;
    UnitQuaternion imu_bone_offset;        // q_kb
    UnitQuaternion imu_ref_global_offset;  // q_kg
};

struct CalibrationSet {
    std::vector<SensorCalibration> sensors;  // sorted by sensor id

    const SensorCalibration& find(int sensor) const;
};

struct AlignedSensor {
    int sensor = -1;
    int joint = -1;                // bone endpoint
    UnitQuaternion rotation_global;  // q_k^imu
    UnitQuaternion rotation_local;   // q_bar_k^imu
    Vec3 bone_mm;                    // b_k^imu, global frame
};

using AlignedImu = std::vector<AlignedSensor>;

UnitQuaternion calibrate(const ImuSample& sample, const CalibrationSet& cal);

UnitQuaternion to_local(const UnitQuaternion& q_global, const RestPose& rest,
                        const KinematicTree& tree, int joint);

Vec3 to_bone_vector(const UnitQuaternion& q_local, const RestPose& rest,
                    const KinematicTree& tree, int joint);

// Full per-frame pipeline: calibrate every sample, then align. Result is
// sorted by sensor id.
AlignedImu align_frame(const std::vector<ImuSample>& samples, const CalibrationSet& cal,
                       const RestPose& rest, const KinematicTree& tree);

}  // namespace kinepose
