#include "kinepose/imu.hpp"

#include <algorithm>

#include "kinepose/error.hpp"

namespace kinepose {

const SensorCalibration& CalibrationSet::find(int sensor) const {
    for (const auto& s : sensors)
        if (s.sensor == sensor) return s;
    throw Error(ErrorCode::UnknownSensor,
                "no calibration for sensor " + std::to_string(sensor));
}

UnitQuaternion calibrate(const ImuSample& sample, const CalibrationSet& cal) {
    const SensorCalibration& c = cal.find(sample.sensor);
    return quat_mul(quat_inv(c.imu_bone_offset),
                    quat_mul(c.imu_ref_global_offset, sample.orientation));
}

UnitQuaternion to_local(const UnitQuaternion& q_global, const RestPose& rest,
                        const KinematicTree& tree, int joint) {
    if (joint < 0 || joint >= tree.joint_count || tree.is_root(joint))
        throw Error(ErrorCode::InvalidArgument, "to_local requires a non-root joint");
    return quat_mul(q_global, quat_inv(rest.frame_global_to_local[joint]));
}

Vec3 to_bone_vector(const UnitQuaternion& q_local, const RestPose& rest,
                    const KinematicTree& tree, int joint) {
    if (joint < 0 || joint >= tree.joint_count || tree.is_root(joint))
        throw Error(ErrorCode::InvalidArgument, "to_bone_vector requires a non-root joint");
    return quat_rotate_vec(q_local, rest.bone_local[tree.non_root_index[joint]]);
}

AlignedImu align_frame(const std::vector<ImuSample>& samples, const CalibrationSet& cal,
                       const RestPose& rest, const KinematicTree& tree) {
    AlignedImu out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        AlignedSensor a;
        a.sensor = s.sensor;
        a.joint = tree.joint_of_sensor(s.sensor);
        a.rotation_global = calibrate(s, cal);
        a.rotation_local = to_local(a.rotation_global, rest, tree, a.joint);
        a.bone_mm = to_bone_vector(a.rotation_local, rest, tree, a.joint);
        out.push_back(a);
    }
    std::sort(out.begin(), out.end(),
              [](const AlignedSensor& a, const AlignedSensor& b) { return a.sensor < b.sensor; });
    return out;
}

}  // namespace kinepose
