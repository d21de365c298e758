#pragma once

// MPJPE metrics with the IMU-related/others joint split, plus the threshold
// and IMU-subset ablation sweeps.
//
// "IMU-related" joints are the endpoints of IMU-assigned bones in the
// skeleton's full sensor map (knees, ankles, elbows, wrists in the default
// profile); "others" is the complement including the root. The split stays
// fixed even when a sweep fuses with a sensor subset. Accumulation order is
// frame-major then joint, so reports are bit-reproducible.

#include <string>
#include <vector>

#include <json.hpp>

#include "kinepose/skeleton.hpp"
#include "kinepose/synth.hpp"

namespace kinepose {

struct MetricsReport {
    std::vector<std::string> joint_names;
    std::vector<double> per_joint_mm;
    double mpjpe_mm = 0.0;
    double imu_related_mm = 0.0;
    double others_mm = 0.0;
    std::vector<int> imu_related_joints;
    int frames = 0;
    nlohmann::json config_echo;
};

MetricsReport mpjpe(const std::vector<Pose3D>& pred, const std::vector<Pose3D>& gt,
                    const KinematicTree& tree, nlohmann::json config_echo = {});

struct SweepRow {
    double theta_t = 0.0;
    MetricsReport report;
    long replaced_bones = 0;  // summed over frames
};

struct SweepTable {
    std::string method;  // "naive" or "kine"
    std::vector<SweepRow> rows;
    int best = -1;  // index of the lowest-MPJPE row
};

SweepTable sweep_theta(const SequenceDataset& ds, const std::string& method,
                       const std::vector<double>& theta_grid,
                       ScreenReference ref = ScreenReference::Vision);

struct ImuSubsetRow {
    std::string label;
    std::vector<int> sensors;
    MetricsReport report;
};

struct ImuSubsetTable {
    double theta_t = 0.0;
    std::vector<ImuSubsetRow> rows;
    std::string note;  // reference pattern from upstream experiments
};

ImuSubsetTable sweep_imu_subsets(const SequenceDataset& ds,
                                 const std::vector<std::pair<std::string, std::vector<int>>>& subsets,
                                 double theta_t);

nlohmann::json report_to_json(const MetricsReport& r);
nlohmann::json sweep_table_to_json(const SweepTable& t);
nlohmann::json imu_subset_table_to_json(const ImuSubsetTable& t);

void write_report_file(const nlohmann::json& payload, const std::string& path);

std::string format_report_table(const MetricsReport& r);
std::string format_sweep_table(const SweepTable& t);
std::string format_imu_subset_table(const ImuSubsetTable& t);

}  // namespace kinepose
