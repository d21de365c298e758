#pragma once

// Self-check suites behind the gradcheck and roundtrip CLI subcommands:
// analytic FK/loss gradients against central finite differences, and the
// IK/FK position round trip with length conservation.

#include <cstdint>

#include "kinepose/fusion.hpp"
#include "kinepose/kinematics.hpp"
#include "kinepose/rng.hpp"

namespace kinepose {

PoseParams random_params(const KinematicTree& tree, const RestPose& rest, Rng& rng,
                         double max_angle = 2.8, double root_range_mm = 300.0);

struct GradCheckResult {
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    int trials = 0;
    bool pass = false;
};

// d(sum of upstream-weighted positions)/d(params) vs central differences with
// h = 1e-5 on raw components, renormalization inside the forward pass.
GradCheckResult gradcheck_fk(const KinematicTree& tree, const RestPose& rest, int trials,
                             std::uint64_t seed, double tolerance = 1e-5);

// ada_loss position and quaternion gradients vs central differences.
GradCheckResult gradcheck_ada_loss(const KinematicTree& tree, int trials, std::uint64_t seed,
                                   double tolerance = 1e-4);

struct RoundTripResult {
    double identity_err_mm = 0.0;    // fk(identity) vs rest pose
    double max_pos_err_mm = 0.0;     // fk(ik(P)) vs P over fk-generated poses
    double max_len_rel_err = 0.0;    // fk bone lengths vs rest lengths
    int trials = 0;
    double pos_tolerance_mm = 1e-6;
    double len_tolerance = 1e-9;
    bool pass = false;
};

RoundTripResult roundtrip_suite(const KinematicTree& tree, const RestPose& rest, int trials,
                                std::uint64_t seed);

}  // namespace kinepose
