#pragma once

#include "cfrl/config.hpp"
#include "cfrl/sim.hpp"

// Shared test-side oracles.
namespace cfrl::testutil {

using Eigen::VectorXd;

// Scripted near-perfect insertion: servo to a waypoint above the mouth, then
// descend along the slot axis in small guarded increments, backing off when
// deflected. Upper-bound policy for evaluation-quality checks.
inline bool scripted_insertion(sim::Env& env, const config::Config& cfg, uint64_t seed,
                               double noise = 0.0) {
    Rng rng(seed);
    auto [state, obs] = env.reset(seed);
    const Pose slot = state.slot_pose;
    const double goal_depth = cfg.teach.depth_ratio * cfg.scene.slot_depth;
    const Pose waypoint = slot.compose(Pose::planar(0.0, 0.05, 0.0));
    bool descending = false;
    while (!state.terminal) {
        const Pose full = sim::full_grasp(cfg.scene, state.grasp_offset);
        const Pose peg = sim::peg_pose(state.joint_pos, cfg.arm, full);
        const Pose rel = slot.inverse().compose(peg);
        if (!descending) {
            const double err = (peg.translation - waypoint.translation).head<2>().norm();
            const double aerr = std::abs(wrap_angle(peg.planar_angle() - waypoint.planar_angle()));
            if (err < 0.004 && aerr < 0.02) descending = true;
        } else if (rel.translation.y() < 0.02 &&
                   std::abs(rel.translation.x()) > cfg.scene.clearance()) {
            descending = false; // deflected off the opening: back off and retry
        }
        Pose target = waypoint;
        if (descending) {
            // Guarded rail move: small increments keep joint velocities far
            // from the clip so the realized twist tracks the commanded one.
            const double y_next = std::max(-goal_depth - 0.01, rel.translation.y() - 0.015);
            target = slot.compose(Pose::planar(0.0, y_next, 0.0));
        }
        const VectorXd a =
            sim::pbvs_action(state.joint_pos, cfg.arm, full, target, 3.0, noise, rng);
        auto result = env.step(state, a);
        if (result.success) return true;
        state = std::move(result.state);
    }
    return false;
}

} // namespace cfrl::testutil
