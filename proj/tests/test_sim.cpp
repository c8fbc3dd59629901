#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "cfrl/config.hpp"
#include "cfrl/sim.hpp"

#include "helpers.hpp"

using namespace cfrl;
using Eigen::Vector2d;
using Eigen::VectorXd;

namespace {

sim::ArmConfig two_link(double l0 = 1.0, double l1 = 1.0) {
    sim::ArmConfig arm;
    arm.n_joints = 2;
    arm.link_lengths = {l0, l1};
    arm.joint_limit = M_PI;
    return arm;
}

config::Config default_cfg() { return config::default_config(); }

} // namespace

TEST_CASE("forward kinematics matches the planar chain") {
    const auto arm = two_link();
    VectorXd q(2);
    q << 0.0, 0.0;
    Pose p = sim::forward_kinematics(q, arm);
    CHECK(p.translation.isApprox(Vec3(2.0, 0.0, 0.0), 1e-12));
    CHECK(p.planar_angle() == doctest::Approx(0.0));

    q << M_PI_2, 0.0;
    p = sim::forward_kinematics(q, arm);
    CHECK(p.translation.x() == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(p.translation.y() == doctest::Approx(2.0));
}

TEST_CASE("jacobian matches central finite differences") {
    sim::ArmConfig arm;
    arm.n_joints = 3;
    arm.link_lengths = {0.8, 0.5, 0.3};
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        VectorXd q(3);
        for (int i = 0; i < 3; ++i) q[i] = rng.uniform(-2.5, 2.5);
        const auto jac = sim::jacobian(q, arm);
        const double h = 1e-6;
        for (int j = 0; j < 3; ++j) {
            VectorXd qp = q, qm = q;
            qp[j] += h;
            qm[j] -= h;
            const Pose pp = sim::forward_kinematics(qp, arm);
            const Pose pm = sim::forward_kinematics(qm, arm);
            CHECK(jac(0, j) ==
                  doctest::Approx((pp.translation.x() - pm.translation.x()) / (2 * h)).epsilon(1e-5));
            CHECK(jac(1, j) ==
                  doctest::Approx((pp.translation.y() - pm.translation.y()) / (2 * h)).epsilon(1e-5));
            CHECK(jac(2, j) ==
                  doctest::Approx(wrap_angle(pp.planar_angle() - pm.planar_angle()) / (2 * h))
                      .epsilon(1e-5));
        }
    }
}

TEST_CASE("jacobian of the extended arm has last column (0, l_n, 1)") {
    const auto arm = two_link(1.0, 0.75);
    VectorXd q = VectorXd::Zero(2); // extended along +x: world frame aligns with the tip frame
    const auto jac = sim::jacobian(q, arm);
    CHECK(jac(0, 1) == doctest::Approx(0.0));
    CHECK(jac(1, 1) == doctest::Approx(0.75));
    CHECK(jac(2, 1) == doctest::Approx(1.0));
}

TEST_CASE("jacobian with zero-length links has zero translational rows") {
    sim::ArmConfig arm;
    arm.n_joints = 2;
    arm.link_lengths = {0.0, 0.0};
    VectorXd q(2);
    q << 0.3, -0.7;
    const auto jac = sim::jacobian(q, arm);
    CHECK(jac.topRows(2).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    CHECK(jac.row(2).minCoeff() == doctest::Approx(1.0));
}

TEST_CASE("contact wrench: zero without overlap, lateral symmetry on the bottom wall") {
    const auto cfg = default_cfg();
    const Pose slot = Pose::identity();

    const Pose centered = Pose::planar(0.0, -0.02, 0.0);
    CHECK(sim::contact_wrench(centered, slot, cfg.scene).norm() == doctest::Approx(0.0));

    const Pose bottomed = Pose::planar(0.0, -(cfg.scene.slot_depth + 0.01), 0.0);
    const Vec3 w = sim::contact_wrench(bottomed, slot, cfg.scene);
    CHECK(w[0] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(w[1] > 0.0);
}

TEST_CASE("left-wall penetration produces f_x = +k * depth") {
    const auto cfg = default_cfg();
    const sim::SceneConfig& sc = cfg.scene;
    const Pose slot = Pose::identity();
    const double d = 0.004;
    // Peg mid-depth, left edge penetrating the left wall by d.
    const Pose pegged =
        Pose::planar(-sc.opening_width_scaled() / 2 + sc.peg_width_scaled() / 2 - d, -0.08, 0.0);
    const Vec3 w = sim::contact_wrench(pegged, slot, sc);
    CHECK(w[0] == doctest::Approx(sc.contact_stiffness * d).epsilon(1e-6));
    CHECK(w[1] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("success geometry: thresholds, boundaries, monotone in depth") {
    const auto cfg = default_cfg();
    const sim::SceneConfig& sc = cfg.scene;
    const double dth = sc.insertion_depth_ratio * sc.slot_depth;

    CHECK(sim::success_check(Pose::planar(0.0, -dth - 0.01, 0.0), sc));
    CHECK(sim::success_check(Pose::planar(0.0, -dth, 0.0), sc)); // inclusive threshold
    CHECK_FALSE(sim::success_check(Pose::planar(0.0, -dth + 1e-9, 0.0), sc));
    CHECK_FALSE(sim::success_check(Pose::planar(0.0, 0.30, 0.0), sc));
    CHECK_FALSE(sim::success_check(Pose::planar(sc.clearance() + 1e-6, -dth - 0.01, 0.0), sc));
    CHECK_FALSE(sim::success_check(Pose::planar(0.0, -dth - 0.01, 0.12), sc));

    bool seen_true = false;
    for (double depth = 0.0; depth <= sc.slot_depth; depth += 0.002) {
        const bool ok = sim::success_check(Pose::planar(0.003, -depth, 0.05), sc);
        if (seen_true) CHECK(ok);
        seen_true = seen_true || ok;
    }
    CHECK(seen_true);
}

TEST_CASE("env reset: determinism, distance bounds, zero grasp range") {
    const auto cfg = default_cfg();
    sim::Env env(cfg.arm, cfg.scene);

    auto [s1, o1] = env.reset(42);
    auto [s2, o2] = env.reset(42);
    CHECK(s1.joint_pos == s2.joint_pos);
    CHECK(std::memcmp(o1.image.data(), o2.image.data(), sizeof(float) * sim::kImagePixels) == 0);
    CHECK(s1.slot_pose.translation == s2.slot_pose.translation);

    for (uint64_t seed = 0; seed < 1000; ++seed) {
        auto [st, obs] = env.reset(seed);
        const Pose peg =
            sim::peg_pose(st.joint_pos, cfg.arm, sim::full_grasp(cfg.scene, st.grasp_offset));
        const double dist = (peg.translation - st.slot_pose.translation).head<2>().norm();
        REQUIRE(dist >= cfg.scene.init_distance_min - 1e-12);
        REQUIRE(dist <= cfg.scene.init_distance_max + 1e-12);
    }

    sim::SceneConfig no_grasp = cfg.scene;
    no_grasp.grasp_offset_trans = 0.0;
    no_grasp.grasp_offset_angle = 0.0;
    sim::Env env2(cfg.arm, no_grasp);
    auto [s3, o3] = env2.reset(7);
    CHECK(s3.grasp_offset.translation.norm() == doctest::Approx(0.0));
    CHECK(s3.grasp_offset.planar_angle() == doctest::Approx(0.0));
}

TEST_CASE("env step: clipping, fixed point, contract errors, torque consistency") {
    const auto cfg = default_cfg();
    sim::Env env(cfg.arm, cfg.scene);
    auto [state, obs] = env.reset(3);

    auto r0 = env.step(state, VectorXd::Zero(3));
    CHECK((r0.state.joint_pos - state.joint_pos).norm() == doctest::Approx(0.0));
    CHECK(r0.obs.joint_torque.norm() == doctest::Approx(0.0));

    VectorXd big = VectorXd::Zero(3);
    big[0] = 10.0;
    auto r1 = env.step(state, big);
    CHECK(r1.state.joint_pos[0] - state.joint_pos[0] ==
          doctest::Approx(cfg.arm.joint_velocity_limit * cfg.arm.dt).epsilon(1e-9));

    VectorXd nan_action = VectorXd::Zero(3);
    nan_action[1] = std::nan("");
    CHECK_THROWS(env.step(state, nan_action));

    sim::EnvState terminal = state;
    terminal.terminal = true;
    CHECK_THROWS_AS(env.step(terminal, VectorXd::Zero(3)), std::logic_error);

    Rng rng(5);
    auto st = state;
    for (int i = 0; i < 40 && !st.terminal; ++i) {
        VectorXd a(3);
        for (int k = 0; k < 3; ++k) a[k] = rng.uniform(-1.5, 1.5);
        auto res = env.step(st, a);
        const Pose full = sim::full_grasp(cfg.scene, res.state.grasp_offset);
        const auto jac = sim::peg_jacobian(res.state.joint_pos, cfg.arm, full);
        const Pose peg = sim::peg_pose(res.state.joint_pos, cfg.arm, full);
        const Vec3 vel = jac * res.state.joint_vel;
        const Vec3 wrench = sim::contact_wrench(peg, res.state.slot_pose, cfg.scene, vel);
        CHECK((res.obs.joint_torque - jac.transpose() * wrench).norm() ==
              doctest::Approx(0.0).epsilon(1e-12));
        st = res.state;
    }
}

TEST_CASE("peg driven into a wall produces nonzero torque") {
    const auto cfg = default_cfg();
    sim::Env env(cfg.arm, cfg.scene);
    bool found = false;
    for (uint64_t seed = 0; seed < 12 && !found; ++seed) {
        auto [state, obs] = env.reset(seed);
        Rng rng(seed);
        for (int i = 0; i < 250 && !state.terminal; ++i) {
            const Pose full = sim::full_grasp(cfg.scene, state.grasp_offset);
            // Aim the tip at a wall interior point, off the opening axis.
            const Pose target = state.slot_pose.compose(Pose::planar(0.06, -0.08, 0.0));
            const VectorXd a =
                sim::pbvs_action(state.joint_pos, cfg.arm, full, target, 3.0, 0.0, rng);
            auto res = env.step(state, a);
            const Pose peg = sim::peg_pose(res.state.joint_pos, cfg.arm,
                                           sim::full_grasp(cfg.scene, res.state.grasp_offset));
            const auto contacts = sim::find_contacts(peg, res.state.slot_pose, cfg.scene);
            if (!contacts.empty()) {
                CHECK(res.obs.joint_torque.cwiseAbs().maxCoeff() > 1e-6);
                found = true;
                break;
            }
            state = res.state;
        }
    }
    CHECK(found);
}

TEST_CASE("render: palette, determinism, empty scene, pixel shift") {
    const auto cfg = default_cfg();
    sim::Env env(cfg.arm, cfg.scene);
    auto [state, obs] = env.reset(9);

    for (int i = 0; i < sim::kImagePixels; ++i) {
        const float v = obs.image[i];
        CHECK((v == 0.0f || v == 0.35f || v == 0.6f || v == 1.0f));
    }
    const auto again = sim::render(state, cfg.arm, cfg.scene);
    CHECK(std::memcmp(again.data(), obs.image.data(), sizeof(float) * sim::kImagePixels) == 0);

    sim::SceneConfig empty = cfg.scene;
    empty.peg_width = 0.0;
    empty.peg_length = 0.0;
    empty.slot_opening_width = 0.0;
    empty.slot_wall_thickness = 0.0;
    empty.slot_depth = 0.0;
    sim::ArmConfig no_arm = cfg.arm;
    no_arm.link_render_width = 0.0;
    const auto blank = sim::render(state, no_arm, empty);
    CHECK(blank.maxCoeff() == doctest::Approx(0.0));

    // Translating the peg by exactly one pixel pitch shifts the peg mask by
    // exactly one column (joints zeroed so the tip frame is axis-aligned;
    // slot and arm hidden).
    sim::ArmConfig invisible_arm = cfg.arm;
    invisible_arm.link_render_width = 0.0;
    sim::EnvState a = state;
    a.slot_pose = Pose::planar(10.0, 10.0, 0.0);
    a.joint_pos = VectorXd::Zero(3);
    a.joint_pos << M_PI_2, -M_PI_2, 0.0; // tip at (0.65, 0.40), tip angle 0
    a.grasp_offset = Pose::planar(0.351 * cfg.scene.pixel_pitch(), 0.0, 0.0);
    sim::EnvState b = a;
    b.grasp_offset = Pose::planar(1.351 * cfg.scene.pixel_pitch(), 0.0, 0.0);
    const auto img_a = sim::render(a, invisible_arm, cfg.scene);
    const auto img_b = sim::render(b, invisible_arm, cfg.scene);
    CHECK(img_a.maxCoeff() == 1.0f);
    int mismatches = 0;
    for (int row = 0; row < sim::kImageSize; ++row)
        for (int col = 0; col + 1 < sim::kImageSize; ++col) {
            const bool shifted = img_b[row * sim::kImageSize + col + 1] == 1.0f;
            const bool original = img_a[row * sim::kImageSize + col] == 1.0f;
            if (shifted != original) ++mismatches;
        }
    CHECK(mismatches == 0);
}

TEST_CASE("pbvs: zero error, error reduction, reproducibility, convergence") {
    const auto cfg = default_cfg();
    sim::Env env(cfg.arm, cfg.scene);
    auto [state, obs] = env.reset(21);
    const Pose full = sim::full_grasp(cfg.scene, state.grasp_offset);
    const Pose cur = sim::peg_pose(state.joint_pos, cfg.arm, full);

    Rng rng(1);
    CHECK(sim::pbvs_action(state.joint_pos, cfg.arm, full, cur, 2.0, 0.0, rng).norm() ==
          doctest::Approx(0.0).epsilon(1e-9));

    const Pose target = Pose::planar(cur.translation.x() + 0.05, cur.translation.y() - 0.03,
                                     cur.planar_angle() + 0.1);
    const VectorXd a = sim::pbvs_action(state.joint_pos, cfg.arm, full, target, 2.0, 0.0, rng);
    auto res = env.step(state, a);
    const Pose after = sim::peg_pose(res.state.joint_pos, cfg.arm,
                                     sim::full_grasp(cfg.scene, res.state.grasp_offset));
    const double before_err = (target.translation - cur.translation).head<2>().norm();
    const double after_err = (target.translation - after.translation).head<2>().norm();
    CHECK(after_err < before_err);

    Rng r1(77), r2(77);
    const VectorXd n1 = sim::pbvs_action(state.joint_pos, cfg.arm, full, target, 2.0, 0.5, r1);
    const VectorXd n2 = sim::pbvs_action(state.joint_pos, cfg.arm, full, target, 2.0, 0.5, r2);
    CHECK((n1 - n2).norm() == doctest::Approx(0.0));

    for (uint64_t seed = 100; seed < 115; ++seed) {
        auto [st, o] = env.reset(seed);
        const Pose pre = st.slot_pose.compose(Pose::planar(0.0, 0.05, 0.0));
        double err = 1e9;
        Rng r(seed);
        for (int i = 0; i < 300 && !st.terminal; ++i) {
            const Pose fg = sim::full_grasp(cfg.scene, st.grasp_offset);
            const VectorXd act = sim::pbvs_action(st.joint_pos, cfg.arm, fg, pre, 2.0, 0.0, r);
            auto rr = env.step(st, act);
            st = rr.state;
            const Pose peg =
                sim::peg_pose(st.joint_pos, cfg.arm, sim::full_grasp(cfg.scene, st.grasp_offset));
            err = (peg.translation - pre.translation).head<2>().norm();
            if (err < 1e-3) break;
        }
        CHECK(err < 1e-3);
    }
}

TEST_CASE("scripted two-phase insertion succeeds almost always") {
    const auto cfg = default_cfg();
    sim::Env env(cfg.arm, cfg.scene);
    int ok = 0;
    const int trials = 40;
    for (int t = 0; t < trials; ++t) ok += testutil::scripted_insertion(env, cfg, 1000 + t) ? 1 : 0;
    CHECK(static_cast<double>(ok) / trials >= 0.95);
}

TEST_CASE("timeout terminates episodes") {
    auto cfg = default_cfg();
    cfg.scene.max_steps = 5;
    sim::Env env(cfg.arm, cfg.scene);
    auto [state, obs] = env.reset(2);
    for (int i = 0; i < 5; ++i) {
        auto r = env.step(state, VectorXd::Zero(3));
        state = r.state;
    }
    CHECK(state.terminal);
    CHECK(state.cause == sim::TerminalCause::Timeout);
}
