#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "cfrl/pose.hpp"
#include "cfrl/rng.hpp"

// Deterministic planar n-link insertion environment: velocity-controlled arm,
// penalty contact between the grasped peg and the slot walls, joint-torque
// force feedback (tau = J' f), fixed orthographic 48x48 camera.
namespace cfrl::sim {

using Eigen::Matrix3Xd;
using Eigen::Vector2d;
using Eigen::VectorXd;
using Eigen::VectorXf;

constexpr int kImageSize = 48;
constexpr int kImagePixels = kImageSize * kImageSize;

struct ArmConfig {
    int n_joints = 3;
    std::vector<double> link_lengths = {0.45, 0.42, 0.33};
    double joint_velocity_limit = 1.5; // rad/s
    double dt = 1.0 / 30.0;
    double joint_limit = 3.05;         // symmetric, rad
    double link_render_width = 0.05;

    double reach() const;
    void validate() const; // throws std::invalid_argument
};

struct SceneConfig {
    // Slot placement randomization, polar around the arm base. The mouth
    // normal points back toward the base up to +-slot_yaw_range.
    double slot_radius_min = 0.52;
    double slot_radius_max = 0.72;
    double slot_bearing_range = 0.6; // rad
    double slot_yaw_range = 0.4;     // rad

    // Geometry (meters). scale_ratio uniformly scales the cross-section
    // widths (slot opening, peg width); depths and lengths are unscaled.
    double slot_opening_width = 0.07;
    double slot_depth = 0.16;
    double slot_wall_thickness = 0.05;
    double peg_width = 0.05;
    double peg_length = 0.16;
    double scale_ratio = 1.0;

    // Per-episode peg-in-hand perturbation bounds.
    double grasp_offset_trans = 0.010; // m
    double grasp_offset_angle = 0.10;  // rad

    double init_distance_min = 0.20;
    double init_distance_max = 0.40;

    // Success geometry.
    double insertion_depth_ratio = 0.80;
    double success_angle_tol = 0.10; // rad

    // Penalty contact model.
    double contact_stiffness = 600.0;  // N/m
    double contact_damping = 8.0;      // N s/m, tangential viscous term
    double contact_resolve_rate = 0.9; // fraction of penetration removed per substep
    int contact_substeps = 4;

    int max_steps = 300;

    // Fixed orthographic camera (square window, side camera_world_width).
    double camera_center_x = 0.35;
    double camera_center_y = 0.0;
    double camera_world_width = 1.2288; // 25.6 mm/pixel at 48 px

    double opening_width_scaled() const { return slot_opening_width * scale_ratio; }
    double peg_width_scaled() const { return peg_width * scale_ratio; }
    double clearance() const { return 0.5 * (opening_width_scaled() - peg_width_scaled()); }
    double pixel_pitch() const { return camera_world_width / kImageSize; }
    void validate() const;
};

enum class TerminalCause { None, Success, Timeout, BoundViolation };

struct EnvState {
    VectorXd joint_pos;
    VectorXd joint_vel;
    Pose grasp_offset; // peg frame relative to the arm tip, resampled per episode
    Pose slot_pose;
    int step_count = 0;
    bool terminal = false;
    TerminalCause cause = TerminalCause::None;
};

struct Observation {
    VectorXf image;       // kImagePixels grayscale in [0,1], row-major, row 0 on top
    VectorXd joint_pos;   // rad
    VectorXd joint_torque; // N*m, contact-induced
};

// Oriented rectangle, used for contact and rasterization.
struct OrientedRect {
    Vector2d center = Vector2d::Zero();
    double half_along = 0.0;  // half extent along the local x axis
    double half_across = 0.0; // half extent along the local y axis
    double angle = 0.0;
    std::array<Vector2d, 4> corners() const;
    bool contains(const Vector2d& p) const;
};

struct Contact {
    Vector2d normal = Vector2d::Zero(); // unit, pushes the peg out of the wall
    double depth = 0.0;
    Vector2d point = Vector2d::Zero(); // centroid of the overlap polygon
};

// --- kinematics -----------------------------------------------------------

// Tip pose of the planar chain embedded in SE(3): translation (x, y, 0),
// rotation about z by the summed joint angles.
Pose forward_kinematics(const VectorXd& joints, const ArmConfig& arm);

// Joint positions p_0 (base) .. p_n (tip) in the plane.
std::vector<Vector2d> link_points(const VectorXd& joints, const ArmConfig& arm);

// World-frame twist (xdot, ydot, thetadot) of the tip per unit joint velocity.
// Matches central finite differences of forward_kinematics within 1e-6.
Matrix3Xd jacobian(const VectorXd& joints, const ArmConfig& arm);

// Twist of the peg frame (tip composed with the grasp offset).
Matrix3Xd peg_jacobian(const VectorXd& joints, const ArmConfig& arm, const Pose& grasp_offset);

Pose peg_pose(const VectorXd& joints, const ArmConfig& arm, const Pose& grasp_offset);

// The gripper holds the peg at its tail, so the peg frame (origin at the
// tip) sits peg_length ahead of the arm tip; per-episode grasp perturbations
// compose on top of this attachment.
Pose peg_attachment(const SceneConfig& scene);
Pose full_grasp(const SceneConfig& scene, const Pose& grasp_perturbation);

// Damped-least-squares task-space step; never throws near singularities.
VectorXd dls_solve(const Matrix3Xd& jac, const Vec3& twist, double damping = 0.1);

// Iterative IK for a peg target; nullopt if no restart converges. A warm
// start, when given, is tried before the random restarts (it pins the
// solution to the warm start's branch when that one reaches the target).
std::optional<VectorXd> solve_ik(const Pose& peg_target, const ArmConfig& arm,
                                 const Pose& grasp_offset, Rng& rng, int restarts = 8,
                                 int iters = 200, double tol = 1e-4,
                                 const std::optional<VectorXd>& warm_start = std::nullopt);

// --- scene geometry --------------------------------------------------------

// Slot frame: origin at the mouth center, interior along -y, mouth normal +y.
std::array<OrientedRect, 3> slot_wall_rects(const Pose& slot_pose, const SceneConfig& scene);
// Peg frame: origin at the tip, body along +y from the tip.
OrientedRect peg_rect(const Pose& pose, const SceneConfig& scene);

std::vector<Contact> find_contacts(const Pose& peg, const Pose& slot_pose,
                                   const SceneConfig& scene);

// Wrench (f_x, f_y, torque_z) about the peg frame origin. Zero when the peg
// does not overlap any wall; otherwise a linear spring along the
// minimum-translation direction (f = +k*depth*normal, normal pushing the peg
// out) plus a tangential viscous term from the contact-point velocity.
// peg_vel = (vx, vy, omega) of the peg frame; defaults to rest.
Vec3 contact_wrench(const Pose& peg, const Pose& slot_pose, const SceneConfig& scene,
                    const Vec3& peg_vel = Vec3::Zero());

// True iff tip depth >= insertion_depth_ratio * slot_depth, lateral offset
// < clearance, and |relative yaw| < success_angle_tol. `rel` is the peg pose
// expressed in the slot frame (slot_pose^-1 * peg_pose).
bool success_check(const Pose& rel, const SceneConfig& scene);

// Tip depth inside the slot (0 when outside), lateral offset and relative
// yaw, from the slot-frame peg pose; shared by success_check and the oracle
// reward.
struct InsertionCoords {
    double depth = 0.0;
    double lateral = 0.0;
    double yaw = 0.0;
    double mouth_distance = 0.0; // tip to mouth center
};
InsertionCoords insertion_coords(const Pose& rel, const SceneConfig& scene);

// --- environment -----------------------------------------------------------

class Env {
public:
    Env(ArmConfig arm, SceneConfig scene);

    // Deterministic given seed; peg-tip-to-mouth distance lands in
    // [init_distance_min, init_distance_max]. Throws std::runtime_error if
    // bounded rejection sampling cannot place the scene.
    std::pair<EnvState, Observation> reset(uint64_t seed);

    // Velocity command for one control period. Clips to the velocity limit,
    // integrates in substeps with penetration resolution, reports contact
    // torques, evaluates success and timeout.
    struct StepResult {
        EnvState state;
        Observation obs;
        bool success = false;
    };
    StepResult step(const EnvState& state, const VectorXd& action) const;

    Observation observe(const EnvState& state) const;

    const ArmConfig& arm() const { return arm_; }
    const SceneConfig& scene() const { return scene_; }

private:
    ArmConfig arm_;
    SceneConfig scene_;
};

VectorXf render(const EnvState& state, const ArmConfig& arm, const SceneConfig& scene);

// Noisy proportional task-space controller used for offline collection.
// Gaussian noise of scale noise_scale is added per joint; the command is
// clipped to the velocity limit.
VectorXd pbvs_action(const VectorXd& joints, const ArmConfig& arm, const Pose& grasp_offset,
                     const Pose& peg_target, double gain, double noise_scale, Rng& rng);

// P5 PGM frame dump used by the replay CLI.
void write_pgm(const VectorXf& image, const std::string& path);

} // namespace cfrl::sim
