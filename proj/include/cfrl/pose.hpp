#pragma once

#include <Eigen/Dense>

namespace cfrl {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Rigid transform: rotation + translation in meters.
struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static Pose identity() { return Pose{}; }

    // Planar pose embedded in SE(3): rotation about z, translation (x, y, 0).
    static Pose planar(double x, double y, double angle);

    Pose compose(const Pose& other) const;   // this * other
    Pose inverse() const;
    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

    double planar_angle() const;             // rotation angle about z, in (-pi, pi]
    bool is_valid(double tol = 1e-9) const;  // R'R = I, det R = 1
};

// Axis-angle decomposition of a rotation matrix. theta in [0, pi], u unit.
// theta == 0 returns u = (0, 0, 1) by convention; theta near pi is recovered
// from the symmetric part of R. Throws std::invalid_argument on non-rotations.
void axis_angle(const Mat3& r, double& theta, Vec3& u);

// Rodrigues' formula: rotation by theta about unit axis u.
Mat3 axis_angle_to_matrix(double theta, const Vec3& u);

// Unit quaternion (w, x, y, z) with w >= 0; used in on-disk pose records.
Eigen::Vector4d rotation_to_quat_wxyz(const Mat3& r);
Mat3 quat_wxyz_to_rotation(const Eigen::Vector4d& q);

// Wrap angle to (-pi, pi].
double wrap_angle(double a);

} // namespace cfrl
