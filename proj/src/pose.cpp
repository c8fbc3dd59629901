#include "cfrl/pose.hpp"

#include <cmath>
#include <stdexcept>

namespace cfrl {

Pose Pose::planar(double x, double y, double angle) {
    Pose p;
    const double c = std::cos(angle), s = std::sin(angle);
    p.rotation << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
    p.translation = Vec3(x, y, 0.0);
    return p;
}

Pose Pose::compose(const Pose& other) const {
    Pose out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
}

Pose Pose::inverse() const {
    Pose out;
    out.rotation = rotation.transpose();
    out.translation = -(out.rotation * translation);
    return out;
}

double Pose::planar_angle() const {
    return std::atan2(rotation(1, 0), rotation(0, 0));
}

bool Pose::is_valid(double tol) const {
    const Mat3 should_be_identity = rotation.transpose() * rotation;
    if ((should_be_identity - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
    if (std::abs(rotation.determinant() - 1.0) > tol) return false;
    return translation.allFinite();
}

double wrap_angle(double a) {
    a = std::fmod(a + M_PI, 2.0 * M_PI);
    if (a <= 0.0) a += 2.0 * M_PI;
    return a - M_PI;
}

void axis_angle(const Mat3& r, double& theta, Vec3& u) {
    if (!Pose{r, Vec3::Zero()}.is_valid(1e-6))
        throw std::invalid_argument("axis_angle: input is not a rotation matrix");

    const double cos_theta = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
    theta = std::acos(cos_theta);

    if (theta < 1e-12) {
        u = Vec3(0.0, 0.0, 1.0);
        theta = 0.0;
        return;
    }
    if (theta < M_PI - 1e-6) {
        // Axis from the skew part: (R - R') / (2 sin theta).
        u = Vec3(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)) / (2.0 * std::sin(theta));
        u.normalize();
        return;
    }
    // Near pi the skew part vanishes; use R = I + 2 S(u) with S from the
    // symmetric part: u u' = (R + I) / 2 at theta == pi.
    const Mat3 sym = 0.5 * (r + Mat3::Identity());
    int k = 0;
    sym.diagonal().maxCoeff(&k);
    u = sym.col(k) / std::sqrt(sym(k, k));
    u.normalize();
    // Fix sign so that the skew residual agrees (sign is arbitrary at exactly pi).
    const Vec3 skew(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    if (skew.dot(u) < 0.0) u = -u;
}

Mat3 axis_angle_to_matrix(double theta, const Vec3& u) {
    Mat3 skew;
    skew << 0.0, -u.z(), u.y(), u.z(), 0.0, -u.x(), -u.y(), u.x(), 0.0;
    return Mat3::Identity() + std::sin(theta) * skew + (1.0 - std::cos(theta)) * (skew * skew);
}

Eigen::Vector4d rotation_to_quat_wxyz(const Mat3& r) {
    Eigen::Quaterniond q(r);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() *= -1.0;
    return Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());
}

Mat3 quat_wxyz_to_rotation(const Eigen::Vector4d& q) {
    Eigen::Quaterniond quat(q(0), q(1), q(2), q(3));
    quat.normalize();
    return quat.toRotationMatrix();
}

} // namespace cfrl
