#include "cfrl/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace cfrl::sim {

namespace {

Vector2d rot2(double angle, const Vector2d& v) {
    const double c = std::cos(angle), s = std::sin(angle);
    return Vector2d(c * v.x() - s * v.y(), s * v.x() + c * v.y());
}

double cross2(const Vector2d& a, const Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

} // namespace

double ArmConfig::reach() const {
    double r = 0.0;
    for (double l : link_lengths) r += l;
    return r;
}

void ArmConfig::validate() const {
    if (n_joints < 1) throw std::invalid_argument("arm: n_joints must be >= 1");
    if (static_cast<int>(link_lengths.size()) != n_joints)
        throw std::invalid_argument("arm: link_lengths size != n_joints");
    for (double l : link_lengths)
        if (l <= 0.0) throw std::invalid_argument("arm: non-positive link length");
    if (dt <= 0.0) throw std::invalid_argument("arm: dt must be > 0");
    if (joint_velocity_limit <= 0.0) throw std::invalid_argument("arm: velocity limit must be > 0");
    if (joint_limit <= 0.0) throw std::invalid_argument("arm: joint limit must be > 0");
}

void SceneConfig::validate() const {
    if (clearance() <= 0.0)
        throw std::invalid_argument("scene: peg does not fit the slot opening (clearance <= 0)");
    if (slot_depth <= 0.0 || peg_length <= 0.0 || slot_wall_thickness <= 0.0)
        throw std::invalid_argument("scene: non-positive geometry");
    if (init_distance_min < 0.0 || init_distance_max <= init_distance_min)
        throw std::invalid_argument("scene: bad init distance range");
    if (insertion_depth_ratio <= 0.0 || insertion_depth_ratio > 1.0)
        throw std::invalid_argument("scene: insertion_depth_ratio must be in (0,1]");
    if (contact_substeps < 1) throw std::invalid_argument("scene: contact_substeps must be >= 1");
    if (camera_world_width <= 0.0) throw std::invalid_argument("scene: camera width must be > 0");
    if (max_steps < 1) throw std::invalid_argument("scene: max_steps must be >= 1");
}

std::array<Vector2d, 4> OrientedRect::corners() const {
    std::array<Vector2d, 4> out;
    const Vector2d ex = rot2(angle, Vector2d(1, 0)) * half_along;
    const Vector2d ey = rot2(angle, Vector2d(0, 1)) * half_across;
    out[0] = center + ex + ey;
    out[1] = center - ex + ey;
    out[2] = center - ex - ey;
    out[3] = center + ex - ey;
    return out;
}

bool OrientedRect::contains(const Vector2d& p) const {
    const Vector2d d = rot2(-angle, p - center);
    return std::abs(d.x()) <= half_along && std::abs(d.y()) <= half_across;
}

// --- kinematics -------------------------------------------------------------

Pose forward_kinematics(const VectorXd& joints, const ArmConfig& arm) {
    if (joints.size() != arm.n_joints) throw std::invalid_argument("fk: joint vector size mismatch");
    double angle = 0.0, x = 0.0, y = 0.0;
    for (int i = 0; i < arm.n_joints; ++i) {
        angle += joints[i];
        x += arm.link_lengths[i] * std::cos(angle);
        y += arm.link_lengths[i] * std::sin(angle);
    }
    return Pose::planar(x, y, angle);
}

std::vector<Vector2d> link_points(const VectorXd& joints, const ArmConfig& arm) {
    std::vector<Vector2d> pts;
    pts.reserve(arm.n_joints + 1);
    double angle = 0.0, x = 0.0, y = 0.0;
    pts.emplace_back(0.0, 0.0);
    for (int i = 0; i < arm.n_joints; ++i) {
        angle += joints[i];
        x += arm.link_lengths[i] * std::cos(angle);
        y += arm.link_lengths[i] * std::sin(angle);
        pts.emplace_back(x, y);
    }
    return pts;
}

Matrix3Xd jacobian(const VectorXd& joints, const ArmConfig& arm) {
    const auto pts = link_points(joints, arm);
    const Vector2d tip = pts.back();
    Matrix3Xd jac(3, arm.n_joints);
    for (int j = 0; j < arm.n_joints; ++j) {
        const Vector2d r = tip - pts[j]; // joint j sits at pts[j]
        jac(0, j) = -r.y();
        jac(1, j) = r.x();
        jac(2, j) = 1.0;
    }
    return jac;
}

Pose peg_pose(const VectorXd& joints, const ArmConfig& arm, const Pose& grasp_offset) {
    return forward_kinematics(joints, arm).compose(grasp_offset);
}

Pose peg_attachment(const SceneConfig& scene) {
    return Pose::planar(0.0, -scene.peg_length, 0.0);
}

Pose full_grasp(const SceneConfig& scene, const Pose& grasp_perturbation) {
    return peg_attachment(scene).compose(grasp_perturbation);
}

Matrix3Xd peg_jacobian(const VectorXd& joints, const ArmConfig& arm, const Pose& grasp_offset) {
    const auto pts = link_points(joints, arm);
    const Pose peg = peg_pose(joints, arm, grasp_offset);
    const Vector2d p(peg.translation.x(), peg.translation.y());
    Matrix3Xd jac(3, arm.n_joints);
    for (int j = 0; j < arm.n_joints; ++j) {
        const Vector2d r = p - pts[j];
        jac(0, j) = -r.y();
        jac(1, j) = r.x();
        jac(2, j) = 1.0;
    }
    return jac;
}

VectorXd dls_solve(const Matrix3Xd& jac, const Vec3& twist, double damping) {
    const Eigen::Matrix3d jjt =
        jac * jac.transpose() + damping * damping * Eigen::Matrix3d::Identity();
    return jac.transpose() * jjt.ldlt().solve(twist);
}

std::optional<VectorXd> solve_ik(const Pose& peg_target, const ArmConfig& arm,
                                 const Pose& grasp_offset, Rng& rng, int restarts, int iters,
                                 double tol, const std::optional<VectorXd>& warm_start) {
    const double tx = peg_target.translation.x(), ty = peg_target.translation.y();
    const double ta = peg_target.planar_angle();
    const int first = warm_start ? -1 : 0;
    for (int r = first; r < restarts; ++r) {
        VectorXd q(arm.n_joints);
        if (r < 0) {
            q = *warm_start;
        } else {
            for (int i = 0; i < arm.n_joints; ++i)
                q[i] = rng.uniform(-0.9 * arm.joint_limit, 0.9 * arm.joint_limit);
        }
        for (int it = 0; it < iters; ++it) {
            const Pose cur = peg_pose(q, arm, grasp_offset);
            Vec3 err(tx - cur.translation.x(), ty - cur.translation.y(),
                     wrap_angle(ta - cur.planar_angle()));
            if (err.head<2>().norm() < tol && std::abs(err[2]) < 10.0 * tol) {
                bool within = true;
                for (int i = 0; i < arm.n_joints; ++i)
                    if (std::abs(q[i]) > arm.joint_limit) within = false;
                if (within) return q;
                break;
            }
            q += dls_solve(peg_jacobian(q, arm, grasp_offset), err, 0.05);
            for (int i = 0; i < arm.n_joints; ++i)
                q[i] = std::clamp(q[i], -arm.joint_limit, arm.joint_limit);
        }
    }
    return std::nullopt;
}

// --- scene geometry ----------------------------------------------------------

std::array<OrientedRect, 3> slot_wall_rects(const Pose& slot_pose, const SceneConfig& scene) {
    const double ow = scene.opening_width_scaled();
    const double wt = scene.slot_wall_thickness;
    const double d = scene.slot_depth;
    const double a = slot_pose.planar_angle();
    const Vector2d o(slot_pose.translation.x(), slot_pose.translation.y());

    auto make = [&](double cx, double cy, double hx, double hy) {
        OrientedRect r;
        r.center = o + rot2(a, Vector2d(cx, cy));
        r.half_along = hx;
        r.half_across = hy;
        r.angle = a;
        return r;
    };
    return {
        make(-(ow + wt) * 0.5, -d * 0.5, wt * 0.5, d * 0.5), // left wall
        make((ow + wt) * 0.5, -d * 0.5, wt * 0.5, d * 0.5),  // right wall
        make(0.0, -d - wt * 0.5, ow * 0.5 + wt, wt * 0.5),   // bottom
    };
}

OrientedRect peg_rect(const Pose& pose, const SceneConfig& scene) {
    OrientedRect r;
    const double a = pose.planar_angle();
    const Vector2d o(pose.translation.x(), pose.translation.y());
    r.center = o + rot2(a, Vector2d(0.0, scene.peg_length * 0.5));
    r.half_along = scene.peg_width_scaled() * 0.5;
    r.half_across = scene.peg_length * 0.5;
    r.angle = a;
    return r;
}

namespace {

// SAT overlap of two oriented rectangles; MTV pushes `a` out of `b`.
bool sat_mtv(const OrientedRect& a, const OrientedRect& b, Vector2d& normal, double& depth) {
    const std::array<Vector2d, 4> axes = {
        rot2(a.angle, Vector2d(1, 0)), rot2(a.angle, Vector2d(0, 1)),
        rot2(b.angle, Vector2d(1, 0)), rot2(b.angle, Vector2d(0, 1))};
    const auto ca = a.corners(), cb = b.corners();
    double best = std::numeric_limits<double>::infinity();
    Vector2d best_axis = Vector2d::Zero();
    for (const auto& axis : axes) {
        double min_a = 1e300, max_a = -1e300, min_b = 1e300, max_b = -1e300;
        for (const auto& p : ca) {
            const double v = p.dot(axis);
            min_a = std::min(min_a, v);
            max_a = std::max(max_a, v);
        }
        for (const auto& p : cb) {
            const double v = p.dot(axis);
            min_b = std::min(min_b, v);
            max_b = std::max(max_b, v);
        }
        const double overlap = std::min(max_a, max_b) - std::max(min_a, min_b);
        if (overlap <= 0.0) return false;
        if (overlap < best) {
            best = overlap;
            best_axis = axis;
        }
    }
    if ((a.center - b.center).dot(best_axis) < 0.0) best_axis = -best_axis;
    normal = best_axis;
    depth = best;
    return true;
}

// Sutherland-Hodgman clip of polygon `poly` against the inside of rect `r`.
std::vector<Vector2d> clip_to_rect(std::vector<Vector2d> poly, const OrientedRect& r) {
    const Vector2d ex = rot2(r.angle, Vector2d(1, 0));
    const Vector2d ey = rot2(r.angle, Vector2d(0, 1));
    struct HalfPlane {
        Vector2d n;
        double off;
    };
    const std::array<HalfPlane, 4> planes = {
        HalfPlane{ex, ex.dot(r.center) + r.half_along},
        HalfPlane{-ex, -ex.dot(r.center) + r.half_along},
        HalfPlane{ey, ey.dot(r.center) + r.half_across},
        HalfPlane{-ey, -ey.dot(r.center) + r.half_across},
    };
    for (const auto& hp : planes) {
        std::vector<Vector2d> out;
        const size_t n = poly.size();
        for (size_t i = 0; i < n; ++i) {
            const Vector2d& p0 = poly[i];
            const Vector2d& p1 = poly[(i + 1) % n];
            const double d0 = hp.off - hp.n.dot(p0);
            const double d1 = hp.off - hp.n.dot(p1);
            if (d0 >= 0.0) out.push_back(p0);
            if ((d0 >= 0.0) != (d1 >= 0.0)) {
                const double t = d0 / (d0 - d1);
                out.push_back(p0 + t * (p1 - p0));
            }
        }
        poly = std::move(out);
        if (poly.empty()) break;
    }
    return poly;
}

Vector2d polygon_centroid(const std::vector<Vector2d>& poly) {
    if (poly.empty()) return Vector2d::Zero();
    double area2 = 0.0;
    Vector2d c = Vector2d::Zero();
    const size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) {
        const Vector2d& p0 = poly[i];
        const Vector2d& p1 = poly[(i + 1) % n];
        const double w = cross2(p0, p1);
        area2 += w;
        c += w * (p0 + p1);
    }
    if (std::abs(area2) < 1e-14) {
        Vector2d mean = Vector2d::Zero();
        for (const auto& p : poly) mean += p;
        return mean / static_cast<double>(n);
    }
    return c / (3.0 * area2);
}

} // namespace

namespace {

std::vector<Contact> contacts_against(const OrientedRect& pr,
                                      const std::array<OrientedRect, 3>& walls) {
    std::vector<Contact> contacts;
    for (const auto& wall : walls) {
        Vector2d normal;
        double depth = 0.0;
        if (!sat_mtv(pr, wall, normal, depth)) continue;
        const auto cs = pr.corners();
        const auto overlap = clip_to_rect(std::vector<Vector2d>(cs.begin(), cs.end()), wall);
        Contact c;
        c.normal = normal;
        c.depth = depth;
        c.point = overlap.empty() ? pr.center : polygon_centroid(overlap);
        contacts.push_back(c);
    }
    return contacts;
}

} // namespace

std::vector<Contact> find_contacts(const Pose& peg, const Pose& slot_pose,
                                   const SceneConfig& scene) {
    return contacts_against(peg_rect(peg, scene), slot_wall_rects(slot_pose, scene));
}

Vec3 contact_wrench(const Pose& peg, const Pose& slot_pose, const SceneConfig& scene,
                    const Vec3& peg_vel) {
    const auto contacts = find_contacts(peg, slot_pose, scene);
    Vec3 wrench = Vec3::Zero();
    const Vector2d origin(peg.translation.x(), peg.translation.y());
    const Vector2d v_lin(peg_vel[0], peg_vel[1]);
    const double omega = peg_vel[2];
    for (const auto& c : contacts) {
        Vector2d force = scene.contact_stiffness * c.depth * c.normal;
        const Vector2d r = c.point - origin;
        const Vector2d v_point = v_lin + omega * Vector2d(-r.y(), r.x());
        const Vector2d v_tangential = v_point - v_point.dot(c.normal) * c.normal;
        force -= scene.contact_damping * v_tangential;
        wrench[0] += force.x();
        wrench[1] += force.y();
        wrench[2] += cross2(r, force);
    }
    return wrench;
}

bool success_check(const Pose& rel, const SceneConfig& scene) {
    const InsertionCoords ic = insertion_coords(rel, scene);
    // Depth threshold is inclusive (>=); anything short of it fails.
    return ic.depth >= scene.insertion_depth_ratio * scene.slot_depth &&
           ic.lateral < scene.clearance() && std::abs(ic.yaw) < scene.success_angle_tol;
}

InsertionCoords insertion_coords(const Pose& rel, const SceneConfig& scene) {
    InsertionCoords ic;
    ic.depth = std::max(0.0, -rel.translation.y());
    ic.lateral = std::abs(rel.translation.x());
    ic.yaw = wrap_angle(rel.planar_angle());
    ic.mouth_distance = rel.translation.head<2>().norm();
    (void)scene;
    return ic;
}

// --- rendering ---------------------------------------------------------------

VectorXf render(const EnvState& state, const ArmConfig& arm, const SceneConfig& scene) {
    VectorXf img = VectorXf::Zero(kImagePixels);
    const double pitch = scene.pixel_pitch();
    const double half = scene.camera_world_width * 0.5;

    auto paint = [&](const OrientedRect& r, float value) {
        if (r.half_along <= 0.0 || r.half_across <= 0.0) return;
        // Bounding box in pixel coordinates.
        const auto cs = r.corners();
        double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
        for (const auto& c : cs) {
            min_x = std::min(min_x, c.x());
            max_x = std::max(max_x, c.x());
            min_y = std::min(min_y, c.y());
            max_y = std::max(max_y, c.y());
        }
        const double left = scene.camera_center_x - half;
        const double top = scene.camera_center_y + half;
        const int col0 = std::max(0, static_cast<int>(std::floor((min_x - left) / pitch)) - 1);
        const int col1 =
            std::min(kImageSize - 1, static_cast<int>(std::ceil((max_x - left) / pitch)) + 1);
        const int row0 = std::max(0, static_cast<int>(std::floor((top - max_y) / pitch)) - 1);
        const int row1 =
            std::min(kImageSize - 1, static_cast<int>(std::ceil((top - min_y) / pitch)) + 1);
        for (int row = row0; row <= row1; ++row) {
            const double wy = scene.camera_center_y + half - (row + 0.5) * pitch;
            for (int col = col0; col <= col1; ++col) {
                const double wx = scene.camera_center_x - half + (col + 0.5) * pitch;
                if (r.contains(Vector2d(wx, wy))) img[row * kImageSize + col] = value;
            }
        }
    };

    // Painter's order: background 0.0, slot 0.35, arm links 0.6, peg 1.0.
    for (const auto& wall : slot_wall_rects(state.slot_pose, scene)) paint(wall, 0.35f);

    const auto pts = link_points(state.joint_pos, arm);
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
        OrientedRect link;
        link.center = 0.5 * (pts[i] + pts[i + 1]);
        const Vector2d d = pts[i + 1] - pts[i];
        link.half_along = 0.5 * d.norm();
        link.half_across = 0.5 * arm.link_render_width;
        link.angle = std::atan2(d.y(), d.x());
        paint(link, 0.6f);
    }

    paint(peg_rect(peg_pose(state.joint_pos, arm, full_grasp(scene, state.grasp_offset)), scene), 1.0f);
    return img;
}

void write_pgm(const VectorXf& image, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("write_pgm: cannot open " + path);
    os << "P5\n" << kImageSize << " " << kImageSize << "\n255\n";
    for (int i = 0; i < kImagePixels; ++i) {
        const float v = std::clamp(image[i], 0.0f, 1.0f);
        const unsigned char b = static_cast<unsigned char>(std::lround(v * 255.0f));
        os.write(reinterpret_cast<const char*>(&b), 1);
    }
}

// --- environment -------------------------------------------------------------

Env::Env(ArmConfig arm, SceneConfig scene) : arm_(std::move(arm)), scene_(std::move(scene)) {
    arm_.validate();
    scene_.validate();
}

Observation Env::observe(const EnvState& state) const {
    Observation obs;
    obs.image = render(state, arm_, scene_);
    obs.joint_pos = state.joint_pos;
    const Pose peg = peg_pose(state.joint_pos, arm_, full_grasp(scene_, state.grasp_offset));
    const Vec3 wrench = contact_wrench(peg, state.slot_pose, scene_, Vec3::Zero());
    obs.joint_torque =
        peg_jacobian(state.joint_pos, arm_, full_grasp(scene_, state.grasp_offset)).transpose() *
        wrench;
    return obs;
}

std::pair<EnvState, Observation> Env::reset(uint64_t seed) {
    Rng rng(seed);
    constexpr int kMaxAttempts = 200;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        EnvState st;
        const double radius = rng.uniform(scene_.slot_radius_min, scene_.slot_radius_max);
        const double bearing = rng.uniform(-scene_.slot_bearing_range, scene_.slot_bearing_range);
        const double yaw = bearing + M_PI_2 + rng.uniform(-scene_.slot_yaw_range, scene_.slot_yaw_range);
        st.slot_pose = Pose::planar(radius * std::cos(bearing), radius * std::sin(bearing), yaw);

        st.grasp_offset = Pose::planar(
            rng.uniform(-scene_.grasp_offset_trans, scene_.grasp_offset_trans),
            rng.uniform(-scene_.grasp_offset_trans, scene_.grasp_offset_trans),
            rng.uniform(-scene_.grasp_offset_angle, scene_.grasp_offset_angle));

        // Joint placement through IK at a sampled start pose on the open side
        // of the slot, roughly orientation-compatible (the peg is handed to
        // the gripper pointing at the fixture, never from behind it). The
        // start solve is warm-started from an insertion posture so the
        // episode begins on an arm branch from which the slot is servoable.
        const double dist = rng.uniform(scene_.init_distance_min, scene_.init_distance_max);
        const double dev = rng.uniform(-1.0, 1.0);
        const double slot_angle = st.slot_pose.planar_angle();
        const Vector2d mouth(st.slot_pose.translation.x(), st.slot_pose.translation.y());
        const Vector2d dir = rot2(slot_angle + dev, Vector2d(0.0, 1.0));
        if (dist * std::cos(dev) < 0.05) continue; // keep a margin off the fixture plane
        const Vector2d start = mouth + dist * dir;
        const double start_angle = slot_angle + rng.uniform(-0.7, 0.7);
        const Pose target = Pose::planar(start.x(), start.y(), start_angle);

        const Pose grasp = full_grasp(scene_, st.grasp_offset);
        const Pose pre_insert = st.slot_pose.compose(Pose::planar(0.0, 0.05, 0.0));
        const auto posture = solve_ik(pre_insert, arm_, grasp, rng, 4, 150);
        if (!posture) continue;
        const auto joints = solve_ik(target, arm_, grasp, rng, 0, 200, 1e-4, posture);
        if (!joints) continue;
        // Headroom for the approach: near-limit branches stall the servoing.
        bool comfortable = true;
        for (int i = 0; i < arm_.n_joints; ++i)
            if (std::abs((*joints)[i]) > 0.85 * arm_.joint_limit) comfortable = false;
        for (int i = 0; i < arm_.n_joints; ++i)
            if (std::abs((*posture)[i]) > 0.85 * arm_.joint_limit) comfortable = false;
        if (!comfortable) continue;
        st.joint_pos = *joints;
        st.joint_vel = VectorXd::Zero(arm_.n_joints);

        const Pose peg = peg_pose(st.joint_pos, arm_, full_grasp(scene_, st.grasp_offset));
        const Vector2d tip(peg.translation.x(), peg.translation.y());
        const double actual = (tip - mouth).norm();
        if (actual < scene_.init_distance_min || actual > scene_.init_distance_max) continue;
        if (!contacts_against(peg_rect(peg, scene_), slot_wall_rects(st.slot_pose, scene_)).empty())
            continue;

        return {st, observe(st)};
    }
    throw std::runtime_error("env reset: could not place scene within distance bounds "
                             "(check slot placement ranges against the arm reach)");
}

Env::StepResult Env::step(const EnvState& state, const VectorXd& action) const {
    if (state.terminal) throw std::logic_error("env step: called on a terminal state");
    if (action.size() != arm_.n_joints) throw std::invalid_argument("env step: bad action size");
    if (!action.allFinite()) throw std::invalid_argument("env step: non-finite action");

    VectorXd v = action;
    for (int i = 0; i < arm_.n_joints; ++i)
        v[i] = std::clamp(v[i], -arm_.joint_velocity_limit, arm_.joint_velocity_limit);

    EnvState next = state;
    const double dt_sub = arm_.dt / scene_.contact_substeps;
    const auto walls = slot_wall_rects(state.slot_pose, scene_);
    bool geometry_broken = false;

    for (int sub = 0; sub < scene_.contact_substeps; ++sub) {
        next.joint_pos += v * dt_sub;
        for (int i = 0; i < arm_.n_joints; ++i)
            next.joint_pos[i] = std::clamp(next.joint_pos[i], -arm_.joint_limit, arm_.joint_limit);

        // One penetration-resolution pass per substep: remove resolve_rate of
        // the summed MTV through damped least squares on the peg twist.
        const Pose peg = peg_pose(next.joint_pos, arm_, full_grasp(scene_, next.grasp_offset));
        const auto contacts = contacts_against(peg_rect(peg, scene_), walls);
        if (!contacts.empty()) {
            Vector2d mtv = Vector2d::Zero();
            double max_depth = 0.0;
            for (const auto& c : contacts) {
                mtv += c.depth * c.normal;
                max_depth = std::max(max_depth, c.depth);
            }
            if (max_depth > scene_.peg_width_scaled()) geometry_broken = true;
            const Vec3 corr(scene_.contact_resolve_rate * mtv.x(),
                            scene_.contact_resolve_rate * mtv.y(), 0.0);
            next.joint_pos +=
                dls_solve(peg_jacobian(next.joint_pos, arm_, full_grasp(scene_, next.grasp_offset)), corr,
                          0.02);
            for (int i = 0; i < arm_.n_joints; ++i)
                next.joint_pos[i] =
                    std::clamp(next.joint_pos[i], -arm_.joint_limit, arm_.joint_limit);
        }
    }

    next.joint_vel = (next.joint_pos - state.joint_pos) / arm_.dt;
    next.step_count = state.step_count + 1;

    const Pose peg = peg_pose(next.joint_pos, arm_, full_grasp(scene_, next.grasp_offset));
    const Pose rel = state.slot_pose.inverse().compose(peg);
    const bool success = success_check(rel, scene_);

    StepResult out;
    out.success = success;
    if (success) {
        next.terminal = true;
        next.cause = TerminalCause::Success;
    } else if (geometry_broken) {
        next.terminal = true;
        next.cause = TerminalCause::BoundViolation;
    } else if (next.step_count >= scene_.max_steps) {
        next.terminal = true;
        next.cause = TerminalCause::Timeout;
    }

    out.obs.image = render(next, arm_, scene_);
    out.obs.joint_pos = next.joint_pos;
    const Matrix3Xd jac = peg_jacobian(next.joint_pos, arm_, full_grasp(scene_, next.grasp_offset));
    const Vec3 peg_vel = jac * next.joint_vel;
    out.obs.joint_torque =
        jac.transpose() * contact_wrench(peg, next.slot_pose, scene_, peg_vel);
    out.state = std::move(next);
    return out;
}

VectorXd pbvs_action(const VectorXd& joints, const ArmConfig& arm, const Pose& grasp_offset,
                     const Pose& peg_target, double gain, double noise_scale, Rng& rng) {
    const Pose cur = peg_pose(joints, arm, grasp_offset);
    const Vec3 err(peg_target.translation.x() - cur.translation.x(),
                   peg_target.translation.y() - cur.translation.y(),
                   wrap_angle(peg_target.planar_angle() - cur.planar_angle()));
    VectorXd v = dls_solve(peg_jacobian(joints, arm, grasp_offset), gain * err, 0.02);
    for (int i = 0; i < arm.n_joints; ++i) {
        if (noise_scale > 0.0) v[i] += rng.gaussian(0.0, noise_scale);
        v[i] = std::clamp(v[i], -arm.joint_velocity_limit, arm.joint_velocity_limit);
    }
    return v;
}

} // namespace cfrl::sim
