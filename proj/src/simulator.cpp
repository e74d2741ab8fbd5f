#include "pml/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>

#include "pml/errors.hpp"

namespace pml {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr int kGround = -1;

struct Hit {
    double distance = std::numeric_limits<double>::infinity();
    int surface = kGround;
};

struct Box3 {
    Vec3 lo;
    Vec3 hi;
};

Box3 box_at(const BoxObject& obj, const Vec2& center, double ground_z) {
    const Vec3 half(0.5 * obj.size.x(), 0.5 * obj.size.y(), 0.0);
    return {Vec3(center.x() - half.x(), center.y() - half.y(), ground_z),
            Vec3(center.x() + half.x(), center.y() + half.y(), ground_z + obj.size.z())};
}

// Entry distance of a ray into a box (slab test), or nullopt on a miss.
std::optional<double> ray_box(const Vec3& origin, const Vec3& dir, const Box3& box) {
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (dir[a] == 0.0) {
            if (origin[a] < box.lo[a] || origin[a] > box.hi[a]) return std::nullopt;
            continue;
        }
        double t0 = (box.lo[a] - origin[a]) / dir[a];
        double t1 = (box.hi[a] - origin[a]) / dir[a];
        if (t0 > t1) std::swap(t0, t1);
        t_near = std::max(t_near, t0);
        t_far = std::min(t_far, t1);
    }
    if (t_near > t_far || t_near <= 0.0) return std::nullopt;
    return t_near;
}

class World {
public:
    World(const SceneSpec& spec, double time) : extent_(spec.ground_extent), ground_z_(-spec.lidar.mount_height) {
        for (const auto& obj : spec.objects) boxes_.push_back(box_at(obj, obj.center + time * obj.velocity, ground_z_));
    }

    // Nearest surface along a unit-direction ray.
    Hit cast(const Vec3& origin, const Vec3& dir) const {
        Hit hit;
        if (dir.z() < 0.0) {
            const double t = (ground_z_ - origin.z()) / dir.z();
            const Vec3 p = origin + t * dir;
            if (t > 0.0 && std::abs(p.x()) <= extent_ && std::abs(p.y()) <= extent_) hit.distance = t;
        }
        for (std::size_t k = 0; k < boxes_.size(); ++k) {
            const auto t = ray_box(origin, dir, boxes_[k]);
            if (t && *t < hit.distance) hit = {*t, static_cast<int>(k)};
        }
        return hit;
    }

private:
    double extent_;
    double ground_z_;
    std::vector<Box3> boxes_;
};

struct Sweep {
    std::vector<Point3> points;
    std::vector<int> surface;
};

Sweep scan(const SceneSpec& spec, const World& world, const RigidTransform& sensor_pose, std::mt19937_64& rng) {
    const auto& lidar = spec.lidar;
    const int steps = static_cast<int>(std::lround(360.0 / lidar.azimuth_step_deg));
    std::normal_distribution<double> noise(0.0, std::max(lidar.range_noise, 1e-300));
    const Vec3 origin = sensor_pose.translation();

    Sweep sweep;
    for (int r = 0; r < lidar.rings; ++r) {
        const double elev = lidar.rings == 1
                                ? lidar.elevation_min_deg
                                : lidar.elevation_min_deg +
                                      r * (lidar.elevation_max_deg - lidar.elevation_min_deg) / (lidar.rings - 1);
        for (int a = 0; a < steps; ++a) {
            const double az = a * lidar.azimuth_step_deg * kDegToRad;
            const double e = elev * kDegToRad;
            const Vec3 local(std::cos(e) * std::cos(az), std::cos(e) * std::sin(az), std::sin(e));
            const Vec3 dir = sensor_pose.rotation() * local;
            const Hit hit = world.cast(origin, dir);
            if (!(hit.distance <= lidar.max_range)) continue;
            const double range = hit.distance + (lidar.range_noise > 0.0 ? noise(rng) : 0.0);
            sweep.points.push_back(origin + range * dir);
            sweep.surface.push_back(hit.surface);
        }
    }
    return sweep;
}

Vec3 surface_motion(const SceneSpec& spec, int surface) {
    if (surface == kGround) return Vec3::Zero();
    const Vec2 d = spec.interval * spec.objects[surface].velocity;
    return {d.x(), d.y(), 0.0};
}

// Dense flow for every pixel that sees a surface, then exact values at the
// pixels carrying a projected LiDAR point of cloud_t.
void render_flow(const SceneSpec& spec, const World& world_t, const CameraModel& cam, const RigidTransform& ego,
                 const Sweep& sweep_t, FlowImage& flow, FlowImage& ego_flow_img) {
    flow = FlowImage(cam.width, cam.height);
    ego_flow_img = FlowImage(cam.width, cam.height);
    const Mat3 k_inv = cam.intrinsics.inverse();
    const RigidTransform cam_to_lidar = cam.extrinsic.inverse();
    const Vec3 center = cam_to_lidar.translation();

    auto write = [&](std::size_t k, const Point3& p, int surface) {
        const auto fe = ego_flow(p, cam, ego);
        ego_flow_img.flow[k] = fe ? *fe : Vec2::Zero();
        ego_flow_img.valid[k] = fe ? 1 : 0;
        if (surface == kGround) {
            // Static surfaces: the full flow is the ego flow, computed identically.
            flow.flow[k] = ego_flow_img.flow[k];
            flow.valid[k] = ego_flow_img.valid[k];
            return;
        }
        const auto before = project(p, cam);
        const auto after = project(ego.apply(p + surface_motion(spec, surface)), cam);
        if (before && after) {
            flow.flow[k] = *after - *before;
            flow.valid[k] = 1;
        } else {
            flow.flow[k] = Vec2::Zero();
            flow.valid[k] = 0;
        }
    };

    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const Vec3 dir = (cam_to_lidar.rotation() * (k_inv * Vec3(x, y, 1.0))).normalized();
            const Hit hit = world_t.cast(center, dir);
            if (!std::isfinite(hit.distance)) continue;
            write(flow.index(x, y), center + hit.distance * dir, hit.surface);
        }
    }

    for (const auto& rep : representative_points(sweep_t.points, cam)) {
        write(flow.index(rep.x, rep.y), sweep_t.points[rep.point], sweep_t.surface[rep.point]);
    }
}

SceneTruth compute_truth(const SceneSpec& spec, const Sweep& sweep_t) {
    const Pillarization pill = pillarize(PointCloud{sweep_t.points}, spec.grid);
    SceneTruth truth;
    truth.field = PillarMotionField(spec.grid, spec.interval);
    truth.field.nonempty = pill.nonempty;
    truth.speed.assign(spec.grid.cell_count(), 0.0);
    truth.labels.assign(spec.grid.cell_count(), 0);

    std::vector<std::size_t> counts(spec.objects.size());
    for (std::size_t c = 0; c < spec.grid.cell_count(); ++c) {
        if (!pill.nonempty[c]) continue;
        std::fill(counts.begin(), counts.end(), 0);
        for (const auto i : pill.points_in(c)) {
            if (sweep_t.surface[i] != kGround) ++counts[sweep_t.surface[i]];
        }
        int owner = kGround;
        std::size_t best = 0;
        for (std::size_t k = 0; k < counts.size(); ++k) {
            if (counts[k] > best) {
                best = counts[k];
                owner = static_cast<int>(k);
            }
        }
        const Vec3 m = surface_motion(spec, owner);
        truth.field.motion[c] = m.head<2>();
        truth.speed[c] = owner == kGround ? 0.0 : spec.objects[owner].velocity.norm();
        truth.labels[c] = speed_labels(truth.speed[c], owner != kGround);
    }
    return truth;
}

bool overlaps(const Vec2& lo_a, const Vec2& hi_a, const Vec2& lo_b, const Vec2& hi_b) {
    return lo_a.x() < hi_b.x() && lo_b.x() < hi_a.x() && lo_a.y() < hi_b.y() && lo_b.y() < hi_a.y();
}

}  // namespace

CameraModel CameraMount::model() const {
    const double yaw = yaw_deg * kDegToRad;
    const double pitch = pitch_deg * kDegToRad;
    const Vec3 forward(std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), -std::sin(pitch));
    const Vec3 right(std::sin(yaw), -std::cos(yaw), 0.0);
    const Vec3 down = forward.cross(right);
    Mat3 rot;
    rot.row(0) = right;
    rot.row(1) = down;
    rot.row(2) = forward;

    CameraModel cam;
    cam.extrinsic = RigidTransform(rot, -(rot * position));
    cam.intrinsics << focal, 0.0, 0.5 * (width - 1), 0.0, focal, 0.5 * (height - 1), 0.0, 0.0, 1.0;
    cam.width = width;
    cam.height = height;
    cam.validate();
    return cam;
}

std::vector<CameraMount> default_camera_rig() {
    std::vector<CameraMount> rig;
    for (int i = 0; i < 6; ++i) {
        CameraMount m;
        m.yaw_deg = 60.0 * i;
        const double yaw = m.yaw_deg * kDegToRad;
        m.position = Vec3(0.3 * std::cos(yaw), 0.3 * std::sin(yaw), -0.3);
        rig.push_back(m);
    }
    return rig;
}

void SceneSpec::validate() const {
    grid.validate();
    if (!(interval > 0.0) || !std::isfinite(interval)) throw ConfigError("scene interval must be > 0");
    if (lidar.rings < 1) throw ConfigError("lidar rings must be >= 1");
    if (!(lidar.azimuth_step_deg > 0.0 && lidar.azimuth_step_deg <= 360.0)) {
        throw ConfigError("lidar azimuth step must lie in (0, 360]");
    }
    if (!(lidar.max_range > 0.0)) throw ConfigError("lidar max_range must be > 0");
    if (!(lidar.range_noise >= 0.0)) throw ConfigError("lidar range_noise must be >= 0");
    if (!(lidar.mount_height > 0.0)) throw ConfigError("lidar mount_height must be > 0");
    if (!(ground_extent > 0.0)) throw ConfigError("ground_extent must be > 0");
    if (!ego_translation.allFinite() || !std::isfinite(ego_yaw)) throw ConfigError("ego motion must be finite");
    for (const auto& obj : objects) {
        if (!(obj.size.minCoeff() > 0.0) || !obj.size.allFinite()) throw ConfigError("object box is degenerate");
        if (!obj.center.allFinite() || !obj.velocity.allFinite()) throw ConfigError("object pose must be finite");
    }
    for (const auto& cam : cameras) cam.model();
}

RigidTransform SceneSpec::ego_transform() const { return RigidTransform::from_yaw(ego_yaw, ego_translation).inverse(); }

std::uint8_t speed_labels(double speed, bool foreground) {
    std::uint8_t bits = 0;
    if (speed == 0.0) {
        bits |= kLabelStatic;
    } else if (speed <= kSlowSpeedLimit) {
        bits |= kLabelSlow;
    } else {
        bits |= kLabelFast;
    }
    if (foreground) bits |= kLabelForeground;
    if (foreground && speed > kMovingSpeedThreshold) bits |= kLabelMoving;
    return bits;
}

SceneTruth truth_from_labels(const PillarMotionField& field, std::vector<std::uint8_t> labels) {
    if (labels.size() != field.size()) throw ConfigError("label count does not match the field");
    SceneTruth truth;
    truth.field = field;
    truth.labels = std::move(labels);
    truth.speed.resize(field.size());
    for (std::size_t c = 0; c < field.size(); ++c) {
        truth.speed[c] = (truth.labels[c] & kLabelStatic) ? 0.0 : field.motion[c].norm() / field.horizon;
    }
    return truth;
}

std::vector<Point3> occlusion_cull(std::span<const Point3> points, std::span<const BoxObject> objects,
                                   const Point3& origin, double ground_z) {
    std::vector<Box3> boxes;
    for (const auto& obj : objects) boxes.push_back(box_at(obj, obj.center, ground_z));

    std::vector<Point3> kept;
    for (const auto& p : points) {
        const Vec3 seg = p - origin;
        const double len = seg.norm();
        if (len == 0.0) {
            kept.push_back(p);
            continue;
        }
        const Vec3 dir = seg / len;
        bool blocked = false;
        for (const auto& box : boxes) {
            const auto t = ray_box(origin, dir, box);
            if (t && *t < len * (1.0 - 1e-9)) {
                blocked = true;
                break;
            }
        }
        if (!blocked) kept.push_back(p);
    }
    return kept;
}

GeneratedScene generate(const SceneSpec& spec) {
    spec.validate();
    GeneratedScene out;
    out.spec = spec;

    std::mt19937_64 rng(spec.seed);
    const RigidTransform ego = spec.ego_transform();
    const RigidTransform pose_t1 = ego.inverse();
    const World world_t(spec, 0.0);
    const World world_t1(spec, spec.interval);

    Sweep sweep_t = scan(spec, world_t, RigidTransform::identity(), rng);
    Sweep sweep_t1 = scan(spec, world_t1, pose_t1, rng);
    if (sweep_t.points.empty() || sweep_t1.points.empty()) {
        throw ConfigError("scene has no surface visible to the LiDAR");
    }

    out.inputs.ego = ego;
    for (const auto& mount : spec.cameras) {
        CameraFrame frame;
        frame.camera = mount.model();
        FlowImage ego_img;
        render_flow(spec, world_t, frame.camera, ego, sweep_t, frame.flow, ego_img);
        out.inputs.cameras.push_back(std::move(frame));
        out.ego_flows.push_back(std::move(ego_img));
    }

    out.truth = compute_truth(spec, sweep_t);
    out.surface_t = sweep_t.surface;
    out.inputs.cloud_t.points = std::move(sweep_t.points);
    out.inputs.cloud_t1.points = std::move(sweep_t1.points);
    return out;
}

SceneSpec random_scene_spec(std::uint64_t seed, const GridSpec& grid, double interval) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    SceneSpec spec;
    spec.seed = seed;
    spec.grid = grid;
    spec.interval = interval;

    const double speed = uniform(2.0, 10.0);
    spec.ego_yaw = uniform(-0.2, 0.2) * interval;
    spec.ego_translation = Vec3(speed * interval * std::cos(0.5 * spec.ego_yaw),
                                speed * interval * std::sin(0.5 * spec.ego_yaw), 0.0);

    // Swept footprints (t and t+interval) of everything placed so far.
    std::vector<std::pair<Vec2, Vec2>> taken;
    taken.emplace_back(Vec2(-3.5, -2.0), Vec2(3.5 + spec.ego_translation.x(), 2.0));

    const double margin = 2.5;
    const int cars = 3 + static_cast<int>(unit(rng) * 3.0);
    const int pedestrians = 1 + static_cast<int>(unit(rng) * 3.0);
    for (int n = 0; n < cars + pedestrians; ++n) {
        const bool car = n < cars;
        for (int attempt = 0; attempt < 200; ++attempt) {
            BoxObject obj;
            const bool along_x = unit(rng) < 0.5;
            double v = 0.0;
            if (car) {
                obj.tag = "car";
                obj.size = along_x ? Vec3(4.5, 1.9, 1.6) : Vec3(1.9, 4.5, 1.6);
                const double u = unit(rng);
                v = u < 0.25 ? 0.0 : (u < 0.5 ? uniform(1.0, 4.5) : uniform(6.0, 14.0));
                if (unit(rng) < 0.5) v = -v;
                obj.velocity = along_x ? Vec2(v, 0.0) : Vec2(0.0, v);
            } else {
                obj.tag = "pedestrian";
                obj.size = Vec3(0.7, 0.7, 1.75);
                const double heading = uniform(0.0, 2.0 * std::numbers::pi);
                v = unit(rng) < 0.3 ? 0.0 : uniform(0.5, 2.0);
                obj.velocity = v * Vec2(std::cos(heading), std::sin(heading));
            }
            obj.center = Vec2(uniform(grid.x_min + margin, grid.x_max - margin),
                              uniform(grid.y_min + margin, grid.y_max - margin));
            const Vec2 end = obj.center + interval * obj.velocity;
            const Vec2 half = 0.5 * obj.size.head<2>() + Vec2::Constant(0.5);
            const Vec2 lo = obj.center.cwiseMin(end) - half;
            const Vec2 hi = obj.center.cwiseMax(end) + half;
            if (lo.x() < grid.x_min + 0.5 || hi.x() > grid.x_max - 0.5 || lo.y() < grid.y_min + 0.5 ||
                hi.y() > grid.y_max - 0.5) {
                continue;
            }
            const bool clash = std::any_of(taken.begin(), taken.end(),
                                           [&](const auto& t) { return overlaps(lo, hi, t.first, t.second); });
            if (clash) continue;
            taken.emplace_back(lo, hi);
            spec.objects.push_back(obj);
            break;
        }
    }
    return spec;
}

}  // namespace pml
