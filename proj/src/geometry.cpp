#include "pml/geometry.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Geometry>

#include "pml/errors.hpp"

namespace pml {

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
    constexpr double kTol = 1e-9;
    if (!rotation.allFinite() || !translation.allFinite()) {
        throw ConfigError("rigid transform has non-finite entries");
    }
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (ortho > kTol || std::abs(rotation.determinant() - 1.0) > kTol) {
        throw ConfigError("rigid transform rotation is not orthonormal with determinant +1");
    }
}

RigidTransform RigidTransform::from_yaw(double yaw, const Vec3& t) {
    return {Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix(), t};
}

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
    RigidTransform out;
    out.rotation_ = rotation_ * other.rotation_;
    out.translation_ = rotation_ * other.translation_ + translation_;
    return out;
}

RigidTransform RigidTransform::inverse() const {
    RigidTransform out;
    out.rotation_ = rotation_.transpose();
    out.translation_ = -(out.rotation_ * translation_);
    return out;
}

void CameraModel::validate() const {
    if (width <= 0 || height <= 0) throw ConfigError("camera image size must be positive");
    if (!intrinsics.allFinite()) throw ConfigError("camera intrinsics are not finite");
    if (intrinsics(0, 0) <= 0.0 || intrinsics(1, 1) <= 0.0) {
        throw ConfigError("camera focal lengths must be positive");
    }
    if (intrinsics(1, 0) != 0.0 || intrinsics(2, 0) != 0.0 || intrinsics(2, 1) != 0.0) {
        throw ConfigError("camera intrinsics must be upper triangular");
    }
    if (intrinsics(2, 2) <= 0.0) throw ConfigError("camera intrinsics K(2,2) must be positive");
}

std::optional<Vec2> project_to_plane(const Point3& camera_point, const Mat3& intrinsics, double depth_min) {
    if (!(camera_point.z() > depth_min)) return std::nullopt;
    const Vec3 q = intrinsics * camera_point;
    return Vec2(q.x() / q.z(), q.y() / q.z());
}

std::optional<Vec2> project_unbounded(const Point3& lidar_point, const CameraModel& cam, double depth_min) {
    return project_to_plane(cam.extrinsic.apply(lidar_point), cam.intrinsics, depth_min);
}

std::optional<Vec2> project(const Point3& lidar_point, const CameraModel& cam, double depth_min) {
    auto uv = project_unbounded(lidar_point, cam, depth_min);
    if (!uv || !cam.contains(*uv)) return std::nullopt;
    return uv;
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Point3& lidar_point, const CameraModel& cam) {
    const Vec3 q = cam.intrinsics * cam.extrinsic.apply(lidar_point);
    const double inv = 1.0 / q.z();
    // d(q0/q2)/dq = (1/q2) [1, 0, -q0/q2]; same for row 1.
    Eigen::Matrix<double, 2, 3> dpixel_dq;
    dpixel_dq << inv, 0.0, -q.x() * inv * inv, 0.0, inv, -q.y() * inv * inv;
    return dpixel_dq * cam.intrinsics * cam.extrinsic.rotation();
}

std::optional<Vec2> ego_flow(const Point3& lidar_point, const CameraModel& cam, const RigidTransform& ego) {
    const auto before = project(lidar_point, cam);
    if (!before) return std::nullopt;
    const auto after = project(ego.apply(lidar_point), cam);
    if (!after) return std::nullopt;
    return Vec2(*after - *before);
}

std::vector<Point3> transform_points(std::span<const Point3> points, const RigidTransform& transform) {
    std::vector<Point3> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(transform.apply(p));
    return out;
}

std::vector<PixelSample> representative_points(std::span<const Point3> points, const CameraModel& cam) {
    constexpr auto kNone = std::numeric_limits<std::size_t>::max();
    const std::size_t pixels = static_cast<std::size_t>(cam.width) * cam.height;
    std::vector<std::size_t> owner(pixels, kNone);
    std::vector<double> depth(pixels, std::numeric_limits<double>::infinity());

    for (std::size_t i = 0; i < points.size(); ++i) {
        const Point3 pc = cam.extrinsic.apply(points[i]);
        const auto uv = project_to_plane(pc, cam.intrinsics);
        if (!uv || !cam.contains(*uv)) continue;
        const auto [x, y] = nearest_pixel(*uv);
        const std::size_t k = static_cast<std::size_t>(y) * cam.width + x;
        // Points are visited in index order, so strict < keeps the smaller index on ties.
        if (pc.z() < depth[k]) {
            depth[k] = pc.z();
            owner[k] = i;
        }
    }

    std::vector<PixelSample> out;
    for (std::size_t k = 0; k < pixels; ++k) {
        if (owner[k] == kNone) continue;
        PixelSample s;
        s.x = static_cast<int>(k % cam.width);
        s.y = static_cast<int>(k / cam.width);
        s.point = owner[k];
        s.uv = *project(points[owner[k]], cam);
        out.push_back(s);
    }
    return out;
}

std::optional<Vec2> sample_flow(const FlowImage& flow, const Vec2& uv, FlowSampling sampling) {
    if (sampling == FlowSampling::Nearest) {
        const auto [x, y] = nearest_pixel(uv);
        if (x < 0 || y < 0 || x >= flow.width || y >= flow.height) return std::nullopt;
        const std::size_t k = flow.index(x, y);
        if (!flow.valid[k]) return std::nullopt;
        return flow.flow[k];
    }

    const int x0 = static_cast<int>(std::floor(uv.x()));
    const int y0 = static_cast<int>(std::floor(uv.y()));
    const double fx = uv.x() - x0;
    const double fy = uv.y() - y0;
    Vec2 acc = Vec2::Zero();
    for (int dy = 0; dy <= 1; ++dy) {
        for (int dx = 0; dx <= 1; ++dx) {
            const double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy);
            if (w == 0.0) continue;
            const int x = x0 + dx;
            const int y = y0 + dy;
            if (x < 0 || y < 0 || x >= flow.width || y >= flow.height) return std::nullopt;
            const std::size_t k = flow.index(x, y);
            if (!flow.valid[k]) return std::nullopt;
            acc += w * flow.flow[k];
        }
    }
    return acc;
}

ObjectFlowMap factorize_object_flow(const FlowImage& flow, std::span<const Point3> points, const CameraModel& cam,
                                    const RigidTransform& ego, FlowSampling sampling) {
    if (flow.width != cam.width || flow.height != cam.height) {
        throw ConfigError("flow image is " + std::to_string(flow.width) + "x" + std::to_string(flow.height) +
                          " but camera is " + std::to_string(cam.width) + "x" + std::to_string(cam.height));
    }

    ObjectFlowMap out;
    const auto reps = representative_points(points, cam);
    std::size_t in_view = 0;
    for (const auto& p : points) in_view += project(p, cam).has_value() ? 1 : 0;
    out.out_of_view = points.size() - in_view;
    out.occluded = in_view - reps.size();

    for (const auto& rep : reps) {
        const auto f = sample_flow(flow, rep.uv, sampling);
        const auto fe = ego_flow(points[rep.point], cam, ego);
        if (!f || !fe) {
            ++out.invalid_flow;
            continue;
        }
        out.samples.push_back({rep, Vec2(*f - *fe)});
    }
    return out;
}

}  // namespace pml
