#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

namespace pml {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// A 3D point in meters. Clouds are expressed in the LiDAR frame at time t
/// unless a function says otherwise.
using Point3 = Eigen::Vector3d;

/// Closest camera-frame depth at which a point still counts as in view.
inline constexpr double kDepthMin = 0.1;

/// SE(3) element acting on points as `R * p + t`.
class RigidTransform {
public:
    RigidTransform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

    /// Throws ConfigError unless `rotation` is orthonormal with det +1 (tolerance 1e-9).
    RigidTransform(const Mat3& rotation, const Vec3& translation);

    static RigidTransform identity() { return {}; }
    static RigidTransform translation(const Vec3& t) { return {Mat3::Identity(), t}; }
    /// Rotation by `yaw` radians about +z followed by translation `t`.
    static RigidTransform from_yaw(double yaw, const Vec3& t = Vec3::Zero());

    const Mat3& rotation() const { return rotation_; }
    const Vec3& translation() const { return translation_; }

    Point3 apply(const Point3& p) const { return rotation_ * p + translation_; }
    Point3 operator*(const Point3& p) const { return apply(p); }

    /// (this * other)(p) == this(other(p)).
    RigidTransform compose(const RigidTransform& other) const;
    RigidTransform operator*(const RigidTransform& other) const { return compose(other); }
    RigidTransform inverse() const;

private:
    Mat3 rotation_;
    Vec3 translation_;
};

/// Pinhole camera. `extrinsic` maps LiDAR-frame points into the camera frame
/// (x right, y down, z forward). Pixel centers sit at integer coordinates.
struct CameraModel {
    Mat3 intrinsics = Mat3::Identity();
    RigidTransform extrinsic;
    int width = 0;
    int height = 0;

    /// Throws ConfigError on non-positive focal entries, a nonzero lower
    /// triangle, or non-positive image size.
    void validate() const;

    bool contains(const Vec2& pixel) const {
        return pixel.x() >= -0.5 && pixel.x() < width - 0.5 && pixel.y() >= -0.5 && pixel.y() < height - 0.5;
    }
};

/// Applies `K * p` with perspective division; returns nullopt when the camera
/// depth is at most `depth_min`. Image bounds are not checked.
std::optional<Vec2> project_to_plane(const Point3& camera_point, const Mat3& intrinsics,
                                     double depth_min = kDepthMin);

/// Projects a LiDAR-frame point through the extrinsic and intrinsics.
/// Returns nullopt for points behind the near plane or outside the image.
std::optional<Vec2> project(const Point3& lidar_point, const CameraModel& cam, double depth_min = kDepthMin);

/// As `project`, but keeps pixels that fall outside the image bounds.
std::optional<Vec2> project_unbounded(const Point3& lidar_point, const CameraModel& cam,
                                      double depth_min = kDepthMin);

/// d(pixel)/d(lidar point), 2x3. Only meaningful where `project_unbounded` succeeds.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Point3& lidar_point, const CameraModel& cam);

/// Optical flow caused purely by the ego pose change `ego` (LiDAR frame at t to
/// LiDAR frame at t+1). nullopt when either projection is out of view.
std::optional<Vec2> ego_flow(const Point3& lidar_point, const CameraModel& cam, const RigidTransform& ego);

std::vector<Point3> transform_points(std::span<const Point3> points, const RigidTransform& transform);

/// Dense per-pixel optical flow (pixels) with a validity mask, row-major.
struct FlowImage {
    int width = 0;
    int height = 0;
    std::vector<Vec2> flow;
    std::vector<std::uint8_t> valid;

    FlowImage() = default;
    FlowImage(int w, int h)
        : width(w), height(h), flow(static_cast<std::size_t>(w) * h, Vec2::Zero()),
          valid(static_cast<std::size_t>(w) * h, 0) {}

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

enum class FlowSampling { Nearest, Bilinear };

/// Nearest pixel to a sub-pixel location.
inline std::pair<int, int> nearest_pixel(const Vec2& uv) {
    return {static_cast<int>(std::floor(uv.x() + 0.5)), static_cast<int>(std::floor(uv.y() + 0.5))};
}

/// One LiDAR point chosen to represent a pixel: the in-view point with the
/// smallest camera depth, ties going to the smaller point index.
struct PixelSample {
    int x = 0;
    int y = 0;
    std::size_t point = 0;
    Vec2 uv = Vec2::Zero();
};

/// Representative point per covered pixel, ordered by pixel index.
std::vector<PixelSample> representative_points(std::span<const Point3> points, const CameraModel& cam);

struct ObjectFlowSample {
    PixelSample pixel;
    Vec2 object_flow = Vec2::Zero();
};

/// Sparse object flow for one camera: entries exist only at pixels that carry a
/// projected LiDAR point.
struct ObjectFlowMap {
    std::vector<ObjectFlowSample> samples;
    std::size_t out_of_view = 0;   // points not projecting into the image
    std::size_t invalid_flow = 0;  // representative points without a usable flow sample
    std::size_t occluded = 0;      // points sharing a pixel with a nearer point
};

/// Subtracts the ego-motion flow from `flow` at every pixel hit by a projected
/// point. Throws ConfigError when the flow size differs from the camera's.
ObjectFlowMap factorize_object_flow(const FlowImage& flow, std::span<const Point3> points, const CameraModel& cam,
                                    const RigidTransform& ego, FlowSampling sampling = FlowSampling::Nearest);

/// Flow value at a sub-pixel location, or nullopt when a needed pixel is
/// invalid or outside the image.
std::optional<Vec2> sample_flow(const FlowImage& flow, const Vec2& uv, FlowSampling sampling);

}  // namespace pml
