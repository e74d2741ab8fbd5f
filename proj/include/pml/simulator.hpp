#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pml/geometry.hpp"
#include "pml/losses.hpp"
#include "pml/pillar_grid.hpp"

namespace pml {

/// Rigid axis-aligned box resting on the ground, moving at constant velocity.
struct BoxObject {
    Vec2 center = Vec2::Zero();       // ground-plane center at time t, meters
    Vec3 size = Vec3(4.5, 1.9, 1.6);  // extent along x, y, z
    Vec2 velocity = Vec2::Zero();     // m/s
    std::string tag = "car";
};

/// Spinning LiDAR: `rings` beams evenly spaced in elevation, fired every
/// `azimuth_step_deg` over a full turn.
struct LidarModel {
    int rings = 32;
    double elevation_min_deg = -25.0;
    double elevation_max_deg = 3.0;
    double azimuth_step_deg = 0.4;
    double range_noise = 0.01;  // Gaussian sigma along the beam, meters
    double max_range = 40.0;
    double mount_height = 1.8;  // LiDAR origin above the ground plane
};

/// Pinhole camera mounted on the vehicle. Position is in the LiDAR frame;
/// yaw is measured from +x toward +y, pitch tilts the optical axis down.
struct CameraMount {
    Vec3 position = Vec3::Zero();
    double yaw_deg = 0.0;
    double pitch_deg = 0.0;
    double focal = 450.0;
    int width = 640;
    int height = 360;

    CameraModel model() const;
};

/// Six cameras at 60 degree spacing giving full horizontal coverage.
std::vector<CameraMount> default_camera_rig();

struct SceneSpec {
    std::uint64_t seed = 0;
    /// Pose of the LiDAR at t+1 in the LiDAR frame at t.
    double ego_yaw = 0.0;  // radians
    Vec3 ego_translation = Vec3::Zero();
    std::vector<BoxObject> objects;
    double ground_extent = 40.0;  // ground plane covers |x|, |y| <= extent
    LidarModel lidar;
    std::vector<CameraMount> cameras = default_camera_rig();
    double interval = 0.1;  // seconds between the two sweeps
    GridSpec grid;

    /// Throws ConfigError on non-positive densities or interval, or degenerate boxes.
    void validate() const;

    /// Maps LiDAR-frame-t coordinates of a static point to LiDAR-frame-(t+1) coordinates.
    RigidTransform ego_transform() const;
};

enum LabelBits : std::uint8_t {
    kLabelStatic = 1,
    kLabelSlow = 2,
    kLabelFast = 4,
    kLabelForeground = 8,
    kLabelMoving = 16,
};

inline constexpr double kSlowSpeedLimit = 5.0;        // m/s, upper bound of the slow group
inline constexpr double kMovingSpeedThreshold = 0.05;  // m/s

struct SceneTruth {
    PillarMotionField field;
    std::vector<double> speed;          // m/s per pillar
    std::vector<std::uint8_t> labels;   // LabelBits per pillar, 0 for empty pillars
};

/// Labels for a pillar moving at `speed` m/s.
std::uint8_t speed_labels(double speed, bool foreground);

/// Rebuilds speed from motion / horizon. Used when truth is read from disk.
SceneTruth truth_from_labels(const PillarMotionField& field, std::vector<std::uint8_t> labels);

struct GeneratedScene {
    SceneInputs inputs;                  // clouds, cameras with flow, ego transform
    std::vector<FlowImage> ego_flows;    // per camera, same layout as inputs.cameras
    std::vector<int> surface_t;          // per cloud_t point: object id, -1 for ground
    SceneTruth truth;
    SceneSpec spec;
};

/// Ray-casts both sweeps and renders optical flow. Throws ConfigError when a
/// sweep sees no surface.
GeneratedScene generate(const SceneSpec& spec);

/// Drops points whose segment from `origin` crosses a box before reaching the
/// point. Boxes stand on the plane z = ground_z at their `center` positions.
std::vector<Point3> occlusion_cull(std::span<const Point3> points, std::span<const BoxObject> objects,
                                   const Point3& origin, double ground_z);

/// Randomized street scene for benchmarks: a moving ego vehicle and a mix of
/// static, slow and fast boxes inside `grid`.
SceneSpec random_scene_spec(std::uint64_t seed, const GridSpec& grid, double interval = 0.1);

}  // namespace pml
