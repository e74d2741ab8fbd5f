#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pml/geometry.hpp"

namespace pml {

/// Bird's-eye-view grid over [x_min, x_max) x [y_min, y_max). Column index
/// runs along x, row index along y; storage is row-major (row * width + col).
struct GridSpec {
    double x_min = -32.0;
    double x_max = 32.0;
    double y_min = -32.0;
    double y_max = 32.0;
    double cell_size = 0.25;

    /// Throws ConfigError unless both extents are positive integer multiples of cell_size.
    void validate() const;

    int width() const;   // cells along x
    int height() const;  // cells along y
    std::size_t cell_count() const { return static_cast<std::size_t>(width()) * height(); }

    /// Cell containing (x, y), or nullopt outside the half-open range.
    std::optional<std::size_t> cell_of(double x, double y) const;
    Vec2 cell_center(std::size_t cell) const;

    bool operator==(const GridSpec&) const = default;
};

/// Square grid of `cells` per side centered on the origin.
GridSpec centered_grid(int cells, double cell_size);

struct PointCloud {
    std::vector<Point3> points;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

/// One 2D displacement (meters over `horizon` seconds) per pillar.
struct PillarMotionField {
    GridSpec grid;
    std::vector<Vec2> motion;
    std::vector<std::uint8_t> nonempty;
    double horizon = 0.5;

    PillarMotionField() = default;
    explicit PillarMotionField(const GridSpec& g, double horizon_s = 0.5)
        : grid(g), motion(g.cell_count(), Vec2::Zero()), nonempty(g.cell_count(), 0), horizon(horizon_s) {}

    std::size_t size() const { return motion.size(); }
};

/// Assignment of cloud points to pillars. `members` lists point indices for
/// pillar c in [offsets[c], offsets[c + 1]), ascending.
struct Pillarization {
    static constexpr std::int32_t kOutOfRange = -1;

    GridSpec grid;
    std::vector<std::int32_t> assignment;
    std::vector<std::uint8_t> nonempty;
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> members;

    std::span<const std::size_t> points_in(std::size_t cell) const {
        return {members.data() + offsets[cell], offsets[cell + 1] - offsets[cell]};
    }
    std::size_t in_range_count() const { return members.size(); }
};

Pillarization pillarize(const PointCloud& cloud, const GridSpec& grid);

/// Per-point (Mx, My, 0) of the owning pillar; zero for out-of-range points.
std::vector<Vec3> scatter_motion(const PillarMotionField& field, const Pillarization& pill);

PointCloud apply_motion(const PointCloud& cloud, std::span<const Vec3> motion);

/// Copies `field` with motion set to zero on pillars that `pill` marks empty
/// and the nonempty flags taken from `pill`.
PillarMotionField masked_to(const PillarMotionField& field, const Pillarization& pill);

/// Linear rescaling of displacements to a new horizon (e.g. 0.5 s to 1.0 s is factor 2).
PillarMotionField scale_horizon(const PillarMotionField& field, double factor);

}  // namespace pml
