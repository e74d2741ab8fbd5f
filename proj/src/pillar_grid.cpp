#include "pml/pillar_grid.hpp"

#include <cmath>

#include "pml/errors.hpp"

namespace pml {
namespace {

int cells_along(double lo, double hi, double cell) {
    return static_cast<int>(std::llround((hi - lo) / cell));
}

bool is_multiple(double extent, double cell) {
    const double n = extent / cell;
    return n >= 1.0 && std::abs(n - std::round(n)) < 1e-9 * std::max(1.0, n);
}

}  // namespace

void GridSpec::validate() const {
    if (!(cell_size > 0.0) || !std::isfinite(cell_size)) throw ConfigError("grid cell_size must be positive");
    if (!std::isfinite(x_min) || !std::isfinite(x_max) || !std::isfinite(y_min) || !std::isfinite(y_max)) {
        throw ConfigError("grid bounds must be finite");
    }
    if (!is_multiple(x_max - x_min, cell_size) || !is_multiple(y_max - y_min, cell_size)) {
        throw ConfigError("grid extents must be positive integer multiples of cell_size");
    }
}

int GridSpec::width() const { return cells_along(x_min, x_max, cell_size); }
int GridSpec::height() const { return cells_along(y_min, y_max, cell_size); }

std::optional<std::size_t> GridSpec::cell_of(double x, double y) const {
    if (!(x >= x_min && x < x_max && y >= y_min && y < y_max)) return std::nullopt;
    const auto col = static_cast<long long>(std::floor((x - x_min) / cell_size));
    const auto row = static_cast<long long>(std::floor((y - y_min) / cell_size));
    // Rounding can push a point just below x_max into column `width`.
    if (col < 0 || row < 0 || col >= width() || row >= height()) return std::nullopt;
    return static_cast<std::size_t>(row) * width() + static_cast<std::size_t>(col);
}

Vec2 GridSpec::cell_center(std::size_t cell) const {
    const auto col = static_cast<double>(cell % width());
    const auto row = static_cast<double>(cell / width());
    return {x_min + (col + 0.5) * cell_size, y_min + (row + 0.5) * cell_size};
}

GridSpec centered_grid(int cells, double cell_size) {
    const double half = 0.5 * cells * cell_size;
    GridSpec g{-half, half, -half, half, cell_size};
    g.validate();
    return g;
}

Pillarization pillarize(const PointCloud& cloud, const GridSpec& grid) {
    grid.validate();
    Pillarization out;
    out.grid = grid;
    const std::size_t cells = grid.cell_count();
    out.assignment.assign(cloud.size(), Pillarization::kOutOfRange);
    out.nonempty.assign(cells, 0);
    out.offsets.assign(cells + 1, 0);

    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.points[i];
        if (const auto cell = grid.cell_of(p.x(), p.y())) {
            out.assignment[i] = static_cast<std::int32_t>(*cell);
            ++out.offsets[*cell + 1];
        }
    }
    for (std::size_t c = 0; c < cells; ++c) out.offsets[c + 1] += out.offsets[c];

    // Counting sort keeps each pillar's member list in ascending point order.
    out.members.resize(out.offsets[cells]);
    std::vector<std::size_t> cursor(out.offsets.begin(), out.offsets.end() - 1);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto cell = out.assignment[i];
        if (cell == Pillarization::kOutOfRange) continue;
        out.members[cursor[cell]++] = i;
    }
    for (std::size_t c = 0; c < cells; ++c) out.nonempty[c] = out.offsets[c + 1] > out.offsets[c] ? 1 : 0;
    return out;
}

std::vector<Vec3> scatter_motion(const PillarMotionField& field, const Pillarization& pill) {
    std::vector<Vec3> out(pill.assignment.size(), Vec3::Zero());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto cell = pill.assignment[i];
        if (cell == Pillarization::kOutOfRange) continue;
        out[i] = Vec3(field.motion[cell].x(), field.motion[cell].y(), 0.0);
    }
    return out;
}

PointCloud apply_motion(const PointCloud& cloud, std::span<const Vec3> motion) {
    if (motion.size() != cloud.size()) throw ConfigError("motion length does not match cloud size");
    PointCloud out;
    out.points.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) out.points.push_back(cloud.points[i] + motion[i]);
    return out;
}

PillarMotionField masked_to(const PillarMotionField& field, const Pillarization& pill) {
    PillarMotionField out = field;
    out.nonempty = pill.nonempty;
    for (std::size_t c = 0; c < out.size(); ++c) {
        if (!out.nonempty[c]) out.motion[c] = Vec2::Zero();
    }
    return out;
}

PillarMotionField scale_horizon(const PillarMotionField& field, double factor) {
    if (!(factor > 0.0) || !std::isfinite(factor)) throw ConfigError("horizon scale must be positive");
    PillarMotionField out = field;
    for (auto& m : out.motion) m *= factor;
    out.horizon *= factor;
    return out;
}

}  // namespace pml
