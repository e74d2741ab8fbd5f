#pragma once

// Shared fixtures and independent oracles for the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <random>
#include <vector>

#include "pml/geometry.hpp"
#include "pml/losses.hpp"
#include "pml/pillar_grid.hpp"

namespace pml::test {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Point3 random_point(Rng& rng, double lo, double hi) {
    return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

inline Mat3 intrinsics(double f, double cx, double cy) {
    Mat3 k;
    k << f, 0, cx, 0, f, cy, 0, 0, 1;
    return k;
}

/// Camera at `position` looking along +x of the LiDAR frame.
inline CameraModel forward_camera(double f, int width, int height, const Vec3& position = Vec3::Zero()) {
    Mat3 r;
    r << 0, -1, 0, 0, 0, -1, 1, 0, 0;
    CameraModel cam;
    cam.intrinsics = intrinsics(f, 0.5 * (width - 1), 0.5 * (height - 1));
    cam.extrinsic = RigidTransform(r, -(r * position));
    cam.width = width;
    cam.height = height;
    return cam;
}

/// Pillar index by direct formula, independent of GridSpec::cell_of.
inline long long formula_cell(const GridSpec& g, const Point3& p) {
    const int w = static_cast<int>(std::llround((g.x_max - g.x_min) / g.cell_size));
    const int h = static_cast<int>(std::llround((g.y_max - g.y_min) / g.cell_size));
    const auto col = static_cast<long long>(std::floor((p.x() - g.x_min) / g.cell_size));
    const auto row = static_cast<long long>(std::floor((p.y() - g.y_min) / g.cell_size));
    if (col < 0 || row < 0 || col >= w || row >= h) return -1;
    return row * w + col;
}

/// Double-loop chamfer with the same weighting contract as the library:
/// forward terms weighted by the source point, backward terms by the matched
/// source point. Ties go to the smaller index.
inline double brute_force_chamfer(const PillarMotionField& field, const std::vector<Point3>& cloud_t,
                                  const std::vector<Point3>& target, const std::vector<double>* point_weight = nullptr) {
    std::vector<Point3> moved;
    std::vector<double> weight;
    for (std::size_t i = 0; i < cloud_t.size(); ++i) {
        const long long c = formula_cell(field.grid, cloud_t[i]);
        if (c < 0) continue;
        const Vec2& m = field.motion[static_cast<std::size_t>(c)];
        moved.push_back(cloud_t[i] + Vec3(m.x(), m.y(), 0.0));
        weight.push_back(point_weight ? (*point_weight)[i] : 1.0);
    }
    auto nearest = [](const std::vector<Point3>& set, const Point3& q) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < set.size(); ++j) {
            const double d = (set[j] - q).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        return best;
    };
    double total = 0.0;
    for (std::size_t i = 0; i < moved.size(); ++i) {
        total += weight[i] * (moved[i] - target[nearest(target, moved[i])]).norm();
    }
    for (const auto& q : target) {
        const std::size_t j = nearest(moved, q);
        total += weight[j] * (q - moved[j]).norm();
    }
    return total;
}

/// Central finite differences over the x and y entries of nonempty pillars.
inline std::vector<Vec2> finite_difference(const PillarMotionField& field,
                                           const std::function<double(const PillarMotionField&)>& f,
                                           double step = 1e-5) {
    std::vector<Vec2> grad(field.size(), Vec2::Zero());
    PillarMotionField probe = field;
    for (std::size_t c = 0; c < field.size(); ++c) {
        if (!field.nonempty[c]) continue;
        for (int k = 0; k < 2; ++k) {
            const double base = field.motion[c][k];
            probe.motion[c][k] = base + step;
            const double up = f(probe);
            probe.motion[c][k] = base - step;
            const double down = f(probe);
            probe.motion[c][k] = base;
            grad[c][k] = (up - down) / (2.0 * step);
        }
    }
    return grad;
}

/// ||a - b|| / ||b|| restricted to nonempty pillars; absolute when b vanishes.
inline double gradient_relative_error(const PillarMotionField& field, const std::vector<Vec2>& analytic,
                                      const std::vector<Vec2>& numeric) {
    double diff = 0.0;
    double ref = 0.0;
    for (std::size_t c = 0; c < field.size(); ++c) {
        if (!field.nonempty[c]) continue;
        diff += (analytic[c] - numeric[c]).squaredNorm();
        ref += numeric[c].squaredNorm();
    }
    return ref > 1e-20 ? std::sqrt(diff / ref) : std::sqrt(diff);
}

/// A small random scene: <= 50 points per sweep on an 8x8 grid in front of
/// one or two cameras, with random dense flow and a small ego motion.
struct SmallScene {
    SceneInputs inputs;
    GridSpec grid{2.0, 6.0, -2.0, 2.0, 0.5};
};

inline SmallScene random_small_scene(Rng& rng) {
    SmallScene s;
    const int n_t = 10 + static_cast<int>(rng() % 41);
    const int n_t1 = 10 + static_cast<int>(rng() % 41);
    auto sample = [&] {
        return Point3(uniform(rng, 2.0, 6.0), uniform(rng, -2.0, 2.0), uniform(rng, -1.0, 1.0));
    };
    for (int i = 0; i < n_t; ++i) s.inputs.cloud_t.points.push_back(sample());
    for (int i = 0; i < n_t1; ++i) s.inputs.cloud_t1.points.push_back(sample());
    s.inputs.ego = RigidTransform::from_yaw(uniform(rng, -0.05, 0.05),
                                            Vec3(uniform(rng, -0.3, 0.3), uniform(rng, -0.2, 0.2), 0.0));
    const int cams = 1 + static_cast<int>(rng() % 2);
    for (int c = 0; c < cams; ++c) {
        CameraFrame frame;
        frame.camera = forward_camera(60.0, 160, 120, Vec3(uniform(rng, -0.5, 0.0), uniform(rng, -0.3, 0.3), 0.0));
        frame.flow = FlowImage(160, 120);
        for (auto& f : frame.flow.flow) f = Vec2(uniform(rng, -12.0, 12.0), uniform(rng, -12.0, 12.0));
        std::fill(frame.flow.valid.begin(), frame.flow.valid.end(), 1);
        s.inputs.cameras.push_back(std::move(frame));
    }
    return s;
}

inline PillarMotionField random_field(Rng& rng, const PillarMotionField& zero, double scale = 0.4) {
    PillarMotionField f = zero;
    for (std::size_t c = 0; c < f.size(); ++c) {
        if (f.nonempty[c]) f.motion[c] = Vec2(uniform(rng, -scale, scale), uniform(rng, -scale, scale));
    }
    return f;
}

/// Smallest |difference| between a nonempty pillar's motion component and
/// the same component of a 4-neighbor (kinks of the total variation).
inline double smoothness_kink_margin(const PillarMotionField& f) {
    const int w = f.grid.width();
    const int h = f.grid.height();
    double margin = std::numeric_limits<double>::infinity();
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * w + c;
            const int nb[4][2] = {{r, c + 1}, {r + 1, c}, {r, c - 1}, {r - 1, c}};
            for (const auto& n : nb) {
                if (n[0] < 0 || n[1] < 0 || n[0] >= h || n[1] >= w) continue;
                const std::size_t j = static_cast<std::size_t>(n[0]) * w + n[1];
                if (!f.nonempty[i] && !f.nonempty[j]) continue;
                for (int k = 0; k < 2; ++k) margin = std::min(margin, std::abs(f.motion[i][k] - f.motion[j][k]));
            }
        }
    }
    return margin;
}

/// Smallest |component| of the regularization residual over all terms
/// (kinks of the L1 norm), computed with the library's projection.
inline double regularization_kink_margin(const PillarMotionField& field, const LossContext& ctx) {
    double margin = std::numeric_limits<double>::infinity();
    const auto& pts = ctx.cloud_t().points;
    for (const auto& cam : ctx.object_flows()) {
        for (const auto& s : cam.flow.samples) {
            const Point3& p = pts[s.pixel.point];
            const auto cell = ctx.pillars().assignment[s.pixel.point];
            if (cell < 0) continue;
            const Vec2& m = field.motion[static_cast<std::size_t>(cell)];
            const auto a = project_unbounded(ctx.ego().apply(p + Vec3(m.x(), m.y(), 0.0)), cam.camera);
            const auto b = project_unbounded(ctx.ego().apply(p), cam.camera);
            if (!a || !b) return 0.0;
            const Vec2 r = (*a - *b) - s.object_flow;
            margin = std::min({margin, std::abs(r.x()), std::abs(r.y())});
        }
    }
    return margin;
}

/// Smallest chamfer pair distance at the current matches (kink of the norm at 0).
inline double chamfer_kink_margin(const PillarMotionField& field, const LossContext& ctx, const ChamferMatches& m) {
    const auto moved = transformed_sources(field, ctx.cloud_t(), ctx.pillars(), m.source);
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < moved.size(); ++k) margin = std::min(margin, (moved[k] - ctx.target()[m.forward[k]]).norm());
    for (std::size_t t = 0; t < ctx.target().size(); ++t) {
        margin = std::min(margin, (ctx.target()[t] - moved[m.backward[t]]).norm());
    }
    return margin;
}

struct GradientErrors {
    double consist = 0.0;
    double consist_weighted = 0.0;
    double regular = 0.0;
    double smooth = 0.0;
    double total = 0.0;
};

/// Analytic versus central-difference gradients of every term on one random
/// small scene, chamfer matches frozen at the evaluation point. Returns
/// nullopt when the field sits within `margin` of a kink of any term, so the
/// caller re-samples.
inline std::optional<GradientErrors> gradient_check(Rng& rng, double step = 1e-5, double margin = 1e-2) {
    const SmallScene s = random_small_scene(rng);
    const LossConfig cfg;
    const LossContext ctx(s.inputs, s.grid, cfg);
    const PillarMotionField field = random_field(rng, ctx.zero_field(0.1));
    const ChamferMatches matches = chamfer_matches(field, ctx.cloud_t(), ctx.pillars(), ctx.target_index());
    if (chamfer_kink_margin(field, ctx, matches) < margin || regularization_kink_margin(field, ctx) < margin ||
        smoothness_kink_margin(field) < margin) {
        return std::nullopt;
    }
    const auto& pts = ctx.cloud_t();
    const auto& pill = ctx.pillars();
    const std::span<const Point3> target = ctx.target();

    GradientErrors out;
    auto check = [&](const std::function<LossValue(const PillarMotionField&)>& term) {
        const auto analytic = term(field).gradient;
        const auto numeric = finite_difference(field, [&](const PillarMotionField& f) { return term(f).value; }, step);
        return gradient_relative_error(field, analytic, numeric);
    };
    out.consist = check([&](const PillarMotionField& f) {
        return chamfer_with_matches(f, pts, pill, target, matches, nullptr);
    });
    out.consist_weighted = check([&](const PillarMotionField& f) {
        return chamfer_with_matches(f, pts, pill, target, matches, &ctx.mask());
    });
    out.regular = check([&](const PillarMotionField& f) {
        return regularization(f, pts, pill, ctx.object_flows(), ctx.ego(), cfg);
    });
    out.smooth = check([](const PillarMotionField& f) { return smoothness(f); });
    out.total = check([&](const PillarMotionField& f) {
        const LossTerms t = total_loss_with_matches(f, ctx, matches);
        return LossValue{t.total, t.grad_total};
    });
    return out;
}

}  // namespace pml::test
