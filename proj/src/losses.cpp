#include "pml/losses.hpp"

#include <cmath>
#include <string>

#include "pml/errors.hpp"
#include "pml/parallel.hpp"

namespace pml {
namespace {

std::vector<Vec2> zeros(std::size_t n) { return std::vector<Vec2>(n, Vec2::Zero()); }

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

std::vector<std::size_t> in_range_points(const Pillarization& pill) {
    std::vector<std::size_t> out;
    out.reserve(pill.in_range_count());
    for (std::size_t i = 0; i < pill.assignment.size(); ++i) {
        if (pill.assignment[i] != Pillarization::kOutOfRange) out.push_back(i);
    }
    return out;
}

void check_field(const PillarMotionField& field, const Pillarization& pill) {
    if (field.grid != pill.grid || field.size() != pill.grid.cell_count()) {
        throw ConfigError("motion field grid does not match the pillarization grid");
    }
}

// Contribution of one matched pair to the chamfer sum and its gradient with
// respect to the moved source point.
struct PairTerm {
    double value = 0.0;
    Vec2 grad = Vec2::Zero();
};

PairTerm pair_term(const Point3& moved, const Point3& target, double weight, bool squared) {
    const Vec3 diff = moved - target;
    PairTerm t;
    if (squared) {
        t.value = weight * diff.squaredNorm();
        t.grad = 2.0 * weight * diff.head<2>();
        return t;
    }
    const double d = diff.norm();
    t.value = weight * d;
    if (d > 0.0) t.grad = (weight / d) * diff.head<2>();
    return t;
}

}  // namespace

void LossConfig::validate() const {
    auto finite_nonneg = [](double v, const char* name) {
        if (!std::isfinite(v) || v < 0.0) throw ConfigError(std::string(name) + " must be finite and >= 0");
    };
    finite_nonneg(lambda_consist, "lambda_consist");
    finite_nonneg(lambda_regular, "lambda_regular");
    finite_nonneg(lambda_smooth, "lambda_smooth");
    finite_nonneg(tau, "tau");
    if (!std::isfinite(alpha) || alpha <= 0.0) throw ConfigError("alpha must be > 0");
    if (!(p_default >= 0.0 && p_default <= 1.0)) throw ConfigError("p_default must lie in [0, 1]");
}

double static_probability(const Vec2& object_flow, const LossConfig& cfg) {
    return std::exp(-cfg.alpha * std::max(object_flow.norm() - cfg.tau, 0.0));
}

MaskWeights build_mask(const PointCloud& cloud_t, const Pillarization& pill,
                       std::span<const CameraObjectFlow> object_flows, const LossConfig& cfg) {
    const std::size_t n = cloud_t.size();
    const std::size_t cells = pill.grid.cell_count();
    MaskWeights mask;
    mask.point_static.assign(n, 0.0);
    mask.point_covered.assign(n, 0);
    mask.pillar_static.assign(cells, cfg.p_default);
    mask.pillar_covered.assign(cells, 0);
    mask.point_weight.assign(n, 0.0);

    // A point seen by several cameras takes the mean of its per-camera values.
    std::vector<std::uint32_t> observations(n, 0);
    for (const auto& cam : object_flows) {
        for (const auto& s : cam.flow.samples) {
            mask.point_static[s.pixel.point] += static_probability(s.object_flow, cfg);
            ++observations[s.pixel.point];
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (observations[i] == 0) continue;
        mask.point_static[i] /= observations[i];
        mask.point_covered[i] = 1;
    }

    for (std::size_t c = 0; c < cells; ++c) {
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto i : pill.points_in(c)) {
            if (!mask.point_covered[i]) continue;
            sum += mask.point_static[i];
            ++count;
        }
        if (count > 0) {
            mask.pillar_static[c] = sum / static_cast<double>(count);
            mask.pillar_covered[c] = 1;
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        const auto cell = pill.assignment[i];
        if (cell != Pillarization::kOutOfRange) mask.point_weight[i] = mask.pillar_weight(cell);
    }
    return mask;
}

std::vector<Point3> transformed_sources(const PillarMotionField& field, const PointCloud& cloud_t,
                                        const Pillarization& pill, std::span<const std::size_t> source) {
    std::vector<Point3> moved(source.size());
    for (std::size_t k = 0; k < source.size(); ++k) {
        const auto i = source[k];
        const Vec2& m = field.motion[pill.assignment[i]];
        moved[k] = cloud_t.points[i] + Vec3(m.x(), m.y(), 0.0);
    }
    return moved;
}

ChamferMatches chamfer_matches(const PillarMotionField& field, const PointCloud& cloud_t, const Pillarization& pill,
                               const NeighborIndex& target) {
    check_field(field, pill);
    ChamferMatches m;
    m.source = in_range_points(pill);
    if (m.source.empty()) throw EmptyInputError("no point of cloud_t lies inside the grid");

    const auto moved = transformed_sources(field, cloud_t, pill, m.source);
    const NeighborIndex moved_index(moved);

    m.forward.resize(moved.size());
    parallel_for(moved.size(), [&](std::size_t b, std::size_t e) {
        for (auto k = b; k < e; ++k) m.forward[k] = target.nearest(moved[k]).index;
    });
    m.backward.resize(target.size());
    parallel_for(target.size(), [&](std::size_t b, std::size_t e) {
        for (auto j = b; j < e; ++j) m.backward[j] = moved_index.nearest(target.point(j)).index;
    });
    return m;
}

LossValue chamfer_with_matches(const PillarMotionField& field, const PointCloud& cloud_t, const Pillarization& pill,
                               std::span<const Point3> target, const ChamferMatches& matches,
                               const MaskWeights* weights, bool squared) {
    check_field(field, pill);
    const auto moved = transformed_sources(field, cloud_t, pill, matches.source);
    auto weight_of = [&](std::size_t k) { return weights ? weights->point_weight[matches.source[k]] : 1.0; };

    std::vector<PairTerm> forward(moved.size());
    parallel_for(moved.size(), [&](std::size_t b, std::size_t e) {
        for (auto k = b; k < e; ++k) forward[k] = pair_term(moved[k], target[matches.forward[k]], weight_of(k), squared);
    });
    std::vector<PairTerm> backward(target.size());
    parallel_for(target.size(), [&](std::size_t b, std::size_t e) {
        for (auto j = b; j < e; ++j) {
            const auto k = matches.backward[j];
            backward[j] = pair_term(moved[k], target[j], weight_of(k), squared);
        }
    });

    // Ordered reduction: identical results for any thread count.
    LossValue out{0.0, zeros(field.size())};
    for (std::size_t k = 0; k < forward.size(); ++k) {
        out.value += forward[k].value;
        out.gradient[pill.assignment[matches.source[k]]] += forward[k].grad;
    }
    for (std::size_t j = 0; j < backward.size(); ++j) {
        out.value += backward[j].value;
        out.gradient[pill.assignment[matches.source[matches.backward[j]]]] += backward[j].grad;
    }
    return out;
}

LossValue chamfer_consistency(const PillarMotionField& field, const PointCloud& cloud_t, const PointCloud& cloud_t1,
                              const Pillarization& pill, const MaskWeights* weights, bool squared) {
    if (cloud_t.empty() || cloud_t1.empty()) throw EmptyInputError("chamfer needs two nonempty clouds");
    const NeighborIndex target(cloud_t1.points);
    const auto matches = chamfer_matches(field, cloud_t, pill, target);
    return chamfer_with_matches(field, cloud_t, pill, cloud_t1.points, matches, weights, squared);
}

LossValue regularization(const PillarMotionField& field, const PointCloud& cloud_t, const Pillarization& pill,
                         std::span<const CameraObjectFlow> object_flows, const RigidTransform& ego,
                         const LossConfig& cfg) {
    check_field(field, pill);
    struct Term {
        double value = 0.0;
        Vec2 grad = Vec2::Zero();
        std::int32_t cell = Pillarization::kOutOfRange;
    };

    // Flatten (camera, sample) pairs so evaluation can run in parallel.
    std::vector<std::pair<std::size_t, std::size_t>> refs;
    for (std::size_t c = 0; c < object_flows.size(); ++c) {
        for (std::size_t s = 0; s < object_flows[c].flow.samples.size(); ++s) refs.emplace_back(c, s);
    }

    const Eigen::Matrix<double, 3, 2> planar = ego.rotation().leftCols<2>();
    std::vector<Term> terms(refs.size());
    parallel_for(refs.size(), [&](std::size_t b, std::size_t e) {
        for (auto r = b; r < e; ++r) {
            const auto& [c, s] = refs[r];
            const auto& cam = object_flows[c].camera;
            const auto& sample = object_flows[c].flow.samples[s];
            const auto cell = pill.assignment[sample.pixel.point];
            if (cell == Pillarization::kOutOfRange) continue;

            const Point3& p = cloud_t.points[sample.pixel.point];
            const Vec2& m = field.motion[cell];
            const Point3 moved_next = ego.apply(p + Vec3(m.x(), m.y(), 0.0));
            const auto from = project_unbounded(ego.apply(p), cam);
            const auto to = project_unbounded(moved_next, cam);
            if (!from || !to) continue;

            const Vec2 residual = (*to - *from) - sample.object_flow;
            const Vec2 sgn(sign(residual.x()), sign(residual.y()));
            terms[r].value = residual.cwiseAbs().sum();
            terms[r].grad = (sgn.transpose() * projection_jacobian(moved_next, cam) * planar).transpose();
            terms[r].cell = cell;
        }
    });

    LossValue out{0.0, zeros(field.size())};
    std::size_t used = 0;
    for (const auto& t : terms) {
        if (t.cell == Pillarization::kOutOfRange) continue;
        out.value += t.value;
        out.gradient[t.cell] += t.grad;
        ++used;
    }
    if (cfg.normalize_regular && used > 0) {
        const double inv = 1.0 / static_cast<double>(used);
        out.value *= inv;
        for (auto& g : out.gradient) g *= inv;
    }
    return out;
}

LossValue smoothness(const PillarMotionField& field) {
    const int w = field.grid.width();
    const int h = field.grid.height();
    LossValue out{0.0, zeros(field.size())};
    auto edge = [&](std::size_t a, std::size_t b) {
        const Vec2 d = field.motion[b] - field.motion[a];
        out.value += std::abs(d.x()) + std::abs(d.y());
        const Vec2 g(sign(d.x()), sign(d.y()));
        out.gradient[b] += g;
        out.gradient[a] -= g;
    };
    for (int row = 0; row < h; ++row) {
        for (int col = 0; col < w; ++col) {
            const std::size_t k = static_cast<std::size_t>(row) * w + col;
            if (col + 1 < w) edge(k, k + 1);
            if (row + 1 < h) edge(k, k + w);
        }
    }
    return out;
}

std::vector<Point3> crop_to_grid(const PointCloud& cloud, const GridSpec& grid) {
    std::vector<Point3> out;
    out.reserve(cloud.size());
    for (const auto& p : cloud.points) {
        if (grid.cell_of(p.x(), p.y())) out.push_back(p);
    }
    return out;
}

LossContext::LossContext(const SceneInputs& inputs, const GridSpec& grid, const LossConfig& cfg)
    : cfg_(cfg), cloud_t_(inputs.cloud_t), ego_(inputs.ego) {
    cfg_.validate();
    for (const auto* cloud : {&inputs.cloud_t, &inputs.cloud_t1}) {
        for (std::size_t i = 0; i < cloud->size(); ++i) {
            if (!cloud->points[i].allFinite()) {
                throw NumericalError(std::string(cloud == &inputs.cloud_t ? "cloud_t" : "cloud_t1") +
                                     ": non-finite coordinate in point " + std::to_string(i));
            }
        }
    }
    pill_ = pillarize(cloud_t_, grid);
    if (pill_.in_range_count() == 0) throw EmptyInputError("no point of cloud_t lies inside the grid");
    target_ = crop_to_grid(inputs.cloud_t1, grid);
    if (target_.empty()) throw EmptyInputError("no point of cloud_t1 lies inside the grid");
    target_index_.emplace(target_);

    for (const auto& frame : inputs.cameras) {
        frame.camera.validate();
        CameraObjectFlow cof{frame.camera, factorize_object_flow(frame.flow, cloud_t_.points, frame.camera, ego_,
                                                                  cfg_.flow_sampling)};
        diag_.out_of_view += cof.flow.out_of_view;
        diag_.invalid_flow += cof.flow.invalid_flow;
        diag_.occluded += cof.flow.occluded;
        diag_.regular_terms += cof.flow.samples.size();
        object_flows_.push_back(std::move(cof));
    }
    mask_ = build_mask(cloud_t_, pill_, object_flows_, cfg_);

    diag_.source_points = pill_.in_range_count();
    diag_.target_points = target_.size();
    for (std::size_t c = 0; c < pill_.nonempty.size(); ++c) {
        diag_.nonempty_pillars += pill_.nonempty[c];
        diag_.covered_pillars += mask_.pillar_covered[c];
    }
}

PillarMotionField LossContext::zero_field(double horizon) const {
    PillarMotionField f(pill_.grid, horizon);
    f.nonempty = pill_.nonempty;
    return f;
}

LossTerms total_loss_with_matches(const PillarMotionField& field, const LossContext& ctx,
                                  const ChamferMatches& matches) {
    const auto& cfg = ctx.config();
    const std::size_t n = field.size();
    LossTerms t;
    t.grad_consist = zeros(n);
    t.grad_regular = zeros(n);
    t.grad_smooth = zeros(n);
    t.grad_total = zeros(n);

    if (cfg.lambda_consist > 0.0) {
        auto v = chamfer_with_matches(field, ctx.cloud_t(), ctx.pillars(), ctx.target(), matches,
                                      cfg.use_mask ? &ctx.mask() : nullptr, cfg.squared_chamfer);
        t.consist = v.value;
        t.grad_consist = std::move(v.gradient);
    }
    if (cfg.lambda_regular > 0.0) {
        auto v = regularization(field, ctx.cloud_t(), ctx.pillars(), ctx.object_flows(), ctx.ego(), cfg);
        t.regular = v.value;
        t.grad_regular = std::move(v.gradient);
    }
    if (cfg.lambda_smooth > 0.0) {
        auto v = smoothness(field);
        t.smooth = v.value;
        t.grad_smooth = std::move(v.gradient);
    }

    t.total = cfg.lambda_consist * t.consist + cfg.lambda_regular * t.regular + cfg.lambda_smooth * t.smooth;
    for (std::size_t c = 0; c < n; ++c) {
        t.grad_total[c] = cfg.lambda_consist * t.grad_consist[c] + cfg.lambda_regular * t.grad_regular[c] +
                          cfg.lambda_smooth * t.grad_smooth[c];
    }
    return t;
}

LossTerms total_loss(const PillarMotionField& field, const LossContext& ctx) {
    ChamferMatches matches;
    if (ctx.config().lambda_consist > 0.0) matches = chamfer_matches(field, ctx.cloud_t(), ctx.pillars(), ctx.target_index());
    return total_loss_with_matches(field, ctx, matches);
}

}  // namespace pml
