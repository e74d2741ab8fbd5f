#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pml/geometry.hpp"
#include "pml/nn_index.hpp"
#include "pml/pillar_grid.hpp"

namespace pml {

/// Weights and constants of the self-supervised objective.
struct LossConfig {
    double lambda_consist = 1.0;
    double lambda_regular = 0.01;
    double lambda_smooth = 1.0;
    double alpha = 0.1;      // smoothing factor of the static probability, 1/px
    double tau = 5.0;        // stationary tolerance, px
    double p_default = 0.5;  // static probability of pillars without camera coverage
    bool use_mask = true;
    bool normalize_regular = false;
    bool squared_chamfer = false;
    FlowSampling flow_sampling = FlowSampling::Nearest;

    /// Throws ConfigError on negative weights, alpha <= 0, tau < 0 or p_default outside [0, 1].
    void validate() const;
};

/// Scalar loss and its gradient with respect to every pillar's (Mx, My).
struct LossValue {
    double value = 0.0;
    std::vector<Vec2> gradient;
};

struct LossTerms {
    double consist = 0.0;
    double regular = 0.0;
    double smooth = 0.0;
    double total = 0.0;
    std::vector<Vec2> grad_consist;
    std::vector<Vec2> grad_regular;
    std::vector<Vec2> grad_smooth;
    std::vector<Vec2> grad_total;
};

/// Probabilistic motion mask. `point_static[i]` is meaningful only where
/// `point_covered[i]`; uncovered pillars carry `p_default`.
struct MaskWeights {
    std::vector<double> point_static;
    std::vector<std::uint8_t> point_covered;
    std::vector<double> pillar_static;
    std::vector<std::uint8_t> pillar_covered;
    /// Chamfer weight per point: 1 - static probability of its pillar (0 out of range).
    std::vector<double> point_weight;

    double pillar_weight(std::size_t cell) const { return 1.0 - pillar_static[cell]; }
};

/// exp(-alpha * max(|F_obj| - tau, 0)).
double static_probability(const Vec2& object_flow, const LossConfig& cfg);

/// One camera's object flow over the points of cloud_t.
struct CameraObjectFlow {
    CameraModel camera;
    ObjectFlowMap flow;
};

MaskWeights build_mask(const PointCloud& cloud_t, const Pillarization& pill,
                       std::span<const CameraObjectFlow> object_flows, const LossConfig& cfg);

/// Nearest-neighbor correspondences at one field value. `source` lists the
/// in-range points of cloud_t; `forward[k]` is the target match of source k;
/// `backward[j]` is the position in `source` matched by target j.
struct ChamferMatches {
    std::vector<std::size_t> source;
    std::vector<std::size_t> forward;
    std::vector<std::size_t> backward;
};

/// Moves every in-range point of cloud_t by its pillar motion (z unchanged).
std::vector<Point3> transformed_sources(const PillarMotionField& field, const PointCloud& cloud_t,
                                        const Pillarization& pill, std::span<const std::size_t> source);

ChamferMatches chamfer_matches(const PillarMotionField& field, const PointCloud& cloud_t, const Pillarization& pill,
                               const NeighborIndex& target);

/// Chamfer value and gradient with the correspondences held fixed.
LossValue chamfer_with_matches(const PillarMotionField& field, const PointCloud& cloud_t, const Pillarization& pill,
                               std::span<const Point3> target, const ChamferMatches& matches,
                               const MaskWeights* weights, bool squared = false);

/// Symmetric chamfer between cloud_t moved by `field` and cloud_t1. Throws
/// EmptyInputError when cloud_t has no in-range point or cloud_t1 is empty.
LossValue chamfer_consistency(const PillarMotionField& field, const PointCloud& cloud_t, const PointCloud& cloud_t1,
                              const Pillarization& pill, const MaskWeights* weights, bool squared = false);

/// L1 distance between the image-projected pillar motion and the object flow,
/// summed over every representative point of every camera.
LossValue regularization(const PillarMotionField& field, const PointCloud& cloud_t, const Pillarization& pill,
                         std::span<const CameraObjectFlow> object_flows, const RigidTransform& ego,
                         const LossConfig& cfg);

/// Total variation of the field with forward differences.
LossValue smoothness(const PillarMotionField& field);

struct CameraFrame {
    CameraModel camera;
    FlowImage flow;
};

/// Two sweeps in the LiDAR frame at t (cloud_t1 ego-compensated), optional
/// cameras with the optical flow between t and t+1, and the ego pose change
/// mapping LiDAR-frame-t coordinates to LiDAR-frame-(t+1) coordinates.
struct SceneInputs {
    PointCloud cloud_t;
    PointCloud cloud_t1;
    std::vector<CameraFrame> cameras;
    RigidTransform ego;
};

struct LossDiagnostics {
    std::size_t source_points = 0;
    std::size_t target_points = 0;
    std::size_t regular_terms = 0;
    std::size_t out_of_view = 0;
    std::size_t invalid_flow = 0;
    std::size_t occluded = 0;
    std::size_t covered_pillars = 0;
    std::size_t nonempty_pillars = 0;
};

/// Everything about a sweep pair that does not depend on the field: pillars,
/// the target index, object flow per camera and the motion mask.
class LossContext {
public:
    LossContext(const SceneInputs& inputs, const GridSpec& grid, const LossConfig& cfg);

    const LossConfig& config() const { return cfg_; }
    const GridSpec& grid() const { return pill_.grid; }
    const PointCloud& cloud_t() const { return cloud_t_; }
    const std::vector<Point3>& target() const { return target_; }
    const NeighborIndex& target_index() const { return *target_index_; }
    const Pillarization& pillars() const { return pill_; }
    const MaskWeights& mask() const { return mask_; }
    std::span<const CameraObjectFlow> object_flows() const { return object_flows_; }
    const RigidTransform& ego() const { return ego_; }
    const LossDiagnostics& diagnostics() const { return diag_; }

    /// Zero field with the nonempty flags of cloud_t.
    PillarMotionField zero_field(double horizon) const;

    LossContext(const LossContext&) = delete;
    LossContext& operator=(const LossContext&) = delete;

private:
    LossConfig cfg_;
    PointCloud cloud_t_;
    std::vector<Point3> target_;
    std::optional<NeighborIndex> target_index_;
    Pillarization pill_;
    std::vector<CameraObjectFlow> object_flows_;
    MaskWeights mask_;
    RigidTransform ego_;
    LossDiagnostics diag_;
};

/// Weighted sum of the three terms. Terms whose weight is zero are skipped and
/// report a value of 0.
LossTerms total_loss(const PillarMotionField& field, const LossContext& ctx);

/// As `total_loss`, with chamfer correspondences supplied by the caller.
LossTerms total_loss_with_matches(const PillarMotionField& field, const LossContext& ctx,
                                  const ChamferMatches& matches);

/// Points of `cloud` inside the grid's ground-plane range.
std::vector<Point3> crop_to_grid(const PointCloud& cloud, const GridSpec& grid);

}  // namespace pml
