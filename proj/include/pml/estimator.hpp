#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pml/losses.hpp"
#include "pml/pillar_grid.hpp"

namespace pml {

/// Adaptive-moment descent on the field entries of nonempty pillars.
/// The step size is multiplied by `decay` every `decay_every` iterations.
struct OptimizerConfig {
    double step_size = 0.05;  // meters per step
    double decay = 0.8;
    int decay_every = 20;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int max_iters = 300;
    double tolerance = 1e-5;  // relative loss change over `tolerance_window` iterations
    int tolerance_window = 10;
    std::uint64_t seed = 0;   // recorded in traces; the zero initialization does not draw from it

    void validate() const;
};

struct TraceEntry {
    double consist = 0.0;
    double regular = 0.0;
    double smooth = 0.0;
    double total = 0.0;
};

struct EstimateResult {
    PillarMotionField field;
    std::vector<TraceEntry> trace;
    int iterations = 0;
    bool converged = false;
    LossDiagnostics diagnostics;
};

/// Minimizes the total loss over the field of one sweep pair, starting from
/// zero. Chamfer matches are recomputed at every iteration. Throws
/// NumericalError when the loss becomes non-finite.
EstimateResult estimate(const LossContext& ctx, const OptimizerConfig& opt, double horizon);

EstimateResult estimate(const SceneInputs& inputs, const GridSpec& grid, const LossConfig& loss,
                        const OptimizerConfig& opt, double horizon);

/// Loss-term combinations compared in the ablation study; smoothness is on in all.
enum class Variant { A, B, C, D, E };

/// (a) consistency only, (b) regularization only, (c) both, (d) masked
/// consistency, (e) masked consistency plus regularization. Enabled terms keep
/// the weights of `base`; disabled terms get weight 0.
LossConfig variant_config(Variant v, const LossConfig& base = {});

Variant parse_variant(const std::string& name);
char variant_name(Variant v);
inline constexpr Variant kAllVariants[] = {Variant::A, Variant::B, Variant::C, Variant::D, Variant::E};

EstimateResult ablation_run(const SceneInputs& inputs, const GridSpec& grid, Variant v, const OptimizerConfig& opt,
                            double horizon, const LossConfig& base = {});

}  // namespace pml
