#include "pml/estimator.hpp"

#include <cmath>

#include "pml/errors.hpp"

namespace pml {

void OptimizerConfig::validate() const {
    if (!(step_size > 0.0) || !std::isfinite(step_size)) throw ConfigError("step_size must be > 0");
    if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("decay must lie in (0, 1]");
    if (decay_every < 1) throw ConfigError("decay_every must be >= 1");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
        throw ConfigError("moment decay rates must lie in (0, 1)");
    }
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
    if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
    if (!(tolerance >= 0.0)) throw ConfigError("tolerance must be >= 0");
    if (tolerance_window < 1) throw ConfigError("tolerance_window must be >= 1");
}

EstimateResult estimate(const LossContext& ctx, const OptimizerConfig& opt, double horizon) {
    opt.validate();
    EstimateResult result;
    result.field = ctx.zero_field(horizon);
    result.diagnostics = ctx.diagnostics();

    auto& field = result.field;
    const std::size_t n = field.size();
    std::vector<Vec2> first(n, Vec2::Zero());
    std::vector<Vec2> second(n, Vec2::Zero());
    double beta1_pow = 1.0;
    double beta2_pow = 1.0;

    for (int it = 1; it <= opt.max_iters; ++it) {
        const LossTerms terms = total_loss(field, ctx);
        if (!std::isfinite(terms.total)) {
            throw NumericalError("loss became non-finite at iteration " + std::to_string(it));
        }
        result.trace.push_back({terms.consist, terms.regular, terms.smooth, terms.total});
        result.iterations = it;

        bool stationary = true;
        for (std::size_t c = 0; c < n && stationary; ++c) {
            if (field.nonempty[c] && !terms.grad_total[c].isZero(0.0)) stationary = false;
        }
        if (stationary) {
            result.converged = true;
            break;
        }
        if (it > opt.tolerance_window) {
            const double before = result.trace[it - 1 - opt.tolerance_window].total;
            const double change = std::abs(terms.total - before) / std::max(std::abs(before), 1e-12);
            if (change < opt.tolerance) {
                result.converged = true;
                break;
            }
        }

        const double lr = opt.step_size * std::pow(opt.decay, (it - 1) / opt.decay_every);
        beta1_pow *= opt.beta1;
        beta2_pow *= opt.beta2;
        for (std::size_t c = 0; c < n; ++c) {
            if (!field.nonempty[c]) continue;
            const Vec2& g = terms.grad_total[c];
            first[c] = opt.beta1 * first[c] + (1.0 - opt.beta1) * g;
            second[c] = opt.beta2 * second[c] + (1.0 - opt.beta2) * g.cwiseProduct(g);
            const Vec2 m_hat = first[c] / (1.0 - beta1_pow);
            const Vec2 v_hat = second[c] / (1.0 - beta2_pow);
            field.motion[c] -= lr * m_hat.cwiseQuotient((v_hat.cwiseSqrt().array() + opt.epsilon).matrix());
        }
        for (const auto& m : field.motion) {
            if (!m.allFinite()) throw NumericalError("field became non-finite at iteration " + std::to_string(it));
        }
    }
    return result;
}

EstimateResult estimate(const SceneInputs& inputs, const GridSpec& grid, const LossConfig& loss,
                        const OptimizerConfig& opt, double horizon) {
    const LossContext ctx(inputs, grid, loss);
    return estimate(ctx, opt, horizon);
}

LossConfig variant_config(Variant v, const LossConfig& base) {
    LossConfig cfg = base;
    const bool consist = v != Variant::B;
    const bool regular = v == Variant::B || v == Variant::C || v == Variant::E;
    cfg.use_mask = v == Variant::D || v == Variant::E;
    if (!consist) cfg.lambda_consist = 0.0;
    if (!regular) cfg.lambda_regular = 0.0;
    return cfg;
}

Variant parse_variant(const std::string& name) {
    if (name.size() == 1) {
        switch (name[0]) {
            case 'a': case 'A': return Variant::A;
            case 'b': case 'B': return Variant::B;
            case 'c': case 'C': return Variant::C;
            case 'd': case 'D': return Variant::D;
            case 'e': case 'E': return Variant::E;
            default: break;
        }
    }
    throw ConfigError("unknown variant '" + name + "' (expected one of a, b, c, d, e)");
}

char variant_name(Variant v) { return static_cast<char>('a' + static_cast<int>(v)); }

EstimateResult ablation_run(const SceneInputs& inputs, const GridSpec& grid, Variant v, const OptimizerConfig& opt,
                            double horizon, const LossConfig& base) {
    return estimate(inputs, grid, variant_config(v, base), opt, horizon);
}

}  // namespace pml
