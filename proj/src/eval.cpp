#include "pml/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "pml/errors.hpp"

namespace pml {
namespace {

constexpr double kGridTol = 1e-6;

void check_grid(const PillarMotionField& pred, const SceneTruth& truth) {
    const auto& a = pred.grid;
    const auto& b = truth.field.grid;
    const bool same = a.width() == b.width() && a.height() == b.height() &&
                      std::abs(a.cell_size - b.cell_size) < kGridTol && std::abs(a.x_min - b.x_min) < kGridTol &&
                      std::abs(a.y_min - b.y_min) < kGridTol;
    if (!same || pred.size() != truth.field.size() || truth.labels.size() != truth.field.size()) {
        throw ConfigError("prediction grid does not match the ground-truth grid");
    }
}

GroupStat summarize(std::vector<double>& errors) {
    GroupStat s;
    s.count = errors.size();
    if (errors.empty()) return s;
    double sum = 0.0;
    for (const double e : errors) sum += e;
    s.mean = sum / static_cast<double>(errors.size());
    const std::size_t mid = (errors.size() - 1) / 2;
    std::nth_element(errors.begin(), errors.begin() + mid, errors.end());
    s.median = errors[mid];
    return s;
}

// Errors per group over pillars accepted by `keep`.
template <typename Keep>
GroupErrors evaluate_where(const PillarMotionField& pred, const SceneTruth& truth, Keep keep) {
    std::array<std::vector<double>, kAllGroups.size()> buckets;
    for (std::size_t c = 0; c < truth.field.size(); ++c) {
        if (!truth.field.nonempty[c] || !keep(c)) continue;
        const double err = (pred.motion[c] - truth.field.motion[c]).norm();
        for (const auto g : kAllGroups) {
            if (in_group(truth.labels[c], g)) buckets[static_cast<std::size_t>(g)].push_back(err);
        }
    }
    GroupErrors out;
    // Sorting first makes sums independent of pillar enumeration order.
    for (std::size_t g = 0; g < buckets.size(); ++g) {
        std::sort(buckets[g].begin(), buckets[g].end());
        out.stats[g] = summarize(buckets[g]);
    }
    return out;
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

nlohmann::ordered_json errors_to_json(const GroupErrors& e) {
    nlohmann::ordered_json j;
    for (const auto g : kAllGroups) {
        j[group_name(g)] = {{"mean", e[g].mean}, {"median", e[g].median}, {"count", e[g].count}};
    }
    return j;
}

double population_stddev(std::span<const double> xs) {
    double mean = 0.0;
    for (const double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (const double x : xs) var += (x - mean) * (x - mean);
    return std::sqrt(var / static_cast<double>(xs.size()));
}

}  // namespace

const char* group_name(Group g) {
    switch (g) {
        case Group::Static: return "static";
        case Group::Slow: return "slow";
        case Group::Fast: return "fast";
        case Group::Nonempty: return "nonempty";
        case Group::Foreground: return "foreground";
        case Group::Moving: return "moving";
    }
    return "?";
}

bool in_group(std::uint8_t labels, Group g) {
    switch (g) {
        case Group::Static: return labels & kLabelStatic;
        case Group::Slow: return labels & kLabelSlow;
        case Group::Fast: return labels & kLabelFast;
        case Group::Nonempty: return true;
        case Group::Foreground: return labels & kLabelForeground;
        case Group::Moving: return labels & kLabelMoving;
    }
    return false;
}

GroupErrors evaluate(const PillarMotionField& pred, const SceneTruth& truth) {
    check_grid(pred, truth);
    return evaluate_where(pred, truth, [](std::size_t) { return true; });
}

std::vector<BandErrors> evaluate_banded(const PillarMotionField& pred, const SceneTruth& truth,
                                        std::span<const double> bands) {
    check_grid(pred, truth);
    std::vector<BandErrors> out;
    for (const double d : bands) {
        const auto& grid = truth.field.grid;
        out.push_back({d, evaluate_where(pred, truth, [&](std::size_t c) { return grid.cell_center(c).norm() < d; })});
    }
    return out;
}

GroupErrors average(std::span<const GroupErrors> per_scene) {
    GroupErrors out;
    for (std::size_t g = 0; g < kAllGroups.size(); ++g) {
        std::size_t scenes = 0;
        for (const auto& e : per_scene) {
            if (e.stats[g].count == 0) continue;
            out.stats[g].mean += e.stats[g].mean;
            out.stats[g].median += e.stats[g].median;
            out.stats[g].count += e.stats[g].count;
            ++scenes;
        }
        if (scenes > 0) {
            out.stats[g].mean /= static_cast<double>(scenes);
            out.stats[g].median /= static_cast<double>(scenes);
        }
    }
    return out;
}

const VariantSummary& AblationTable::row(Variant v) const {
    for (const auto& r : rows) {
        if (r.variant == v) return r;
    }
    throw ConfigError(std::string("ablation table has no row for variant ") + variant_name(v));
}

AblationTable ablation_table(std::span<const SceneLoader> scenes, std::span<const Variant> variants,
                             const OptimizerConfig& opt, const LossConfig& base, std::span<const double> bands) {
    if (scenes.empty()) throw ConfigError("ablation needs at least one scene");
    AblationTable table;
    for (const auto v : variants) table.rows.push_back({v, {}, {}, {}, {}});
    std::vector<std::vector<std::vector<GroupErrors>>> band_runs(variants.size(),
                                                                 std::vector<std::vector<GroupErrors>>(bands.size()));

    for (const auto& load : scenes) {
        const EvalScene scene = load();
        const auto& grid = scene.truth.field.grid;
        for (std::size_t r = 0; r < variants.size(); ++r) {
            const auto result = ablation_run(scene.inputs, grid, variants[r], opt, scene.truth.field.horizon, base);
            table.rows[r].per_scene.push_back(evaluate(result.field, scene.truth));
            table.rows[r].iterations.push_back(result.iterations);
            const auto banded = evaluate_banded(result.field, scene.truth, bands);
            for (std::size_t b = 0; b < bands.size(); ++b) band_runs[r][b].push_back(banded[b].errors);
        }
    }
    for (std::size_t r = 0; r < variants.size(); ++r) {
        table.rows[r].errors = average(table.rows[r].per_scene);
        for (std::size_t b = 0; b < bands.size(); ++b) table.rows[r].bands.push_back({bands[b], average(band_runs[r][b])});
    }
    return table;
}

LambdaSweep lambda_sweep(std::span<const SceneLoader> scenes, std::span<const double> values,
                         const OptimizerConfig& opt, const LossConfig& base) {
    if (values.size() < 2) throw ConfigError("lambda sweep needs at least two values");
    if (scenes.empty()) throw ConfigError("lambda sweep needs at least one scene");
    LambdaSweep sweep;
    sweep.values.assign(values.begin(), values.end());
    std::vector<std::vector<GroupErrors>> runs(values.size());

    for (const auto& load : scenes) {
        const EvalScene scene = load();
        for (std::size_t k = 0; k < values.size(); ++k) {
            LossConfig cfg = base;
            cfg.lambda_regular = values[k];
            const auto result =
                ablation_run(scene.inputs, scene.truth.field.grid, Variant::E, opt, scene.truth.field.horizon, cfg);
            runs[k].push_back(evaluate(result.field, scene.truth));
        }
    }
    for (const auto& r : runs) sweep.errors.push_back(average(r));
    for (std::size_t g = 0; g < kAllGroups.size(); ++g) {
        std::vector<double> means;
        for (const auto& e : sweep.errors) means.push_back(e.stats[g].mean);
        sweep.mean_stddev[g] = population_stddev(means);
    }
    return sweep;
}

SmoothnessDelta smoothness_ablation(std::span<const SceneLoader> scenes, const OptimizerConfig& opt,
                                    const LossConfig& base) {
    if (scenes.empty()) throw ConfigError("smoothness ablation needs at least one scene");
    std::vector<GroupErrors> with;
    std::vector<GroupErrors> without;
    for (const auto& load : scenes) {
        const EvalScene scene = load();
        LossConfig off = base;
        off.lambda_smooth = 0.0;
        const auto& grid = scene.truth.field.grid;
        const double horizon = scene.truth.field.horizon;
        with.push_back(evaluate(ablation_run(scene.inputs, grid, Variant::E, opt, horizon, base).field, scene.truth));
        without.push_back(evaluate(ablation_run(scene.inputs, grid, Variant::E, opt, horizon, off).field, scene.truth));
    }
    SmoothnessDelta d;
    d.with_smoothness = average(with);
    d.without_smoothness = average(without);
    for (std::size_t g = 0; g < kAllGroups.size(); ++g) {
        d.mean_delta[g] = d.without_smoothness.stats[g].mean - d.with_smoothness.stats[g].mean;
    }
    return d;
}

std::string ablation_csv(const AblationTable& table) {
    std::ostringstream os;
    os << "variant,group,statistic,value\n";
    for (const auto& row : table.rows) {
        for (const auto g : kAllGroups) {
            const auto& s = row.errors[g];
            os << variant_name(row.variant) << ',' << group_name(g) << ",mean," << num(s.mean) << '\n';
            os << variant_name(row.variant) << ',' << group_name(g) << ",median," << num(s.median) << '\n';
            os << variant_name(row.variant) << ',' << group_name(g) << ",count," << s.count << '\n';
        }
    }
    return os.str();
}

std::string ablation_summary_csv(const AblationTable& table) {
    std::ostringstream os;
    os << "variant";
    for (const auto g : kAllGroups) os << ',' << group_name(g) << "_mean," << group_name(g) << "_median";
    os << '\n';
    for (const auto& row : table.rows) {
        os << variant_name(row.variant);
        for (const auto g : kAllGroups) os << ',' << num(row.errors[g].mean) << ',' << num(row.errors[g].median);
        os << '\n';
    }
    return os.str();
}

std::string ablation_json(const AblationTable& table) {
    nlohmann::ordered_json j;
    j["scenes"] = table.rows.empty() ? 0 : table.rows.front().per_scene.size();
    for (const auto& row : table.rows) {
        nlohmann::ordered_json r;
        r["errors"] = errors_to_json(row.errors);
        for (const auto& b : row.bands) {
            r["bands"].push_back({{"max_distance", b.max_distance}, {"errors", errors_to_json(b.errors)}});
        }
        r["iterations"] = row.iterations;
        j["variants"][std::string(1, variant_name(row.variant))] = r;
    }
    return j.dump(2) + "\n";
}

std::string sweep_csv(const LambdaSweep& sweep) {
    std::ostringstream os;
    os << "lambda_regular,group,statistic,value\n";
    for (std::size_t k = 0; k < sweep.values.size(); ++k) {
        for (const auto g : kAllGroups) {
            const auto& s = sweep.errors[k][g];
            os << num(sweep.values[k]) << ',' << group_name(g) << ",mean," << num(s.mean) << '\n';
            os << num(sweep.values[k]) << ',' << group_name(g) << ",median," << num(s.median) << '\n';
        }
    }
    for (const auto g : kAllGroups) {
        os << "all," << group_name(g) << ",mean_stddev," << num(sweep.mean_stddev[static_cast<std::size_t>(g)]) << '\n';
    }
    return os.str();
}

std::string sweep_json(const LambdaSweep& sweep, const SmoothnessDelta* delta) {
    nlohmann::ordered_json j;
    for (std::size_t k = 0; k < sweep.values.size(); ++k) {
        j["runs"].push_back({{"lambda_regular", sweep.values[k]}, {"errors", errors_to_json(sweep.errors[k])}});
    }
    for (const auto g : kAllGroups) j["mean_stddev"][group_name(g)] = sweep.mean_stddev[static_cast<std::size_t>(g)];
    if (delta) {
        j["smoothness"]["with"] = errors_to_json(delta->with_smoothness);
        j["smoothness"]["without"] = errors_to_json(delta->without_smoothness);
        for (const auto g : kAllGroups) {
            j["smoothness"]["mean_delta"][group_name(g)] = delta->mean_delta[static_cast<std::size_t>(g)];
        }
    }
    return j.dump(2) + "\n";
}

std::string errors_csv(const GroupErrors& errors, std::span<const BandErrors> bands) {
    std::ostringstream os;
    os << "band,group,statistic,value\n";
    auto emit = [&](const std::string& band, const GroupErrors& e) {
        for (const auto g : kAllGroups) {
            os << band << ',' << group_name(g) << ",mean," << num(e[g].mean) << '\n';
            os << band << ',' << group_name(g) << ",median," << num(e[g].median) << '\n';
            os << band << ',' << group_name(g) << ",count," << e[g].count << '\n';
        }
    };
    emit("all", errors);
    for (const auto& b : bands) emit("<" + num(b.max_distance), b.errors);
    return os.str();
}

std::string errors_json(const GroupErrors& errors, std::span<const BandErrors> bands) {
    nlohmann::ordered_json j;
    j["errors"] = errors_to_json(errors);
    for (const auto& b : bands) {
        j["bands"].push_back({{"max_distance", b.max_distance}, {"errors", errors_to_json(b.errors)}});
    }
    return j.dump(2) + "\n";
}

}  // namespace pml
