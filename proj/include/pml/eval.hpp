#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pml/estimator.hpp"
#include "pml/losses.hpp"
#include "pml/simulator.hpp"

namespace pml {

enum class Group { Static, Slow, Fast, Nonempty, Foreground, Moving };
inline constexpr std::array<Group, 6> kAllGroups = {Group::Static,   Group::Slow,       Group::Fast,
                                                    Group::Nonempty, Group::Foreground, Group::Moving};
const char* group_name(Group g);

/// Per-pillar L2 error statistics of one group. Empty groups have count 0 and
/// zero mean and median.
struct GroupStat {
    double mean = 0.0;
    double median = 0.0;
    std::size_t count = 0;
};

struct GroupErrors {
    std::array<GroupStat, kAllGroups.size()> stats{};

    GroupStat& operator[](Group g) { return stats[static_cast<std::size_t>(g)]; }
    const GroupStat& operator[](Group g) const { return stats[static_cast<std::size_t>(g)]; }
};

bool in_group(std::uint8_t labels, Group g);

/// Error statistics over the nonempty pillars of `truth`. Medians take the
/// lower middle value for even counts. Throws ConfigError on a grid mismatch.
GroupErrors evaluate(const PillarMotionField& pred, const SceneTruth& truth);

struct BandErrors {
    double max_distance = 0.0;  // pillars whose center lies closer than this to the origin
    GroupErrors errors;
};

inline constexpr std::array<double, 3> kDefaultBands = {10.0, 20.0, 30.0};

/// Cumulative distance bands: band d holds every pillar with center distance < d.
std::vector<BandErrors> evaluate_banded(const PillarMotionField& pred, const SceneTruth& truth,
                                        std::span<const double> bands = kDefaultBands);

/// Averages per-scene statistics: each group's mean and median are averaged
/// over the scenes where that group is nonempty; counts are summed.
GroupErrors average(std::span<const GroupErrors> per_scene);

/// A scene with its ground truth, produced on demand so that large suites
/// never sit in memory at once.
struct EvalScene {
    SceneInputs inputs;
    SceneTruth truth;
};
using SceneLoader = std::function<EvalScene()>;

struct VariantSummary {
    Variant variant = Variant::E;
    GroupErrors errors;             // averaged over scenes
    std::vector<BandErrors> bands;  // averaged over scenes, per band
    std::vector<GroupErrors> per_scene;
    std::vector<int> iterations;
};

struct AblationTable {
    std::vector<VariantSummary> rows;
    const VariantSummary& row(Variant v) const;
};

AblationTable ablation_table(std::span<const SceneLoader> scenes, std::span<const Variant> variants,
                             const OptimizerConfig& opt, const LossConfig& base = {},
                             std::span<const double> bands = kDefaultBands);

inline constexpr std::array<double, 5> kDefaultLambdaSweep = {0.01, 0.02, 0.03, 0.04, 0.05};

struct LambdaSweep {
    std::vector<double> values;
    std::vector<GroupErrors> errors;  // per value, averaged over scenes
    /// Population standard deviation, across values, of each group's mean error.
    std::array<double, kAllGroups.size()> mean_stddev{};
};

/// Runs the full model (variant e) for every lambda_regular value.
/// Throws ConfigError with fewer than two values.
LambdaSweep lambda_sweep(std::span<const SceneLoader> scenes, std::span<const double> values,
                         const OptimizerConfig& opt, const LossConfig& base = {});

struct SmoothnessDelta {
    GroupErrors with_smoothness;
    GroupErrors without_smoothness;
    /// without - with, per group mean.
    std::array<double, kAllGroups.size()> mean_delta{};
};

/// Full model with and without the smoothness term.
SmoothnessDelta smoothness_ablation(std::span<const SceneLoader> scenes, const OptimizerConfig& opt,
                                    const LossConfig& base = {});

/// Long-format CSV: `variant,group,statistic,value`, one row per combination.
std::string ablation_csv(const AblationTable& table);
/// One row per variant with `<group>_mean` and `<group>_median` columns.
std::string ablation_summary_csv(const AblationTable& table);
std::string ablation_json(const AblationTable& table);
std::string sweep_csv(const LambdaSweep& sweep);
std::string sweep_json(const LambdaSweep& sweep, const SmoothnessDelta* delta = nullptr);
std::string errors_csv(const GroupErrors& errors, std::span<const BandErrors> bands = {});
std::string errors_json(const GroupErrors& errors, std::span<const BandErrors> bands = {});

}  // namespace pml
