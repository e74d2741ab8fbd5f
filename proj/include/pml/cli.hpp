#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pml/estimator.hpp"
#include "pml/eval.hpp"
#include "pml/losses.hpp"
#include "pml/pillar_grid.hpp"
#include "pml/simulator.hpp"

namespace pml::cli {

/// Settings shared by every subcommand. Loaded from strict JSON; command-line
/// flags are applied on top by the caller.
///
/// {"grid": {...}, "loss": {...}, "optimizer": {...}, "scene": {...},
///  "inputs": ["bundle", ...], "output_dir": "out", "seed": 0, "threads": 0,
///  "scene_count": 1, "interval": 0.1, "variants": "abcde",
///  "lambda_values": [0.01, ...]}
struct RunConfig {
    std::optional<GridSpec> grid;  // unset: taken from the bundle or the scene spec
    LossConfig loss;
    OptimizerConfig optimizer;
    std::optional<SceneSpec> scene;  // unset: gen draws random scenes from `seed`
    std::vector<std::filesystem::path> inputs;
    std::filesystem::path output_dir = ".";
    std::uint64_t seed = 0;
    int threads = 0;  // 0 keeps the default (PML_THREADS or all cores)
    int scene_count = 1;
    double interval = 0.1;
    std::vector<Variant> variants{std::begin(kAllVariants), std::end(kAllVariants)};
    std::vector<double> lambda_values{kDefaultLambdaSweep.begin(), kDefaultLambdaSweep.end()};

    /// Throws ConfigError on invalid values or input paths that do not exist.
    void validate() const;
};

/// Relative input paths are resolved against `base_dir`.
RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& cfg);

std::vector<Variant> parse_variant_list(const std::string& letters);

/// Writes one bundle per scene and returns the bundle directories. A single
/// scene goes to `output_dir` itself, several to `output_dir/scene_NNNN`.
std::vector<std::filesystem::path> cmd_gen(const RunConfig& cfg);

struct EstimateOutputs {
    std::filesystem::path field_path;
    std::filesystem::path trace_path;
    EstimateResult result;
};

/// Estimates the field of the single bundle in `cfg.inputs` and writes
/// field.pmf and trace.json. Variant (a) reads no camera files.
EstimateOutputs cmd_estimate(const RunConfig& cfg, Variant variant, double horizon_scale = 1.0);

std::string trace_json(const EstimateResult& result, Variant variant, const RunConfig& cfg);

/// Compares `field_path` with the truth of the single bundle in `cfg.inputs`
/// and writes errors.json and errors.csv. Returns the evaluation.
GroupErrors cmd_eval(const RunConfig& cfg, const std::filesystem::path& field_path);

/// Writes ablation.csv, ablation_summary.csv and ablation.json.
AblationTable cmd_ablate(const RunConfig& cfg);

/// Writes sweep.csv and sweep.json; with `smoothness` also runs the full
/// model without the smoothness term and reports the difference.
LambdaSweep cmd_sweep(const RunConfig& cfg, bool smoothness);

inline constexpr double kPlotStaticThreshold = 0.05;  // m

/// Binary PPM with one pixel per pillar, +y pointing up. Hue follows the
/// motion direction, saturation min(|M| / scale, 1); empty pillars are black,
/// pillars slower than `static_threshold` gray.
std::string render_ppm(const PillarMotionField& field, double scale = 1.0,
                       double static_threshold = kPlotStaticThreshold);

void cmd_plot(const std::filesystem::path& field_path, const std::filesystem::path& out_path, double scale = 1.0);

/// Exit code for an exception escaping a command: 2 for input and
/// configuration errors, 3 for numerical failures, 1 otherwise.
int exit_code_for(const std::exception& e);

}  // namespace pml::cli
