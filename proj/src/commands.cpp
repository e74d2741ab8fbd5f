#include <cmath>
#include <cstdio>
#include <numbers>

#include <json.hpp>

#include "pml/cli.hpp"
#include "pml/errors.hpp"
#include "pml/io.hpp"
#include "pml/parallel.hpp"

namespace pml::cli {
namespace {

namespace fs = std::filesystem;

const fs::path& single_input(const RunConfig& cfg, const char* command) {
    if (cfg.inputs.size() != 1) {
        throw ConfigError(std::string(command) + " needs exactly one input bundle, got " +
                          std::to_string(cfg.inputs.size()));
    }
    return cfg.inputs.front();
}

void apply_threads(const RunConfig& cfg) {
    if (cfg.threads > 0) set_num_threads(cfg.threads);
}

void check_grid(const RunConfig& cfg, const GridSpec& bundle_grid, const fs::path& dir) {
    if (cfg.grid && !(*cfg.grid == bundle_grid)) {
        throw ConfigError("configured grid does not match the truth grid of '" + dir.string() + "'");
    }
}

std::vector<SceneLoader> bundle_loaders(const RunConfig& cfg) {
    if (cfg.inputs.empty()) throw ConfigError("no input bundles given");
    std::vector<SceneLoader> loaders;
    for (const auto& dir : cfg.inputs) {
        loaders.emplace_back([dir, &cfg] {
            auto scene = io::read_bundle(dir);
            check_grid(cfg, scene.truth.field.grid, dir);
            return scene;
        });
    }
    return loaders;
}

std::array<std::uint8_t, 3> hsv_to_rgb(double hue_deg, double sat) {
    const double h = hue_deg / 60.0;
    const int sector = static_cast<int>(std::floor(h)) % 6;
    const double f = h - std::floor(h);
    const double p = 1.0 - sat;
    const double q = 1.0 - sat * f;
    const double t = 1.0 - sat * (1.0 - f);
    double r = 0.0;
    double g = 0.0;
    double b = 0.0;
    switch (sector) {
        case 0: r = 1; g = t; b = p; break;
        case 1: r = q; g = 1; b = p; break;
        case 2: r = p; g = 1; b = t; break;
        case 3: r = p; g = q; b = 1; break;
        case 4: r = t; g = p; b = 1; break;
        default: r = 1; g = p; b = q; break;
    }
    auto byte = [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
    return {byte(r), byte(g), byte(b)};
}

}  // namespace

std::vector<fs::path> cmd_gen(const RunConfig& cfg) {
    apply_threads(cfg);
    std::vector<SceneSpec> specs;
    if (cfg.scene) {
        if (cfg.scene_count != 1) throw ConfigError("an explicit scene spec generates exactly one scene");
        specs.push_back(*cfg.scene);
        if (cfg.grid) specs.back().grid = *cfg.grid;
    } else {
        const GridSpec grid = cfg.grid.value_or(GridSpec{});
        for (int i = 0; i < cfg.scene_count; ++i) {
            specs.push_back(random_scene_spec(cfg.seed + static_cast<std::uint64_t>(i), grid, cfg.interval));
        }
    }
    std::vector<fs::path> dirs;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "scene_%04zu", i);
        const fs::path dir = specs.size() == 1 ? cfg.output_dir : cfg.output_dir / name;
        io::write_bundle(dir, generate(specs[i]));
        dirs.push_back(dir);
    }
    return dirs;
}

std::string trace_json(const EstimateResult& result, Variant variant, const RunConfig& cfg) {
    nlohmann::ordered_json j;
    j["variant"] = std::string(1, variant_name(variant));
    j["seed"] = cfg.optimizer.seed;
    j["iterations"] = result.iterations;
    j["converged"] = result.converged;
    j["horizon"] = result.field.horizon;
    const auto& d = result.diagnostics;
    j["diagnostics"] = {{"source_points", d.source_points},     {"target_points", d.target_points},
                        {"regular_terms", d.regular_terms},     {"out_of_view", d.out_of_view},
                        {"invalid_flow", d.invalid_flow},       {"occluded", d.occluded},
                        {"covered_pillars", d.covered_pillars}, {"nonempty_pillars", d.nonempty_pillars}};
    j["trace"] = nlohmann::ordered_json::array();
    for (const auto& t : result.trace) {
        j["trace"].push_back({{"consist", t.consist}, {"regular", t.regular}, {"smooth", t.smooth}, {"total", t.total}});
    }
    return j.dump(2) + "\n";
}

EstimateOutputs cmd_estimate(const RunConfig& cfg, Variant variant, double horizon_scale) {
    apply_threads(cfg);
    if (!(horizon_scale > 0.0) || !std::isfinite(horizon_scale)) throw ConfigError("horizon scale must be > 0");
    const fs::path& dir = single_input(cfg, "estimate");
    const SceneInputs inputs = io::read_inputs(dir, variant != Variant::A);

    GridSpec grid = cfg.grid.value_or(GridSpec{});
    double horizon = cfg.interval;
    if (fs::exists(dir / "spec.json")) {
        const SceneSpec spec = io::parse_scene_spec(io::read_file(dir / "spec.json"));
        if (!cfg.grid) grid = spec.grid;
        horizon = spec.interval;
    }

    EstimateOutputs out;
    out.result = ablation_run(inputs, grid, variant, cfg.optimizer, horizon, cfg.loss);
    if (horizon_scale != 1.0) out.result.field = scale_horizon(out.result.field, horizon_scale);

    fs::create_directories(cfg.output_dir);
    out.field_path = cfg.output_dir / "field.pmf";
    out.trace_path = cfg.output_dir / "trace.json";
    io::write_field(out.field_path, out.result.field);
    io::write_file(out.trace_path, trace_json(out.result, variant, cfg));
    return out;
}

GroupErrors cmd_eval(const RunConfig& cfg, const fs::path& field_path) {
    apply_threads(cfg);
    const fs::path& dir = single_input(cfg, "eval");
    const PillarMotionField pred = io::read_field(field_path);
    const PillarMotionField truth_field = io::read_field(dir / "truth.pmf");
    const SceneTruth truth = truth_from_labels(truth_field, io::read_labels(dir / "truth_labels.bin", truth_field.size()));
    check_grid(cfg, truth.field.grid, dir);

    const GroupErrors errors = evaluate(pred, truth);
    const auto bands = evaluate_banded(pred, truth);
    fs::create_directories(cfg.output_dir);
    io::write_file(cfg.output_dir / "errors.json", errors_json(errors, bands));
    io::write_file(cfg.output_dir / "errors.csv", errors_csv(errors, bands));
    return errors;
}

AblationTable cmd_ablate(const RunConfig& cfg) {
    apply_threads(cfg);
    const auto loaders = bundle_loaders(cfg);
    const AblationTable table = ablation_table(loaders, cfg.variants, cfg.optimizer, cfg.loss);
    fs::create_directories(cfg.output_dir);
    io::write_file(cfg.output_dir / "ablation.csv", ablation_csv(table));
    io::write_file(cfg.output_dir / "ablation_summary.csv", ablation_summary_csv(table));
    io::write_file(cfg.output_dir / "ablation.json", ablation_json(table));
    return table;
}

LambdaSweep cmd_sweep(const RunConfig& cfg, bool smoothness) {
    apply_threads(cfg);
    const auto loaders = bundle_loaders(cfg);
    const LambdaSweep sweep = lambda_sweep(loaders, cfg.lambda_values, cfg.optimizer, cfg.loss);
    std::optional<SmoothnessDelta> delta;
    if (smoothness) delta = smoothness_ablation(loaders, cfg.optimizer, cfg.loss);
    fs::create_directories(cfg.output_dir);
    io::write_file(cfg.output_dir / "sweep.csv", sweep_csv(sweep));
    io::write_file(cfg.output_dir / "sweep.json", sweep_json(sweep, delta ? &*delta : nullptr));
    return sweep;
}

std::string render_ppm(const PillarMotionField& field, double scale, double static_threshold) {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("plot scale must be > 0");
    const int w = field.grid.width();
    const int h = field.grid.height();
    std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    const std::size_t header = out.size();
    out.resize(header + static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y) {
        const int row = h - 1 - y;  // +y up
        for (int x = 0; x < w; ++x) {
            const std::size_t cell = static_cast<std::size_t>(row) * w + x;
            const Vec2& m = field.motion[cell];
            std::array<std::uint8_t, 3> rgb{0, 0, 0};
            if (field.nonempty[cell]) {
                const double norm = m.norm();
                if (norm < static_threshold) {
                    rgb = {128, 128, 128};
                } else {
                    double hue = std::atan2(m.y(), m.x()) * 180.0 / std::numbers::pi;
                    if (hue < 0.0) hue += 360.0;
                    rgb = hsv_to_rgb(hue, std::min(norm / scale, 1.0));
                }
            }
            const std::size_t at = header + (static_cast<std::size_t>(y) * w + x) * 3;
            for (int k = 0; k < 3; ++k) out[at + k] = static_cast<char>(rgb[k]);
        }
    }
    return out;
}

void cmd_plot(const fs::path& field_path, const fs::path& out_path, double scale) {
    const auto field = io::read_field(field_path);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    io::write_file(out_path, render_ppm(field, scale));
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const NumericalError*>(&e)) return 3;
    if (dynamic_cast<const Error*>(&e)) return 2;
    if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return 2;
    return 1;
}

}  // namespace pml::cli
