// pml: generate synthetic scenes, estimate pillar motion fields, evaluate and plot them.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pml/cli.hpp"
#include "pml/io.hpp"

namespace {

using pml::cli::RunConfig;

struct Overrides {
    std::string config;
    std::optional<int> threads;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::vector<std::string> inputs;
};

RunConfig resolve(const Overrides& o) {
    RunConfig cfg = o.config.empty() ? RunConfig{} : pml::cli::load_run_config(o.config);
    if (o.threads) cfg.threads = *o.threads;
    if (o.seed) {
        cfg.seed = *o.seed;
        cfg.optimizer.seed = *o.seed;
    }
    if (o.out) cfg.output_dir = *o.out;
    if (!o.inputs.empty()) cfg.inputs.assign(o.inputs.begin(), o.inputs.end());
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, Overrides& o, bool with_inputs) {
    cmd->add_option("-c,--config", o.config, "Run config JSON")->check(CLI::ExistingFile);
    cmd->add_option("--threads", o.threads, "Worker threads (default: PML_THREADS or all cores)");
    cmd->add_option("--seed", o.seed, "Seed");
    cmd->add_option("-o,--out", o.out, "Output directory");
    if (with_inputs) cmd->add_option("-i,--input", o.inputs, "Scene bundle directory (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-supervised pillar motion estimation"};
    app.require_subcommand(1);

    Overrides gen_o;
    std::string spec_path;
    std::optional<int> count;
    std::optional<double> interval;
    auto* gen = app.add_subcommand("gen", "Generate synthetic scene bundles");
    add_common(gen, gen_o, false);
    gen->add_option("--spec", spec_path, "Scene spec JSON (default: random scenes from the seed)")
        ->check(CLI::ExistingFile);
    gen->add_option("-n,--count", count, "Number of random scenes");
    gen->add_option("--interval", interval, "Seconds between sweeps for random scenes");

    Overrides est_o;
    std::string variant = "e";
    double horizon_scale = 1.0;
    auto* est = app.add_subcommand("estimate", "Estimate the motion field of one bundle");
    add_common(est, est_o, true);
    est->add_option("--variant", variant, "Loss variant a..e")->capture_default_str();
    est->add_option("--horizon-scale", horizon_scale, "Scale applied to the stored displacements")
        ->capture_default_str();

    Overrides eval_o;
    std::string field_path;
    auto* ev = app.add_subcommand("eval", "Evaluate a motion field against bundle truth");
    add_common(ev, eval_o, true);
    ev->add_option("-f,--field", field_path, "Motion field (.pmf)")->required()->check(CLI::ExistingFile);

    Overrides abl_o;
    std::string variants;
    auto* abl = app.add_subcommand("ablate", "Run the loss-term ablation over bundles");
    add_common(abl, abl_o, true);
    abl->add_option("--variants", variants, "Variant letters, e.g. abcde");

    Overrides sw_o;
    std::vector<double> lambdas;
    bool smoothness = false;
    auto* sw = app.add_subcommand("sweep", "Sweep lambda_regular over bundles");
    add_common(sw, sw_o, true);
    sw->add_option("--lambdas", lambdas, "lambda_regular values");
    sw->add_flag("--smoothness", smoothness, "Also compare against the model without smoothness");

    std::string plot_field;
    std::string plot_out;
    double scale = 1.0;
    auto* plot = app.add_subcommand("plot", "Render a motion field as a PPM image");
    plot->add_option("-f,--field", plot_field, "Motion field (.pmf)")->required()->check(CLI::ExistingFile);
    plot->add_option("-o,--out", plot_out, "Output image (.ppm)")->required();
    plot->add_option("--scale", scale, "Motion magnitude at full saturation (m)")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            RunConfig cfg = resolve(gen_o);
            if (!spec_path.empty()) cfg.scene = pml::io::parse_scene_spec(pml::io::read_file(spec_path));
            if (count) cfg.scene_count = *count;
            if (interval) cfg.interval = *interval;
            cfg.validate();
            for (const auto& dir : pml::cli::cmd_gen(cfg)) std::cout << dir.string() << '\n';
        } else if (est->parsed()) {
            const RunConfig cfg = resolve(est_o);
            const auto out = pml::cli::cmd_estimate(cfg, pml::parse_variant(variant), horizon_scale);
            std::cout << out.field_path.string() << '\n' << out.trace_path.string() << '\n';
        } else if (ev->parsed()) {
            const RunConfig cfg = resolve(eval_o);
            const auto errors = pml::cli::cmd_eval(cfg, field_path);
            std::cout << pml::errors_csv(errors);
        } else if (abl->parsed()) {
            RunConfig cfg = resolve(abl_o);
            if (!variants.empty()) cfg.variants = pml::cli::parse_variant_list(variants);
            std::cout << pml::ablation_summary_csv(pml::cli::cmd_ablate(cfg));
        } else if (sw->parsed()) {
            RunConfig cfg = resolve(sw_o);
            if (!lambdas.empty()) cfg.lambda_values = lambdas;
            cfg.validate();
            std::cout << pml::sweep_csv(pml::cli::cmd_sweep(cfg, smoothness));
        } else if (plot->parsed()) {
            pml::cli::cmd_plot(plot_field, plot_out, scale);
            std::cout << plot_out << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "pml: " << e.what() << '\n';
        return pml::cli::exit_code_for(e);
    }
    return 0;
}
