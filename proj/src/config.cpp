#include <algorithm>

#include "json_util.hpp"
#include "pml/cli.hpp"
#include "pml/errors.hpp"
#include "pml/io.hpp"

namespace pml::cli {
namespace {

using detail::get_as;
using detail::Json;
using detail::read_optional;
using detail::reject_unknown;

LossConfig parse_loss(const Json& j) {
    reject_unknown(j, {"lambda_consist", "lambda_regular", "lambda_smooth", "alpha", "tau", "p_default", "use_mask",
                       "normalize_regular", "squared_chamfer", "flow_sampling"},
                   "loss");
    LossConfig cfg;
    read_optional(j, "lambda_consist", cfg.lambda_consist, "loss");
    read_optional(j, "lambda_regular", cfg.lambda_regular, "loss");
    read_optional(j, "lambda_smooth", cfg.lambda_smooth, "loss");
    read_optional(j, "alpha", cfg.alpha, "loss");
    read_optional(j, "tau", cfg.tau, "loss");
    read_optional(j, "p_default", cfg.p_default, "loss");
    read_optional(j, "use_mask", cfg.use_mask, "loss");
    read_optional(j, "normalize_regular", cfg.normalize_regular, "loss");
    read_optional(j, "squared_chamfer", cfg.squared_chamfer, "loss");
    if (j.contains("flow_sampling")) {
        const auto s = get_as<std::string>(j, "flow_sampling", "loss");
        if (s == "nearest") {
            cfg.flow_sampling = FlowSampling::Nearest;
        } else if (s == "bilinear") {
            cfg.flow_sampling = FlowSampling::Bilinear;
        } else {
            throw ConfigError("loss.flow_sampling must be 'nearest' or 'bilinear'");
        }
    }
    cfg.validate();
    return cfg;
}

OptimizerConfig parse_optimizer(const Json& j) {
    reject_unknown(j, {"step_size", "decay", "decay_every", "beta1", "beta2", "epsilon", "max_iters", "tolerance",
                       "tolerance_window"},
                   "optimizer");
    OptimizerConfig cfg;
    read_optional(j, "step_size", cfg.step_size, "optimizer");
    read_optional(j, "decay", cfg.decay, "optimizer");
    read_optional(j, "decay_every", cfg.decay_every, "optimizer");
    read_optional(j, "beta1", cfg.beta1, "optimizer");
    read_optional(j, "beta2", cfg.beta2, "optimizer");
    read_optional(j, "epsilon", cfg.epsilon, "optimizer");
    read_optional(j, "max_iters", cfg.max_iters, "optimizer");
    read_optional(j, "tolerance", cfg.tolerance, "optimizer");
    read_optional(j, "tolerance_window", cfg.tolerance_window, "optimizer");
    cfg.validate();
    return cfg;
}

}  // namespace

std::vector<Variant> parse_variant_list(const std::string& letters) {
    if (letters.empty()) throw ConfigError("variant list is empty");
    std::vector<Variant> out;
    for (const char c : letters) {
        const Variant v = parse_variant(std::string(1, c));
        if (std::find(out.begin(), out.end(), v) != out.end()) {
            throw ConfigError(std::string("variant '") + c + "' listed twice");
        }
        out.push_back(v);
    }
    return out;
}

void RunConfig::validate() const {
    if (grid) grid->validate();
    loss.validate();
    optimizer.validate();
    if (scene) scene->validate();
    if (threads < 0) throw ConfigError("threads must be >= 0");
    if (scene_count < 1) throw ConfigError("scene_count must be >= 1");
    if (!(interval > 0.0) || !std::isfinite(interval)) throw ConfigError("interval must be > 0");
    if (variants.empty()) throw ConfigError("variants must not be empty");
    for (const double v : lambda_values) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("lambda_values must be finite and >= 0");
    }
    for (const auto& p : inputs) {
        if (!std::filesystem::exists(p)) throw ConfigError("input '" + p.string() + "' does not exist");
    }
}

RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir) {
    const Json j = detail::parse_json(json_text, "run config");
    reject_unknown(j, {"grid", "loss", "optimizer", "scene", "inputs", "output_dir", "seed", "threads", "scene_count",
                       "interval", "variants", "lambda_values"},
                   "");
    RunConfig cfg;
    if (j.contains("grid")) cfg.grid = detail::grid_from_json(j.at("grid"), "grid");
    if (j.contains("loss")) cfg.loss = parse_loss(j.at("loss"));
    if (j.contains("optimizer")) cfg.optimizer = parse_optimizer(j.at("optimizer"));
    if (j.contains("scene")) cfg.scene = io::parse_scene_spec(j.at("scene").dump());
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path path(p);
        return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    if (j.contains("inputs")) {
        for (const auto& p : get_as<std::vector<std::string>>(j, "inputs", "")) cfg.inputs.push_back(resolve(p));
    }
    if (j.contains("output_dir")) cfg.output_dir = resolve(get_as<std::string>(j, "output_dir", ""));
    read_optional(j, "seed", cfg.seed, "");
    read_optional(j, "threads", cfg.threads, "");
    read_optional(j, "scene_count", cfg.scene_count, "");
    read_optional(j, "interval", cfg.interval, "");
    if (j.contains("variants")) cfg.variants = parse_variant_list(get_as<std::string>(j, "variants", ""));
    read_optional(j, "lambda_values", cfg.lambda_values, "");
    cfg.optimizer.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    return parse_run_config(io::read_file(path), path.parent_path());
}

std::string run_config_to_json(const RunConfig& cfg) {
    nlohmann::ordered_json j;
    if (cfg.grid) j["grid"] = detail::grid_to_json(*cfg.grid);
    const auto& l = cfg.loss;
    j["loss"] = {{"lambda_consist", l.lambda_consist},
                 {"lambda_regular", l.lambda_regular},
                 {"lambda_smooth", l.lambda_smooth},
                 {"alpha", l.alpha},
                 {"tau", l.tau},
                 {"p_default", l.p_default},
                 {"use_mask", l.use_mask},
                 {"normalize_regular", l.normalize_regular},
                 {"squared_chamfer", l.squared_chamfer},
                 {"flow_sampling", l.flow_sampling == FlowSampling::Nearest ? "nearest" : "bilinear"}};
    const auto& o = cfg.optimizer;
    j["optimizer"] = {{"step_size", o.step_size}, {"decay", o.decay},         {"decay_every", o.decay_every},
                      {"beta1", o.beta1},         {"beta2", o.beta2},         {"epsilon", o.epsilon},
                      {"max_iters", o.max_iters}, {"tolerance", o.tolerance}, {"tolerance_window", o.tolerance_window}};
    if (cfg.scene) j["scene"] = nlohmann::ordered_json::parse(io::scene_spec_to_json(*cfg.scene));
    j["inputs"] = nlohmann::ordered_json::array();
    for (const auto& p : cfg.inputs) j["inputs"].push_back(p.string());
    j["output_dir"] = cfg.output_dir.string();
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    j["scene_count"] = cfg.scene_count;
    j["interval"] = cfg.interval;
    std::string letters;
    for (const auto v : cfg.variants) letters += variant_name(v);
    j["variants"] = letters;
    j["lambda_values"] = cfg.lambda_values;
    return j.dump(2) + "\n";
}

}  // namespace pml::cli
