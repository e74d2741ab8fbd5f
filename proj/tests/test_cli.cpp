#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "pml/cli.hpp"
#include "pml/errors.hpp"
#include "pml/io.hpp"

namespace fs = std::filesystem;
using namespace pml;

namespace {

fs::path work_dir() {
    static const fs::path dir = [] {
        const auto d = fs::temp_directory_path() / "pml_test_cli";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int run(const std::string& args) {
    const std::string cmd = std::string(PML_CLI_PATH) + " " + args + " > " + (work_dir() / "last.log").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
}

// A small scene that keeps each CLI call well under a second.
fs::path small_spec() {
    const auto p = work_dir() / "spec.json";
    if (!fs::exists(p)) {
        write_text(p, R"({
  "interval": 0.1,
  "ego_translation": [0.6, 0.0, 0.0],
  "grid": {"x_min": -8, "x_max": 8, "y_min": -8, "y_max": 8, "cell_size": 0.5},
  "lidar": {"azimuth_step_deg": 1.0, "max_range": 20},
  "ground_extent": 20,
  "objects": [{"center": [4.0, -3.0], "velocity": [8.0, 0.0]}]
})");
    }
    return p;
}

bool same_tree(const fs::path& a, const fs::path& b) {
    std::set<std::string> names;
    for (const auto& e : fs::directory_iterator(a)) names.insert(e.path().filename().string());
    std::set<std::string> other;
    for (const auto& e : fs::directory_iterator(b)) other.insert(e.path().filename().string());
    if (names != other || names.empty()) return false;
    for (const auto& n : names) {
        if (io::read_file(a / n) != io::read_file(b / n)) return false;
    }
    return true;
}

std::array<double, 3> pixel(const std::string& ppm, int w, int x, int y) {
    const std::size_t header = ppm.size() - static_cast<std::size_t>(w) * w * 3;
    const std::size_t at = header + (static_cast<std::size_t>(y) * w + x) * 3;
    return {static_cast<unsigned char>(ppm[at]) / 255.0, static_cast<unsigned char>(ppm[at + 1]) / 255.0,
            static_cast<unsigned char>(ppm[at + 2]) / 255.0};
}

// Hue in degrees from RGB, standard hexcone formula.
double hue_of(const std::array<double, 3>& c) {
    const double mx = std::max({c[0], c[1], c[2]});
    const double mn = std::min({c[0], c[1], c[2]});
    const double d = mx - mn;
    if (d == 0.0) return -1.0;
    double h;
    if (mx == c[0]) h = std::fmod((c[1] - c[2]) / d, 6.0);
    else if (mx == c[1]) h = (c[2] - c[0]) / d + 2.0;
    else h = (c[0] - c[1]) / d + 4.0;
    h *= 60.0;
    return h < 0 ? h + 360.0 : h;
}

PillarMotionField constant_field(const Vec2& m) {
    PillarMotionField f(centered_grid(8, 0.5), 0.5);
    for (std::size_t c = 0; c < f.size(); ++c) {
        f.nonempty[c] = c % 3 != 0;
        f.motion[c] = m;
    }
    return f;
}

}  // namespace

TEST_CASE("gen is deterministic and rejects bad specs") {
    const auto a = work_dir() / "gen_a";
    const auto b = work_dir() / "gen_b";
    REQUIRE(run("gen --spec " + q(small_spec()) + " -o " + q(a)) == 0);
    REQUIRE(run("gen --spec " + q(small_spec()) + " -o " + q(b)) == 0);
    CHECK(same_tree(a, b));
    CHECK(fs::exists(a / "truth.pmf"));
    CHECK(fs::exists(a / "flow_cam5.bin"));

    const auto bad = work_dir() / "bad_spec.json";
    write_text(bad, R"({"interval": -1})");
    CHECK(run("gen --spec " + q(bad) + " -o " + q(work_dir() / "gen_bad")) == 2);
    write_text(bad, R"({"interval": 0.1, "colour": "red"})");
    CHECK(run("gen --spec " + q(bad) + " -o " + q(work_dir() / "gen_bad")) == 2);

    const auto many = work_dir() / "gen_many";
    REQUIRE(run("gen -n 2 --seed 9 --interval 0.05 -o " + q(many)) == 0);
    CHECK(fs::exists(many / "scene_0000" / "cloud_t.bin"));
    CHECK(fs::exists(many / "scene_0001" / "cloud_t.bin"));
}

TEST_CASE("estimate, eval and plot") {
    const auto bundle = work_dir() / "bundle";
    REQUIRE(run("gen --spec " + q(small_spec()) + " -o " + q(bundle)) == 0);

    const auto est = work_dir() / "est";
    REQUIRE(run("estimate -i " + q(bundle) + " -o " + q(est)) == 0);
    CHECK(fs::exists(est / "field.pmf"));
    const auto trace = nlohmann::json::parse(io::read_file(est / "trace.json"));
    CHECK(trace.is_object());

    const auto doubled = work_dir() / "est2";
    REQUIRE(run("estimate -i " + q(bundle) + " --horizon-scale 2 -o " + q(doubled)) == 0);
    const auto f1 = io::read_field(est / "field.pmf");
    const auto f2 = io::read_field(doubled / "field.pmf");
    REQUIRE(f1.size() == f2.size());
    for (std::size_t c = 0; c < f1.size(); ++c) {
        CHECK((f2.motion[c] - 2.0 * f1.motion[c]).norm() < 1e-5);
    }
    CHECK(f2.horizon == doctest::Approx(2.0 * f1.horizon));

    // Variant a needs neither camera flow nor its calibration.
    const auto stripped = work_dir() / "stripped";
    fs::remove_all(stripped);
    fs::copy(bundle, stripped);
    for (int i = 0; i < 6; ++i) fs::remove(stripped / ("flow_cam" + std::to_string(i) + ".bin"));
    CHECK(run("estimate --variant a -i " + q(stripped) + " -o " + q(work_dir() / "est_a")) == 0);
    CHECK(run("estimate --variant e -i " + q(stripped) + " -o " + q(work_dir() / "est_e")) == 2);
    CHECK(run("estimate --variant q -i " + q(bundle) + " -o " + q(work_dir() / "est_q")) != 0);

    const auto ev = work_dir() / "eval_truth";
    REQUIRE(run("eval -i " + q(bundle) + " -f " + q(bundle / "truth.pmf") + " -o " + q(ev)) == 0);
    const auto errs = nlohmann::json::parse(io::read_file(ev / "errors.json"));
    for (const auto& [name, g] : errs["errors"].items()) CHECK(g["mean"].get<double>() == 0.0);
    CHECK(fs::exists(ev / "errors.csv"));

    PillarMotionField wrong(centered_grid(8, 0.5), 0.1);
    io::write_field(work_dir() / "wrong.pmf", wrong);
    CHECK(run("eval -i " + q(bundle) + " -f " + q(work_dir() / "wrong.pmf") + " -o " + q(ev)) == 2);
    CHECK(run("eval -i " + q(work_dir() / "nowhere") + " -f " + q(bundle / "truth.pmf") + " -o " + q(ev)) == 2);

    REQUIRE(run("plot -f " + q(est / "field.pmf") + " -o " + q(work_dir() / "field.ppm")) == 0);
    CHECK(io::read_file(work_dir() / "field.ppm").rfind("P6\n32 32\n255\n", 0) == 0);
}

TEST_CASE("pipeline output is reproducible") {
    auto pipeline = [&](const std::string& tag) {
        const auto root = work_dir() / ("pipe_" + tag);
        fs::remove_all(root);
        REQUIRE(run("gen --spec " + q(small_spec()) + " -o " + q(root / "bundle")) == 0);
        REQUIRE(run("estimate -i " + q(root / "bundle") + " -o " + q(root / "est")) == 0);
        REQUIRE(run("eval -i " + q(root / "bundle") + " -f " + q(root / "est" / "field.pmf") + " -o " +
                    q(root / "eval")) == 0);
        return root;
    };
    const auto a = pipeline("a");
    const auto b = pipeline("b");
    CHECK(same_tree(a / "bundle", b / "bundle"));
    CHECK(io::read_file(a / "est" / "field.pmf") == io::read_file(b / "est" / "field.pmf"));
    CHECK(io::read_file(a / "eval" / "errors.json") == io::read_file(b / "eval" / "errors.json"));
}

TEST_CASE("config and argument errors") {
    const auto cfg = work_dir() / "bad_config.json";
    write_text(cfg, R"({"optimizer": {"step_size": 0.05, "momentum": 0.9}})");
    CHECK(run("gen -c " + q(cfg) + " -o " + q(work_dir() / "cfg_out")) == 2);
    write_text(cfg, R"({"loss": {"lambda_consist": -1}})");
    CHECK(run("gen -c " + q(cfg) + " -o " + q(work_dir() / "cfg_out")) == 2);
    CHECK(run("estimate --seed x") == 2);
    CHECK(run("frobnicate") == 2);

    const auto good = work_dir() / "good_config.json";
    write_text(good, R"({"seed": 4, "interval": 0.05, "grid": {"x_min": -8, "x_max": 8, "y_min": -8, "y_max": 8, "cell_size": 0.5}})");
    CHECK(run("gen -c " + q(good) + " -o " + q(work_dir() / "cfg_good")) == 0);
    const auto spec = io::parse_scene_spec(io::read_file(work_dir() / "cfg_good" / "spec.json"));
    CHECK(spec.interval == 0.05);
    CHECK(spec.grid.cell_size == 0.5);
}

TEST_CASE("plot colors") {
    const auto still = cli::render_ppm(constant_field(Vec2(0.01, 0.0)), 1.0);
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
            const auto c = pixel(still, 8, x, y);
            CHECK(c[0] == c[1]);
            CHECK(c[1] == c[2]);
            CHECK((c[0] == 0.0 || c[0] == 128.0 / 255.0));
        }
    }

    const auto east = cli::render_ppm(constant_field(Vec2(1.0, 0.0)), 1.0);
    const auto north = cli::render_ppm(constant_field(Vec2(0.0, 1.0)), 1.0);
    std::set<int> hues;
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
            const double h = hue_of(pixel(east, 8, x, y));
            if (h < 0) continue;
            hues.insert(static_cast<int>(std::lround(h)));
            const double hn = hue_of(pixel(north, 8, x, y));
            CHECK(std::abs(hn - h - 90.0) < 2.0);
        }
    }
    CHECK(hues.size() == 1);
    CHECK_THROWS_AS(cli::render_ppm(constant_field(Vec2(1, 0)), 0.0), ConfigError);
}
