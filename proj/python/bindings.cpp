#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <string>

#include "pml/errors.hpp"
#include "pml/estimator.hpp"
#include "pml/eval.hpp"
#include "pml/io.hpp"
#include "pml/simulator.hpp"

namespace py = pybind11;
using namespace pml;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array cloud_to_array(const PointCloud& cloud) {
    Array out({static_cast<py::ssize_t>(cloud.size()), py::ssize_t{3}});
    auto v = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (int k = 0; k < 3; ++k) v(i, k) = cloud.points[i][k];
    }
    return out;
}

PointCloud array_to_cloud(const Array& a) {
    if (a.ndim() != 2 || a.shape(1) != 3) throw ConfigError("point arrays must have shape (N, 3)");
    auto v = a.unchecked<2>();
    PointCloud cloud;
    cloud.points.reserve(a.shape(0));
    for (py::ssize_t i = 0; i < a.shape(0); ++i) cloud.points.emplace_back(v(i, 0), v(i, 1), v(i, 2));
    return cloud;
}

Array motion_array(const PillarMotionField& f) {
    const auto h = f.grid.height();
    const auto w = f.grid.width();
    Array out({py::ssize_t{h}, py::ssize_t{w}, py::ssize_t{2}});
    auto v = out.mutable_unchecked<3>();
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const auto& m = f.motion[static_cast<std::size_t>(r) * w + c];
            v(r, c, 0) = m.x();
            v(r, c, 1) = m.y();
        }
    }
    return out;
}

py::array_t<std::uint8_t> grid_bytes(const std::vector<std::uint8_t>& bytes, const GridSpec& g) {
    py::array_t<std::uint8_t> out({py::ssize_t{g.height()}, py::ssize_t{g.width()}});
    std::memcpy(out.mutable_data(), bytes.data(), bytes.size());
    return out;
}

py::dict errors_dict(const GroupErrors& e) {
    py::dict d;
    for (const auto g : kAllGroups) {
        py::dict s;
        s["mean"] = e[g].mean;
        s["median"] = e[g].median;
        s["count"] = e[g].count;
        d[group_name(g)] = s;
    }
    return d;
}

py::dict result_info(const EstimateResult& r) {
    py::dict d;
    d["iterations"] = r.iterations;
    d["converged"] = r.converged;
    py::list totals;
    for (const auto& t : r.trace) totals.append(t.total);
    d["loss"] = totals;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Pillar motion estimation on a BEV grid";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<EmptyInputError>(m, "EmptyInputError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    py::class_<GridSpec>(m, "GridSpec")
        .def(py::init([](double x_min, double x_max, double y_min, double y_max, double cell_size) {
                 GridSpec g{x_min, x_max, y_min, y_max, cell_size};
                 g.validate();
                 return g;
             }),
             py::arg("x_min"), py::arg("x_max"), py::arg("y_min"), py::arg("y_max"), py::arg("cell_size"))
        .def_readonly("x_min", &GridSpec::x_min)
        .def_readonly("x_max", &GridSpec::x_max)
        .def_readonly("y_min", &GridSpec::y_min)
        .def_readonly("y_max", &GridSpec::y_max)
        .def_readonly("cell_size", &GridSpec::cell_size)
        .def_property_readonly("width", &GridSpec::width)
        .def_property_readonly("height", &GridSpec::height)
        .def("__eq__", [](const GridSpec& a, const GridSpec& b) { return a == b; })
        .def("__repr__", [](const GridSpec& g) {
            return "GridSpec(" + std::to_string(g.width()) + "x" + std::to_string(g.height()) + ", cell " +
                   std::to_string(g.cell_size) + ")";
        });

    m.def("centered_grid", [](int cells, double cell_size) {
        auto g = centered_grid(cells, cell_size);
        g.validate();
        return g;
    }, py::arg("cells"), py::arg("cell_size"));

    py::class_<PillarMotionField>(m, "MotionField")
        .def_readonly("grid", &PillarMotionField::grid)
        .def_readonly("horizon", &PillarMotionField::horizon)
        .def_property_readonly("motion", &motion_array, "Displacements in meters, shape (H, W, 2); row index along y")
        .def_property_readonly("nonempty", [](const PillarMotionField& f) { return grid_bytes(f.nonempty, f.grid); })
        .def("scaled", [](const PillarMotionField& f, double factor) { return scale_horizon(f, factor); },
             py::arg("factor"));

    py::class_<GeneratedScene>(m, "Scene")
        .def_property_readonly("cloud_t", [](const GeneratedScene& s) { return cloud_to_array(s.inputs.cloud_t); })
        .def_property_readonly("cloud_t1", [](const GeneratedScene& s) { return cloud_to_array(s.inputs.cloud_t1); })
        .def_property_readonly("grid", [](const GeneratedScene& s) { return s.spec.grid; })
        .def_property_readonly("interval", [](const GeneratedScene& s) { return s.spec.interval; })
        .def_property_readonly("camera_count", [](const GeneratedScene& s) { return s.inputs.cameras.size(); })
        .def_property_readonly("truth", [](const GeneratedScene& s) { return s.truth.field; })
        .def_property_readonly("labels", [](const GeneratedScene& s) { return grid_bytes(s.truth.labels, s.spec.grid); });

    m.def("generate", [](std::uint64_t seed, int cells, double cell_size, double interval, double azimuth_step_deg) {
        auto spec = random_scene_spec(seed, centered_grid(cells, cell_size), interval);
        spec.lidar.azimuth_step_deg = azimuth_step_deg;
        py::gil_scoped_release release;
        return generate(spec);
    }, py::arg("seed"), py::arg("cells") = 64, py::arg("cell_size") = 0.5, py::arg("interval") = 0.05,
       py::arg("azimuth_step_deg") = 0.4, "Random synthetic street scene with two sweeps, six cameras and truth");

    m.def("estimate", [](const GeneratedScene& scene, const std::string& variant, int max_iters,
                         std::optional<double> lambda_regular) {
        OptimizerConfig opt;
        opt.max_iters = max_iters;
        LossConfig base;
        if (lambda_regular) base.lambda_regular = *lambda_regular;
        EstimateResult r;
        {
            py::gil_scoped_release release;
            r = ablation_run(scene.inputs, scene.spec.grid, parse_variant(variant), opt, scene.spec.interval, base);
        }
        return py::make_tuple(r.field, result_info(r));
    }, py::arg("scene"), py::arg("variant") = "e", py::arg("max_iters") = 300, py::arg("lambda_regular") = py::none(),
       "Optimizes the motion field of a scene; returns (field, info)");

    m.def("estimate_clouds", [](const Array& cloud_t, const Array& cloud_t1, const GridSpec& grid, double horizon,
                                int max_iters) {
        SceneInputs in;
        in.cloud_t = array_to_cloud(cloud_t);
        in.cloud_t1 = array_to_cloud(cloud_t1);
        OptimizerConfig opt;
        opt.max_iters = max_iters;
        EstimateResult r;
        {
            py::gil_scoped_release release;
            r = ablation_run(in, grid, Variant::A, opt, horizon);
        }
        return py::make_tuple(r.field, result_info(r));
    }, py::arg("cloud_t"), py::arg("cloud_t1"), py::arg("grid"), py::arg("horizon"), py::arg("max_iters") = 300,
       "Consistency-only estimate from two ego-compensated sweeps");

    m.def("evaluate", [](const PillarMotionField& field, const GeneratedScene& scene) {
        return errors_dict(evaluate(field, scene.truth));
    }, py::arg("field"), py::arg("scene"));

    m.def("static_probability", [](double fx, double fy, double alpha, double tau) {
        LossConfig cfg;
        cfg.alpha = alpha;
        cfg.tau = tau;
        return static_probability(Vec2(fx, fy), cfg);
    }, py::arg("fx"), py::arg("fy"), py::arg("alpha") = 0.1, py::arg("tau") = 5.0);

    m.def("read_field", [](const std::string& path) { return io::read_field(path); }, py::arg("path"));
    m.def("write_field", [](const std::string& path, const PillarMotionField& f) { io::write_field(path, f); },
          py::arg("path"), py::arg("field"));
    m.def("write_bundle", [](const std::string& dir, const GeneratedScene& s) { io::write_bundle(dir, s); },
          py::arg("dir"), py::arg("scene"));
}
