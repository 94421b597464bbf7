#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sparseloc/certify.hpp"
#include "sparseloc/geometry.hpp"
#include "sparseloc/pipeline.hpp"
#include "sparseloc/spectral.hpp"
#include "sparseloc/stochastic.hpp"

namespace py = pybind11;
using namespace sparseloc;

namespace {

py::dict estimate_dict(const stochastic::EstimateRecord& e) {
    py::dict d;
    d["value"] = e.value;
    d["trials"] = e.trials;
    d["std_error"] = e.std_error;
    d["seed"] = e.seed;
    d["exact"] = e.exact ? py::cast(*e.exact) : py::none();
    d["degenerate"] = e.degenerate;
    return d;
}

py::dict manifest_dict(const pipeline::RunManifest& m) {
    py::list stages;
    for (const auto& s : m.stages) {
        py::dict d;
        d["stage"] = s.name;
        d["files"] = s.files;
        d["wall_seconds"] = s.wall_seconds;
        d["ok"] = s.ok;
        d["error"] = s.error;
        stages.append(d);
    }
    py::dict d;
    d["config_hash"] = m.config_hash;
    d["tool_version"] = m.tool_version;
    d["pipeline"] = m.pipeline;
    d["output_dir"] = m.output_dir;
    d["seeds"] = m.seeds;
    d["stages"] = stages;
    d["ok"] = m.ok();
    return d;
}

}  // namespace

PYBIND11_MODULE(_sparseloc, m) {
    m.doc() = "Sparse random potentials: geometry, certification, lemma oracles and spectral probes";
    m.attr("__version__") = SPARSELOC_VERSION;

    py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
    py::register_exception<WindowError>(m, "WindowError", PyExc_RuntimeError);
    py::register_exception<BudgetExceeded>(m, "BudgetExceeded", PyExc_RuntimeError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
    py::register_exception<pipeline::ConfigError>(m, "ConfigError", PyExc_ValueError);

    // geometry
    py::class_<geometry::RegionSet>(m, "RegionSet")
        .def_property_readonly("dim", &geometry::RegionSet::dim)
        .def("diameter", &geometry::RegionSet::diameter)
        .def("to_jsonl", [](const geometry::RegionSet& s) { return geometry::region_to_jsonl(s); });
    m.def("make_point", &geometry::make_point, py::arg("x"));
    m.def("make_ball", &geometry::make_ball, py::arg("center"), py::arg("radius"));
    m.def("make_sphere", &geometry::make_sphere, py::arg("center"), py::arg("radius"));
    m.def("make_annulus", &geometry::make_annulus, py::arg("r"), py::arg("R"), py::arg("d"));
    m.def(
        "shell_measure",
        [](const geometry::RegionSet& s, double r, double resolution) {
            auto e = geometry::shell_measure(s, r, resolution);
            return py::make_tuple(e.value, e.error);
        },
        py::arg("region"), py::arg("r"), py::arg("resolution") = 0.01,
        "(measure, error) of {x : r <= dist(x, S) <= r + 1}");
    m.def(
        "generalized_surface_area",
        [](const geometry::RegionSet& s, double resolution) {
            auto e = geometry::generalized_surface_area(s, resolution);
            py::dict d;
            d["sigma"] = e.sigma;
            d["argmax_r"] = e.argmax_r;
            d["error"] = e.error;
            d["r_max"] = e.r_max;
            return d;
        },
        py::arg("region"), py::arg("resolution") = 0.01);

    // models
    py::class_<models::RandomPotentialModel>(m, "Model")
        .def_static("from_json", &models::model_from_json, py::arg("text"))
        .def("to_json", [](const models::RandomPotentialModel& mod) { return models::model_to_json(mod); })
        .def_property_readonly("dim", &models::RandomPotentialModel::dim)
        .def_property_readonly("rho", &models::RandomPotentialModel::rho)
        .def_property_readonly("site_count", [](const models::RandomPotentialModel& mod) { return mod.sites.size(); });
    m.def(
        "sample_couplings",
        [](const models::RandomPotentialModel& mod, std::uint64_t seed, double radius) {
            auto c = models::sample_couplings(mod, seed, geometry::make_ball(Point(mod.dim(), 0.0), radius));
            return py::make_tuple(c.positions, c.values);
        },
        py::arg("model"), py::arg("seed"), py::arg("radius"), "(positions, couplings) of the sites in B(0, radius)");

    // certify
    m.def("ell_sparse", &certify::ell_sparse, py::arg("gamma"), py::arg("d"));
    m.def("first_nondegenerate_n", &certify::first_nondegenerate_n, py::arg("a"));
    m.def("quasi1d_threshold", &certify::quasi1d_threshold, py::arg("delta"), py::arg("c"));

    // stochastic
    m.def(
        "estimate_free_probability",
        [](const models::RandomPotentialModel& mod, const geometry::RegionSet& region, double eps,
           std::uint64_t trials, std::uint64_t seed) {
            return estimate_dict(stochastic::estimate_free_probability(mod, region, eps, trials, seed));
        },
        py::arg("model"), py::arg("region"), py::arg("eps"), py::arg("trials"), py::arg("seed"));
    m.def(
        "estimate_a_n",
        [](const models::RandomPotentialModel& mod, double eps, double a, int n, std::uint64_t trials,
           std::uint64_t seed) { return estimate_dict(stochastic::estimate_a_n(mod, eps, a, n, trials, seed)); },
        py::arg("model"), py::arg("eps"), py::arg("a"), py::arg("n"), py::arg("trials"), py::arg("seed"));
    m.def("brute_force_a_n", &stochastic::brute_force_a_n, py::arg("model"), py::arg("eps"), py::arg("a"),
          py::arg("n"), py::arg("max_sites") = 24);
    m.def(
        "a_n_bound",
        [](double a, double eta, int n) {
            auto b = stochastic::a_n_bound(a, eta, n);
            return py::make_tuple(b.value, b.vacuous);
        },
        py::arg("a"), py::arg("eta"), py::arg("n"), "(bound, vacuous)");

    // spectral
    py::class_<spectral::GridOperator>(m, "GridOperator")
        .def_property_readonly("size", &spectral::GridOperator::size)
        .def_readonly("extents", &spectral::GridOperator::extents)
        .def_readonly("h", &spectral::GridOperator::h)
        .def_readonly("potential", &spectral::GridOperator::potential)
        .def("apply", &spectral::GridOperator::apply, py::arg("x"))
        .def("node", &spectral::GridOperator::node, py::arg("k"));
    m.def("free_operator", &spectral::free_operator, py::arg("extents"), py::arg("h"), py::arg("constant") = 0.0);
    m.def("grid_operator", &spectral::grid_operator, py::arg("extents"), py::arg("h"), py::arg("origin"),
          py::arg("potential"));
    m.def(
        "eigenpairs",
        [](const spectral::GridOperator& op, double lo, double hi, bool with_vectors) {
            auto r = spectral::eigenpairs(op, lo, hi, with_vectors);
            return py::make_tuple(r.values, r.vectors);
        },
        py::arg("op"), py::arg("lo"), py::arg("hi"), py::arg("with_vectors") = true,
        "(values, vectors) with lo <= value <= hi");
    m.def("count_below", &spectral::count_below, py::arg("op"), py::arg("energy"));
    m.def("ipr", &spectral::ipr, py::arg("v"));
    m.def(
        "resolvent_decay",
        [](const spectral::GridOperator& op, double e, double resolution) {
            auto r = spectral::resolvent_decay(op, e, spectral::default_probes(op), resolution);
            py::dict d;
            d["energy"] = r.energy;
            d["rate"] = r.rate;
            d["quality"] = r.quality;
            d["spectral_distance"] = r.spectral_distance;
            return d;
        },
        py::arg("op"), py::arg("energy"), py::arg("resolution") = 1e-3);

    // pipeline
    m.def(
        "validate_config", [](const std::string& path) { return pipeline::load_config(path).hash; }, py::arg("path"),
        "Config hash of a valid config; raises ConfigError otherwise");
    m.def(
        "run_config",
        [](const std::string& path) {
            auto cfg = pipeline::load_config(path);
            pipeline::RunManifest man;
            {
                py::gil_scoped_release release;
                man = pipeline::run(cfg);
            }
            return manifest_dict(man);
        },
        py::arg("path"));
    m.def(
        "emit_plotdata", [](const std::string& manifest) { return pipeline::emit_plotdata(pipeline::read_manifest(manifest)); },
        py::arg("manifest"));
}
