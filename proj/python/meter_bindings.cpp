#include "meter/engine.hpp"
#include "meter/error.hpp"
#include "meter/oracle.hpp"
#include "meter/planner.hpp"
#include "meter/serialize.hpp"
#include "meter/simulator.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace meter;

namespace {

py::object big(const BigInt& v) {
    const std::string digits = v.str();
    return py::reinterpret_steal<py::object>(PyLong_FromString(digits.c_str(), nullptr, 10));
}

py::list big_list(const SubmissionCounts& counts) {
    py::list out;
    for (const auto& c : counts.per_signal) {
        out.append(big(c));
    }
    return out;
}

py::object from_json(const json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

json to_json_value(const py::object& o) {
    return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

MeterSpec spec_from(const py::dict& request) {
    return spec_from_request(to_json_value(request));
}

py::dict plan_dict(const py::dict& request) {
    const auto spec = spec_from(request);
    const auto report = plan(spec);
    py::dict out = from_json(json(report));
    out["counts"] = py::dict(py::arg("per_signal") = big_list(report.counts), py::arg("total") = big(report.counts.total()));
    out["spec"] = from_json(json(spec));
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Test-set sizing and signal metering for reusable holdouts";

    static py::exception<Error> meter_error(m, "MeterError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) {
                std::rethrow_exception(p);
            }
        } catch (const Error& e) {
            py::object err = py::handle(meter_error.ptr())(e.what());
            err.attr("kind") = std::string(to_string(e.kind()));
            err.attr("code") = e.code();
            PyErr_SetObject(meter_error.ptr(), err.ptr());
        }
    });

    m.def("plan", &plan_dict, py::arg("request"),
          "Required test-set size for a plan request dict (same fields as the HTTP API).");
    m.def("size_single", &size_single, py::arg("epsilon"), py::arg("delta"));
    m.def("size_independent", &size_independent, py::arg("epsilon"), py::arg("delta"), py::arg("steps"));
    m.def("size_resampling", &size_resampling, py::arg("epsilon"), py::arg("delta"), py::arg("steps"));
    m.def("count_regular", [](int signals, int steps) { return big_list(count_regular(signals, steps)); },
          py::arg("signals"), py::arg("steps"));
    m.def("count_incremental", [](int signals, int steps) { return big_list(count_incremental(signals, steps)); },
          py::arg("signals"), py::arg("steps"));

    m.def(
        "enumerate",
        [](int signals, int steps, const std::string& mode, std::vector<int> reverts,
           std::optional<std::vector<int>> tenancy) {
            oracle::EnumerateOptions options;
            options.revert_steps = std::move(reverts);
            options.tenancy = std::move(tenancy);
            return from_json(json(oracle::enumerate(signals, steps, parse_mode(mode), options)));
        },
        py::arg("signals"), py::arg("steps"), py::arg("mode") = "regular", py::arg("reverts") = std::vector<int>{},
        py::arg("tenancy") = py::none());

    m.def(
        "band_for",
        [](const std::vector<std::pair<double, double>>& bands, double value) {
            std::vector<Band> b;
            for (const auto& [lo, hi] : bands) {
                b.push_back({lo, hi});
            }
            return band_for(b, value);
        },
        py::arg("bands"), py::arg("value"));

    m.def(
        "simulate",
        [](const py::dict& request, const std::string& kind, int trials, std::uint64_t seed,
           std::optional<std::int64_t> test_size, unsigned threads) {
            const auto spec = spec_from(request);
            sim::AdversaryStrategy strategy;
            strategy.kind = sim::parse_strategy_kind(kind);
            sim::SimulationOptions options;
            options.trials = trials;
            options.seed = seed;
            options.test_size = test_size;
            options.threads = threads;
            sim::validate(strategy, spec);
            sim::SimulationReport report;
            {
                py::gil_scoped_release release;
                report = sim::run_trials(spec, strategy, options);
            }
            return from_json(sim::to_json(report));
        },
        py::arg("request"), py::arg("kind") = "worst-case-tree", py::arg("trials") = 1000, py::arg("seed") = 0,
        py::arg("test_size") = py::none(), py::arg("threads") = 0);

    m.def(
        "replay",
        [](const py::dict& request, const std::vector<double>& overfitting) {
            return from_json(sim::to_json(sim::replay_overfitting(spec_from(request), overfitting)));
        },
        py::arg("request"), py::arg("overfitting"));
}
