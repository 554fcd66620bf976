#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ksearch/harness.hpp"

namespace py = pybind11;
using namespace ksearch;

namespace {

// Python-side handle; the C++ tree pointer is shared and immutable.
struct PyTree {
    TreePtr ptr;
};

GrammarConfig make_grammar(const std::vector<std::string>& families, int dims) {
    GrammarConfig g;
    g.base_families.clear();
    for (const auto& f : families) g.base_families.push_back(family_from_name(f));
    g.dimensions = dims;
    g.validate();
    return g;
}

py::dict multiset_to_dict(const FeatureMultiset& ms) {
    py::dict d;
    for (const auto& [key, count] : ms.entries)
        d[py::str(key.repr)] = static_cast<double>(count) / ms.total;
    return d;
}

DistanceWeights weights_from_tuple(const std::tuple<double, double, double>& w) {
    DistanceWeights dw{std::get<0>(w), std::get<1>(w), std::get<2>(w)};
    dw.validate();
    return dw;
}

py::dict trace_row(const EvaluatedKernel& row) {
    py::dict d;
    d["tree"] = format_tree(row.tree);
    d["g"] = row.g;
    d["iteration"] = row.iteration;
    d["oracle_seconds"] = row.oracle_seconds;
    d["cpu_seconds"] = row.cpu_seconds;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Kernel structure search for Gaussian-process regression";

    py::class_<PyTree>(m, "Tree")
        .def_property_readonly("leaf_count", [](const PyTree& t) { return t.ptr->leaf_count(); })
        .def_property_readonly("node_count", [](const PyTree& t) { return t.ptr->node_count(); })
        .def_property_readonly("depth", [](const PyTree& t) { return t.ptr->depth(); })
        .def_property_readonly("canonical_hash",
                               [](const PyTree& t) { return t.ptr->canonical_hash(); })
        .def("__str__", [](const PyTree& t) { return format_tree(t.ptr); })
        .def("__repr__", [](const PyTree& t) { return "Tree(\"" + format_tree(t.ptr) + "\")"; })
        .def("__eq__", [](const PyTree& a, const PyTree& b) { return trees_equal(a.ptr, b.ptr); })
        .def("__hash__", [](const PyTree& t) { return t.ptr->canonical_hash(); });

    m.def(
        "parse", [](const std::string& text) { return PyTree{parse_tree(text)}; }, py::arg("text"),
        "Parse a kernel expression such as 'SE0 + LIN0'");

    m.def(
        "neighbors",
        [](const PyTree& t, const std::vector<std::string>& families, int dims) {
            std::vector<PyTree> out;
            for (auto& n : neighbors(t.ptr, make_grammar(families, dims)))
                out.push_back(PyTree{std::move(n)});
            return out;
        },
        py::arg("tree"), py::arg("families") = std::vector<std::string>{"SE", "LIN", "PER", "RQ"},
        py::arg("dims") = 1, "All trees one grammar operation away");

    m.def(
        "random_mutation",
        [](const PyTree& t, const std::vector<std::string>& families, int dims,
           std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            return PyTree{random_grammar_op(t.ptr, make_grammar(families, dims), rng)};
        },
        py::arg("tree"), py::arg("families") = std::vector<std::string>{"SE", "LIN", "PER", "RQ"},
        py::arg("dims") = 1, py::arg("seed") = 0);

    m.def(
        "feature_distributions",
        [](const PyTree& t, int dims) {
            py::dict out;
            py::list base;
            for (const auto& ms : base_multisets_per_dim(t.ptr, dims))
                base.append(multiset_to_dict(ms));
            out["base"] = base;
            out["paths"] = multiset_to_dict(path_multiset(t.ptr));
            out["subtrees"] = multiset_to_dict(subtree_multiset(t.ptr));
            return out;
        },
        py::arg("tree"), py::arg("dims") = 1,
        "Normalized base/path/subtree feature distributions");

    m.def(
        "sot_distance",
        [](const PyTree& a, const PyTree& b, int dims,
           const std::tuple<double, double, double>& weights) {
            return sot_distance(to_distributions(a.ptr, dims), to_distributions(b.ptr, dims),
                                weights_from_tuple(weights));
        },
        py::arg("a"), py::arg("b"), py::arg("dims") = 1,
        py::arg("weights") = std::make_tuple(1.0 / 3, 1.0 / 3, 1.0 / 3));

    m.def(
        "kernel_kernel",
        [](const PyTree& a, const PyTree& b, int dims, double variance, double lengthscale_sq,
           const std::tuple<double, double, double>& weights) {
            FeatureCache cache(dims);
            return kernel_kernel(a.ptr, b.ptr,
                                 {variance, lengthscale_sq, weights_from_tuple(weights)}, cache);
        },
        py::arg("a"), py::arg("b"), py::arg("dims") = 1, py::arg("variance") = 1.0,
        py::arg("lengthscale_sq") = 1.0,
        py::arg("weights") = std::make_tuple(1.0 / 3, 1.0 / 3, 1.0 / 3));

    m.def(
        "gram_matrix",
        [](const std::vector<PyTree>& trees, int dims, double variance, double lengthscale_sq,
           const std::tuple<double, double, double>& weights) {
            FeatureCache cache(dims);
            std::vector<TreePtr> ptrs;
            ptrs.reserve(trees.size());
            for (const auto& t : trees) ptrs.push_back(t.ptr);
            return gram_matrix(ptrs, {variance, lengthscale_sq, weights_from_tuple(weights)},
                               cache);
        },
        py::arg("trees"), py::arg("dims") = 1, py::arg("variance") = 1.0,
        py::arg("lengthscale_sq") = 1.0,
        py::arg("weights") = std::make_tuple(1.0 / 3, 1.0 / 3, 1.0 / 3));

    m.def(
        "log_evidence",
        [](const PyTree& tree, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int restarts,
           std::uint64_t seed) {
            Dataset data{X, y};
            std::mt19937_64 rng(seed);
            EvidenceResult ev = laplace_log_evidence(tree.ptr, data, restarts, rng);
            py::dict out;
            out["g"] = ev.g;
            out["raw"] = ev.raw;
            out["map_params"] = ev.map_params;
            out["seconds"] = ev.seconds;
            return out;
        },
        py::arg("tree"), py::arg("X"), py::arg("y"), py::arg("restarts") = 10, py::arg("seed") = 0,
        "Laplace-approximated normalized log evidence of a kernel structure");

    m.def(
        "simulate",
        [](const PyTree& tree, int n, double noise, int dims, std::uint64_t seed) {
            ParamLayout layout = ParamLayout::for_tree(tree.ptr);
            Eigen::VectorXd p = layout.prior_means().head(layout.kernel_param_count());
            std::mt19937_64 rng(seed);
            Dataset d = simulate_gp_data(tree.ptr, p, n, noise, dims, rng);
            return std::make_pair(d.X, d.y);
        },
        py::arg("tree"), py::arg("n") = 100, py::arg("noise") = 0.01, py::arg("dims") = 1,
        py::arg("seed") = 0,
        "Draw a standardized dataset from a GP prior with the given kernel structure");

    m.def(
        "search",
        [](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::string& method,
           const std::string& space, int iterations, std::uint64_t seed, int map_restarts,
           int population, int offspring, int ea_steps) {
            Dataset data{X, y};
            SearchConfig sc;
            sc.grammar = space_preset(space, data.dims());
            sc.bo_iterations = iterations;
            sc.seed = seed;
            sc.map_restarts = map_restarts;
            sc.n_population = population;
            sc.n_offspring = offspring;
            sc.ea_steps =
                ea_steps > 0 ? ea_steps : (sc.grammar.base_families.size() <= 2 ? 10 : 6);
            sc.validate();
            SearchTrace trace;
            if (method == "sot")
                trace = bo_search(data, sc);
            else if (method == "greedy")
                trace = greedy_search(data, sc);
            else if (method == "treegep")
                trace = tree_gep_search(data, sc);
            else
                throw std::invalid_argument("unknown search method: " + method);
            py::list rows;
            for (const auto& row : trace.evaluations) rows.append(trace_row(row));
            py::dict out;
            out["rows"] = rows;
            out["best_tree"] = format_tree(trace.best().tree);
            out["best_g"] = trace.best().g;
            return out;
        },
        py::arg("X"), py::arg("y"), py::arg("method") = "sot", py::arg("space") = "auto",
        py::arg("iterations") = 50, py::arg("seed") = 0, py::arg("map_restarts") = 10,
        py::arg("population") = 100, py::arg("offspring") = 4, py::arg("ea_steps") = 0,
        "Run a kernel structure search on (X, y) and return the evaluation trace");

    m.def(
        "expected_improvement",
        [](const Eigen::VectorXd& mean, const Eigen::VectorXd& variance, double best) {
            return expected_improvement(mean, variance, best);
        },
        py::arg("mean"), py::arg("variance"), py::arg("best"));

    m.attr("__version__") = "0.1.0";
}
