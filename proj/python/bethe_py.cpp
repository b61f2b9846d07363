#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "bethe/bench.hpp"
#include "bethe/metrics.hpp"
#include "bethe/special_functions.hpp"
#include "bethe/verify.hpp"

namespace py = pybind11;
using namespace bethe;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const DoubleArray& arr) {
    const py::buffer_info info = arr.request();
    if (info.ndim == 1) {
        Matrix m(static_cast<std::size_t>(info.shape[0]), 1);
        const double* src = static_cast<const double*>(info.ptr);
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = src[i];
        return m;
    }
    if (info.ndim != 2) throw std::invalid_argument("expected a 1-d or 2-d array");
    Matrix m(static_cast<std::size_t>(info.shape[0]), static_cast<std::size_t>(info.shape[1]));
    const double* src = static_cast<const double*>(info.ptr);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = src[i];
    return m;
}

py::array_t<double> from_matrix(const Matrix& m) {
    py::array_t<double> arr({m.rows(), m.cols()});
    double* dst = arr.mutable_data();
    for (std::size_t i = 0; i < m.size(); ++i) dst[i] = m[i];
    return arr;
}

py::array_t<double> column_to_1d(const Matrix& m) {
    py::array_t<double> arr(std::vector<py::ssize_t>{static_cast<py::ssize_t>(m.size())});
    double* dst = arr.mutable_data();
    for (std::size_t i = 0; i < m.size(); ++i) dst[i] = m[i];
    return arr;
}

Dataset dataset_from_arrays(const DoubleArray& x, const DoubleArray& y,
                            const std::string& task) {
    Dataset ds;
    ds.name = "array";
    ds.x = to_matrix(x);
    ds.y = to_matrix(y);
    if (ds.y.cols() != 1) throw std::invalid_argument("y must be one-dimensional");
    if (ds.y.rows() != ds.x.rows()) throw std::invalid_argument("x and y row counts differ");
    if (task == "regression") {
        ds.task = TaskKind::Regression;
    } else if (task == "classification") {
        ds.task = TaskKind::Classification;
        int max_label = 0;
        for (std::size_t i = 0; i < ds.y.size(); ++i) {
            const double v = ds.y[i];
            if (v != std::floor(v) || v < 0)
                throw std::invalid_argument("classification labels must be integers 0..K-1");
            max_label = std::max(max_label, static_cast<int>(v));
        }
        ds.num_classes = static_cast<std::size_t>(max_label) + 1;
        for (std::size_t k = 0; k < ds.num_classes; ++k)
            ds.class_names.push_back(std::to_string(k));
    } else {
        throw std::invalid_argument("task must be 'regression' or 'classification'");
    }
    return ds;
}

py::dict record_to_dict(const bench::RunRecord& rec) {
    py::dict out;
    out["dataset"] = rec.dataset;
    out["method"] = rec.method;
    out["seed"] = rec.seed;
    out["ok"] = rec.ok;
    out["error"] = rec.error;
    out["nll"] = rec.nll;
    out["rmse"] = rec.rmse;
    out["acc"] = rec.acc;
    out["calib_err"] = rec.calib_err;
    out["ece"] = rec.ece;
    out["alpha"] = rec.alpha;
    out["sigma_obs_sq"] = rec.sigma_obs_sq;
    out["oracle_test_nll"] = rec.oracle_test_nll;
    out["steps"] = rec.steps;
    return out;
}

}  // namespace

PYBIND11_MODULE(bethe, m) {
    m.doc() = "Bayesian last-layer networks trained by direct Bethe free energy minimization";

    // numerically stable normal-distribution kernels
    m.def("ndtr", &sf::ndtr, py::arg("x"), "standard normal CDF");
    m.def("log_ndtr", &sf::log_ndtr, py::arg("x"), "log of the standard normal CDF");
    m.def("ndtri", &sf::ndtri, py::arg("p"), "inverse standard normal CDF");
    m.def("mills_ratio", &sf::mills_ratio, py::arg("x"), "npdf(x)/ndtr(x)");
    m.def("probit_gauss_conv", &sf::probit_gauss_conv, py::arg("y"), py::arg("mu_f"),
          py::arg("v_f"), py::arg("c"),
          "closed-form probit likelihood under a Gaussian message");
    m.def("gauss_conv_nll", &sf::gauss_conv_nll, py::arg("y"), py::arg("mu_f"), py::arg("V"),
          "Gaussian NLL at total variance V, including the 0.5*log(2*pi) constant");

    // synthetic generators and the split protocol
    m.def(
        "two_moons",
        [](std::size_t n, double noise, std::uint64_t seed) {
            Dataset ds = gen_two_moons(n, noise, seed);
            return py::make_tuple(from_matrix(ds.x), column_to_1d(ds.y));
        },
        py::arg("n") = 200, py::arg("noise") = 0.15, py::arg("seed") = 5);
    m.def(
        "linear_gaussian",
        [](std::size_t n, std::size_t d, double alpha, double sigma, std::uint64_t seed) {
            Dataset ds = gen_linear_gaussian(n, d, alpha, sigma, seed);
            return py::make_tuple(from_matrix(ds.x), column_to_1d(ds.y));
        },
        py::arg("n"), py::arg("d"), py::arg("alpha") = 1.0, py::arg("sigma") = 0.5,
        py::arg("seed") = 5);
    m.def(
        "probit_linear",
        [](std::size_t n, std::size_t d, double alpha, double c, std::uint64_t seed) {
            Dataset ds = gen_probit_linear(n, d, alpha, c, seed);
            return py::make_tuple(from_matrix(ds.x), column_to_1d(ds.y));
        },
        py::arg("n"), py::arg("d"), py::arg("alpha") = 1.0, py::arg("c") = 1.0,
        py::arg("seed") = 5);
    m.def(
        "split_indices",
        [](std::size_t n, std::uint64_t seed) {
            SplitIndices idx = split(n, seed);
            return py::make_tuple(idx.train, idx.val, idx.test);
        },
        py::arg("n"), py::arg("seed"), "seeded 60/20/20 partition of 0..n-1");

    // one benchmark cell: split, preprocess, train, evaluate
    m.def(
        "benchmark",
        [](const DoubleArray& x, const DoubleArray& y, const std::string& task,
           const std::string& method, std::uint64_t seed) {
            Dataset ds = dataset_from_arrays(x, y, task);
            bench::RunRecord rec =
                bench::run_cell(ds, ds.name, bench::parse_method(method), seed, nullptr);
            return record_to_dict(rec);
        },
        py::arg("x"), py::arg("y"), py::arg("task"), py::arg("method"), py::arg("seed") = 5,
        "train one (method, seed) cell on the given data and return its metrics");

    // evaluation metrics
    m.def(
        "paired_t_test",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            return paired_t_test(a, b);
        },
        py::arg("a"), py::arg("b"), "two-sided paired t-test p-value");
    m.def(
        "expected_calibration_error",
        [](const DoubleArray& probs, const std::vector<int>& labels) {
            ClassPredictive pred{to_matrix(probs)};
            return ece(pred, labels);
        },
        py::arg("probs"), py::arg("labels"));
    m.def(
        "calibration_error",
        [](const DoubleArray& mean, const DoubleArray& variance, const DoubleArray& y) {
            RegressionPredictive pred{to_matrix(mean), to_matrix(variance)};
            return calib_err(pred, to_matrix(y));
        },
        py::arg("mean"), py::arg("variance"), py::arg("y"),
        "coverage deviation averaged over the 19 nominal levels");

    m.def(
        "verify",
        []() {
            std::ostringstream os;
            const int failures = verify::run_all(os);
            py::print(os.str());
            return failures;
        },
        "run the numerical self-check suites; returns the number of failures");
}
