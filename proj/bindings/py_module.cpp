#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <deque>
#include <string>
#include <vector>

#include "eclrr/config.hpp"
#include "eclrr/errors.hpp"
#include "eclrr/losses.hpp"
#include "eclrr/task_streams.hpp"
#include "eclrr/trainer.hpp"

namespace py = pybind11;

namespace {

const char* branch_name(eclrr::GateBranch b) {
    switch (b) {
        case eclrr::GateBranch::kWarmup: return "warmup";
        case eclrr::GateBranch::kRobust: return "robust";
        case eclrr::GateBranch::kNone: return "none";
        default: return "intermediate";
    }
}

eclrr::RegWeights make_weights(double w_mu1, double w_mu2, double w_sig1,
                               double w_sig2, double sigma_floor,
                               bool alt_sigma_ratio) {
    eclrr::RegWeights w;
    w.w_mu1 = w_mu1;
    w.w_mu2 = w_mu2;
    w.w_sig1 = w_sig1;
    w.w_sig2 = w_sig2;
    w.sigma_floor = sigma_floor;
    w.alt_sigma_ratio = alt_sigma_ratio;
    w.validate();
    return w;
}

py::dict report_to_dict(const eclrr::RunReport& report) {
    py::dict out;
    out["accuracy_matrix"] = report.matrix.rows;
    out["acc"] = report.acc;
    if (report.bwt)
        out["bwt"] = *report.bwt;
    else
        out["bwt"] = py::none();
    out["task_seconds"] = report.task_seconds;
    py::list logs;
    for (const eclrr::EpochLog& l : report.logs) {
        py::dict d;
        d["task"] = l.task;
        d["epoch"] = l.epoch;
        d["split"] = l.split;
        d["loss"] = l.loss;
        d["acc"] = l.acc;
        d["gate_r"] = l.gate_r;
        d["branch"] = l.branch;
        logs.append(d);
    }
    out["logs"] = logs;
    return out;
}

}  // namespace

PYBIND11_MODULE(_eclrr, m) {
    m.doc() = "Continual learning for variational Bayesian classifiers";
    m.attr("__version__") = "0.1.0";

    m.def("kl_diag_gauss", &eclrr::kl_diag_gauss, py::arg("mu_q"),
          py::arg("sigma_q"), py::arg("mu_p"), py::arg("sigma_p"),
          "Closed-form KL divergence between diagonal Gaussians.");

    m.def(
        "revised_reg",
        [](const eclrr::Vec& mu_t, const eclrr::Vec& mu_prev,
           const eclrr::Vec& sigma_t, const eclrr::Vec& sigma_prev, double w_mu1,
           double w_mu2, double w_sig1, double w_sig2, double sigma_floor,
           bool alt_sigma_ratio) {
            return eclrr::revised_reg(
                mu_t, mu_prev, sigma_t, sigma_prev,
                make_weights(w_mu1, w_mu2, w_sig1, w_sig2, sigma_floor,
                             alt_sigma_ratio));
        },
        py::arg("mu_t"), py::arg("mu_prev"), py::arg("sigma_t"),
        py::arg("sigma_prev"), py::arg("w_mu1") = 1.0, py::arg("w_mu2") = 1.0,
        py::arg("w_sig1") = 1.0, py::arg("w_sig2") = 1.0,
        py::arg("sigma_floor") = 1e-6, py::arg("alt_sigma_ratio") = false,
        "Four-term mean/variance regularizer against the previous posterior.");

    m.def(
        "metrics",
        [](const std::vector<std::vector<double>>& rows) {
            eclrr::AccuracyMatrix a;
            a.rows = rows;
            const eclrr::Metrics met = eclrr::metrics(a);
            py::dict out;
            out["acc"] = met.acc;
            if (met.bwt)
                out["bwt"] = *met.bwt;
            else
                out["bwt"] = py::none();
            return out;
        },
        py::arg("accuracy_matrix"),
        "Average accuracy and backward transfer of a lower-triangular matrix.");

    m.def(
        "gate_decision",
        [](const std::vector<double>& proj_hist, const std::vector<double>& cor_hist,
           double epsilon, double delta, int window) {
            eclrr::GateThresholds g;
            g.epsilon = epsilon;
            g.delta = delta;
            g.window = window;
            g.validate();
            const std::deque<double> proj(proj_hist.begin(), proj_hist.end());
            const std::deque<double> cor(cor_hist.begin(), cor_hist.end());
            const eclrr::GateDecision d = eclrr::gate_decision(proj, cor, g);
            py::dict out;
            out["branch"] = branch_name(d.branch);
            out["r"] = d.r;
            return out;
        },
        py::arg("proj_hist"), py::arg("cor_hist"), py::arg("epsilon") = 0.7,
        py::arg("delta") = 0.1, py::arg("window") = 10,
        "Correlation-gate branch for one layer's two loss histories.");

    m.def(
        "run",
        [](const std::string& config_text) {
            eclrr::RunConfig c = eclrr::parse_config_text(config_text);
            eclrr::validate_keys(c);
            const eclrr::TrainOptions o = eclrr::make_train_options(c);
            const eclrr::TaskStream stream = eclrr::make_stream(c);
            eclrr::RunReport report;
            {
                py::gil_scoped_release release;
                report = eclrr::run_stream(stream, o);
            }
            return report_to_dict(report);
        },
        py::arg("config_text"),
        "Train a task stream described by key = value config text and return "
        "the accuracy matrix, ACC/BWT and per-epoch logs.");
}
