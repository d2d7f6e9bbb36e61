#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <optional>

#include "dcs/checkpoint.hpp"
#include "dcs/errors.hpp"
#include "dcs/harness.hpp"
#include "dcs/losses.hpp"
#include "dcs/metrics.hpp"

namespace py = pybind11;
using namespace dcs;

namespace {

using Rows = std::vector<std::vector<double>>;

Tensor to_matrix(const Rows& rows) {
    if (rows.empty()) {
        throw DimensionError("expected at least one row");
    }
    std::vector<double> flat;
    for (const auto& r : rows) {
        if (r.size() != rows.front().size()) {
            throw DimensionError("ragged rows");
        }
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return Tensor::matrix(rows.size(), rows.front().size(), std::move(flat));
}

py::dict epoch_dict(const EpochMetrics& m) {
    py::dict d;
    d["epoch"] = m.epoch;
    d["total_loss"] = m.total_loss;
    d["ce_loss"] = m.ce_loss;
    d["kd_loss"] = m.kd_loss;
    d["train_accuracy"] = m.train_accuracy;
    d["dev_accuracy"] = m.dev_accuracy;
    d["dev_mcc"] = m.dev_mcc;
    d["disagreements"] = m.disagreements;
    d["boosted"] = m.boosted;
    return d;
}

py::dict experiment_dict(const ExperimentResult& r) {
    py::dict d;
    d["strategy"] = std::string(to_string(r.strategy));
    d["param"] = r.param;
    d["param_value"] = r.param_value;
    d["dev_accuracy_mean"] = r.dev_accuracy.mean;
    d["dev_accuracy_stdev"] = r.dev_accuracy.stdev;
    d["dev_mcc_mean"] = r.dev_mcc.mean;
    d["dev_mcc_stdev"] = r.dev_mcc.stdev;
    py::list runs;
    for (const auto& run : r.runs) {
        py::dict s;
        s["seed"] = run.seed;
        s["best_epoch"] = run.metrics.best_epoch;
        s["student_hash"] = run.student_hash;
        s["teacher_hash"] = run.teacher_hash_after;
        py::list epochs;
        for (const auto& m : run.metrics.epochs) {
            epochs.append(epoch_dict(m));
        }
        s["epochs"] = epochs;
        runs.append(s);
    }
    d["runs"] = runs;
    return d;
}

// One config with its data and (once trained or loaded) its teacher.
class Session {
public:
    explicit Session(const std::string& config_json)
        : config_(parse_config(config_json)), workspace_(prepare_workspace(config_)) {}

    std::string config_json() const { return serialize_config(config_); }
    std::size_t n_train() const { return workspace_.data.train.size(); }
    std::size_t n_dev() const { return workspace_.data.dev.size(); }

    std::string train_teacher(const std::filesystem::path& out_dir) {
        py::gil_scoped_release release;
        teacher_ = dcs::train_teacher(config_, workspace_, out_dir).model;
        return parameter_hash(*teacher_);
    }

    std::string load_teacher(const std::filesystem::path& path) {
        teacher_ = dcs::load_teacher(path, config_).model;
        return parameter_hash(*teacher_);
    }

    std::optional<std::string> teacher_hash() const {
        if (!teacher_) {
            return std::nullopt;
        }
        return parameter_hash(*teacher_);
    }

    py::dict run(const std::string& strategy, const std::filesystem::path& out_dir) {
        const auto s = parse_strategy(strategy);
        ExperimentResult r;
        {
            py::gil_scoped_release release;
            r = run_experiment(config_, s, workspace_, teacher_, {out_dir});
        }
        return experiment_dict(r);
    }

    py::list compare(const std::filesystem::path& out_dir) {
        std::vector<ExperimentResult> rs;
        {
            py::gil_scoped_release release;
            rs = compare_strategies(config_, workspace_, teacher_, {out_dir});
        }
        py::list out;
        for (const auto& r : rs) {
            out.append(experiment_dict(r));
        }
        return out;
    }

    py::list sweep(const std::string& param, std::optional<std::vector<double>> grid,
                   const std::filesystem::path& out_dir) {
        const auto p = parse_sweep_param(param);
        const auto values = grid ? *grid : (p == SweepParam::Alpha ? config_.alpha_grid : config_.lambda_grid);
        SweepResult result;
        {
            py::gil_scoped_release release;
            result = dcs::sweep(config_, p, values, workspace_, teacher_, {out_dir});
        }
        py::list out;
        for (const auto& c : result.curve) {
            py::dict d;
            d["value"] = c.param_value;
            d["mean"] = c.mean;
            d["stdev"] = c.stdev;
            d["n_seeds"] = c.n_seeds;
            out.append(d);
        }
        return out;
    }

private:
    DistillationConfig config_;
    Workspace workspace_;
    std::shared_ptr<const ClassifierModel> teacher_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Disagreement-weighted knowledge distillation";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
    py::register_exception<PersistenceError>(m, "PersistenceError", PyExc_OSError);

    m.def("normalize_config", [](const std::string& text) { return serialize_config(parse_config(text)); },
          py::arg("config_json"), "Validates a JSON config and returns it with every default filled in.");

    m.def(
        "cross_entropy",
        [](const Rows& logits, const std::vector<int>& labels) { return cross_entropy(to_matrix(logits), labels).item(); },
        py::arg("logits"), py::arg("labels"));
    m.def(
        "kd_loss",
        [](const Rows& teacher, const Rows& student, double temperature) {
            const auto r = kd_loss(to_matrix(teacher), to_matrix(student), temperature);
            return py::make_tuple(r.loss.item(), r.per_sample);
        },
        py::arg("teacher_logits"), py::arg("student_logits"), py::arg("temperature") = 1.0,
        "Returns (batch mean, per-sample values) of -sum p log q.");
    m.def(
        "weighted_kd_loss",
        [](const Rows& teacher, const Rows& student, const std::vector<double>& weights, double temperature) {
            return weighted_kd_loss(to_matrix(teacher), to_matrix(student), weights, temperature).loss.item();
        },
        py::arg("teacher_logits"), py::arg("student_logits"), py::arg("weights"), py::arg("temperature") = 1.0);
    m.def(
        "total_loss",
        [](double ce, double kd, double alpha) {
            return total_loss(Tensor::scalar(ce), Tensor::scalar(kd), alpha).loss.item();
        },
        py::arg("ce"), py::arg("kd"), py::arg("alpha"));
    m.def(
        "dcs_weights",
        [](const std::vector<int>& teacher_pred, const std::vector<int>& student_pred, const std::string& strategy,
           double lambda, std::uint64_t seed) {
            if (teacher_pred.size() != student_pred.size()) {
                throw DimensionError("prediction vectors differ in length");
            }
            AgreementMap map;
            map.teacher_prediction = teacher_pred;
            map.student_prediction = student_pred;
            for (std::size_t i = 0; i < teacher_pred.size(); ++i) {
                map.agree.push_back(teacher_pred[i] == student_pred[i]);
            }
            Rng rng(seed);
            return assign_weights(map, parse_strategy(strategy), lambda, rng).weights;
        },
        py::arg("teacher_pred"), py::arg("student_pred"), py::arg("strategy") = "dcs", py::arg("lam") = 2.0,
        py::arg("seed") = 0);
    m.def(
        "matthews_correlation",
        [](const std::vector<int>& truth, const std::vector<int>& pred, std::size_t n_classes) {
            return matthews_correlation(confusion_matrix(truth, pred, n_classes));
        },
        py::arg("truth"), py::arg("predicted"), py::arg("n_classes"));
    m.def(
        "predict",
        [](const std::filesystem::path& checkpoint, const Rows& inputs) {
            return dcs::predict(load_checkpoint(checkpoint).model, to_matrix(inputs));
        },
        py::arg("checkpoint"), py::arg("inputs"), "Class predictions of a saved model for a batch of input rows.");
    m.def("report", &report, py::arg("run_dir"));

    py::class_<Session>(m, "Session")
        .def(py::init<const std::string&>(), py::arg("config_json"))
        .def_property_readonly("config_json", &Session::config_json)
        .def_property_readonly("n_train", &Session::n_train)
        .def_property_readonly("n_dev", &Session::n_dev)
        .def_property_readonly("teacher_hash", &Session::teacher_hash)
        .def("train_teacher", &Session::train_teacher, py::arg("out_dir") = std::filesystem::path{})
        .def("load_teacher", &Session::load_teacher, py::arg("path"))
        .def("run", &Session::run, py::arg("strategy"), py::arg("out_dir") = std::filesystem::path{})
        .def("compare", &Session::compare, py::arg("out_dir") = std::filesystem::path{})
        .def("sweep", &Session::sweep, py::arg("param"), py::arg("grid") = std::nullopt,
             py::arg("out_dir") = std::filesystem::path{});
}
