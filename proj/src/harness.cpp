#include "dcs/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "dcs/errors.hpp"

namespace dcs {

namespace fs = std::filesystem;

namespace {

// Runs fn(0..n-1) on up to `workers` threads. Results must be stored by index
// so completion order never leaks into outputs. The first exception wins.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) {
                        error = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw PersistenceError("cannot write " + path.string());
    }
    out << text;
    if (!out) {
        throw PersistenceError("failed while writing " + path.string());
    }
}

std::string slug(const ExperimentResult& r) {
    std::string s(to_string(r.strategy));
    if (r.param != "none") {
        s += "/" + r.param + "=" + format_number(r.param_value);
    }
    return s;
}

struct Job {
    DistillationConfig config;
    WeightingStrategy strategy;
    std::string param;
    double param_value;
};

// Flattens (job, seed) pairs so every seed of every grid point can run
// concurrently, then regroups results in job order.
std::vector<ExperimentResult> run_jobs(const std::vector<Job>& jobs, const Workspace& workspace,
                                       const std::shared_ptr<const ClassifierModel>& teacher,
                                       std::size_t workers) {
    std::vector<ExperimentResult> results(jobs.size());
    std::vector<std::pair<std::size_t, std::size_t>> tasks;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        jobs[j].config.validate();
        if (uses_teacher(jobs[j].strategy) && !teacher) {
            throw ConfigError("strategy '" + std::string(to_string(jobs[j].strategy)) +
                              "' needs a teacher checkpoint; run train-teacher first");
        }
        results[j].strategy = jobs[j].strategy;
        results[j].param = jobs[j].param;
        results[j].param_value = jobs[j].param_value;
        results[j].runs.resize(jobs[j].config.seeds.size());
        for (std::size_t s = 0; s < jobs[j].config.seeds.size(); ++s) {
            tasks.emplace_back(j, s);
        }
    }
    parallel_for(tasks.size(), workers, [&](std::size_t t) {
        const auto [j, s] = tasks[t];
        DistillationConfig cfg = jobs[j].config;
        cfg.strategy = jobs[j].strategy;
        const std::uint64_t seed = cfg.seeds[s];
        const ClassifierModel init = initial_student(workspace, cfg, seed);
        RunResult run = run_dcs(uses_teacher(cfg.strategy) ? teacher : nullptr, init, workspace.data.train,
                                &workspace.data.dev, cfg, seed);
        SeedRun& out = results[j].runs[s];
        out.seed = seed;
        out.student_hash = parameter_hash(run.student);
        out.metrics = std::move(run.metrics);
        out.weights_by_epoch = std::move(run.weights_by_epoch);
        out.assignments_per_epoch = std::move(run.assignments_per_epoch);
        out.teacher_hash_before = std::move(run.teacher_hash_before);
        out.teacher_hash_after = std::move(run.teacher_hash_after);
        out.student = std::make_shared<const ClassifierModel>(std::move(run.student));
    });
    for (auto& r : results) {
        std::vector<double> acc;
        std::vector<double> mcc;
        for (const auto& run : r.runs) {
            acc.push_back(run.metrics.best().dev_accuracy);
            mcc.push_back(run.metrics.best().dev_mcc);
        }
        r.dev_accuracy = aggregate(acc);
        r.dev_mcc = aggregate(mcc);
    }
    return results;
}

void write_outputs(const std::vector<ExperimentResult>& results, const DistillationConfig& config,
                   const OutputOptions& output, const std::string& kind,
                   const std::shared_ptr<const ClassifierModel>& teacher) {
    if (output.dir.empty()) {
        return;
    }
    write_text(output.dir / "metrics.csv", metrics_csv(results));
    write_text(output.dir / "seeds.csv", seeds_csv(results));
    write_text(output.dir / "summary.csv", summary_csv(results));
    write_text(output.dir / "config.json", serialize_config(config));
    nlohmann::json manifest = {{"csv_schema_version", kCsvSchemaVersion},
                               {"kind", kind},
                               {"teacher_hash", teacher ? parameter_hash(*teacher) : std::string{}}};
    write_text(output.dir / "manifest.json", manifest.dump(2) + "\n");
    for (const auto& r : results) {
        for (const auto& run : r.runs) {
            const fs::path seed_dir = output.dir / slug(r) / ("seed" + std::to_string(run.seed));
            if (output.write_weights) {
                for (std::size_t e = 0; e < run.weights_by_epoch.size(); ++e) {
                    write_text(seed_dir / ("weights_epoch" + std::to_string(e) + ".csv"),
                               weights_csv(run.weights_by_epoch[e]));
                }
            }
            if (output.write_checkpoints && run.student) {
                save_checkpoint(seed_dir / "student.json", *run.student,
                                {config.epochs, run.seed, config.task.id()});
            }
        }
    }
}

}  // namespace

// --- workspace & teacher ---------------------------------------------------

Workspace prepare_workspace(const DistillationConfig& config) {
    config.validate();
    Workspace ws;
    if (config.pretrain_epochs > 0) {
        TransferPair pair = make_transfer_pair(config.task, config.source_n_train, config.source_shift);
        ws.data = std::move(pair.target);
        DistillationConfig pre = config;
        pre.strategy = WeightingStrategy::VanillaFt;
        pre.alpha = 1.0;
        pre.epochs = config.pretrain_epochs;
        RunResult r = run_dcs(nullptr, build_model(config.architecture, config.teacher_seed), pair.source.train,
                              nullptr, pre, config.teacher_seed);
        ws.pretrained = std::move(r.student);
    } else {
        ws.data = load_task(config.task);
    }
    if (ws.data.train.empty()) {
        throw DataError("task '" + config.task.id() + "' has no training samples");
    }
    return ws;
}

ClassifierModel initial_student(const Workspace& workspace, const DistillationConfig& config,
                                std::uint64_t seed) {
    if (workspace.pretrained) {
        return workspace.pretrained->clone();
    }
    return build_model(config.architecture, seed);
}

TeacherArtifact train_teacher(const DistillationConfig& config, const Workspace& workspace,
                              const fs::path& out_dir) {
    DistillationConfig tcfg = config;
    tcfg.strategy = WeightingStrategy::VanillaFt;
    tcfg.alpha = 1.0;
    tcfg.epochs = config.teacher_epochs;
    const ClassifierModel init = workspace.pretrained ? workspace.pretrained->clone()
                                                      : build_model(config.architecture, config.teacher_seed);
    RunResult r = run_dcs(nullptr, init, workspace.data.train, &workspace.data.dev, tcfg, config.teacher_seed);
    TeacherArtifact t;
    t.metadata = {config.teacher_epochs, config.teacher_seed, config.task.id()};
    t.metrics = r.metrics;
    r.student.set_trainable(false);
    t.model = std::make_shared<const ClassifierModel>(std::move(r.student));
    if (!out_dir.empty()) {
        save_checkpoint(out_dir / "teacher.json", *t.model, t.metadata);
        ExperimentResult er;
        er.strategy = WeightingStrategy::VanillaFt;
        SeedRun run;
        run.seed = config.teacher_seed;
        run.metrics = t.metrics;
        er.runs.push_back(std::move(run));
        write_text(out_dir / "metrics.csv", metrics_csv(std::span(&er, 1)));
    }
    return t;
}

TeacherArtifact load_teacher(const fs::path& checkpoint, const DistillationConfig& config) {
    if (!fs::exists(checkpoint)) {
        throw ConfigError("teacher checkpoint " + checkpoint.string() +
                          " not found; run `train-teacher --config <path>` first");
    }
    Checkpoint ck = load_checkpoint(checkpoint);
    if (!(ck.model.descriptor() == config.architecture)) {
        throw ConfigError("teacher checkpoint " + checkpoint.string() + " has a different architecture");
    }
    if (ck.metadata.task_id != config.task.id() || ck.metadata.seed != config.teacher_seed ||
        ck.metadata.epochs != config.teacher_epochs) {
        throw ConfigError("teacher checkpoint " + checkpoint.string() +
                          " was trained for a different task, seed or epoch count; re-run train-teacher");
    }
    ck.model.set_trainable(false);
    TeacherArtifact t;
    t.metadata = ck.metadata;
    t.model = std::make_shared<const ClassifierModel>(std::move(ck.model));
    return t;
}

fs::path default_teacher_dir(const DistillationConfig& config) {
    return fs::path(config.output_dir) / "teacher";
}

TeacherArtifact train_or_load_teacher(const DistillationConfig& config, const Workspace& workspace,
                                      const fs::path& dir) {
    const fs::path ckpt = dir / "teacher.json";
    if (!dir.empty() && fs::exists(ckpt)) {
        return load_teacher(ckpt, config);
    }
    return train_teacher(config, workspace, dir);
}

// --- experiments -------------------------------------------------------------

ExperimentResult run_experiment(const DistillationConfig& config, WeightingStrategy strategy,
                                const Workspace& workspace, std::shared_ptr<const ClassifierModel> teacher,
                                const OutputOptions& output) {
    std::vector<Job> jobs{{config, strategy, "none", 0.0}};
    auto results = run_jobs(jobs, workspace, teacher, config.workers);
    DistillationConfig written = config;
    written.strategy = strategy;
    write_outputs(results, written, output, "run", teacher);
    return std::move(results.front());
}

std::vector<WeightingStrategy> comparison_strategies() {
    return {WeightingStrategy::VanillaFt, WeightingStrategy::PureKd, WeightingStrategy::Dcs,
            WeightingStrategy::DcsReverse, WeightingStrategy::DcsRandom};
}

std::vector<ExperimentResult> compare_strategies(const DistillationConfig& config, const Workspace& workspace,
                                                 std::shared_ptr<const ClassifierModel> teacher,
                                                 const OutputOptions& output) {
    std::vector<Job> jobs;
    for (auto s : comparison_strategies()) {
        jobs.push_back({config, s, "none", 0.0});
    }
    auto results = run_jobs(jobs, workspace, teacher, config.workers);
    write_outputs(results, config, output, "compare", teacher);
    return results;
}

std::string_view to_string(SweepParam param) { return param == SweepParam::Alpha ? "alpha" : "lambda"; }

SweepParam parse_sweep_param(std::string_view name) {
    if (name == "alpha") {
        return SweepParam::Alpha;
    }
    if (name == "lambda") {
        return SweepParam::Lambda;
    }
    throw ConfigError("unknown sweep parameter '" + std::string(name) + "' (expected alpha or lambda)");
}

SweepResult sweep(const DistillationConfig& config, SweepParam param, std::span<const double> grid,
                  const Workspace& workspace, std::shared_ptr<const ClassifierModel> teacher,
                  const OutputOptions& output) {
    if (grid.empty()) {
        throw ConfigError("sweep grid is empty");
    }
    std::vector<Job> jobs;
    for (double v : grid) {
        DistillationConfig cfg = config;
        if (param == SweepParam::Alpha) {
            cfg.alpha = v;
        } else {
            cfg.lambda = v;
        }
        jobs.push_back({cfg, config.strategy, std::string(to_string(param)), v});
    }
    SweepResult result;
    result.param = param;
    result.points = run_jobs(jobs, workspace, teacher, config.workers);
    for (const auto& p : result.points) {
        result.curve.push_back({p.param_value, p.dev_accuracy.mean, p.dev_accuracy.stdev, p.dev_accuracy.n});
    }
    write_outputs(result.points, config, output, "sweep", teacher);
    if (!output.dir.empty()) {
        write_text(output.dir / "curve.csv", curve_csv(result.curve));
    }
    return result;
}

// --- CSV -----------------------------------------------------------------------

std::string format_number(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                              : comma - start));
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    if (!out.empty() && !out.back().empty() && out.back().back() == '\r') {
        out.back().pop_back();
    }
    return out;
}

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) {
            return i;
        }
    }
    throw DataError("CSV has no column '" + std::string(name) + "'");
}

CsvTable read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw PersistenceError("cannot read " + path.string());
    }
    CsvTable table;
    std::string line;
    if (std::getline(in, line)) {
        table.header = split_csv_line(line);
    }
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        auto row = split_csv_line(line);
        if (row.size() != table.header.size()) {
            throw DataError(path.string() + ": row width does not match header");
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string metrics_csv(std::span<const ExperimentResult> results) {
    std::ostringstream out;
    out << "strategy,param,param_value,seed,epoch,total_loss,ce_loss,kd_loss,train_accuracy,"
           "dev_accuracy,dev_mcc,disagreements,boosted\n";
    for (const auto& r : results) {
        for (const auto& run : r.runs) {
            for (const auto& m : run.metrics.epochs) {
                out << to_string(r.strategy) << ',' << r.param << ',' << format_number(r.param_value) << ','
                    << run.seed << ',' << m.epoch << ',' << format_number(m.total_loss) << ','
                    << format_number(m.ce_loss) << ',' << format_number(m.kd_loss) << ','
                    << format_number(m.train_accuracy) << ',' << format_number(m.dev_accuracy) << ','
                    << format_number(m.dev_mcc) << ',' << m.disagreements << ',' << m.boosted << '\n';
            }
        }
    }
    return out.str();
}

std::string seeds_csv(std::span<const ExperimentResult> results) {
    std::ostringstream out;
    out << "strategy,param,param_value,seed,best_epoch,dev_accuracy,dev_mcc,teacher_hash,student_hash\n";
    for (const auto& r : results) {
        for (const auto& run : r.runs) {
            const auto& best = run.metrics.best();
            out << to_string(r.strategy) << ',' << r.param << ',' << format_number(r.param_value) << ','
                << run.seed << ',' << best.epoch << ',' << format_number(best.dev_accuracy) << ','
                << format_number(best.dev_mcc) << ',' << run.teacher_hash_after << ',' << run.student_hash
                << '\n';
        }
    }
    return out.str();
}

std::string summary_csv(std::span<const ExperimentResult> results) {
    std::ostringstream out;
    out << "strategy,param,param_value,n_seeds,dev_accuracy_mean,dev_accuracy_stdev,dev_mcc_mean,"
           "dev_mcc_stdev\n";
    for (const auto& r : results) {
        out << to_string(r.strategy) << ',' << r.param << ',' << format_number(r.param_value) << ','
            << r.dev_accuracy.n << ',' << format_number(r.dev_accuracy.mean) << ','
            << format_number(r.dev_accuracy.stdev) << ',' << format_number(r.dev_mcc.mean) << ','
            << format_number(r.dev_mcc.stdev) << '\n';
    }
    return out.str();
}

std::string curve_csv(std::span<const CurvePoint> curve) {
    std::ostringstream out;
    out << "param_value,mean,stdev,n_seeds\n";
    for (const auto& p : curve) {
        out << format_number(p.param_value) << ',' << format_number(p.mean) << ',' << format_number(p.stdev)
            << ',' << p.n_seeds << '\n';
    }
    return out.str();
}

std::string weights_csv(const SampleWeightVector& weights) {
    std::ostringstream out;
    out << "sample_id,weight\n";
    for (std::size_t i = 0; i < weights.size(); ++i) {
        out << i << ',' << format_number(weights.weights[i]) << '\n';
    }
    return out.str();
}

// --- report --------------------------------------------------------------------

namespace {

std::string fixed(double v, int digits = 4) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) {
        s.append(width - s.size(), ' ');
    }
    return s;
}

}  // namespace

std::string report(const fs::path& run_dir) {
    if (!fs::is_directory(run_dir)) {
        throw PersistenceError("run directory " + run_dir.string() + " does not exist");
    }
    std::ostringstream out;
    out << "Run directory: " << run_dir.string() << "\n";
    bool found = false;

    const fs::path summary_path = run_dir / "summary.csv";
    if (fs::exists(summary_path)) {
        found = true;
        const CsvTable t = read_csv(summary_path);
        const auto c_strategy = t.column("strategy");
        const auto c_param = t.column("param");
        const auto c_value = t.column("param_value");
        const auto c_n = t.column("n_seeds");
        const auto c_acc = t.column("dev_accuracy_mean");
        const auto c_acc_sd = t.column("dev_accuracy_stdev");
        const auto c_mcc = t.column("dev_mcc_mean");
        const auto c_mcc_sd = t.column("dev_mcc_stdev");
        out << "\nDev-set results (best epoch per seed, mean +- stdev)\n";
        out << pad("strategy", 14) << pad("setting", 16) << pad("seeds", 7) << pad("accuracy", 22) << "MCC\n";
        std::ostringstream dat;
        dat << "# index strategy acc_mean acc_stdev mcc_mean mcc_stdev\n";
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            const auto& row = t.rows[i];
            const std::string setting =
                row[c_param] == "none" ? "-" : row[c_param] + "=" + fixed(std::stod(row[c_value]), 2);
            out << pad(row[c_strategy], 14) << pad(setting, 16) << pad(row[c_n], 7)
                << pad(fixed(100.0 * std::stod(row[c_acc]), 2) + " +- " + fixed(100.0 * std::stod(row[c_acc_sd]), 2), 22)
                << fixed(std::stod(row[c_mcc]), 3) << " +- " << fixed(std::stod(row[c_mcc_sd]), 3) << "\n";
            dat << i << ' ' << row[c_strategy] << ' ' << row[c_acc] << ' ' << row[c_acc_sd] << ' ' << row[c_mcc]
                << ' ' << row[c_mcc_sd] << '\n';
        }
        write_text(run_dir / "summary.dat", dat.str());
    }

    const fs::path curve_path = run_dir / "curve.csv";
    if (fs::exists(curve_path)) {
        found = true;
        const CsvTable t = read_csv(curve_path);
        const auto c_value = t.column("param_value");
        const auto c_mean = t.column("mean");
        const auto c_sd = t.column("stdev");
        const auto c_n = t.column("n_seeds");
        out << "\nSensitivity curve (dev accuracy)\n" << pad("value", 10) << pad("mean", 10) << pad("stdev", 10)
            << "seeds\n";
        std::ostringstream dat;
        dat << "# param_value mean stdev n_seeds\n";
        std::size_t best = 0;
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            const auto& row = t.rows[i];
            if (std::stod(row[c_mean]) > std::stod(t.rows[best][c_mean])) {
                best = i;
            }
            out << pad(fixed(std::stod(row[c_value]), 2), 10) << pad(fixed(100.0 * std::stod(row[c_mean]), 2), 10)
                << pad(fixed(100.0 * std::stod(row[c_sd]), 2), 10) << row[c_n] << "\n";
            dat << row[c_value] << ' ' << row[c_mean] << ' ' << row[c_sd] << ' ' << row[c_n] << '\n';
        }
        if (!t.rows.empty()) {
            out << "best value: " << t.rows[best][c_value] << "\n";
        }
        write_text(run_dir / "curve.dat", dat.str());
    }

    const fs::path metrics_path = run_dir / "metrics.csv";
    if (fs::exists(metrics_path)) {
        found = true;
        // Mean dev accuracy per (strategy/setting, epoch) across seeds.
        const CsvTable t = read_csv(metrics_path);
        const auto c_strategy = t.column("strategy");
        const auto c_param = t.column("param");
        const auto c_value = t.column("param_value");
        const auto c_epoch = t.column("epoch");
        const auto c_acc = t.column("dev_accuracy");
        const auto c_dis = t.column("disagreements");
        std::map<std::string, std::map<int, std::pair<double, int>>> curves;
        std::map<std::string, std::map<int, std::pair<double, int>>> disagreements;
        std::vector<std::string> order;
        for (const auto& row : t.rows) {
            std::string key = row[c_strategy];
            if (row[c_param] != "none") {
                key += ":" + row[c_param] + "=" + row[c_value];
            }
            if (!curves.contains(key)) {
                order.push_back(key);
            }
            auto& cell = curves[key][std::stoi(row[c_epoch])];
            cell.first += std::stod(row[c_acc]);
            cell.second += 1;
            const long dis = std::stol(row[c_dis]);
            if (dis >= 0) {
                auto& d = disagreements[key][std::stoi(row[c_epoch])];
                d.first += static_cast<double>(dis);
                d.second += 1;
            }
        }
        std::ostringstream dat;
        dat << "# epoch";
        for (const auto& k : order) {
            dat << ' ' << k;
        }
        dat << '\n';
        int max_epoch = -1;
        for (const auto& [_, c] : curves) {
            if (!c.empty()) {
                max_epoch = std::max(max_epoch, c.rbegin()->first);
            }
        }
        for (int e = 0; e <= max_epoch; ++e) {
            dat << e;
            for (const auto& k : order) {
                const auto it = curves[k].find(e);
                dat << ' ' << (it == curves[k].end() ? std::string("nan") : format_number(it->second.first / it->second.second));
            }
            dat << '\n';
        }
        write_text(run_dir / "epochs.dat", dat.str());
        out << "\nPer-epoch mean dev accuracy written to epochs.dat (" << order.size() << " series, "
            << max_epoch + 1 << " epochs)\n";
        if (!disagreements.empty()) {
            out << "Mean teacher-student disagreements per epoch:\n";
            for (const auto& k : order) {
                if (!disagreements.contains(k)) {
                    continue;
                }
                out << "  " << pad(k, 24);
                for (const auto& [e, d] : disagreements[k]) {
                    out << ' ' << fixed(d.first / d.second, 1);
                }
                out << '\n';
            }
        }
    }
    if (!found) {
        throw DataError("no summary.csv, curve.csv or metrics.csv in " + run_dir.string());
    }
    return out.str();
}

}  // namespace dcs
