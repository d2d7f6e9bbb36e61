// dcs: teacher training, distillation runs, strategy comparisons and sweeps.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dcs/config.hpp"
#include "dcs/errors.hpp"
#include "dcs/harness.hpp"

namespace fs = std::filesystem;

namespace {

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what) {
    std::vector<T> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) {
            continue;
        }
        std::size_t used = 0;
        try {
            if constexpr (std::is_same_v<T, double>) {
                out.push_back(std::stod(item, &used));
            } else {
                out.push_back(static_cast<T>(std::stoull(item, &used)));
            }
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) {
            throw dcs::ConfigError(std::string("bad ") + what + " entry '" + item + "'");
        }
    }
    if (out.empty()) {
        throw dcs::ConfigError(std::string(what) + " list is empty");
    }
    return out;
}

void print_summary(std::span<const dcs::ExperimentResult> results) {
    for (const auto& r : results) {
        std::cout << dcs::to_string(r.strategy);
        if (r.param != "none") {
            std::cout << " " << r.param << "=" << r.param_value;
        }
        std::cout << "  dev_acc " << r.dev_accuracy.mean << " +- " << r.dev_accuracy.stdev << "  mcc "
                  << r.dev_mcc.mean << " +- " << r.dev_mcc.stdev << "  (" << r.dev_accuracy.n << " seeds)\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distillation with per-sample teacher/student agreement weighting"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string strategy_name;
    std::string seeds_text;
    std::string teacher_path;
    std::string param_name;
    std::string grid_text;
    std::string run_dir;
    std::size_t workers = 0;

    auto* train = app.add_subcommand("train-teacher", "fine-tune the teacher and write teacher.json");
    train->add_option("--config", config_path, "config JSON")->required();
    train->add_option("--out", out_dir, "output directory (default <output_dir>/teacher)");

    auto* run = app.add_subcommand("run", "distil one strategy over the config seeds");
    run->add_option("--config", config_path, "config JSON")->required();
    run->add_option("--strategy", strategy_name, "dcs|dcs-reverse|dcs-random|kd|vanilla")->required();
    run->add_option("--seeds", seeds_text, "comma separated seeds (overrides config)");
    run->add_option("--teacher", teacher_path, "teacher checkpoint (default <output_dir>/teacher/teacher.json)");
    run->add_option("--out", out_dir, "output directory (default <output_dir>/run-<strategy>)");
    run->add_option("--workers", workers, "parallel seed runs (overrides config)");

    auto* compare = app.add_subcommand("compare", "vanilla, kd, dcs, dcs-reverse and dcs-random side by side");
    compare->add_option("--config", config_path, "config JSON")->required();
    compare->add_option("--out", out_dir, "output directory (default <output_dir>/compare)");
    compare->add_option("--workers", workers, "parallel seed runs (overrides config)");

    auto* sweep = app.add_subcommand("sweep", "alpha or lambda sensitivity curve");
    sweep->add_option("--config", config_path, "config JSON")->required();
    sweep->add_option("--param", param_name, "alpha|lambda")->required();
    sweep->add_option("--grid", grid_text, "comma separated values (default: config grid)");
    sweep->add_option("--out", out_dir, "output directory (default <output_dir>/sweep-<param>)");
    sweep->add_option("--workers", workers, "parallel seed runs (overrides config)");

    auto* report = app.add_subcommand("report", "summarise a run directory");
    report->add_option("--run-dir", run_dir, "directory written by run/compare/sweep")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (report->parsed()) {
            std::cout << dcs::report(run_dir);
            return 0;
        }

        dcs::DistillationConfig config = dcs::load_config(config_path);
        if (workers > 0) {
            config.workers = workers;
        }
        const fs::path root = config.output_dir;

        if (train->parsed()) {
            const dcs::Workspace ws = dcs::prepare_workspace(config);
            const fs::path dir = out_dir.empty() ? dcs::default_teacher_dir(config) : fs::path(out_dir);
            const auto teacher = dcs::train_teacher(config, ws, dir);
            std::cout << "teacher " << dcs::parameter_hash(*teacher.model) << " dev_acc "
                      << teacher.metrics.epochs.back().dev_accuracy << " -> " << (dir / "teacher.json").string()
                      << "\n";
            return 0;
        }

        if (run->parsed()) {
            const auto strategy = dcs::parse_strategy(strategy_name);
            if (!seeds_text.empty()) {
                config.seeds = parse_list<std::uint64_t>(seeds_text, "seed");
            }
            config.strategy = strategy;
            config.validate();
            std::shared_ptr<const dcs::ClassifierModel> teacher;
            if (dcs::uses_teacher(strategy)) {
                const fs::path ckpt = teacher_path.empty() ? dcs::default_teacher_dir(config) / "teacher.json"
                                                           : fs::path(teacher_path);
                teacher = dcs::load_teacher(ckpt, config).model;
            }
            const dcs::Workspace ws = dcs::prepare_workspace(config);
            const fs::path dir =
                out_dir.empty() ? root / ("run-" + std::string(dcs::to_string(strategy))) : fs::path(out_dir);
            const auto result = dcs::run_experiment(config, strategy, ws, teacher, {dir});
            print_summary(std::span(&result, 1));
            return 0;
        }

        const dcs::Workspace ws = dcs::prepare_workspace(config);
        const auto teacher = dcs::train_or_load_teacher(config, ws, dcs::default_teacher_dir(config)).model;

        if (compare->parsed()) {
            const fs::path dir = out_dir.empty() ? root / "compare" : fs::path(out_dir);
            const auto results = dcs::compare_strategies(config, ws, teacher, {dir});
            print_summary(results);
            return 0;
        }

        if (sweep->parsed()) {
            const auto param = dcs::parse_sweep_param(param_name);
            std::vector<double> grid = param == dcs::SweepParam::Alpha ? config.alpha_grid : config.lambda_grid;
            if (!grid_text.empty()) {
                grid = parse_list<double>(grid_text, "grid");
            }
            const fs::path dir =
                out_dir.empty() ? root / ("sweep-" + std::string(dcs::to_string(param))) : fs::path(out_dir);
            const auto result = dcs::sweep(config, param, grid, ws, teacher, {dir});
            print_summary(result.points);
            return 0;
        }
    } catch (const dcs::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const dcs::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const dcs::NumericalError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
