#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dcs/checkpoint.hpp"
#include "dcs/config.hpp"
#include "dcs/datasets.hpp"
#include "dcs/engine.hpp"
#include "dcs/metrics.hpp"
#include "dcs/models.hpp"

namespace dcs {

inline constexpr int kCsvSchemaVersion = 1;

// Data plus the optional source-pretrained backbone shared by the teacher and
// every student of one config.
struct Workspace {
    TaskSplits data;
    std::optional<ClassifierModel> pretrained;
};

Workspace prepare_workspace(const DistillationConfig& config);

// Initial student parameters for one seed: the pretrained backbone when
// present, otherwise a fresh build_model(architecture, seed).
ClassifierModel initial_student(const Workspace& workspace, const DistillationConfig& config,
                                std::uint64_t seed);

struct TeacherArtifact {
    std::shared_ptr<const ClassifierModel> model;
    RunMetrics metrics;
    CheckpointMetadata metadata;
};

// Vanilla fine-tuning (cross-entropy only) for teacher_epochs from
// teacher_seed. Writes teacher.json and metrics.csv into out_dir when it is
// non-empty.
TeacherArtifact train_teacher(const DistillationConfig& config, const Workspace& workspace,
                              const std::filesystem::path& out_dir = {});

// Loads a teacher checkpoint and checks it belongs to this config (same
// architecture, task id, teacher seed and epochs).
TeacherArtifact load_teacher(const std::filesystem::path& checkpoint, const DistillationConfig& config);

std::filesystem::path default_teacher_dir(const DistillationConfig& config);

// Loads <dir>/teacher.json when present, otherwise trains and saves it.
TeacherArtifact train_or_load_teacher(const DistillationConfig& config, const Workspace& workspace,
                                      const std::filesystem::path& dir);

struct SeedRun {
    std::uint64_t seed = 0;
    RunMetrics metrics;
    std::vector<SampleWeightVector> weights_by_epoch;
    std::vector<int> assignments_per_epoch;
    std::string teacher_hash_before;
    std::string teacher_hash_after;
    std::string student_hash;
    std::shared_ptr<const ClassifierModel> student;
};

struct ExperimentResult {
    WeightingStrategy strategy = WeightingStrategy::Dcs;
    std::string param = "none";
    double param_value = 0.0;
    std::vector<SeedRun> runs;  // in config.seeds order
    Aggregate dev_accuracy;     // over best-epoch dev accuracy per seed
    Aggregate dev_mcc;
};

struct OutputOptions {
    std::filesystem::path dir;  // empty: write nothing
    bool write_weights = true;
    bool write_checkpoints = true;
};

// Runs `strategy` once per config seed (concurrently up to config.workers)
// and aggregates best-epoch dev metrics.
ExperimentResult run_experiment(const DistillationConfig& config, WeightingStrategy strategy,
                                const Workspace& workspace,
                                std::shared_ptr<const ClassifierModel> teacher,
                                const OutputOptions& output = {});

// vanilla, kd, dcs, dcs-reverse, dcs-random under one config and seed set.
std::vector<WeightingStrategy> comparison_strategies();
std::vector<ExperimentResult> compare_strategies(const DistillationConfig& config,
                                                 const Workspace& workspace,
                                                 std::shared_ptr<const ClassifierModel> teacher,
                                                 const OutputOptions& output = {});

enum class SweepParam { Alpha, Lambda };
std::string_view to_string(SweepParam param);
SweepParam parse_sweep_param(std::string_view name);

struct CurvePoint {
    double param_value = 0.0;
    double mean = 0.0;
    double stdev = 0.0;
    std::size_t n_seeds = 0;
};

struct SweepResult {
    SweepParam param = SweepParam::Alpha;
    std::vector<ExperimentResult> points;
    std::vector<CurvePoint> curve;
};

// One experiment per grid value using config.strategy; writes curve.csv.
SweepResult sweep(const DistillationConfig& config, SweepParam param, std::span<const double> grid,
                  const Workspace& workspace, std::shared_ptr<const ClassifierModel> teacher,
                  const OutputOptions& output = {});

// Renders the tables found in a run directory and writes gnuplot-ready
// .dat files next to them.
std::string report(const std::filesystem::path& run_dir);

// --- CSV helpers shared with tests ---------------------------------------

std::string format_number(double value);
std::vector<std::string> split_csv_line(std::string_view line);
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const;
};
CsvTable read_csv(const std::filesystem::path& path);

std::string metrics_csv(std::span<const ExperimentResult> results);
std::string seeds_csv(std::span<const ExperimentResult> results);
std::string summary_csv(std::span<const ExperimentResult> results);
std::string curve_csv(std::span<const CurvePoint> curve);
std::string weights_csv(const SampleWeightVector& weights);

}  // namespace dcs
