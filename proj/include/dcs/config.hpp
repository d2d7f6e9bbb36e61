#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcs/datasets.hpp"
#include "dcs/models.hpp"

namespace dcs {

// Dcs boosts discordant samples, DcsReverse concordant ones, DcsRandom a
// random subset of the same size. NoWeighting and PureKd both distil with
// all-ones weights. VanillaFt never consults the teacher.
enum class WeightingStrategy { Dcs, DcsReverse, DcsRandom, NoWeighting, VanillaFt, PureKd };

// CLI spellings: dcs, dcs-reverse, dcs-random, no-weighting, vanilla, kd.
std::string_view to_string(WeightingStrategy strategy);
WeightingStrategy parse_strategy(std::string_view name);
bool uses_teacher(WeightingStrategy strategy);
bool boosts_weights(WeightingStrategy strategy);

enum class OptimizerKind { Adam, Sgd };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct DistillationConfig {
    TaskSpec task;
    ArchitectureDescriptor architecture = ArchitectureDescriptor::mlp(2, {16}, 2);
    WeightingStrategy strategy = WeightingStrategy::Dcs;
    double alpha = 0.5;
    double lambda = 2.0;
    double temperature = 1.0;
    int epochs = 10;
    int teacher_epochs = 2;
    std::size_t batch_size = 16;
    double learning_rate = 1e-2;
    OptimizerKind optimizer = OptimizerKind::Adam;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::uint64_t teacher_seed = 0;
    // Optional source-task pre-training shared by teacher and students.
    int pretrain_epochs = 0;
    std::size_t source_n_train = 2000;
    double source_shift = 0.5;
    std::vector<double> alpha_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::vector<double> lambda_grid = {2, 3, 4, 5, 6};
    std::size_t workers = 1;
    std::string output_dir = "runs";

    // Throws ConfigError naming the offending field.
    void validate() const;
    bool operator==(const DistillationConfig&) const = default;
};

void to_json(nlohmann::json& j, const DistillationConfig& config);
// Rejects unknown keys at every level; missing keys keep their defaults.
void from_json(const nlohmann::json& j, DistillationConfig& config);

DistillationConfig parse_config(std::string_view text);
std::string serialize_config(const DistillationConfig& config);
DistillationConfig load_config(const std::filesystem::path& path);
void save_config(const DistillationConfig& config, const std::filesystem::path& path);

}  // namespace dcs
