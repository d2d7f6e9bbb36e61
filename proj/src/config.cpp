#include "dcs/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "dcs/errors.hpp"

namespace dcs {

std::string_view to_string(WeightingStrategy strategy) {
    switch (strategy) {
        case WeightingStrategy::Dcs:
            return "dcs";
        case WeightingStrategy::DcsReverse:
            return "dcs-reverse";
        case WeightingStrategy::DcsRandom:
            return "dcs-random";
        case WeightingStrategy::NoWeighting:
            return "no-weighting";
        case WeightingStrategy::VanillaFt:
            return "vanilla";
        case WeightingStrategy::PureKd:
            return "kd";
    }
    return "unknown";
}

WeightingStrategy parse_strategy(std::string_view name) {
    for (auto s : {WeightingStrategy::Dcs, WeightingStrategy::DcsReverse, WeightingStrategy::DcsRandom,
                   WeightingStrategy::NoWeighting, WeightingStrategy::VanillaFt, WeightingStrategy::PureKd}) {
        if (name == to_string(s)) {
            return s;
        }
    }
    throw ConfigError("unknown strategy '" + std::string(name) +
                      "' (expected dcs, dcs-reverse, dcs-random, kd, no-weighting or vanilla)");
}

bool uses_teacher(WeightingStrategy strategy) { return strategy != WeightingStrategy::VanillaFt; }

bool boosts_weights(WeightingStrategy strategy) {
    return strategy == WeightingStrategy::Dcs || strategy == WeightingStrategy::DcsReverse ||
           strategy == WeightingStrategy::DcsRandom;
}

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(std::string_view name) {
    if (name == "adam") {
        return OptimizerKind::Adam;
    }
    if (name == "sgd") {
        return OptimizerKind::Sgd;
    }
    throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected adam or sgd)");
}

void DistillationConfig::validate() const {
    task.validate();
    architecture.validate();
    if (architecture.n_classes != task.n_classes) {
        throw ConfigError("architecture.n_classes (" + std::to_string(architecture.n_classes) +
                          ") differs from task.n_classes (" + std::to_string(task.n_classes) + ")");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ConfigError("alpha must lie in [0, 1]");
    }
    if (boosts_weights(strategy) && !(lambda > 1.0)) {
        throw ConfigError("lambda must be greater than 1 for weighting strategies");
    }
    if (!std::isfinite(lambda)) {
        throw ConfigError("lambda must be finite");
    }
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw ConfigError("temperature must be positive");
    }
    if (epochs < 1) {
        throw ConfigError("epochs must be at least 1");
    }
    if (teacher_epochs < 1) {
        throw ConfigError("teacher_epochs must be at least 1");
    }
    if (pretrain_epochs < 0) {
        throw ConfigError("pretrain_epochs must be non-negative");
    }
    if (pretrain_epochs > 0 && task.kind == TaskKind::TextFile) {
        throw ConfigError("source-task pre-training needs a synthetic task");
    }
    if (batch_size == 0) {
        throw ConfigError("batch_size must be positive");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be positive");
    }
    if (seeds.empty()) {
        throw ConfigError("seeds must list at least one seed");
    }
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
        throw ConfigError("seeds must be distinct");
    }
    if (workers == 0) {
        throw ConfigError("workers must be positive");
    }
    for (double a : alpha_grid) {
        if (!(a >= 0.0 && a <= 1.0)) {
            throw ConfigError("alpha_grid values must lie in [0, 1]");
        }
    }
    for (double l : lambda_grid) {
        if (!(l > 1.0) || !std::isfinite(l)) {
            throw ConfigError("lambda_grid values must be greater than 1");
        }
    }
    const bool transformer = architecture.kind == Architecture::TinyTransformer;
    const bool token_task = task.kind == TaskKind::TokenMotif;
    if (transformer != token_task) {
        throw ConfigError("tiny_transformer pairs with token_motif tasks; linear/mlp with feature tasks");
    }
    const std::size_t width = task.kind == TaskKind::TextFile ? task.hash_dim
                              : token_task                    ? task.seq_len
                                                              : task.n_features;
    if (architecture.input_width() != width) {
        throw ConfigError("architecture input width " + std::to_string(architecture.input_width()) +
                          " does not match task input width " + std::to_string(width));
    }
    if (transformer && architecture.vocab_size < task.vocab_size) {
        throw ConfigError("architecture.vocab_size is smaller than task.vocab_size");
    }
}

void to_json(nlohmann::json& j, const DistillationConfig& c) {
    j = nlohmann::json{{"task", c.task},
                       {"architecture", c.architecture},
                       {"strategy", to_string(c.strategy)},
                       {"alpha", c.alpha},
                       {"lambda", c.lambda},
                       {"temperature", c.temperature},
                       {"epochs", c.epochs},
                       {"teacher_epochs", c.teacher_epochs},
                       {"batch_size", c.batch_size},
                       {"learning_rate", c.learning_rate},
                       {"optimizer", to_string(c.optimizer)},
                       {"seeds", c.seeds},
                       {"teacher_seed", c.teacher_seed},
                       {"pretrain_epochs", c.pretrain_epochs},
                       {"source_n_train", c.source_n_train},
                       {"source_shift", c.source_shift},
                       {"alpha_grid", c.alpha_grid},
                       {"lambda_grid", c.lambda_grid},
                       {"workers", c.workers},
                       {"output_dir", c.output_dir}};
}

void from_json(const nlohmann::json& j, DistillationConfig& c) {
    static const std::set<std::string> allowed = {
        "task",           "architecture",   "strategy",     "alpha",      "lambda",
        "temperature",    "epochs",         "teacher_epochs", "batch_size", "learning_rate",
        "optimizer",      "seeds",          "teacher_seed", "pretrain_epochs", "source_n_train",
        "source_shift",   "alpha_grid",     "lambda_grid",  "workers",    "output_dir"};
    if (!j.is_object()) {
        throw ConfigError("config must be a JSON object");
    }
    for (const auto& [key, _] : j.items()) {
        if (!allowed.contains(key)) {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
    if (!j.contains("task") || !j.contains("architecture")) {
        throw ConfigError("config requires 'task' and 'architecture'");
    }
    DistillationConfig d;
    try {
        c.task = j.at("task").get<TaskSpec>();
        c.architecture = j.at("architecture").get<ArchitectureDescriptor>();
        c.strategy = parse_strategy(j.value("strategy", std::string(to_string(d.strategy))));
        c.alpha = j.value("alpha", d.alpha);
        c.lambda = j.value("lambda", d.lambda);
        c.temperature = j.value("temperature", d.temperature);
        c.epochs = j.value("epochs", d.epochs);
        c.teacher_epochs = j.value("teacher_epochs", d.teacher_epochs);
        c.batch_size = j.value("batch_size", d.batch_size);
        c.learning_rate = j.value("learning_rate", d.learning_rate);
        c.optimizer = parse_optimizer(j.value("optimizer", std::string(to_string(d.optimizer))));
        c.seeds = j.value("seeds", d.seeds);
        c.teacher_seed = j.value("teacher_seed", d.teacher_seed);
        c.pretrain_epochs = j.value("pretrain_epochs", d.pretrain_epochs);
        c.source_n_train = j.value("source_n_train", d.source_n_train);
        c.source_shift = j.value("source_shift", d.source_shift);
        c.alpha_grid = j.value("alpha_grid", d.alpha_grid);
        c.lambda_grid = j.value("lambda_grid", d.lambda_grid);
        c.workers = j.value("workers", d.workers);
        c.output_dir = j.value("output_dir", d.output_dir);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
}

DistillationConfig parse_config(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    auto config = j.get<DistillationConfig>();
    config.validate();
    return config;
}

std::string serialize_config(const DistillationConfig& config) {
    return nlohmann::json(config).dump(2) + "\n";
}

DistillationConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config file " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

void save_config(const DistillationConfig& config, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw PersistenceError("cannot write config file " + path.string());
    }
    out << serialize_config(config);
}

}  // namespace dcs
