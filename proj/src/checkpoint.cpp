#include "dcs/checkpoint.hpp"

#include <cmath>
#include <fstream>

#include "dcs/errors.hpp"

namespace dcs {

nlohmann::json checkpoint_to_json(const ClassifierModel& model, const CheckpointMetadata& metadata) {
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : model.parameters()) {
        for (double v : p.value.data()) {
            if (!std::isfinite(v)) {
                throw NumericalError("parameter " + p.name + " holds a non-finite value");
            }
        }
        params.push_back({{"name", p.name},
                          {"shape", p.value.shape()},
                          {"data", std::vector<double>(p.value.data().begin(), p.value.data().end())}});
    }
    return {{"format_version", kCheckpointFormatVersion},
            {"architecture", model.descriptor()},
            {"parameters", std::move(params)},
            {"metadata", {{"epochs", metadata.epochs}, {"seed", metadata.seed}, {"task_id", metadata.task_id}}}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& doc) {
    try {
        const int version = doc.at("format_version").get<int>();
        if (version != kCheckpointFormatVersion) {
            throw DataError("unsupported checkpoint format_version " + std::to_string(version));
        }
        auto desc = doc.at("architecture").get<ArchitectureDescriptor>();
        std::vector<NamedParameter> params;
        for (const auto& entry : doc.at("parameters")) {
            auto shape = entry.at("shape").get<Shape>();
            auto data = entry.at("data").get<std::vector<double>>();
            params.push_back({entry.at("name").get<std::string>(),
                              Tensor::from_data(std::move(shape), std::move(data), true)});
        }
        const auto& meta = doc.at("metadata");
        CheckpointMetadata metadata{meta.at("epochs").get<int>(), meta.at("seed").get<std::uint64_t>(),
                                    meta.at("task_id").get<std::string>()};
        return {ClassifierModel(std::move(desc), std::move(params)), std::move(metadata)};
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const std::filesystem::path& path, const ClassifierModel& model,
                     const CheckpointMetadata& metadata) {
    const auto doc = checkpoint_to_json(model, metadata);
    std::error_code ec;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path);
    if (!out) {
        throw PersistenceError("cannot write checkpoint " + path.string());
    }
    out << doc.dump() << '\n';
    if (!out) {
        throw PersistenceError("failed while writing checkpoint " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw PersistenceError("cannot read checkpoint " + path.string());
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
    }
    return checkpoint_from_json(doc);
}

}  // namespace dcs
