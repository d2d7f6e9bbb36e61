#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "dcs/models.hpp"

namespace dcs {

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointMetadata {
    int epochs = 0;
    std::uint64_t seed = 0;
    std::string task_id;

    bool operator==(const CheckpointMetadata&) const = default;
};

struct Checkpoint {
    ClassifierModel model;
    CheckpointMetadata metadata;
};

// {format_version, architecture, parameters: [{name, shape, data}], metadata}.
// Values are written in shortest round-trip decimal form, so a load restores
// every parameter bit for bit.
nlohmann::json checkpoint_to_json(const ClassifierModel& model, const CheckpointMetadata& metadata);
Checkpoint checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const std::filesystem::path& path, const ClassifierModel& model,
                     const CheckpointMetadata& metadata);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dcs
