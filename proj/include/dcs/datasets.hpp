#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcs/tensor.hpp"

namespace dcs {

enum class Split { Train, Dev };

std::string_view to_string(Split split);

// A sample carries dense features (Linear/Mlp inputs) or token ids
// (TinyTransformer inputs), never both.
struct Sample {
    std::size_t id = 0;
    std::vector<double> features;
    std::vector<int> tokens;
    int label = 0;
};

class LabeledDataset {
public:
    LabeledDataset() = default;
    // Renumbers ids contiguously from 0 in the given order.
    LabeledDataset(std::vector<Sample> samples, std::size_t n_classes, Split split);

    std::size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }
    std::size_t n_classes() const { return n_classes_; }
    Split split() const { return split_; }
    const Sample& operator[](std::size_t id) const { return samples_[id]; }
    std::span<const Sample> samples() const { return samples_; }
    std::size_t input_width() const;

    // Original ids of each sample (identity unless produced by subsample()).
    std::span<const std::size_t> source_ids() const { return source_ids_; }
    void set_source_ids(std::vector<std::size_t> ids);

    // Stacks the given samples into [ids.size() x input_width]; token ids are
    // stored as doubles.
    Tensor batch(std::span<const std::size_t> ids) const;
    Tensor all_inputs() const;
    std::vector<int> labels(std::span<const std::size_t> ids) const;
    std::vector<int> all_labels() const;

    std::vector<std::size_t> class_counts() const;

private:
    std::vector<Sample> samples_;
    std::vector<std::size_t> source_ids_;
    std::size_t n_classes_ = 0;
    Split split_ = Split::Train;
};

enum class TaskKind { GaussianMixture, XorMoons, TokenMotif, TextFile };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

struct TaskSpec {
    TaskKind kind = TaskKind::GaussianMixture;
    std::size_t n_train = 200;
    std::size_t n_dev = 1000;
    std::size_t n_classes = 2;
    double label_noise_rate = 0.0;
    std::uint64_t seed = 0;
    // GaussianMixture / XorMoons
    std::size_t n_features = 2;
    double separation = 3.0;  // distance between class means in units of sigma
    // TokenMotif
    std::size_t vocab_size = 32;
    std::size_t seq_len = 8;
    // TextFile
    std::string path;
    std::size_t hash_dim = 64;
    std::string task_id;  // free-form label carried into checkpoints

    void validate() const;
    std::string id() const;
    bool operator==(const TaskSpec&) const = default;
};

void to_json(nlohmann::json& j, const TaskSpec& spec);
void from_json(const nlohmann::json& j, TaskSpec& spec);

struct TaskSplits {
    LabeledDataset train;
    LabeledDataset dev;
};

// GaussianMixture: isotropic unit-variance classes whose means sit on a
// random direction (two classes, means `separation` apart) or on random
// unit directions scaled to radius separation/2 (more classes).
// XorMoons: two interleaved half-moons in the first two coordinates, the
// remaining coordinates pure noise. Two classes only.
// TokenMotif: uniform random token sequences; class c plants motif token c
// at a random position (label depends only on which motif appears).
// Train labels flip to a uniformly chosen other class with probability
// label_noise_rate; dev labels never do.
TaskSplits generate_synthetic(const TaskSpec& spec);

// JSONL text task, one {"text", "label", optional "split"} object per line.
// Labels are mapped to dense indices in sorted order unless label_names is
// supplied, so the mapping does not depend on line order. Returns both splits; a split may be empty.
struct TextTask {
    TaskSplits splits;
    std::vector<std::string> label_names;
};
TextTask load_text_task(const std::filesystem::path& path, std::size_t hash_dim,
                        std::size_t n_classes, std::vector<std::string> label_names = {});

// Lower-cased whitespace tokens hashed with FNV-1a 64 modulo hash_dim into counts.
std::vector<double> hash_features(std::string_view text, std::size_t hash_dim);
std::size_t feature_bucket(std::string_view token, std::size_t hash_dim);

// Seeded uniform subsample without replacement that keeps at least one
// sample of every class present in the source. Throws ConfigError when
// k < n_classes or k > size.
LabeledDataset subsample(const LabeledDataset& dataset, std::size_t k, std::uint64_t seed);

// Large source task plus a small, shifted target task from one spec family:
// the source uses n_source training samples and class means rotated by
// `shift` radians in the plane of the first two features.
struct TransferPair {
    TaskSplits source;
    TaskSplits target;
};
TransferPair make_transfer_pair(const TaskSpec& target_spec, std::size_t n_source, double shift);

// Dispatches on spec.kind (TextFile reads spec.path).
TaskSplits load_task(const TaskSpec& spec);

}  // namespace dcs
