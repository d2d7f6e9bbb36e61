#include "dcs/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "dcs/errors.hpp"
#include "dcs/hash.hpp"
#include "dcs/random.hpp"

namespace dcs {

namespace {

// Stream salts; fixed so that e.g. changing the noise rate leaves features intact.
constexpr std::uint64_t kSaltMeans = 1;
constexpr std::uint64_t kSaltTrain = 2;
constexpr std::uint64_t kSaltDev = 3;
constexpr std::uint64_t kSaltNoise = 4;
constexpr std::uint64_t kSaltSourceTrain = 5;
constexpr std::uint64_t kSaltSourceDev = 6;

}  // namespace

std::string_view to_string(Split split) { return split == Split::Train ? "train" : "dev"; }

// --- LabeledDataset ------------------------------------------------------

LabeledDataset::LabeledDataset(std::vector<Sample> samples, std::size_t n_classes, Split split)
    : samples_(std::move(samples)), n_classes_(n_classes), split_(split) {
    if (n_classes_ < 2) {
        throw ConfigError("a dataset needs at least two classes");
    }
    source_ids_.resize(samples_.size());
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        auto& s = samples_[i];
        source_ids_[i] = s.id;
        s.id = i;
        if (s.label < 0 || static_cast<std::size_t>(s.label) >= n_classes_) {
            throw DataError("sample " + std::to_string(i) + " has label " + std::to_string(s.label) +
                            " outside [0, " + std::to_string(n_classes_) + ")");
        }
        if (!s.features.empty() && !s.tokens.empty()) {
            throw DataError("sample " + std::to_string(i) + " carries both features and tokens");
        }
        if (i > 0 && (s.features.size() != samples_[0].features.size() ||
                      s.tokens.size() != samples_[0].tokens.size())) {
            throw DataError("sample " + std::to_string(i) + " has a different input width");
        }
    }
}

std::size_t LabeledDataset::input_width() const {
    if (samples_.empty()) {
        return 0;
    }
    return samples_[0].tokens.empty() ? samples_[0].features.size() : samples_[0].tokens.size();
}

void LabeledDataset::set_source_ids(std::vector<std::size_t> ids) {
    if (ids.size() != samples_.size()) {
        throw ConfigError("source id mapping length does not match dataset size");
    }
    source_ids_ = std::move(ids);
}

Tensor LabeledDataset::batch(std::span<const std::size_t> ids) const {
    const std::size_t width = input_width();
    if (ids.empty() || width == 0) {
        throw DimensionError("cannot build an empty batch");
    }
    std::vector<double> values;
    values.reserve(ids.size() * width);
    for (auto id : ids) {
        const Sample& s = samples_.at(id);
        if (s.tokens.empty()) {
            values.insert(values.end(), s.features.begin(), s.features.end());
        } else {
            for (int t : s.tokens) {
                values.push_back(static_cast<double>(t));
            }
        }
    }
    return Tensor::matrix(ids.size(), width, std::move(values));
}

Tensor LabeledDataset::all_inputs() const {
    std::vector<std::size_t> ids(samples_.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        ids[i] = i;
    }
    return batch(ids);
}

std::vector<int> LabeledDataset::labels(std::span<const std::size_t> ids) const {
    std::vector<int> out;
    out.reserve(ids.size());
    for (auto id : ids) {
        out.push_back(samples_.at(id).label);
    }
    return out;
}

std::vector<int> LabeledDataset::all_labels() const {
    std::vector<int> out;
    out.reserve(samples_.size());
    for (const auto& s : samples_) {
        out.push_back(s.label);
    }
    return out;
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
    std::vector<std::size_t> counts(n_classes_, 0);
    for (const auto& s : samples_) {
        ++counts[static_cast<std::size_t>(s.label)];
    }
    return counts;
}

// --- TaskSpec ------------------------------------------------------------

std::string_view to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::GaussianMixture:
            return "gaussian_mixture";
        case TaskKind::XorMoons:
            return "xor_moons";
        case TaskKind::TokenMotif:
            return "token_motif";
        case TaskKind::TextFile:
            return "text_file";
    }
    return "unknown";
}

TaskKind parse_task_kind(std::string_view name) {
    for (auto k : {TaskKind::GaussianMixture, TaskKind::XorMoons, TaskKind::TokenMotif,
                   TaskKind::TextFile}) {
        if (name == to_string(k)) {
            return k;
        }
    }
    throw ConfigError("unknown task kind '" + std::string(name) + "'");
}

void TaskSpec::validate() const {
    if (n_classes < 2) {
        throw ConfigError("task needs n_classes >= 2");
    }
    if (!(label_noise_rate >= 0.0 && label_noise_rate < 0.5)) {
        throw ConfigError("label_noise_rate must lie in [0, 0.5), got " +
                          std::to_string(label_noise_rate));
    }
    switch (kind) {
        case TaskKind::GaussianMixture:
        case TaskKind::XorMoons:
            if (n_train < 2 * n_classes) {
                throw ConfigError("n_train must be at least 2 * n_classes");
            }
            if (n_dev == 0) {
                throw ConfigError("n_dev must be positive");
            }
            if (n_features == 0 || !(separation > 0.0)) {
                throw ConfigError("task needs positive n_features and separation");
            }
            if (kind == TaskKind::XorMoons && (n_classes != 2 || n_features < 2)) {
                throw ConfigError("xor_moons is a two-class task with n_features >= 2");
            }
            break;
        case TaskKind::TokenMotif:
            if (n_train < 2 * n_classes || n_dev == 0) {
                throw ConfigError("token_motif needs n_train >= 2 * n_classes and n_dev > 0");
            }
            if (vocab_size < n_classes + 2 || seq_len < 2) {
                throw ConfigError("token_motif needs vocab_size >= n_classes + 2 and seq_len >= 2");
            }
            break;
        case TaskKind::TextFile:
            if (path.empty() || hash_dim == 0) {
                throw ConfigError("text_file task needs a path and a positive hash_dim");
            }
            break;
    }
}

std::string TaskSpec::id() const {
    if (!task_id.empty()) {
        return task_id;
    }
    // Digest of every generating field, so teacher checkpoints are never
    // reused across different data.
    char digest[17];
    std::snprintf(digest, sizeof digest, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(nlohmann::json(*this).dump())));
    std::ostringstream out;
    out << to_string(kind) << "-s" << seed << "-" << std::string_view(digest, 8);
    return out.str();
}

void to_json(nlohmann::json& j, const TaskSpec& s) {
    j = nlohmann::json{{"kind", to_string(s.kind)},
                       {"n_train", s.n_train},
                       {"n_dev", s.n_dev},
                       {"n_classes", s.n_classes},
                       {"label_noise_rate", s.label_noise_rate},
                       {"seed", s.seed},
                       {"n_features", s.n_features},
                       {"separation", s.separation},
                       {"vocab_size", s.vocab_size},
                       {"seq_len", s.seq_len},
                       {"path", s.path},
                       {"hash_dim", s.hash_dim},
                       {"task_id", s.task_id}};
}

void from_json(const nlohmann::json& j, TaskSpec& s) {
    static const std::set<std::string> allowed = {
        "kind",       "n_train",    "n_dev",   "n_classes", "label_noise_rate", "seed",   "n_features",
        "separation", "vocab_size", "seq_len", "path",      "hash_dim",         "task_id"};
    if (!j.is_object()) {
        throw ConfigError("task must be a JSON object");
    }
    for (const auto& [key, _] : j.items()) {
        if (!allowed.contains(key)) {
            throw ConfigError("unknown task key '" + key + "'");
        }
    }
    TaskSpec d;
    try {
        s.kind = parse_task_kind(j.at("kind").get<std::string>());
        s.n_train = j.value("n_train", d.n_train);
        s.n_dev = j.value("n_dev", d.n_dev);
        s.n_classes = j.value("n_classes", d.n_classes);
        s.label_noise_rate = j.value("label_noise_rate", d.label_noise_rate);
        s.seed = j.value("seed", d.seed);
        s.n_features = j.value("n_features", d.n_features);
        s.separation = j.value("separation", d.separation);
        s.vocab_size = j.value("vocab_size", d.vocab_size);
        s.seq_len = j.value("seq_len", d.seq_len);
        s.path = j.value("path", d.path);
        s.hash_dim = j.value("hash_dim", d.hash_dim);
        s.task_id = j.value("task_id", d.task_id);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed task: ") + e.what());
    }
}

// --- synthetic generators ------------------------------------------------

namespace {

std::vector<std::vector<double>> mixture_means(const TaskSpec& spec, double rotation) {
    Rng rng = Rng::stream(spec.seed, kSaltMeans);
    const std::size_t d = spec.n_features;
    auto unit = [&] {
        std::vector<double> u(d);
        double norm = 0.0;
        while (norm < 1e-12) {
            norm = 0.0;
            for (auto& x : u) {
                x = rng.normal();
                norm += x * x;
            }
        }
        norm = std::sqrt(norm);
        for (auto& x : u) {
            x /= norm;
        }
        return u;
    };
    std::vector<std::vector<double>> means;
    const double radius = spec.separation / 2.0;
    if (spec.n_classes == 2) {
        auto u = unit();
        std::vector<double> a(d), b(d);
        for (std::size_t k = 0; k < d; ++k) {
            a[k] = -radius * u[k];
            b[k] = radius * u[k];
        }
        means = {a, b};
    } else {
        for (std::size_t c = 0; c < spec.n_classes; ++c) {
            auto u = unit();
            for (auto& x : u) {
                x *= radius;
            }
            means.push_back(u);
        }
    }
    if (rotation != 0.0 && d >= 2) {
        const double cs = std::cos(rotation);
        const double sn = std::sin(rotation);
        for (auto& m : means) {
            const double x = m[0];
            const double y = m[1];
            m[0] = cs * x - sn * y;
            m[1] = sn * x + cs * y;
        }
    }
    return means;
}

// Balanced labels (i mod K) in shuffled order.
std::vector<int> balanced_labels(std::size_t n, std::size_t n_classes, Rng& rng) {
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = static_cast<int>(i % n_classes);
    }
    rng.shuffle(labels);
    return labels;
}

std::vector<Sample> draw_gaussian(const TaskSpec& spec, const std::vector<std::vector<double>>& means,
                                  std::size_t n, Rng rng) {
    const auto labels = balanced_labels(n, spec.n_classes, rng);
    std::vector<Sample> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].id = i;
        out[i].label = labels[i];
        const auto& mu = means[static_cast<std::size_t>(labels[i])];
        out[i].features.resize(spec.n_features);
        for (std::size_t k = 0; k < spec.n_features; ++k) {
            out[i].features[k] = mu[k] + rng.normal();
        }
    }
    return out;
}

std::vector<Sample> draw_moons(const TaskSpec& spec, std::size_t n, Rng rng) {
    const auto labels = balanced_labels(n, 2, rng);
    const double noise = 1.0 / spec.separation;
    std::vector<Sample> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].id = i;
        out[i].label = labels[i];
        const double t = std::numbers::pi * rng.uniform();
        double x = std::cos(t);
        double y = std::sin(t);
        if (labels[i] == 1) {
            x = 1.0 - x;
            y = 0.5 - y;
        }
        out[i].features.resize(spec.n_features);
        out[i].features[0] = x + noise * rng.normal();
        out[i].features[1] = y + noise * rng.normal();
        for (std::size_t k = 2; k < spec.n_features; ++k) {
            out[i].features[k] = rng.normal();
        }
    }
    return out;
}

std::vector<Sample> draw_motifs(const TaskSpec& spec, std::size_t n, Rng rng) {
    const auto labels = balanced_labels(n, spec.n_classes, rng);
    const auto background = spec.vocab_size - spec.n_classes;
    std::vector<Sample> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].id = i;
        out[i].label = labels[i];
        out[i].tokens.resize(spec.seq_len);
        for (auto& t : out[i].tokens) {
            t = static_cast<int>(spec.n_classes + rng.below(background));
        }
        out[i].tokens[rng.below(spec.seq_len)] = labels[i];
    }
    return out;
}

void apply_label_noise(std::vector<Sample>& samples, const TaskSpec& spec) {
    Rng rng = Rng::stream(spec.seed, kSaltNoise);
    for (auto& s : samples) {
        // Both draws happen for every sample so the flip pattern at one rate
        // does not shift the stream for later samples.
        const double u = rng.uniform();
        const auto shift = 1 + rng.below(spec.n_classes - 1);
        if (u < spec.label_noise_rate) {
            s.label = static_cast<int>((static_cast<std::size_t>(s.label) + shift) % spec.n_classes);
        }
    }
}

TaskSplits generate(const TaskSpec& spec, double rotation, std::size_t n_train,
                    std::uint64_t salt_train, std::uint64_t salt_dev) {
    spec.validate();
    std::vector<Sample> train;
    std::vector<Sample> dev;
    switch (spec.kind) {
        case TaskKind::GaussianMixture: {
            const auto means = mixture_means(spec, rotation);
            train = draw_gaussian(spec, means, n_train, Rng::stream(spec.seed, salt_train));
            dev = draw_gaussian(spec, means, spec.n_dev, Rng::stream(spec.seed, salt_dev));
            break;
        }
        case TaskKind::XorMoons:
            train = draw_moons(spec, n_train, Rng::stream(spec.seed, salt_train));
            dev = draw_moons(spec, spec.n_dev, Rng::stream(spec.seed, salt_dev));
            break;
        case TaskKind::TokenMotif:
            train = draw_motifs(spec, n_train, Rng::stream(spec.seed, salt_train));
            dev = draw_motifs(spec, spec.n_dev, Rng::stream(spec.seed, salt_dev));
            break;
        case TaskKind::TextFile:
            throw ConfigError("text_file tasks are loaded, not generated");
    }
    apply_label_noise(train, spec);
    return {LabeledDataset(std::move(train), spec.n_classes, Split::Train),
            LabeledDataset(std::move(dev), spec.n_classes, Split::Dev)};
}

}  // namespace

TaskSplits generate_synthetic(const TaskSpec& spec) {
    return generate(spec, 0.0, spec.n_train, kSaltTrain, kSaltDev);
}

TransferPair make_transfer_pair(const TaskSpec& target_spec, std::size_t n_source, double shift) {
    TaskSpec source_spec = target_spec;
    source_spec.n_train = n_source;
    source_spec.label_noise_rate = 0.0;
    TransferPair pair{generate(source_spec, shift, n_source, kSaltSourceTrain, kSaltSourceDev),
                      generate_synthetic(target_spec)};
    return pair;
}

// --- text ----------------------------------------------------------------

std::size_t feature_bucket(std::string_view token, std::size_t hash_dim) {
    return static_cast<std::size_t>(fnv1a64(token) % hash_dim);
}

std::vector<double> hash_features(std::string_view text, std::size_t hash_dim) {
    if (hash_dim == 0) {
        throw ConfigError("hash_dim must be positive");
    }
    std::vector<double> counts(hash_dim, 0.0);
    std::string token;
    auto flush = [&] {
        if (!token.empty()) {
            counts[feature_bucket(token, hash_dim)] += 1.0;
            token.clear();
        }
    };
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else {
            token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    flush();
    return counts;
}

TextTask load_text_task(const std::filesystem::path& path, std::size_t hash_dim,
                        std::size_t n_classes, std::vector<std::string> label_names) {
    if (hash_dim == 0) {
        throw ConfigError("hash_dim must be positive");
    }
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open text task file " + path.string());
    }
    struct Row {
        std::string text;
        std::string label;
        Split split;
        std::size_t line;
    };
    std::vector<Row> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (std::all_of(line.begin(), line.end(),
                        [](unsigned char c) { return std::isspace(c) != 0; })) {
            continue;
        }
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(path.string() + ", line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        const auto where = path.string() + ", line " + std::to_string(line_no) + ": ";
        if (!obj.is_object() || !obj.contains("text") || !obj["text"].is_string() ||
            !obj.contains("label") || !obj["label"].is_string()) {
            throw DataError(where + "expected string keys \"text\" and \"label\"");
        }
        Split split = Split::Train;
        if (obj.contains("split")) {
            const auto& sv = obj["split"];
            if (!sv.is_string() || (sv != "train" && sv != "dev")) {
                throw DataError(where + "\"split\" must be \"train\" or \"dev\"");
            }
            split = sv == "dev" ? Split::Dev : Split::Train;
        }
        for (const auto& [key, _] : obj.items()) {
            if (key != "text" && key != "label" && key != "split") {
                throw DataError(where + "unexpected key \"" + key + "\"");
            }
        }
        rows.push_back({obj["text"].get<std::string>(), obj["label"].get<std::string>(), split, line_no});
    }

    if (label_names.empty()) {
        // Sorted, so the mapping does not depend on line order.
        std::set<std::string> seen;
        for (const auto& r : rows) {
            seen.insert(r.label);
        }
        if (seen.size() > n_classes) {
            throw DataError(path.string() + ": found " + std::to_string(seen.size()) +
                            " distinct labels but n_classes is " + std::to_string(n_classes));
        }
        label_names.assign(seen.begin(), seen.end());
    }
    if (label_names.size() > n_classes) {
        throw ConfigError("more label names than n_classes");
    }
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < label_names.size(); ++i) {
        index[label_names[i]] = static_cast<int>(i);
    }

    std::vector<Sample> train;
    std::vector<Sample> dev;
    for (const auto& r : rows) {
        const auto it = index.find(r.label);
        if (it == index.end()) {
            throw DataError(path.string() + ", line " + std::to_string(r.line) + ": unknown label \"" +
                            r.label + "\"");
        }
        auto& bucket = r.split == Split::Train ? train : dev;
        Sample s;
        s.id = bucket.size();
        s.features = hash_features(r.text, hash_dim);
        s.label = it->second;
        bucket.push_back(std::move(s));
    }
    return {{LabeledDataset(std::move(train), n_classes, Split::Train),
             LabeledDataset(std::move(dev), n_classes, Split::Dev)},
            std::move(label_names)};
}

// --- subsample -------------------------------------------------------------

LabeledDataset subsample(const LabeledDataset& dataset, std::size_t k, std::uint64_t seed) {
    if (k < dataset.n_classes()) {
        throw ConfigError("subsample size " + std::to_string(k) + " is smaller than the " +
                          std::to_string(dataset.n_classes()) + " classes");
    }
    if (k > dataset.size()) {
        throw ConfigError("subsample size " + std::to_string(k) + " exceeds dataset size " +
                          std::to_string(dataset.size()));
    }
    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<bool> chosen(dataset.size(), false);
    std::vector<bool> class_seen(dataset.n_classes(), false);
    std::size_t picked = 0;
    for (auto i : order) {
        const auto c = static_cast<std::size_t>(dataset[i].label);
        if (!class_seen[c]) {
            class_seen[c] = true;
            chosen[i] = true;
            ++picked;
        }
    }
    for (auto i : order) {
        if (picked >= k) {
            break;
        }
        if (!chosen[i]) {
            chosen[i] = true;
            ++picked;
        }
    }
    std::vector<Sample> samples;
    std::vector<std::size_t> source;
    samples.reserve(k);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (chosen[i]) {
            samples.push_back(dataset[i]);
            source.push_back(dataset.source_ids()[i]);
        }
    }
    LabeledDataset out(std::move(samples), dataset.n_classes(), dataset.split());
    out.set_source_ids(std::move(source));
    return out;
}

TaskSplits load_task(const TaskSpec& spec) {
    spec.validate();
    if (spec.kind == TaskKind::TextFile) {
        return load_text_task(spec.path, spec.hash_dim, spec.n_classes).splits;
    }
    return generate_synthetic(spec);
}

}  // namespace dcs
