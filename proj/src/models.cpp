#include "dcs/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>

#include "dcs/errors.hpp"
#include "dcs/hash.hpp"
#include "dcs/random.hpp"

namespace dcs {

std::string_view to_string(Architecture arch) {
    switch (arch) {
        case Architecture::Linear:
            return "linear";
        case Architecture::Mlp:
            return "mlp";
        case Architecture::TinyTransformer:
            return "tiny_transformer";
    }
    return "unknown";
}

Architecture parse_architecture(std::string_view name) {
    if (name == "linear") {
        return Architecture::Linear;
    }
    if (name == "mlp") {
        return Architecture::Mlp;
    }
    if (name == "tiny_transformer") {
        return Architecture::TinyTransformer;
    }
    throw ConfigError("unknown architecture '" + std::string(name) +
                      "' (expected linear, mlp or tiny_transformer)");
}

// --- descriptor ----------------------------------------------------------

ArchitectureDescriptor ArchitectureDescriptor::linear(std::size_t input_dim, std::size_t n_classes) {
    ArchitectureDescriptor d;
    d.kind = Architecture::Linear;
    d.input_dim = input_dim;
    d.n_classes = n_classes;
    return d;
}

ArchitectureDescriptor ArchitectureDescriptor::mlp(std::size_t input_dim,
                                                   std::vector<std::size_t> hidden,
                                                   std::size_t n_classes) {
    ArchitectureDescriptor d;
    d.kind = Architecture::Mlp;
    d.input_dim = input_dim;
    d.hidden = std::move(hidden);
    d.n_classes = n_classes;
    return d;
}

ArchitectureDescriptor ArchitectureDescriptor::tiny_transformer(std::size_t vocab_size,
                                                                std::size_t seq_len,
                                                                std::size_t embed_dim,
                                                                std::size_t n_classes) {
    ArchitectureDescriptor d;
    d.kind = Architecture::TinyTransformer;
    d.vocab_size = vocab_size;
    d.seq_len = seq_len;
    d.embed_dim = embed_dim;
    d.ffn_dim = 2 * embed_dim;
    d.n_classes = n_classes;
    return d;
}

void ArchitectureDescriptor::validate() const {
    if (n_classes < 2) {
        throw ConfigError("architecture needs n_classes >= 2, got " + std::to_string(n_classes));
    }
    switch (kind) {
        case Architecture::Linear:
        case Architecture::Mlp:
            if (input_dim == 0) {
                throw ConfigError("architecture input_dim must be positive");
            }
            if (kind == Architecture::Mlp && hidden.empty()) {
                throw ConfigError("mlp architecture needs at least one hidden layer");
            }
            for (auto h : hidden) {
                if (h == 0) {
                    throw ConfigError("hidden layer sizes must be positive");
                }
            }
            break;
        case Architecture::TinyTransformer:
            if (vocab_size == 0 || seq_len == 0 || embed_dim == 0) {
                throw ConfigError("tiny_transformer needs positive vocab_size, seq_len and embed_dim");
            }
            break;
    }
}

std::size_t ArchitectureDescriptor::input_width() const {
    return kind == Architecture::TinyTransformer ? seq_len : input_dim;
}

void to_json(nlohmann::json& j, const ArchitectureDescriptor& d) {
    j = nlohmann::json{{"kind", to_string(d.kind)}, {"n_classes", d.n_classes}};
    if (d.kind == Architecture::TinyTransformer) {
        j["vocab_size"] = d.vocab_size;
        j["seq_len"] = d.seq_len;
        j["embed_dim"] = d.embed_dim;
        j["ffn_dim"] = d.effective_ffn_dim();
    } else {
        j["input_dim"] = d.input_dim;
        if (d.kind == Architecture::Mlp) {
            j["hidden"] = d.hidden;
        }
    }
}

void from_json(const nlohmann::json& j, ArchitectureDescriptor& d) {
    static const std::vector<std::string> allowed = {"kind",       "n_classes", "input_dim", "hidden",
                                                     "vocab_size", "seq_len",   "embed_dim", "ffn_dim"};
    if (!j.is_object()) {
        throw ConfigError("architecture must be a JSON object");
    }
    for (const auto& [key, _] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError("unknown architecture key '" + key + "'");
        }
    }
    try {
        d = ArchitectureDescriptor{};
        d.kind = parse_architecture(j.at("kind").get<std::string>());
        d.n_classes = j.at("n_classes").get<std::size_t>();
        d.input_dim = j.value("input_dim", std::size_t{0});
        d.hidden = j.value("hidden", std::vector<std::size_t>{});
        d.vocab_size = j.value("vocab_size", std::size_t{0});
        d.seq_len = j.value("seq_len", std::size_t{0});
        d.embed_dim = j.value("embed_dim", std::size_t{0});
        d.ffn_dim = j.value("ffn_dim", std::size_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed architecture: ") + e.what());
    }
    if (d.kind == Architecture::TinyTransformer && d.ffn_dim == 0) {
        d.ffn_dim = 2 * d.embed_dim;
    }
    d.validate();
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const ArchitectureDescriptor& d) {
    d.validate();
    std::vector<std::pair<std::string, Shape>> layout;
    switch (d.kind) {
        case Architecture::Linear:
            layout.emplace_back("head.weight", Shape{d.input_dim, d.n_classes});
            layout.emplace_back("head.bias", Shape{d.n_classes});
            break;
        case Architecture::Mlp: {
            std::size_t fan_in = d.input_dim;
            for (std::size_t l = 0; l < d.hidden.size(); ++l) {
                const auto prefix = "fc" + std::to_string(l);
                layout.emplace_back(prefix + ".weight", Shape{fan_in, d.hidden[l]});
                layout.emplace_back(prefix + ".bias", Shape{d.hidden[l]});
                fan_in = d.hidden[l];
            }
            layout.emplace_back("head.weight", Shape{fan_in, d.n_classes});
            layout.emplace_back("head.bias", Shape{d.n_classes});
            break;
        }
        case Architecture::TinyTransformer: {
            const auto e = d.embed_dim;
            const auto f = d.effective_ffn_dim();
            layout.emplace_back("token_embedding", Shape{d.vocab_size, e});
            layout.emplace_back("position_embedding", Shape{d.seq_len, e});
            layout.emplace_back("attn.query", Shape{e, e});
            layout.emplace_back("attn.key", Shape{e, e});
            layout.emplace_back("attn.value", Shape{e, e});
            layout.emplace_back("attn.output", Shape{e, e});
            layout.emplace_back("ln1.gain", Shape{e});
            layout.emplace_back("ln1.bias", Shape{e});
            layout.emplace_back("ffn.in.weight", Shape{e, f});
            layout.emplace_back("ffn.in.bias", Shape{f});
            layout.emplace_back("ffn.out.weight", Shape{f, e});
            layout.emplace_back("ffn.out.bias", Shape{e});
            layout.emplace_back("ln2.gain", Shape{e});
            layout.emplace_back("ln2.bias", Shape{e});
            layout.emplace_back("head.weight", Shape{e, d.n_classes});
            layout.emplace_back("head.bias", Shape{d.n_classes});
            break;
        }
    }
    return layout;
}

// --- model ---------------------------------------------------------------

ClassifierModel::ClassifierModel(ArchitectureDescriptor desc, std::vector<NamedParameter> params)
    : desc_(std::move(desc)), params_(std::move(params)) {
    const auto layout = parameter_layout(desc_);
    if (layout.size() != params_.size()) {
        throw ConfigError("model expects " + std::to_string(layout.size()) + " parameters, got " +
                          std::to_string(params_.size()));
    }
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (params_[i].name != layout[i].first || params_[i].value.shape() != layout[i].second) {
            throw DimensionError("parameter " + std::to_string(i) + ": expected " + layout[i].first +
                                 shape_string(layout[i].second) + ", got " + params_[i].name +
                                 shape_string(params_[i].value.shape()));
        }
    }
}

const Tensor& ClassifierModel::parameter(std::string_view name) const {
    for (const auto& p : params_) {
        if (p.name == name) {
            return p.value;
        }
    }
    throw ConfigError("no parameter named '" + std::string(name) + "'");
}

Tensor& ClassifierModel::parameter(std::string_view name) {
    return const_cast<Tensor&>(std::as_const(*this).parameter(name));
}

std::size_t ClassifierModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p.value.numel();
    }
    return n;
}

Tensor ClassifierModel::forward(const Tensor& batch) const {
    if (batch.rank() != 2 || batch.shape()[1] != desc_.input_width()) {
        throw DimensionError("forward: batch shape " + shape_string(batch.shape()) +
                             " does not match model input width " +
                             std::to_string(desc_.input_width()));
    }
    switch (desc_.kind) {
        case Architecture::Linear:
            return forward_linear(batch);
        case Architecture::Mlp:
            return forward_mlp(batch);
        case Architecture::TinyTransformer:
            return forward_transformer(batch);
    }
    return {};
}

Tensor ClassifierModel::forward_linear(const Tensor& batch) const {
    return add(matmul(batch, parameter("head.weight")), parameter("head.bias"));
}

Tensor ClassifierModel::forward_mlp(const Tensor& batch) const {
    Tensor h = batch;
    for (std::size_t l = 0; l < desc_.hidden.size(); ++l) {
        const auto prefix = "fc" + std::to_string(l);
        h = relu(add(matmul(h, parameter(prefix + ".weight")), parameter(prefix + ".bias")));
    }
    return add(matmul(h, parameter("head.weight")), parameter("head.bias"));
}

// One pre-pooling encoder block, single head, applied to each sequence
// independently so the batch dimension never mixes.
Tensor ClassifierModel::forward_transformer(const Tensor& batch) const {
    const std::size_t n = batch.shape()[0];
    const std::size_t len = desc_.seq_len;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(desc_.embed_dim));

    std::vector<int> positions(len);
    for (std::size_t t = 0; t < len; ++t) {
        positions[t] = static_cast<int>(t);
    }
    const Tensor pos = embedding(parameter("position_embedding"), positions);

    std::vector<Tensor> pooled;
    pooled.reserve(n);
    std::vector<int> ids(len);
    const auto raw = batch.data();
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t t = 0; t < len; ++t) {
            const double v = raw[b * len + t];
            if (v != std::floor(v)) {
                throw DataError("tiny_transformer input must hold integral token ids, got " +
                                std::to_string(v));
            }
            ids[t] = static_cast<int>(v);
        }
        const Tensor x = add(embedding(parameter("token_embedding"), ids), pos);
        const Tensor q = matmul(x, parameter("attn.query"));
        const Tensor k = matmul(x, parameter("attn.key"));
        const Tensor v = matmul(x, parameter("attn.value"));
        const Tensor attn = softmax(scale(matmul(q, transpose(k)), inv_sqrt_d));
        const Tensor mixed = matmul(matmul(attn, v), parameter("attn.output"));
        const Tensor h1 = layer_norm(add(x, mixed), parameter("ln1.gain"), parameter("ln1.bias"));
        const Tensor ff = add(
            matmul(relu(add(matmul(h1, parameter("ffn.in.weight")), parameter("ffn.in.bias"))),
                   parameter("ffn.out.weight")),
            parameter("ffn.out.bias"));
        const Tensor h2 = layer_norm(add(h1, ff), parameter("ln2.gain"), parameter("ln2.bias"));
        pooled.push_back(col_mean(h2));
    }
    const Tensor features = concat_rows(pooled);
    return add(matmul(features, parameter("head.weight")), parameter("head.bias"));
}

ClassifierModel ClassifierModel::clone() const {
    std::vector<NamedParameter> copy;
    copy.reserve(params_.size());
    for (const auto& p : params_) {
        copy.push_back({p.name, p.value.clone()});
    }
    return ClassifierModel(desc_, std::move(copy));
}

void ClassifierModel::set_trainable(bool trainable) {
    for (auto& p : params_) {
        p.value.set_requires_grad(trainable);
    }
}

void ClassifierModel::zero_grad() {
    for (auto& p : params_) {
        p.value.zero_grad();
    }
}

// --- free functions ------------------------------------------------------

ClassifierModel build_model(const ArchitectureDescriptor& desc, std::uint64_t seed) {
    const auto layout = parameter_layout(desc);
    Rng rng(seed);
    std::vector<NamedParameter> params;
    params.reserve(layout.size());
    // Biases share the fan-in of the weight matrix that precedes them.
    std::size_t last_fan_in = 1;
    for (const auto& [name, shape] : layout) {
        std::vector<double> values(shape_numel(shape));
        const bool is_gain = name.ends_with(".gain");
        const bool is_norm_bias = name.starts_with("ln") && name.ends_with(".bias");
        if (is_gain) {
            std::fill(values.begin(), values.end(), 1.0);
        } else if (!is_norm_bias) {
            std::size_t fan_in = shape.size() == 2 ? shape[0] : last_fan_in;
            if (name.ends_with("embedding")) {
                fan_in = shape[1];
            }
            if (shape.size() == 2) {
                last_fan_in = fan_in;
            }
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (auto& v : values) {
                v = rng.uniform(-bound, bound);
            }
        }
        params.push_back({name, Tensor::from_data(shape, std::move(values), true)});
    }
    return ClassifierModel(desc, std::move(params));
}

ClassifierModel clone_parameters(const ClassifierModel& model) { return model.clone(); }

std::vector<int> argmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) {
        throw DimensionError("argmax_rows: expected rank-2 logits, got " +
                             shape_string(logits.shape()));
    }
    const std::size_t m = logits.shape()[0];
    const std::size_t n = logits.shape()[1];
    const auto z = logits.data();
    std::vector<int> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < n; ++j) {
            if (z[i * n + j] > z[i * n + best]) {
                best = j;
            }
        }
        out[i] = static_cast<int>(best);
    }
    return out;
}

std::vector<int> predict(const ClassifierModel& model, const Tensor& batch) {
    NoGradGuard no_grad;
    return argmax_rows(model.forward(batch));
}

std::string parameter_hash(const ClassifierModel& model) {
    std::uint64_t h = kFnvOffsetBasis;
    for (const auto& p : model.parameters()) {
        h = fnv1a64(p.name, h);
        for (auto d : p.value.shape()) {
            h = fnv1a64_u64(static_cast<std::uint64_t>(d), h);
        }
        for (double v : p.value.data()) {
            h = fnv1a64_u64(std::bit_cast<std::uint64_t>(v), h);
        }
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace dcs
