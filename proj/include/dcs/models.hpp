#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcs/tensor.hpp"

namespace dcs {

enum class Architecture { Linear, Mlp, TinyTransformer };

std::string_view to_string(Architecture arch);
Architecture parse_architecture(std::string_view name);

// Everything needed to lay out a model's parameters. Linear and Mlp read
// input_dim (and hidden); TinyTransformer reads vocab_size, seq_len,
// embed_dim and ffn_dim. Unused fields stay zero.
struct ArchitectureDescriptor {
    Architecture kind = Architecture::Mlp;
    std::size_t n_classes = 2;
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden;
    std::size_t vocab_size = 0;
    std::size_t seq_len = 0;
    std::size_t embed_dim = 0;
    std::size_t ffn_dim = 0;  // 0 means 2 * embed_dim

    static ArchitectureDescriptor linear(std::size_t input_dim, std::size_t n_classes);
    static ArchitectureDescriptor mlp(std::size_t input_dim, std::vector<std::size_t> hidden,
                                      std::size_t n_classes);
    static ArchitectureDescriptor tiny_transformer(std::size_t vocab_size, std::size_t seq_len,
                                                   std::size_t embed_dim, std::size_t n_classes);

    // Throws ConfigError on non-positive dimensions or fewer than two classes.
    void validate() const;
    // Width of one input row: features for Linear/Mlp, tokens for TinyTransformer.
    std::size_t input_width() const;
    std::size_t effective_ffn_dim() const { return ffn_dim != 0 ? ffn_dim : 2 * embed_dim; }

    bool operator==(const ArchitectureDescriptor&) const = default;
};

void to_json(nlohmann::json& j, const ArchitectureDescriptor& desc);
void from_json(const nlohmann::json& j, ArchitectureDescriptor& desc);

struct NamedParameter {
    std::string name;
    Tensor value;
};

// Ordered (name, shape) layout derived from the descriptor alone.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ArchitectureDescriptor& desc);

class ClassifierModel {
public:
    ClassifierModel(ArchitectureDescriptor desc, std::vector<NamedParameter> params);

    const ArchitectureDescriptor& descriptor() const { return desc_; }
    std::size_t n_classes() const { return desc_.n_classes; }

    std::vector<NamedParameter>& parameters() { return params_; }
    const std::vector<NamedParameter>& parameters() const { return params_; }
    const Tensor& parameter(std::string_view name) const;
    Tensor& parameter(std::string_view name);
    std::size_t parameter_count() const;

    // batch: [batch x input_width]. Token ids are carried as integral doubles.
    Tensor forward(const Tensor& batch) const;

    // Deep copy; the result shares no storage with *this.
    ClassifierModel clone() const;

    void set_trainable(bool trainable);
    void zero_grad();

private:
    Tensor forward_linear(const Tensor& batch) const;
    Tensor forward_mlp(const Tensor& batch) const;
    Tensor forward_transformer(const Tensor& batch) const;

    ArchitectureDescriptor desc_;
    std::vector<NamedParameter> params_;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases; layer-norm
// gains start at 1 and offsets at 0.
ClassifierModel build_model(const ArchitectureDescriptor& desc, std::uint64_t seed);

ClassifierModel clone_parameters(const ClassifierModel& model);

// Row-wise argmax; ties resolve to the lowest class index.
std::vector<int> argmax_rows(const Tensor& logits);

// Eval-mode forward plus argmax, no gradient recording.
std::vector<int> predict(const ClassifierModel& model, const Tensor& batch);

// 16 hex digits of FNV-1a 64 over parameter names, shapes and IEEE-754 bits.
std::string parameter_hash(const ClassifierModel& model);

}  // namespace dcs
