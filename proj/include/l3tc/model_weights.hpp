#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "l3tc/common.hpp"

namespace l3tc {

struct ModelConfig {
    std::uint32_t n_layers = 0;
    std::uint32_t d_embed = 0;
    std::uint32_t d_hidden = 0;
    std::uint32_t vocab_size = 0;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Named size presets: L3TC-200K (2, 96, 96), L3TC-800K (2, 176, 192),
/// L3TC-3.2M (3, 256, 512), L3TC-12M (4, 384, 1024).
ModelConfig preset(std::string_view name, std::uint32_t vocab_size);
std::vector<std::string> preset_names();

struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    static Tensor zeros(std::vector<std::uint32_t> dims);
    std::size_t numel() const noexcept { return data.size(); }
    friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Named tensor set plus its configuration. Matrices use the [out, in]
/// layout. Names:
///
///   emb.weight [V, d]                 head.weight [V, d]
///   ln_out.{weight,bias} [d]          blocks.0.ln0.{weight,bias} [d]
///   blocks.{i}.ln1.{weight,bias}, blocks.{i}.ln2.{weight,bias} [d]
///   blocks.{i}.att.{time_decay,time_first,time_mix_k,time_mix_v,time_mix_r} [d]
///   blocks.{i}.att.{key,value,receptance,output}.weight [d, d]
///   blocks.{i}.ffn.{time_mix_k,time_mix_r} [d]
///   blocks.{i}.ffn.key.weight [h, d], .receptance.weight [d, d], .value.weight [d, h]
///   blocks.{i}.shortcut.weight [d, d]
///
/// The decay actually applied per step is -exp(time_decay). Training-time
/// HiRA branches live alongside as blocks.{i}.{att|ffn}.{r|k|v}.hira.{m}.{A|B}.
struct ModelWeights {
    ModelConfig config;
    std::map<std::string, Tensor> tensors;

    const Tensor& at(const std::string& name) const;
    friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

struct TensorSpec {
    std::string name;
    std::vector<std::uint32_t> dims;
};

/// Every tensor a branch-free model of this config must contain.
std::vector<TensorSpec> expected_tensors(const ModelConfig& config);

/// True for names of the form blocks.{i}.{att|ffn}.{r|k|v}.hira.{m}.{A|B}.
bool is_hira_tensor(std::string_view name);

/// Deterministic random initialization used for fixtures and the CLI's
/// init-model command. Identical on every platform for a given seed.
ModelWeights init_random_weights(const ModelConfig& config, std::uint64_t seed);

/// All matrices and vectors zero, layer-norm scales one.
ModelWeights zero_weights(const ModelConfig& config);

/// Binary L3TW format.
Bytes save_weights(const ModelWeights& weights);

/// Parses and checks framing, hash and finiteness only. Structure checks
/// belong to the consumer (validate_plain, or hira's branch checks).
ModelWeights read_weights(ByteView bytes);

/// Throws unless the tensor set is exactly expected_tensors(config). Branch
/// tensors are reported as unmerged.
void validate_plain(const ModelWeights& weights);

/// read_weights + validate_plain.
ModelWeights load_model(ByteView bytes);

/// FNV-1a of the serialized body; identifies the model inside archives.
std::uint32_t weights_hash(const ModelWeights& weights);

}  // namespace l3tc
