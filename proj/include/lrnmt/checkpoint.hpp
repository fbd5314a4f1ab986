#pragma once

// Checkpoint container: 8-byte magic, length-prefixed JSON manifest, then
// named little-endian float32 arrays. load(save(m)) reproduces forward
// outputs bit-exactly for float models.

#include <string>
#include <vector>

#include "json.hpp"
#include "lrnmt/optim.hpp"
#include "lrnmt/transformer.hpp"

namespace lrnmt {

inline constexpr int kCheckpointVersion = 1;

struct ArrayData {
    std::vector<std::size_t> shape;
    std::vector<float> data;
};

struct Checkpoint {
    nlohmann::json manifest;
    std::vector<std::pair<std::string, ArrayData>> arrays;

    const ArrayData& at(const std::string& name) const {
        for (const auto& [n, a] : arrays)
            if (n == name) return a;
        throw DataError("checkpoint is missing array: " + name);
    }
    bool has(const std::string& name) const {
        for (const auto& [n, a] : arrays)
            if (n == name) return true;
        return false;
    }
};

void save_checkpoint_file(const std::string& path, const nlohmann::json& manifest,
                          const std::vector<std::pair<std::string, ArrayData>>& arrays);
Checkpoint load_checkpoint_file(const std::string& path);

// --- config <-> json --------------------------------------------------------

inline nlohmann::json config_to_json(const TransformerConfig& c) {
    return {{"num_layers", c.num_layers},   {"num_heads", c.num_heads},
            {"d_model", c.d_model},         {"d_ff", c.d_ff},
            {"vocab_size", c.vocab_size},   {"max_len", c.max_len},
            {"dropout", c.dropout},         {"tie_softmax", c.tie_softmax},
            {"label_smoothing", c.label_smoothing}};
}

inline TransformerConfig config_from_json(const nlohmann::json& j) {
    TransformerConfig c;
    c.num_layers = j.at("num_layers").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.max_len = j.at("max_len").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.tie_softmax = j.at("tie_softmax").get<bool>();
    c.label_smoothing = j.at("label_smoothing").get<double>();
    return c;
}

// --- parameter packing ------------------------------------------------------

template <class T>
ArrayData array_from_var(const Var<T>& p) {
    ArrayData a;
    a.shape = p->shape;
    a.data.assign(p->value.begin(), p->value.end());
    return a;
}

template <class T>
void var_from_array(const Var<T>& p, const ArrayData& a, const std::string& name) {
    if (a.shape != p->shape)
        throw DataError("checkpoint array '" + name + "' has shape " + shape_str(a.shape) +
                        ", expected " + shape_str(p->shape));
    p->value.assign(a.data.begin(), a.data.end());
}

template <class T>
std::vector<std::pair<std::string, ArrayData>> pack_parameters(const NamedParams<T>& params) {
    std::vector<std::pair<std::string, ArrayData>> arrays;
    arrays.reserve(params.size());
    for (const auto& [name, p] : params) arrays.emplace_back(name, array_from_var(p));
    return arrays;
}

template <class T>
void unpack_parameters(const NamedParams<T>& params, const Checkpoint& ckpt) {
    for (const auto& [name, p] : params) var_from_array(p, ckpt.at(name), name);
}

// --- model-level wrappers ---------------------------------------------------

template <class T>
void save_transformer(const std::string& path, const TransformerModel<T>& model,
                      nlohmann::json extra = {}, const OptimizerState<T>* optim = nullptr) {
    nlohmann::json manifest = std::move(extra);
    manifest["format_version"] = kCheckpointVersion;
    manifest["kind"] = "transformer";
    manifest["config"] = config_to_json(model.config);
    manifest["has_optimizer"] = optim != nullptr;
    auto params = model.named_parameters();
    auto arrays = pack_parameters(params);
    if (optim) {
        if (optim->slots.size() != params.size())
            throw DataError("optimizer state does not match the parameter registry");
        manifest["optimizer"] = {{"t", optim->t},
                                 {"beta1", optim->beta1},
                                 {"beta2", optim->beta2},
                                 {"eps", optim->eps},
                                 {"weight_decay", optim->weight_decay}};
        for (std::size_t i = 0; i < params.size(); ++i) {
            ArrayData m, v;
            m.shape = v.shape = params[i].second->shape;
            m.data.assign(optim->slots[i].m.begin(), optim->slots[i].m.end());
            v.data.assign(optim->slots[i].v.begin(), optim->slots[i].v.end());
            arrays.emplace_back("optim.m." + params[i].first, std::move(m));
            arrays.emplace_back("optim.v." + params[i].first, std::move(v));
        }
    }
    save_checkpoint_file(path, manifest, arrays);
}

template <class T>
TransformerModel<T> load_transformer(const std::string& path,
                                     nlohmann::json* manifest_out = nullptr,
                                     OptimizerState<T>* optim_out = nullptr) {
    Checkpoint ckpt = load_checkpoint_file(path);
    if (ckpt.manifest.value("kind", "") != "transformer")
        throw DataError(path + ": not a transformer checkpoint");
    TransformerModel<T> model = build_model<T>(config_from_json(ckpt.manifest.at("config")), 0);
    auto params = model.named_parameters();
    unpack_parameters(params, ckpt);
    if (optim_out && ckpt.manifest.value("has_optimizer", false)) {
        const auto& oj = ckpt.manifest.at("optimizer");
        optim_out->t = oj.at("t").get<std::int64_t>();
        optim_out->beta1 = oj.at("beta1").get<double>();
        optim_out->beta2 = oj.at("beta2").get<double>();
        optim_out->eps = oj.at("eps").get<double>();
        optim_out->weight_decay = oj.at("weight_decay").get<double>();
        optim_out->slots.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            const ArrayData& m = ckpt.at("optim.m." + params[i].first);
            const ArrayData& v = ckpt.at("optim.v." + params[i].first);
            optim_out->slots[i].m.assign(m.data.begin(), m.data.end());
            optim_out->slots[i].v.assign(v.data.begin(), v.data.end());
        }
    }
    if (manifest_out) *manifest_out = ckpt.manifest;
    return model;
}

template <class T>
void save_encoder(const std::string& path, const EncoderModel<T>& model,
                  nlohmann::json extra = {}) {
    nlohmann::json manifest = std::move(extra);
    manifest["format_version"] = kCheckpointVersion;
    manifest["kind"] = "encoder";
    manifest["config"] = config_to_json(model.config);
    manifest["has_optimizer"] = false;
    save_checkpoint_file(path, manifest, pack_parameters(model.named_parameters()));
}

template <class T>
EncoderModel<T> load_encoder(const std::string& path, nlohmann::json* manifest_out = nullptr) {
    Checkpoint ckpt = load_checkpoint_file(path);
    if (ckpt.manifest.value("kind", "") != "encoder")
        throw DataError(path + ": not an encoder checkpoint");
    EncoderModel<T> model = build_encoder_model<T>(config_from_json(ckpt.manifest.at("config")), 0);
    unpack_parameters(model.named_parameters(), ckpt);
    if (manifest_out) *manifest_out = ckpt.manifest;
    return model;
}

// Refuses to pair a checkpoint with a vocabulary it was not trained with.
inline void verify_vocab_hash(const nlohmann::json& manifest, const Vocabulary& vocab) {
    const std::string expected = manifest.value("vocab_hash", "");
    if (!expected.empty() && expected != vocab.content_hash())
        throw DataError("vocabulary hash mismatch: checkpoint was built with a different "
                        "vocabulary (expected " +
                        expected.substr(0, 12) + "..., got " +
                        vocab.content_hash().substr(0, 12) + "...)");
}

}  // namespace lrnmt
