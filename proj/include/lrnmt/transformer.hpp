#pragma once

// Encoder-decoder Transformer with pre-layer-norm residual blocks, shared
// source/target embedding, fixed sinusoidal positions and optionally tied
// output projection. The encoder and decoder halves are standalone structs
// so the distillation pipeline can reuse them separately.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lrnmt/bpe.hpp"
#include "lrnmt/tensor.hpp"

namespace lrnmt {

struct TransformerConfig {
    std::size_t num_layers = 4;
    std::size_t num_heads = 4;
    std::size_t d_model = 128;
    std::size_t d_ff = 512;
    std::size_t vocab_size = 0;
    std::size_t max_len = 128;
    double dropout = 0.2;
    bool tie_softmax = true;
    double label_smoothing = 0.1;

    void validate() const {
        if (num_heads == 0 || d_model % num_heads != 0)
            throw ConfigError("d_model " + std::to_string(d_model) +
                              " must be divisible by num_heads " + std::to_string(num_heads));
        if (vocab_size <= 4) throw ConfigError("vocab_size must exceed the 4 special tokens");
        if (max_len == 0) throw ConfigError("max_len must be positive");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
        if (num_layers == 0) throw ConfigError("num_layers must be positive");
    }

    std::size_t head_dim() const { return d_model / num_heads; }

    // T1 = (4 layers, 4 heads, 128, 512); T2 = (6, 8, 256, 1024);
    // T3 = (6, 8, 512, 2048).
    static TransformerConfig preset(const std::string& name) {
        TransformerConfig cfg;
        if (name == "T1") {
            cfg.num_layers = 4;
            cfg.num_heads = 4;
            cfg.d_model = 128;
            cfg.d_ff = 512;
        } else if (name == "T2") {
            cfg.num_layers = 6;
            cfg.num_heads = 8;
            cfg.d_model = 256;
            cfg.d_ff = 1024;
        } else if (name == "T3") {
            cfg.num_layers = 6;
            cfg.num_heads = 8;
            cfg.d_model = 512;
            cfg.d_ff = 2048;
        } else {
            throw ConfigError("unknown model architecture: " + name +
                              " (expected T1, T2 or T3)");
        }
        return cfg;
    }
};

template <class T>
struct LinearParams {
    Var<T> w;  // (d_in, d_out)
    Var<T> b;  // (d_out)
};

template <class T>
struct AttentionBlock {
    LinearParams<T> q, k, v, o;
};

template <class T>
struct NormParams {
    Var<T> gain, bias;
};

template <class T>
struct FfnBlock {
    LinearParams<T> up, down;
};

template <class T>
struct EncoderLayerParams {
    NormParams<T> ln_attn, ln_ffn;
    AttentionBlock<T> self_attn;
    FfnBlock<T> ffn;
};

template <class T>
struct DecoderLayerParams {
    NormParams<T> ln_self, ln_cross, ln_ffn;
    AttentionBlock<T> self_attn, cross_attn;
    FfnBlock<T> ffn;
};

template <class T>
using NamedParams = std::vector<std::pair<std::string, Var<T>>>;

template <class T>
struct EncoderModel {
    TransformerConfig config;
    Var<T> embedding;  // (V, d_model)
    std::shared_ptr<std::vector<T>> pos_table;
    std::vector<EncoderLayerParams<T>> layers;
    NormParams<T> final_norm;

    NamedParams<T> named_parameters(const std::string& prefix = "encoder") const;
};

template <class T>
struct DecoderModel {
    TransformerConfig config;
    Var<T> embedding;  // shared with the encoder inside TransformerModel
    std::shared_ptr<std::vector<T>> pos_table;
    std::vector<DecoderLayerParams<T>> layers;
    NormParams<T> final_norm;

    NamedParams<T> named_parameters(const std::string& prefix = "decoder",
                                    bool include_embedding = false) const;
};

template <class T>
struct TransformerModel {
    TransformerConfig config;
    EncoderModel<T> encoder;
    DecoderModel<T> decoder;  // embedding aliases encoder.embedding
    Var<T> output_proj;       // (d_model, V); empty when tie_softmax

    NamedParams<T> named_parameters() const;
    std::vector<Var<T>> parameters() const;
    std::size_t parameter_count() const;
};

// --- construction -----------------------------------------------------------

inline std::vector<double> sinusoidal_table(std::size_t max_len, std::size_t d_model) {
    std::vector<double> table(max_len * d_model);
    for (std::size_t pos = 0; pos < max_len; ++pos) {
        for (std::size_t i = 0; i < d_model; i += 2) {
            const double angle =
                static_cast<double>(pos) /
                std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d_model));
            table[pos * d_model + i] = std::sin(angle);
            if (i + 1 < d_model) table[pos * d_model + i + 1] = std::cos(angle);
        }
    }
    return table;
}

namespace detail {

template <class T>
Var<T> xavier_matrix(std::size_t fan_in, std::size_t fan_out, RngStream& rng, std::string name) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<T> data(fan_in * fan_out);
    for (T& v : data) v = static_cast<T>(rng.next_uniform(-bound, bound));
    return make_param<T>({fan_in, fan_out}, std::move(data), std::move(name));
}

template <class T>
LinearParams<T> make_linear(std::size_t d_in, std::size_t d_out, RngStream& rng,
                            const std::string& name) {
    return {xavier_matrix<T>(d_in, d_out, rng, name + ".weight"),
            make_param<T>({d_out}, std::vector<T>(d_out, T(0)), name + ".bias")};
}

template <class T>
NormParams<T> make_norm(std::size_t d, const std::string& name) {
    return {make_param<T>({d}, std::vector<T>(d, T(1)), name + ".gain"),
            make_param<T>({d}, std::vector<T>(d, T(0)), name + ".bias")};
}

template <class T>
AttentionBlock<T> make_attention(std::size_t d, RngStream& rng, const std::string& name) {
    return {make_linear<T>(d, d, rng, name + ".q"), make_linear<T>(d, d, rng, name + ".k"),
            make_linear<T>(d, d, rng, name + ".v"), make_linear<T>(d, d, rng, name + ".o")};
}

template <class T>
FfnBlock<T> make_ffn(std::size_t d, std::size_t d_ff, RngStream& rng, const std::string& name) {
    return {make_linear<T>(d, d_ff, rng, name + ".up"),
            make_linear<T>(d_ff, d, rng, name + ".down")};
}

template <class T>
std::shared_ptr<std::vector<T>> pos_table_for(const TransformerConfig& cfg) {
    std::vector<double> table = sinusoidal_table(cfg.max_len, cfg.d_model);
    auto out = std::make_shared<std::vector<T>>(table.size());
    for (std::size_t i = 0; i < table.size(); ++i) (*out)[i] = static_cast<T>(table[i]);
    return out;
}

template <class T>
void append_linear(NamedParams<T>& out, const std::string& name, const LinearParams<T>& lin) {
    out.emplace_back(name + ".weight", lin.w);
    out.emplace_back(name + ".bias", lin.b);
}

template <class T>
void append_norm(NamedParams<T>& out, const std::string& name, const NormParams<T>& norm) {
    out.emplace_back(name + ".gain", norm.gain);
    out.emplace_back(name + ".bias", norm.bias);
}

template <class T>
void append_attention(NamedParams<T>& out, const std::string& name,
                      const AttentionBlock<T>& attn) {
    append_linear(out, name + ".q", attn.q);
    append_linear(out, name + ".k", attn.k);
    append_linear(out, name + ".v", attn.v);
    append_linear(out, name + ".o", attn.o);
}

template <class T>
void append_ffn(NamedParams<T>& out, const std::string& name, const FfnBlock<T>& ffn) {
    append_linear(out, name + ".up", ffn.up);
    append_linear(out, name + ".down", ffn.down);
}

}  // namespace detail

template <class T>
EncoderModel<T> build_encoder_model(const TransformerConfig& config, std::uint64_t seed) {
    config.validate();
    EncoderModel<T> model;
    model.config = config;
    RngStream rng(mix_seed(seed, "encoder-init"));
    model.embedding = detail::xavier_matrix<T>(config.vocab_size, config.d_model, rng, "embedding");
    model.pos_table = detail::pos_table_for<T>(config);
    for (std::size_t l = 0; l < config.num_layers; ++l) {
        const std::string name = "encoder." + std::to_string(l);
        EncoderLayerParams<T> layer{detail::make_norm<T>(config.d_model, name + ".ln_attn"),
                                    detail::make_norm<T>(config.d_model, name + ".ln_ffn"),
                                    detail::make_attention<T>(config.d_model, rng, name + ".self_attn"),
                                    detail::make_ffn<T>(config.d_model, config.d_ff, rng, name + ".ffn")};
        model.layers.push_back(std::move(layer));
    }
    model.final_norm = detail::make_norm<T>(config.d_model, "encoder.norm");
    return model;
}

template <class T>
DecoderModel<T> build_decoder_model(const TransformerConfig& config, std::uint64_t seed) {
    config.validate();
    DecoderModel<T> model;
    model.config = config;
    RngStream rng(mix_seed(seed, "decoder-init"));
    model.embedding = detail::xavier_matrix<T>(config.vocab_size, config.d_model, rng, "embedding");
    model.pos_table = detail::pos_table_for<T>(config);
    for (std::size_t l = 0; l < config.num_layers; ++l) {
        const std::string name = "decoder." + std::to_string(l);
        DecoderLayerParams<T> layer{
            detail::make_norm<T>(config.d_model, name + ".ln_self"),
            detail::make_norm<T>(config.d_model, name + ".ln_cross"),
            detail::make_norm<T>(config.d_model, name + ".ln_ffn"),
            detail::make_attention<T>(config.d_model, rng, name + ".self_attn"),
            detail::make_attention<T>(config.d_model, rng, name + ".cross_attn"),
            detail::make_ffn<T>(config.d_model, config.d_ff, rng, name + ".ffn")};
        model.layers.push_back(std::move(layer));
    }
    model.final_norm = detail::make_norm<T>(config.d_model, "decoder.norm");
    return model;
}

template <class T>
TransformerModel<T> build_model(const TransformerConfig& config, std::uint64_t seed) {
    config.validate();
    TransformerModel<T> model;
    model.config = config;
    model.encoder = build_encoder_model<T>(config, seed);
    model.decoder = build_decoder_model<T>(config, seed);
    model.decoder.embedding = model.encoder.embedding;  // shared vocabulary storage
    if (!config.tie_softmax) {
        RngStream rng(mix_seed(seed, "output-init"));
        model.output_proj =
            detail::xavier_matrix<T>(config.d_model, config.vocab_size, rng, "output_proj");
    }
    return model;
}

template <class T>
NamedParams<T> EncoderModel<T>::named_parameters(const std::string& prefix) const {
    NamedParams<T> out;
    out.emplace_back("embedding", embedding);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string name = prefix + "." + std::to_string(l);
        detail::append_norm(out, name + ".ln_attn", layers[l].ln_attn);
        detail::append_attention(out, name + ".self_attn", layers[l].self_attn);
        detail::append_norm(out, name + ".ln_ffn", layers[l].ln_ffn);
        detail::append_ffn(out, name + ".ffn", layers[l].ffn);
    }
    detail::append_norm(out, prefix + ".norm", final_norm);
    return out;
}

template <class T>
NamedParams<T> DecoderModel<T>::named_parameters(const std::string& prefix,
                                                 bool include_embedding) const {
    NamedParams<T> out;
    if (include_embedding) out.emplace_back("embedding", embedding);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string name = prefix + "." + std::to_string(l);
        detail::append_norm(out, name + ".ln_self", layers[l].ln_self);
        detail::append_attention(out, name + ".self_attn", layers[l].self_attn);
        detail::append_norm(out, name + ".ln_cross", layers[l].ln_cross);
        detail::append_attention(out, name + ".cross_attn", layers[l].cross_attn);
        detail::append_norm(out, name + ".ln_ffn", layers[l].ln_ffn);
        detail::append_ffn(out, name + ".ffn", layers[l].ffn);
    }
    detail::append_norm(out, prefix + ".norm", final_norm);
    return out;
}

template <class T>
NamedParams<T> TransformerModel<T>::named_parameters() const {
    NamedParams<T> out = encoder.named_parameters("encoder");
    NamedParams<T> dec = decoder.named_parameters("decoder", false);
    out.insert(out.end(), dec.begin(), dec.end());
    if (output_proj) out.emplace_back("output_proj", output_proj);
    return out;
}

template <class T>
std::vector<Var<T>> TransformerModel<T>::parameters() const {
    std::vector<Var<T>> out;
    for (auto& [name, p] : named_parameters()) out.push_back(p);
    return out;
}

template <class T>
std::size_t TransformerModel<T>::parameter_count() const {
    std::size_t n = 0;
    for (auto& [name, p] : named_parameters()) n += p->numel();
    return n;
}

// --- batches and masks ------------------------------------------------------

struct TokenBatch {
    std::vector<int> ids;  // (batch, len) row-major, pad-filled
    std::size_t batch = 0;
    std::size_t len = 0;

    static TokenBatch from_sequences(const std::vector<std::vector<int>>& seqs,
                                     int pad_id = Vocabulary::kPad) {
        TokenBatch out;
        out.batch = seqs.size();
        for (const auto& s : seqs) out.len = std::max(out.len, s.size());
        if (out.len == 0) out.len = 1;
        out.ids.assign(out.batch * out.len, pad_id);
        for (std::size_t b = 0; b < seqs.size(); ++b)
            std::copy(seqs[b].begin(), seqs[b].end(), out.ids.begin() + b * out.len);
        return out;
    }

    int at(std::size_t b, std::size_t t) const { return ids[b * len + t]; }
};

using KeepMask = std::shared_ptr<const std::vector<std::uint8_t>>;

// keep[b, q, k] = key k of sequence b is not padding (queries all behave alike)
inline KeepMask pad_attention_mask(const TokenBatch& keys, std::size_t n_queries,
                                   int pad_id = Vocabulary::kPad) {
    auto mask = std::make_shared<std::vector<std::uint8_t>>(keys.batch * n_queries * keys.len);
    for (std::size_t b = 0; b < keys.batch; ++b)
        for (std::size_t q = 0; q < n_queries; ++q)
            for (std::size_t k = 0; k < keys.len; ++k)
                (*mask)[(b * n_queries + q) * keys.len + k] = keys.at(b, k) != pad_id;
    return mask;
}

// keep[b, q, k] = k <= q and key k is not padding
inline KeepMask causal_attention_mask(const TokenBatch& keys, int pad_id = Vocabulary::kPad) {
    auto mask = std::make_shared<std::vector<std::uint8_t>>(keys.batch * keys.len * keys.len);
    for (std::size_t b = 0; b < keys.batch; ++b)
        for (std::size_t q = 0; q < keys.len; ++q)
            for (std::size_t k = 0; k < keys.len; ++k)
                (*mask)[(b * keys.len + q) * keys.len + k] = k <= q && keys.at(b, k) != pad_id;
    return mask;
}

// --- forward passes ---------------------------------------------------------

struct DropoutCtx {
    double rate = 0.0;
    bool training = false;
    std::uint64_t seed = 0;
    std::uint64_t counter = 0;

    std::uint64_t next_seed() { return mix_seed(seed, ++counter); }

    static DropoutCtx inference() { return {}; }
    static DropoutCtx for_step(double rate, std::uint64_t global_seed, std::uint64_t step) {
        return {rate, true, mix_seed(global_seed, step), 0};
    }
};

template <class T>
struct ForwardTrace {
    std::vector<Var<T>>* attention_probs = nullptr;  // filled when non-null
};

namespace detail {

template <class T>
Var<T> linear(Tape<T>& tape, const Var<T>& x, const LinearParams<T>& lin) {
    return add(tape, matmul(tape, x, lin.w), lin.b);
}

template <class T>
Var<T> split_heads(Tape<T>& tape, const Var<T>& x, std::size_t heads) {
    // (B, S, D) -> (B, H, S, D/H)
    const std::size_t b = x->shape[0], s = x->shape[1], d = x->shape[2];
    return swap_axes(tape, reshape(tape, x, {b, s, heads, d / heads}), 1, 2);
}

template <class T>
Var<T> merge_heads(Tape<T>& tape, const Var<T>& x) {
    // (B, H, S, Dh) -> (B, S, H*Dh)
    const std::size_t b = x->shape[0], h = x->shape[1], s = x->shape[2], dh = x->shape[3];
    return reshape(tape, swap_axes(tape, x, 1, 2), {b, s, h * dh});
}

template <class T>
Var<T> attention(Tape<T>& tape, const AttentionBlock<T>& block, const Var<T>& query_states,
                 const Var<T>& key_states, const KeepMask& mask, std::size_t heads,
                 DropoutCtx& dctx, ForwardTrace<T>* trace) {
    const std::size_t d = query_states->shape.back();
    const std::size_t dh = d / heads;
    Var<T> q = split_heads(tape, linear(tape, query_states, block.q), heads);
    Var<T> k = split_heads(tape, linear(tape, key_states, block.k), heads);
    Var<T> v = split_heads(tape, linear(tape, key_states, block.v), heads);
    Var<T> scores =
        scale(tape, matmul(tape, q, transpose(tape, k)), 1.0 / std::sqrt(static_cast<double>(dh)));
    Var<T> probs = masked_softmax(tape, scores, mask);
    if (trace && trace->attention_probs) trace->attention_probs->push_back(probs);
    probs = dropout(tape, probs, dctx.rate, dctx.next_seed(), dctx.training);
    Var<T> context = merge_heads(tape, matmul(tape, probs, v));
    return linear(tape, context, block.o);
}

template <class T>
Var<T> ffn(Tape<T>& tape, const FfnBlock<T>& block, const Var<T>& x) {
    return detail::linear(tape, relu(tape, detail::linear(tape, x, block.up)), block.down);
}

template <class T>
Var<T> residual_dropout(Tape<T>& tape, const Var<T>& x, const Var<T>& delta, DropoutCtx& dctx) {
    return add(tape, x, dropout(tape, delta, dctx.rate, dctx.next_seed(), dctx.training));
}

}  // namespace detail

template <class T>
Var<T> embed_tokens(Tape<T>& tape, const Var<T>& table,
                    const std::shared_ptr<std::vector<T>>& pos_table, const TokenBatch& batch,
                    const TransformerConfig& config, DropoutCtx& dctx) {
    if (batch.len > config.max_len)
        throw DataError("sequence length " + std::to_string(batch.len) + " exceeds max_len " +
                        std::to_string(config.max_len));
    Var<T> x = embedding_lookup(tape, table, batch.ids, {batch.batch, batch.len});
    x = scale(tape, x, std::sqrt(static_cast<double>(config.d_model)));
    x = add_position_encoding(tape, x, *pos_table, config.max_len);
    return dropout(tape, x, dctx.rate, dctx.next_seed(), dctx.training);
}

template <class T>
Var<T> encode(Tape<T>& tape, const EncoderModel<T>& model, const TokenBatch& src,
              DropoutCtx& dctx, ForwardTrace<T>* trace = nullptr) {
    const KeepMask mask = pad_attention_mask(src, src.len);
    Var<T> x = embed_tokens(tape, model.embedding, model.pos_table, src, model.config, dctx);
    for (const auto& layer : model.layers) {
        Var<T> normed = layer_norm(tape, x, layer.ln_attn.gain, layer.ln_attn.bias);
        Var<T> attn_out = detail::attention(tape, layer.self_attn, normed, normed, mask,
                                            model.config.num_heads, dctx, trace);
        x = detail::residual_dropout(tape, x, attn_out, dctx);
        normed = layer_norm(tape, x, layer.ln_ffn.gain, layer.ln_ffn.bias);
        x = detail::residual_dropout(tape, x, detail::ffn(tape, layer.ffn, normed), dctx);
    }
    return layer_norm(tape, x, model.final_norm.gain, model.final_norm.bias);
}

// Runs the decoder stack over `memory` (encoder states or any projected
// states) and returns logits. When `output_proj` is null the decoder
// embedding doubles as the output projection (tied softmax).
template <class T>
Var<T> decode_with_memory(Tape<T>& tape, const DecoderModel<T>& model, const TokenBatch& tgt_in,
                          const Var<T>& memory, const KeepMask& memory_mask, DropoutCtx& dctx,
                          const Var<T>& output_proj = nullptr,
                          ForwardTrace<T>* trace = nullptr) {
    const KeepMask self_mask = causal_attention_mask(tgt_in);
    Var<T> x = embed_tokens(tape, model.embedding, model.pos_table, tgt_in, model.config, dctx);
    for (const auto& layer : model.layers) {
        Var<T> normed = layer_norm(tape, x, layer.ln_self.gain, layer.ln_self.bias);
        Var<T> self_out = detail::attention(tape, layer.self_attn, normed, normed, self_mask,
                                            model.config.num_heads, dctx, trace);
        x = detail::residual_dropout(tape, x, self_out, dctx);

        normed = layer_norm(tape, x, layer.ln_cross.gain, layer.ln_cross.bias);
        Var<T> cross_out = detail::attention(tape, layer.cross_attn, normed, memory, memory_mask,
                                             model.config.num_heads, dctx, trace);
        x = detail::residual_dropout(tape, x, cross_out, dctx);

        normed = layer_norm(tape, x, layer.ln_ffn.gain, layer.ln_ffn.bias);
        x = detail::residual_dropout(tape, x, detail::ffn(tape, layer.ffn, normed), dctx);
    }
    x = layer_norm(tape, x, model.final_norm.gain, model.final_norm.bias);
    if (output_proj) return matmul(tape, x, output_proj);
    return matmul(tape, x, transpose(tape, model.embedding));
}

template <class T>
Var<T> transformer_forward(Tape<T>& tape, const TransformerModel<T>& model, const TokenBatch& src,
                           const TokenBatch& tgt_in, DropoutCtx& dctx,
                           ForwardTrace<T>* trace = nullptr) {
    Var<T> memory = encode(tape, model.encoder, src, dctx, trace);
    const KeepMask cross_mask = pad_attention_mask(src, tgt_in.len);
    return decode_with_memory(tape, model.decoder, tgt_in, memory, cross_mask, dctx,
                              model.output_proj, trace);
}

// --- parameter utilities ----------------------------------------------------

template <class T>
void set_requires_grad(const NamedParams<T>& params, bool value) {
    for (auto& [name, p] : params) {
        p->requires_grad = value;
        if (!value) p->zero_grad();
    }
}

template <class T>
std::string parameters_hash(const NamedParams<T>& params) {
    Sha256 h;
    for (const auto& [name, p] : params) {
        h.update(name.data(), name.size());
        h.update(p->value.data(), p->value.size() * sizeof(T));
    }
    return h.hex_digest();
}

template <class T>
std::vector<std::vector<T>> snapshot_values(const NamedParams<T>& params) {
    std::vector<std::vector<T>> out;
    out.reserve(params.size());
    for (const auto& [name, p] : params) out.push_back(p->value);
    return out;
}

template <class T>
void restore_values(const NamedParams<T>& params, const std::vector<std::vector<T>>& snapshot) {
    if (snapshot.size() != params.size())
        throw DataError("snapshot size does not match parameter registry");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].second->value.size() != snapshot[i].size())
            throw ShapeError("snapshot entry does not match parameter '" + params[i].first + "'");
        params[i].second->value = snapshot[i];
    }
}

// Copies values between two models with identical registries (used to start
// a student from its teacher).
template <class T>
void copy_parameters(const NamedParams<T>& dst, const NamedParams<T>& src) {
    if (dst.size() != src.size()) throw DataError("parameter registries differ in size");
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (dst[i].second->value.size() != src[i].second->value.size())
            throw ShapeError("parameter '" + dst[i].first + "' differs in shape");
        dst[i].second->value = src[i].second->value;
    }
}

}  // namespace lrnmt
