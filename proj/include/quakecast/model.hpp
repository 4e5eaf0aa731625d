// SPDX-License-Identifier: Apache-2.0
#pragma once

// Network assembly. The default layer table is the CNN-BiLSTM-AM stack:
//
//   Conv(16,5,1) Pool(2) Conv(32,3,1) Pool(2) Conv(64,3,1) Pool(2)
//   Conv(128,3,1) Pool(2) -> Flatten -> BiLSTM(128) -> BiLSTM(64)
//   -> Attention -> FC(32) -> FC(10) -> FC(1)
//
// Every convolution is followed by batch normalization and ReLU before the
// pooling step. "Flatten" keeps the time axis: (B, C, L) becomes (B, L, C).
// The ablation architectures reuse the same blocks.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "quakecast/attention.hpp"
#include "quakecast/autodiff.hpp"
#include "quakecast/error.hpp"
#include "quakecast/layers.hpp"
#include "quakecast/module.hpp"
#include "quakecast/recurrent.hpp"

namespace quakecast::nn {

enum class Architecture { CnnBilstmAm, CnnBilstm, CnnOnly, LstmOnly, Mlp };

inline std::string_view to_string(Architecture a) {
    switch (a) {
        case Architecture::CnnBilstmAm: return "cnn-bilstm-am";
        case Architecture::CnnBilstm: return "cnn-bilstm";
        case Architecture::CnnOnly: return "cnn";
        case Architecture::LstmOnly: return "lstm";
        case Architecture::Mlp: return "mlp";
    }
    return "?";
}

inline Architecture parse_architecture(std::string_view s) {
    for (auto a : {Architecture::CnnBilstmAm, Architecture::CnnBilstm, Architecture::CnnOnly,
                   Architecture::LstmOnly, Architecture::Mlp}) {
        if (to_string(a) == s) return a;
    }
    throw ConfigError("unknown architecture '" + std::string(s) + "'");
}

inline std::string_view to_string(Combine c) { return c == Combine::Sum ? "sum" : "concat"; }

inline Combine parse_combine(std::string_view s) {
    if (s == "sum") return Combine::Sum;
    if (s == "concat") return Combine::Concat;
    throw ConfigError("unknown combine mode '" + std::string(s) + "'");
}

struct ConvSpec {
    std::size_t channels;
    std::size_t kernel;
    std::size_t stride;

    bool operator==(const ConvSpec&) const = default;
};

struct LayerTable {
    std::vector<ConvSpec> convs{{16, 5, 1}, {32, 3, 1}, {64, 3, 1}, {128, 3, 1}};
    std::vector<std::size_t> pool_sizes{2, 2, 2, 2};
    std::vector<std::size_t> recurrent{128, 64};
    std::vector<std::size_t> head{32, 10, 1};
    std::vector<std::size_t> mlp_hidden{15, 15};

    bool operator==(const LayerTable&) const = default;
};

struct ModelSpec {
    Architecture architecture = Architecture::CnnBilstmAm;
    std::size_t window = 12;
    double dropout = 0.2;
    std::size_t pool_stride = 1;  // applied to every pooling layer
    Combine combine = Combine::Sum;
    LayerTable layers;

    bool operator==(const ModelSpec&) const = default;

    bool has_conv_block() const {
        return architecture == Architecture::CnnBilstmAm || architecture == Architecture::CnnBilstm ||
               architecture == Architecture::CnnOnly;
    }

    /// Shortest window the architecture accepts: the widest convolution
    /// kernel for the convolutional variants, 1 otherwise.
    std::size_t min_window() const {
        if (!has_conv_block()) return 1;
        std::size_t k = 1;
        for (const auto& c : layers.convs) k = std::max(k, c.kernel);
        return k;
    }

    /// Sequence length leaving the convolutional block.
    std::size_t feature_length() const {
        std::size_t len = window;
        for (std::size_t i = 0; i < layers.convs.size(); ++i) {
            len = same_padding(len, layers.convs[i].kernel, layers.convs[i].stride).out_length;
            len = same_padding(len, layers.pool_sizes[i], pool_stride).out_length;
        }
        return len;
    }

    void validate() const {
        auto positive = [](const std::vector<std::size_t>& v) {
            return std::all_of(v.begin(), v.end(), [](std::size_t x) { return x > 0; });
        };
        if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
        if (pool_stride == 0) throw ConfigError("pool stride must be >= 1");
        if (layers.head.empty() || layers.head.back() != 1 || !positive(layers.head)) {
            throw ConfigError("prediction head must be non-empty, positive and end in width 1");
        }
        if (has_conv_block()) {
            if (layers.convs.empty() || layers.convs.size() != layers.pool_sizes.size()) {
                throw ConfigError("layer table needs one pooling layer per convolution");
            }
            for (const auto& c : layers.convs)
                if (c.channels == 0 || c.kernel == 0 || c.stride == 0)
                    throw ConfigError("convolution extents must be >= 1");
            if (!positive(layers.pool_sizes)) throw ConfigError("pool sizes must be >= 1");
        }
        if ((architecture == Architecture::CnnBilstmAm || architecture == Architecture::CnnBilstm ||
             architecture == Architecture::LstmOnly) &&
            (layers.recurrent.empty() || !positive(layers.recurrent))) {
            throw ConfigError("recurrent widths must be non-empty and positive");
        }
        if (architecture == Architecture::Mlp && !positive(layers.mlp_hidden)) {
            throw ConfigError("MLP widths must be positive");
        }
        if (window < min_window()) {
            throw ConfigError("window " + std::to_string(window) + " is too short for " +
                              std::string(to_string(architecture)) + "; minimum window is " +
                              std::to_string(min_window()));
        }
    }
};

inline void to_json(nlohmann::json& j, const ConvSpec& c) {
    j = nlohmann::json{{"channels", c.channels}, {"kernel", c.kernel}, {"stride", c.stride}};
}
inline void from_json(const nlohmann::json& j, ConvSpec& c) {
    j.at("channels").get_to(c.channels);
    j.at("kernel").get_to(c.kernel);
    j.at("stride").get_to(c.stride);
}
inline void to_json(nlohmann::json& j, const LayerTable& t) {
    j = nlohmann::json{{"convs", t.convs},         {"pool_sizes", t.pool_sizes},
                       {"recurrent", t.recurrent}, {"head", t.head},
                       {"mlp_hidden", t.mlp_hidden}};
}
inline void from_json(const nlohmann::json& j, LayerTable& t) {
    j.at("convs").get_to(t.convs);
    j.at("pool_sizes").get_to(t.pool_sizes);
    j.at("recurrent").get_to(t.recurrent);
    j.at("head").get_to(t.head);
    j.at("mlp_hidden").get_to(t.mlp_hidden);
}
inline void to_json(nlohmann::json& j, const ModelSpec& s) {
    j = nlohmann::json{{"architecture", to_string(s.architecture)},
                       {"window", s.window},
                       {"dropout", s.dropout},
                       {"pool_stride", s.pool_stride},
                       {"combine", to_string(s.combine)},
                       {"layers", s.layers}};
}
inline void from_json(const nlohmann::json& j, ModelSpec& s) {
    s.architecture = parse_architecture(j.at("architecture").get<std::string>());
    j.at("window").get_to(s.window);
    j.at("dropout").get_to(s.dropout);
    j.at("pool_stride").get_to(s.pool_stride);
    s.combine = parse_combine(j.at("combine").get<std::string>());
    j.at("layers").get_to(s.layers);
}

inline constexpr int kCheckpointVersion = 1;

class Model {
public:
    struct Output {
        Tensor prediction;  // (B, 1)
        Tensor attention;   // (B, T) for CnnBilstmAm, undefined otherwise
    };

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    /// Deterministic construction: the same spec and seed give bit-identical
    /// parameters.
    static Model build(const ModelSpec& spec, std::uint64_t seed) {
        spec.validate();
        Model m;
        m.spec_ = spec;
        std::seed_seq init_seq{seed, std::uint64_t{0x51ed}};
        Rng rng(init_seq);
        std::seed_seq drop_seq{seed, std::uint64_t{0xd0}};
        m.dropout_rng_ = Rng(drop_seq);
        const auto& t = spec.layers;

        std::size_t width = 1;
        if (spec.has_conv_block()) {
            std::size_t in = 1;
            for (std::size_t i = 0; i < t.convs.size(); ++i) {
                m.convs_.emplace_back(in, t.convs[i].channels, t.convs[i].kernel, t.convs[i].stride, rng);
                m.norms_.emplace_back(t.convs[i].channels);
                m.pools_.push_back({t.pool_sizes[i], spec.pool_stride});
                in = t.convs[i].channels;
            }
            width = in;
        }
        switch (spec.architecture) {
            case Architecture::CnnBilstmAm:
            case Architecture::CnnBilstm:
                for (std::size_t h : t.recurrent) {
                    m.bilstms_.emplace_back(width, h, spec.combine, rng);
                    width = m.bilstms_.back().output_width();
                }
                if (spec.architecture == Architecture::CnnBilstmAm) m.attention_.emplace(width, rng);
                break;
            case Architecture::CnnOnly:
                width *= spec.feature_length();
                break;
            case Architecture::LstmOnly:
                for (std::size_t h : t.recurrent) {
                    m.lstms_.emplace_back(width, h, rng);
                    width = h;
                }
                break;
            case Architecture::Mlp:
                width = spec.window;
                for (std::size_t h : t.mlp_hidden) {
                    m.head_.emplace_back(width, h, Activation::Sigmoid, rng);
                    width = h;
                }
                m.head_.emplace_back(width, 1, Activation::Linear, rng);
                return m;
        }
        for (std::size_t i = 0; i < t.head.size(); ++i) {
            const bool last = i + 1 == t.head.size();
            m.head_.emplace_back(width, t.head[i], last ? Activation::Linear : Activation::Relu, rng);
            width = t.head[i];
        }
        return m;
    }

    const ModelSpec& spec() const { return spec_; }
    Mode mode() const { return mode_; }
    void set_mode(Mode mode) { mode_ = mode; }

    /// x has shape (B, window) and holds scaled values.
    Output forward_full(const Tensor& x) {
        if (x.dim() != 2 || x.extent(1) != spec_.window) {
            throw ShapeError("model expects input (B, " + std::to_string(spec_.window) + "), got " +
                             ad::shape_str(x.shape()));
        }
        const std::size_t batch = x.extent(0);
        Output out;
        Tensor h;
        switch (spec_.architecture) {
            case Architecture::CnnBilstmAm:
            case Architecture::CnnBilstm: {
                Tensor seq = flatten(features(x), FlattenMode::Sequence);
                for (const auto& layer : bilstms_) seq = dropout(layer.forward(seq), spec_.dropout, mode_, dropout_rng_);
                if (attention_) {
                    auto att = attention_->forward(seq);
                    h = att.context;
                    out.attention = att.weights;
                } else {
                    h = ad::reduce_mean(seq, 1);
                }
                break;
            }
            case Architecture::CnnOnly:
                h = flatten(features(x), FlattenMode::Features);
                break;
            case Architecture::LstmOnly: {
                Tensor seq = ad::reshape(x, {batch, spec_.window, 1});
                for (const auto& cell : lstms_)
                    seq = dropout(lstm_forward(seq, cell, false), spec_.dropout, mode_, dropout_rng_);
                const std::size_t hid = seq.extent(2);
                h = ad::reshape(ad::slice(seq, 1, spec_.window - 1, 1), {batch, hid});
                break;
            }
            case Architecture::Mlp:
                h = x;
                break;
        }
        for (const auto& layer : head_) h = layer.forward(h);
        out.prediction = h;
        return out;
    }

    Tensor forward(const Tensor& x) { return forward_full(x).prediction; }

    ParameterList parameters() const {
        ParameterList out;
        for (std::size_t i = 0; i < convs_.size(); ++i) {
            convs_[i].collect("conv" + std::to_string(i + 1), out);
            norms_[i].collect("bn" + std::to_string(i + 1), out);
        }
        for (std::size_t i = 0; i < bilstms_.size(); ++i) bilstms_[i].collect("bilstm" + std::to_string(i + 1), out);
        for (std::size_t i = 0; i < lstms_.size(); ++i) lstms_[i].collect("lstm" + std::to_string(i + 1), out);
        if (attention_) attention_->collect("attention", out);
        for (std::size_t i = 0; i < head_.size(); ++i) head_[i].collect("fc" + std::to_string(i + 1), out);
        return out;
    }

    BufferList buffers() {
        BufferList out;
        for (std::size_t i = 0; i < norms_.size(); ++i) norms_[i].collect_buffers("bn" + std::to_string(i + 1), out);
        return out;
    }

    std::size_t count_parameters() const {
        std::size_t n = 0;
        for (const auto& p : parameters()) n += p.tensor.numel();
        return n;
    }

    void zero_grad() {
        for (auto& p : parameters()) p.tensor.zero_grad();
    }

    const std::vector<Dense>& head() const { return head_; }
    const std::vector<BiLSTM>& bilstm_layers() const { return bilstms_; }
    const std::vector<LSTMCell>& lstm_layers() const { return lstms_; }
    const std::optional<AdditiveAttention>& attention() const { return attention_; }
    std::vector<BatchNorm>& batch_norms() { return norms_; }

    // ------------------------------------------------------------ checkpoints

    nlohmann::json checkpoint() {
        nlohmann::json j;
        j["format"] = "quakecast-checkpoint";
        j["version"] = kCheckpointVersion;
        j["spec"] = spec_;
        auto& params = j["parameters"];
        params = nlohmann::json::object();
        for (const auto& p : parameters()) {
            auto d = p.tensor.data();
            params[p.name] = {{"shape", p.tensor.shape()}, {"values", std::vector<double>(d.begin(), d.end())}};
        }
        auto& bufs = j["buffers"];
        bufs = nlohmann::json::object();
        for (const auto& b : buffers()) {
            bufs[b.name] = {{"shape", Shape{b.values->size()}}, {"values", *b.values}};
        }
        return j;
    }

    void load_checkpoint(const nlohmann::json& j) {
        if (j.value("format", std::string{}) != "quakecast-checkpoint" ||
            j.value("version", -1) != kCheckpointVersion) {
            throw VersionError("unsupported checkpoint format or version");
        }
        if (j.at("spec").get<ModelSpec>() != spec_) throw VersionError("checkpoint was saved for a different model spec");
        const auto& params = j.at("parameters");
        auto list = parameters();
        if (params.size() != list.size()) throw VersionError("checkpoint parameter count does not match the model");
        for (auto& p : list) {
            if (!params.contains(p.name)) throw VersionError("checkpoint lacks parameter " + p.name);
            const auto& e = params.at(p.name);
            if (e.at("shape").get<Shape>() != p.tensor.shape()) throw VersionError("shape mismatch for " + p.name);
            const auto values = e.at("values").get<std::vector<double>>();
            if (values.size() != p.tensor.numel()) throw VersionError("value count mismatch for " + p.name);
            std::copy(values.begin(), values.end(), p.tensor.data_mut().begin());
        }
        const auto& bufs = j.at("buffers");
        auto blist = buffers();
        if (bufs.size() != blist.size()) throw VersionError("checkpoint buffer count does not match the model");
        for (auto& b : blist) {
            if (!bufs.contains(b.name)) throw VersionError("checkpoint lacks buffer " + b.name);
            auto values = bufs.at(b.name).at("values").get<std::vector<double>>();
            if (values.size() != b.values->size()) throw VersionError("value count mismatch for " + b.name);
            *b.values = std::move(values);
        }
    }

    void save_checkpoint(const std::filesystem::path& path) {
        std::ofstream out(path);
        if (!out) throw IoError("cannot write checkpoint " + path.string());
        out << checkpoint().dump() << '\n';
    }

    /// Rebuilds the model described by a checkpoint and loads its values.
    static Model from_checkpoint(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot read checkpoint " + path.string());
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw VersionError("malformed checkpoint " + path.string() + ": " + e.what());
        }
        Model m = build(j.at("spec").get<ModelSpec>(), 0);
        m.load_checkpoint(j);
        m.set_mode(Mode::Eval);
        return m;
    }

private:
    Model() = default;

    Tensor features(const Tensor& x) {
        Tensor h = ad::reshape(x, {x.extent(0), 1, spec_.window});
        for (std::size_t i = 0; i < convs_.size(); ++i) {
            h = convs_[i].forward(h);
            h = norms_[i].forward(h, mode_);
            h = ad::relu(h);
            h = pools_[i].forward(h);
        }
        return h;
    }

    ModelSpec spec_;
    Mode mode_ = Mode::Train;
    Rng dropout_rng_;
    std::vector<Conv1D> convs_;
    std::vector<BatchNorm> norms_;
    std::vector<MaxPool1D> pools_;
    std::vector<BiLSTM> bilstms_;
    std::vector<LSTMCell> lstms_;
    std::optional<AdditiveAttention> attention_;
    std::vector<Dense> head_;
};

}  // namespace quakecast::nn
