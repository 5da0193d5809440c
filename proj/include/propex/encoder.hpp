#pragma once

// Input layout, vocabulary and a small post-LN transformer encoder with optional
// sliding-window encoding of long sequences.

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "propex/autograd.hpp"
#include "propex/corpus.hpp"
#include "propex/errors.hpp"
#include "propex/parameters.hpp"
#include "propex/rng.hpp"

namespace propex {

class Vocabulary {
public:
    Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

    /// Reserved tokens always occupy the first ids, in tokens::reserved() order.
    explicit Vocabulary(const std::vector<std::string>& extra)
    {
        for (const auto& t : tokens::reserved()) {
            insert(t);
        }
        for (const auto& t : extra) {
            insert(t);
        }
    }

    /// Sorted token set of the given instances, so the id assignment is order independent.
    [[nodiscard]] static Vocabulary from_instances(const std::vector<Instance>& instances)
    {
        std::set<std::string> seen;
        for (const auto& inst : instances) {
            seen.insert(inst.query.begin(), inst.query.end());
            if (inst.answer) {
                seen.insert(inst.answer->begin(), inst.answer->end());
            }
            for (const auto& s : inst.sentences) {
                seen.insert(s.begin(), s.end());
            }
        }
        return Vocabulary(std::vector<std::string>(seen.begin(), seen.end()));
    }

    [[nodiscard]] int id(const std::string& token) const
    {
        auto it = index_.find(token);
        return it == index_.end() ? unk_id() : it->second;
    }

    [[nodiscard]] const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    [[nodiscard]] int size() const noexcept { return static_cast<int>(tokens_.size()); }
    [[nodiscard]] const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    [[nodiscard]] static constexpr int unk_id() { return 0; }
    [[nodiscard]] static constexpr int mask_id() { return 1; }
    [[nodiscard]] static constexpr int query_marker_id() { return 2; }
    [[nodiscard]] static constexpr int sentence_marker_id() { return 3; }
    [[nodiscard]] static constexpr int separator_id() { return 4; }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

private:
    void insert(const std::string& t)
    {
        if (index_.try_emplace(t, static_cast<int>(tokens_.size())).second) {
            tokens_.push_back(t);
        }
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

struct EncoderConfig {
    int hidden = 64;
    int layers = 2;
    int heads = 4;
    int ffn = 256;
    int max_positions = 64; ///< longest sequence one encoder pass accepts
    int max_length = 512;   ///< longest sequence accepted overall; longer documents are truncated
    bool windowing = false;
    int window_size = 64;
    int window_stride = 32;
    double dropout = 0.0;
    double init_std = 0.02;
    std::string pretrained; ///< optional checkpoint whose encoder weights are loaded at init

    void validate() const
    {
        if (hidden < 1 || layers < 1 || heads < 1 || ffn < 1) {
            throw ConfigError("encoder: sizes must be positive");
        }
        if (hidden % heads != 0) {
            throw ConfigError("encoder: hidden size must be divisible by heads");
        }
        if (window_stride < 1 || window_stride >= window_size) {
            throw ConfigError("encoder: window stride must be in [1, window size)");
        }
        if (windowing && window_size > max_positions) {
            throw ConfigError("encoder: window size exceeds max_positions");
        }
        if (max_positions < 1 || max_length < 1) {
            throw ConfigError("encoder: lengths must be positive");
        }
        if (dropout < 0.0 || dropout >= 1.0) {
            throw ConfigError("encoder: dropout must be in [0, 1)");
        }
    }

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

inline void to_json(nlohmann::json& j, const EncoderConfig& c)
{
    j = {{"hidden", c.hidden},
         {"layers", c.layers},
         {"heads", c.heads},
         {"ffn", c.ffn},
         {"max_positions", c.max_positions},
         {"max_length", c.max_length},
         {"windowing", c.windowing},
         {"window_size", c.window_size},
         {"window_stride", c.window_stride},
         {"dropout", c.dropout},
         {"init_std", c.init_std},
         {"pretrained", c.pretrained}};
}

inline void from_json(const nlohmann::json& j, EncoderConfig& c)
{
    c.hidden = j.value("hidden", c.hidden);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.ffn = j.value("ffn", c.ffn);
    c.max_positions = j.value("max_positions", c.max_positions);
    c.max_length = j.value("max_length", c.max_length);
    c.windowing = j.value("windowing", c.windowing);
    c.window_size = j.value("window_size", c.window_size);
    c.window_stride = j.value("window_stride", c.window_stride);
    c.dropout = j.value("dropout", c.dropout);
    c.init_std = j.value("init_std", c.init_std);
    c.pretrained = j.value("pretrained", c.pretrained);
}

struct EncoderInput {
    std::vector<int> ids;
    int query_marker_pos = 0;
    std::vector<int> sentence_marker_pos;

    [[nodiscard]] int length() const noexcept { return static_cast<int>(ids.size()); }
};

/// [QRY] query [SEP] (answer [SEP]) then [SNT] sentence-j for every j, then a closing [SEP].
/// When the result exceeds max_length, sentence tokens are dropped from the end of the
/// document; markers are never dropped.
[[nodiscard]] inline EncoderInput layout(const Instance& inst, const Vocabulary& vocab, const EncoderConfig& config)
{
    if (inst.sentences.empty()) {
        throw ValidationError("instance '" + inst.id + "': no sentences");
    }
    std::size_t fixed = 1 + inst.query.size() + 1 + inst.sentences.size() + 1;
    if (inst.answer) {
        fixed += inst.answer->size() + 1;
    }
    if (fixed > static_cast<std::size_t>(config.max_length)) {
        throw UnencodableError("instance '" + inst.id + "': markers, query and answer need " + std::to_string(fixed) +
                               " positions, max_length is " + std::to_string(config.max_length));
    }
    std::vector<std::size_t> kept(inst.sentences.size());
    std::size_t budget = static_cast<std::size_t>(config.max_length) - fixed;
    for (std::size_t j = 0; j < inst.sentences.size(); ++j) {
        kept[j] = std::min(inst.sentences[j].size(), budget);
        budget -= kept[j];
    }

    EncoderInput in;
    in.ids.reserve(fixed + inst.sentence_token_count());
    in.query_marker_pos = 0;
    in.ids.push_back(Vocabulary::query_marker_id());
    for (const auto& t : inst.query) {
        in.ids.push_back(vocab.id(t));
    }
    in.ids.push_back(Vocabulary::separator_id());
    if (inst.answer) {
        for (const auto& t : *inst.answer) {
            in.ids.push_back(vocab.id(t));
        }
        in.ids.push_back(Vocabulary::separator_id());
    }
    for (std::size_t j = 0; j < inst.sentences.size(); ++j) {
        in.sentence_marker_pos.push_back(static_cast<int>(in.ids.size()));
        in.ids.push_back(Vocabulary::sentence_marker_id());
        for (std::size_t t = 0; t < kept[j]; ++t) {
            in.ids.push_back(vocab.id(inst.sentences[j][t]));
        }
    }
    in.ids.push_back(Vocabulary::separator_id());
    return in;
}

/// Start offsets of the windows covering a sequence: 0, stride, 2*stride, ... up to the
/// first window that reaches the end.
[[nodiscard]] inline std::vector<int> window_starts(int length, int window, int stride)
{
    std::vector<int> starts{0};
    while (starts.back() + window < length) {
        starts.push_back(starts.back() + stride);
    }
    return starts;
}

class TransformerEncoder {
public:
    TransformerEncoder() = default;

    TransformerEncoder(EncoderConfig config, int vocab_size) : config_(std::move(config)), vocab_size_(vocab_size)
    {
        config_.validate();
    }

    [[nodiscard]] const EncoderConfig& config() const noexcept { return config_; }

    /// Creates the encoder parameters under the "encoder." prefix.
    void init_parameters(ParameterStore& store, Rng& rng) const
    {
        const int d = config_.hidden;
        const double sd = config_.init_std;
        store.add_normal("encoder.embed.token", vocab_size_, d, sd, rng);
        store.add_normal("encoder.embed.position", config_.max_positions, d, sd, rng);
        store.add_constant("encoder.embed.ln.gamma", 1, d, 1.0);
        store.add_constant("encoder.embed.ln.beta", 1, d, 0.0);
        for (int l = 0; l < config_.layers; ++l) {
            const std::string p = layer_prefix(l);
            for (const char* m : {"q", "k", "v", "o"}) {
                store.add_normal(p + "attn." + m + ".weight", d, d, sd, rng);
                store.add_constant(p + "attn." + m + ".bias", 1, d, 0.0);
            }
            store.add_constant(p + "ln1.gamma", 1, d, 1.0);
            store.add_constant(p + "ln1.beta", 1, d, 0.0);
            store.add_normal(p + "ffn.in.weight", d, config_.ffn, sd, rng);
            store.add_constant(p + "ffn.in.bias", 1, config_.ffn, 0.0);
            store.add_normal(p + "ffn.out.weight", config_.ffn, d, sd, rng);
            store.add_constant(p + "ffn.out.bias", 1, d, 0.0);
            store.add_constant(p + "ln2.gamma", 1, d, 1.0);
            store.add_constant(p + "ln2.beta", 1, d, 0.0);
        }
    }

    /// Contextual representations [length x hidden]. Sequences longer than max_positions are
    /// windowed when enabled, otherwise rejected. `dropout_rng` null disables dropout.
    [[nodiscard]] ad::Var encode(ad::Tape& tape, const EncoderInput& input, ParameterStore& params, Rng* dropout_rng = nullptr) const
    {
        for (int id : input.ids) {
            if (id < 0 || id >= vocab_size_) {
                throw ValidationError("token id " + std::to_string(id) + " outside vocabulary");
            }
        }
        if (input.length() > config_.max_positions) {
            if (!config_.windowing) {
                throw UnencodableError("sequence of length " + std::to_string(input.length()) + " exceeds max_positions " +
                                       std::to_string(config_.max_positions) + " and windowing is disabled");
            }
            return windowed_encode(tape, input, params, dropout_rng);
        }
        return encode_span(tape, input.ids, params, dropout_rng);
    }

    /// Encodes overlapping windows independently (window-local positions) and averages
    /// representations where windows overlap.
    [[nodiscard]] ad::Var windowed_encode(ad::Tape& tape, const EncoderInput& input, ParameterStore& params,
                                          Rng* dropout_rng = nullptr) const
    {
        const int length = input.length();
        if (length <= config_.window_size) {
            return encode_span(tape, input.ids, params, dropout_rng);
        }
        std::vector<ad::Var> outs;
        std::vector<ad::Index> starts;
        for (int s : window_starts(length, config_.window_size, config_.window_stride)) {
            const int end = std::min(length, s + config_.window_size);
            std::vector<int> ids(input.ids.begin() + s, input.ids.begin() + end);
            outs.push_back(encode_span(tape, ids, params, dropout_rng));
            starts.push_back(s);
        }
        return ad::overlap_average(outs, starts, length);
    }

    [[nodiscard]] ad::Var encode_span(ad::Tape& tape, const std::vector<int>& ids, ParameterStore& params, Rng* dropout_rng) const
    {
        const auto n = static_cast<ad::Index>(ids.size());
        if (n > config_.max_positions) {
            throw UnencodableError("span longer than max_positions");
        }
        const double rate = dropout_rng != nullptr ? config_.dropout : 0.0;
        auto P = [&](const std::string& name) { return tape.parameter(params.at(name)); };

        std::vector<ad::Index> rows(ids.begin(), ids.end());
        std::vector<ad::Index> positions(static_cast<std::size_t>(n));
        for (ad::Index i = 0; i < n; ++i) {
            positions[static_cast<std::size_t>(i)] = i;
        }
        ad::Var x = ad::add(ad::gather_rows(P("encoder.embed.token"), std::move(rows)),
                            ad::gather_rows(P("encoder.embed.position"), std::move(positions)));
        x = ad::layer_norm(x, P("encoder.embed.ln.gamma"), P("encoder.embed.ln.beta"));
        x = maybe_dropout(x, rate, dropout_rng);

        const int dh = config_.hidden / config_.heads;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
        for (int l = 0; l < config_.layers; ++l) {
            const std::string p = layer_prefix(l);
            auto linear = [&](ad::Var in, const std::string& name) {
                return ad::add_row(ad::matmul(in, P(p + name + ".weight")), P(p + name + ".bias"));
            };
            ad::Var q = linear(x, "attn.q");
            ad::Var k = linear(x, "attn.k");
            ad::Var v = linear(x, "attn.v");
            std::vector<ad::Var> heads;
            heads.reserve(static_cast<std::size_t>(config_.heads));
            for (int h = 0; h < config_.heads; ++h) {
                ad::Var qh = ad::slice_cols(q, h * dh, dh);
                ad::Var kh = ad::slice_cols(k, h * dh, dh);
                ad::Var vh = ad::slice_cols(v, h * dh, dh);
                ad::Var att = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt));
                heads.push_back(ad::matmul(maybe_dropout(att, rate, dropout_rng), vh));
            }
            ad::Var attn = linear(heads.size() == 1 ? heads.front() : ad::concat_cols(heads), "attn.o");
            x = ad::layer_norm(ad::add(x, maybe_dropout(attn, rate, dropout_rng)), P(p + "ln1.gamma"), P(p + "ln1.beta"));
            ad::Var ff = linear(ad::gelu(linear(x, "ffn.in")), "ffn.out");
            x = ad::layer_norm(ad::add(x, maybe_dropout(ff, rate, dropout_rng)), P(p + "ln2.gamma"), P(p + "ln2.beta"));
        }
        return x;
    }

private:
    static std::string layer_prefix(int l) { return "encoder.layer" + std::to_string(l) + "."; }

    static ad::Var maybe_dropout(ad::Var x, double rate, Rng* rng)
    {
        if (rng == nullptr || rate <= 0.0) {
            return x;
        }
        return ad::dropout(x, rate, *rng);
    }

    EncoderConfig config_;
    int vocab_size_ = 0;
};

} // namespace propex
