#pragma once

// Instances, datasets, JSONL ingestion, the synthetic corpus generator and the
// input perturbations used by the training objectives and the evaluator.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "propex/errors.hpp"
#include "propex/rng.hpp"

namespace propex {

using Tokens = std::vector<std::string>;
using Mask = std::vector<int>;

namespace tokens {
inline constexpr std::string_view unk = "[UNK]";
inline constexpr std::string_view mask = "[MASK]";
inline constexpr std::string_view query_marker = "[QRY]";
inline constexpr std::string_view sentence_marker = "[SNT]";
inline constexpr std::string_view separator = "[SEP]";
inline constexpr std::size_t reserved_count = 5;

[[nodiscard]] inline std::vector<std::string> reserved()
{
    return {std::string(unk), std::string(mask), std::string(query_marker), std::string(sentence_marker), std::string(separator)};
}
} // namespace tokens

struct Instance {
    std::string id;
    Tokens query;
    std::optional<Tokens> answer;
    std::vector<Tokens> sentences;
    int label = 0;
    std::vector<Mask> rationales;

    [[nodiscard]] std::size_t num_sentences() const noexcept { return sentences.size(); }

    [[nodiscard]] std::size_t sentence_token_count() const noexcept
    {
        std::size_t n = 0;
        for (const auto& s : sentences) {
            n += s.size();
        }
        return n;
    }

    friend bool operator==(const Instance&, const Instance&) = default;
};

struct Dataset {
    std::string name;
    int num_classes = 2;
    std::map<std::string, std::vector<Instance>> splits;
    bool multi_gold = false;

    [[nodiscard]] const std::vector<Instance>& split(const std::string& key) const
    {
        auto it = splits.find(key);
        if (it == splits.end()) {
            throw ValidationError("dataset '" + name + "' has no split '" + key + "'");
        }
        return it->second;
    }

    [[nodiscard]] bool has_split(const std::string& key) const { return splits.contains(key); }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

[[nodiscard]] inline Tokens tokenize(std::string_view text)
{
    Tokens out;
    std::istringstream in{std::string(text)};
    std::string tok;
    while (in >> tok) {
        out.push_back(tok);
    }
    return out;
}

[[nodiscard]] inline std::string detokenize(const Tokens& toks)
{
    std::string out;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += toks[i];
    }
    return out;
}

/// Checks the structural invariants of one instance against the class count.
inline void validate(const Instance& inst, int num_classes)
{
    if (inst.sentences.empty()) {
        throw ValidationError("instance '" + inst.id + "': no sentences");
    }
    if (inst.label < 0 || inst.label >= num_classes) {
        throw ValidationError("instance '" + inst.id + "': label " + std::to_string(inst.label) + " outside [0, " +
                              std::to_string(num_classes) + ")");
    }
    for (const auto& r : inst.rationales) {
        if (r.size() != inst.sentences.size()) {
            throw ValidationError("instance '" + inst.id + "': rationale length " + std::to_string(r.size()) + " != " +
                                  std::to_string(inst.sentences.size()) + " sentences");
        }
        for (int v : r) {
            if (v != 0 && v != 1) {
                throw ValidationError("instance '" + inst.id + "': rationale entries must be 0 or 1");
            }
        }
    }
}

// ---------------------------------------------------------------- JSONL

[[nodiscard]] inline nlohmann::ordered_json to_json(const Instance& inst)
{
    nlohmann::ordered_json j;
    j["id"] = inst.id;
    j["query"] = detokenize(inst.query);
    j["answer"] = inst.answer ? nlohmann::ordered_json(detokenize(*inst.answer)) : nlohmann::ordered_json(nullptr);
    auto sents = nlohmann::ordered_json::array();
    for (const auto& s : inst.sentences) {
        sents.push_back(detokenize(s));
    }
    j["sentences"] = std::move(sents);
    j["label"] = inst.label;
    j["rationales"] = inst.rationales;
    return j;
}

[[nodiscard]] inline Instance instance_from_json(const nlohmann::json& j)
{
    Instance inst;
    inst.id = j.at("id").get<std::string>();
    inst.query = tokenize(j.at("query").get<std::string>());
    if (j.contains("answer") && !j.at("answer").is_null()) {
        inst.answer = tokenize(j.at("answer").get<std::string>());
    }
    for (const auto& s : j.at("sentences")) {
        inst.sentences.push_back(tokenize(s.get<std::string>()));
    }
    inst.label = j.at("label").get<int>();
    inst.rationales = j.at("rationales").get<std::vector<Mask>>();
    return inst;
}

/// Reads one JSONL file into a single-split dataset. Blank lines are skipped.
[[nodiscard]] inline Dataset load_jsonl(const std::filesystem::path& path, int num_classes, const std::string& split_name = "data")
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    Dataset ds;
    ds.name = path.stem().string();
    ds.num_classes = num_classes;
    auto& out = ds.splits[split_name];
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        Instance inst;
        try {
            inst = instance_from_json(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(lineno, e.what());
        }
        validate(inst, num_classes);
        ds.multi_gold = ds.multi_gold || inst.rationales.size() > 1;
        out.push_back(std::move(inst));
    }
    return ds;
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<Instance>& instances)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    for (const auto& inst : instances) {
        out << to_json(inst).dump() << '\n';
    }
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

/// Loads train/validation/test JSONL files found in a directory.
[[nodiscard]] inline Dataset load_dataset_dir(const std::filesystem::path& dir, int num_classes)
{
    Dataset ds;
    ds.name = dir.filename().string();
    ds.num_classes = num_classes;
    for (const char* split : {"train", "validation", "test"}) {
        const auto file = dir / (std::string(split) + ".jsonl");
        if (!std::filesystem::exists(file)) {
            continue;
        }
        auto part = load_jsonl(file, num_classes, split);
        ds.multi_gold = ds.multi_gold || part.multi_gold;
        ds.splits[split] = std::move(part.splits[split]);
    }
    if (ds.splits.empty()) {
        throw IoError("no train/validation/test .jsonl files in " + dir.string());
    }
    return ds;
}

// ---------------------------------------------------------------- synthetic corpus

/// Parameters of the synthetic corpus. Each instance has a query key token; rationale
/// sentences pair the key with the indicator token of the label, distractor sentences
/// pair it with a random filler token.
struct SyntheticSpec {
    int vocab_size = 64;
    int num_classes = 2;
    int num_keys = 4;
    int min_sentences = 6;
    int max_sentences = 6;
    int min_rationale = 1;
    int max_rationale = 2;
    int min_sentence_tokens = 3;
    int max_sentence_tokens = 5;
    std::map<std::string, int> instances_per_split{{"train", 500}, {"validation", 100}, {"test", 100}};
    std::uint64_t seed = 7;

    [[nodiscard]] int filler_count() const { return vocab_size - static_cast<int>(tokens::reserved_count) - num_classes - num_keys; }

    void validate() const
    {
        if (num_classes < 2) {
            throw ValidationError("synthetic: num_classes must be >= 2");
        }
        if (num_keys < 1) {
            throw ValidationError("synthetic: num_keys must be >= 1");
        }
        if (filler_count() < 1) {
            throw ValidationError("synthetic: vocab_size too small for reserved, indicator and key tokens");
        }
        if (min_sentences < 1 || max_sentences < min_sentences) {
            throw ValidationError("synthetic: bad sentence range");
        }
        if (min_rationale < 1 || max_rationale < min_rationale || max_rationale > min_sentences) {
            throw ValidationError("synthetic: rationale range must lie within [1, min_sentences]");
        }
        if (min_sentence_tokens < 2 || max_sentence_tokens < min_sentence_tokens) {
            throw ValidationError("synthetic: sentences need at least 2 tokens");
        }
        for (const auto& [name, n] : instances_per_split) {
            if (n < 0) {
                throw ValidationError("synthetic: negative size for split " + name);
            }
        }
    }

    friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

namespace synthetic {

[[nodiscard]] inline std::string indicator(int c) { return "c" + std::to_string(c); }
[[nodiscard]] inline std::string key(int k) { return "k" + std::to_string(k); }
[[nodiscard]] inline std::string filler(int f) { return "w" + std::to_string(f); }

/// Label implied by the indicator tokens inside the marked sentences, or -1 if absent or ambiguous.
[[nodiscard]] inline int label_from_rationale(const Instance& inst, const Mask& rationale, int num_classes)
{
    int found = -1;
    for (std::size_t j = 0; j < inst.sentences.size(); ++j) {
        if (rationale[j] == 0) {
            continue;
        }
        for (const auto& tok : inst.sentences[j]) {
            for (int c = 0; c < num_classes; ++c) {
                if (tok == indicator(c)) {
                    if (found != -1 && found != c) {
                        return -1;
                    }
                    found = c;
                }
            }
        }
    }
    return found;
}

inline std::uint64_t name_hash(std::string_view s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : s) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace synthetic

/// Deterministic under spec.seed. Labels and query keys are assigned round-robin so every
/// key co-occurs equally often with every label; instance order is then shuffled.
[[nodiscard]] inline Dataset generate_synthetic(const SyntheticSpec& spec)
{
    spec.validate();
    Dataset ds;
    ds.name = "synthetic";
    ds.num_classes = spec.num_classes;
    const Rng root(spec.seed);
    const int fillers = spec.filler_count();
    for (const auto& [split, count] : spec.instances_per_split) {
        Rng rng = root.derive(synthetic::name_hash(split));
        std::vector<Instance> items;
        items.reserve(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i) {
            Instance inst;
            inst.id = split + "-" + std::to_string(i);
            inst.label = i % spec.num_classes;
            const int key = (i / spec.num_classes) % spec.num_keys;
            const std::string key_tok = synthetic::key(key);
            inst.query = {key_tok, synthetic::filler(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(fillers))))};

            const int s = rng.uniform_range(spec.min_sentences, spec.max_sentences);
            const int r = rng.uniform_range(spec.min_rationale, spec.max_rationale);
            Mask rationale(static_cast<std::size_t>(s), 0);
            for (auto pos : rng.sample_without_replacement(static_cast<std::size_t>(s), static_cast<std::size_t>(r))) {
                rationale[pos] = 1;
            }
            for (int j = 0; j < s; ++j) {
                const int len = rng.uniform_range(spec.min_sentence_tokens, spec.max_sentence_tokens);
                Tokens sent;
                sent.push_back(key_tok);
                if (rationale[static_cast<std::size_t>(j)] == 1) {
                    sent.push_back(synthetic::indicator(inst.label));
                } else {
                    sent.push_back(synthetic::filler(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(fillers)))));
                }
                for (int t = 2; t < len; ++t) {
                    sent.push_back(synthetic::filler(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(fillers)))));
                }
                rng.shuffle(sent);
                inst.sentences.push_back(std::move(sent));
            }
            inst.rationales.push_back(std::move(rationale));
            items.push_back(std::move(inst));
        }
        rng.shuffle(items);
        ds.splits[split] = std::move(items);
    }
    return ds;
}

// ---------------------------------------------------------------- perturbations

/// Replaces K distinct sentence tokens, chosen uniformly, by the mask token. Query and
/// answer are never touched. K larger than the number of sentence tokens is clamped.
[[nodiscard]] inline Instance mask_random_words(const Instance& inst, std::size_t k, Rng& rng)
{
    const std::size_t total = inst.sentence_token_count();
    if (k > total) {
        warn("mask_random_words: K=" + std::to_string(k) + " exceeds " + std::to_string(total) + " sentence tokens in '" +
             inst.id + "'; masking all");
        k = total;
    }
    Instance out = inst;
    auto positions = rng.sample_without_replacement(total, k);
    std::sort(positions.begin(), positions.end());
    std::size_t sentence = 0;
    std::size_t offset = 0;
    for (std::size_t flat : positions) {
        while (flat >= offset + out.sentences[sentence].size()) {
            offset += out.sentences[sentence].size();
            ++sentence;
        }
        out.sentences[sentence][flat - offset] = std::string(tokens::mask);
    }
    return out;
}

/// Masks every token of each sentence j with keep[j] == 0; sentence count and lengths are preserved.
[[nodiscard]] inline Instance mask_sentences(const Instance& inst, const Mask& keep)
{
    if (keep.size() != inst.sentences.size()) {
        throw ValidationError("mask_sentences: keep has length " + std::to_string(keep.size()) + " but instance '" + inst.id +
                              "' has " + std::to_string(inst.sentences.size()) + " sentences");
    }
    Instance out = inst;
    for (std::size_t j = 0; j < keep.size(); ++j) {
        if (keep[j] == 0) {
            std::fill(out.sentences[j].begin(), out.sentences[j].end(), std::string(tokens::mask));
        }
    }
    return out;
}

[[nodiscard]] inline Mask complement(const Mask& m)
{
    Mask out(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        out[i] = m[i] == 0 ? 1 : 0;
    }
    return out;
}

} // namespace propex
