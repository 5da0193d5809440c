#pragma once

// Named parameter arrays and the binary checkpoint container.
//
// Checkpoint layout (all integers little-endian):
//   8 bytes   magic "PROPEXCK"
//   u32       format version
//   u64       header length H
//   H bytes   UTF-8 JSON {"meta": {...}, "tensors": [{"name", "rows", "cols"}, ...]}
//   payload   each tensor's row-major IEEE-754 doubles, in header order

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "propex/autograd.hpp"
#include "propex/errors.hpp"
#include "propex/rng.hpp"

namespace propex {

class ParameterStore {
public:
    ad::Parameter& add(const std::string& name, ad::Matrix value)
    {
        auto [it, inserted] = params_.try_emplace(name);
        if (!inserted) {
            throw std::logic_error("duplicate parameter " + name);
        }
        it->second.value = std::move(value);
        it->second.zero_grad();
        return it->second;
    }

    ad::Parameter& add_normal(const std::string& name, ad::Index rows, ad::Index cols, double stddev, Rng& rng)
    {
        ad::Matrix m(rows, cols);
        for (ad::Index i = 0; i < m.size(); ++i) {
            m.data()[i] = stddev * rng.normal();
        }
        return add(name, std::move(m));
    }

    ad::Parameter& add_constant(const std::string& name, ad::Index rows, ad::Index cols, double v)
    {
        return add(name, ad::Matrix::Constant(rows, cols, v));
    }

    [[nodiscard]] ad::Parameter& at(const std::string& name)
    {
        auto it = params_.find(name);
        if (it == params_.end()) {
            throw std::out_of_range("no parameter " + name);
        }
        return it->second;
    }

    [[nodiscard]] const ad::Parameter& at(const std::string& name) const
    {
        auto it = params_.find(name);
        if (it == params_.end()) {
            throw std::out_of_range("no parameter " + name);
        }
        return it->second;
    }

    [[nodiscard]] bool contains(const std::string& name) const { return params_.contains(name); }
    [[nodiscard]] std::size_t size() const noexcept { return params_.size(); }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    void zero_grad()
    {
        for (auto& [_, p] : params_) {
            p.zero_grad();
        }
    }

    [[nodiscard]] double grad_norm() const
    {
        double sq = 0.0;
        for (const auto& [_, p] : params_) {
            if (p.grad.size() != 0) {
                sq += p.grad.squaredNorm();
            }
        }
        return std::sqrt(sq);
    }

    /// Rescales all gradients so their global L2 norm is at most max_norm. Returns the norm before clipping.
    double clip_grad_norm(double max_norm)
    {
        const double norm = grad_norm();
        if (max_norm > 0.0 && norm > max_norm) {
            const double s = max_norm / norm;
            for (auto& [_, p] : params_) {
                p.grad *= s;
            }
        }
        return norm;
    }

    /// Copies values (not gradients) from another store with identical names and shapes.
    void assign_values(const ParameterStore& other)
    {
        for (auto& [name, p] : params_) {
            const auto& src = other.at(name);
            if (src.value.rows() != p.value.rows() || src.value.cols() != p.value.cols()) {
                throw CheckpointError("shape mismatch for parameter " + name);
            }
            p.value = src.value;
        }
    }

    friend bool operator==(const ParameterStore& a, const ParameterStore& b)
    {
        if (a.params_.size() != b.params_.size()) {
            return false;
        }
        for (const auto& [name, p] : a.params_) {
            auto it = b.params_.find(name);
            if (it == b.params_.end() || it->second.value.rows() != p.value.rows() || it->second.value.cols() != p.value.cols()) {
                return false;
            }
            if (std::memcmp(p.value.data(), it->second.value.data(), sizeof(double) * static_cast<std::size_t>(p.value.size())) != 0) {
                return false;
            }
        }
        return true;
    }

private:
    std::map<std::string, ad::Parameter> params_;
};

struct Checkpoint {
    nlohmann::json meta;
    ParameterStore params;
};

namespace checkpoint_detail {

inline constexpr char magic[8] = {'P', 'R', 'O', 'P', 'E', 'X', 'C', 'K'};
inline constexpr std::uint32_t version = 1;

template <class T>
void write_le(std::ostream& out, T v)
{
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes, bytes + sizeof(T));
    }
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T read_le(std::istream& in)
{
    unsigned char bytes[sizeof(T)];
    in.read(reinterpret_cast<char*>(bytes), sizeof(T));
    if (!in) {
        throw CheckpointError("truncated checkpoint");
    }
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes, bytes + sizeof(T));
    }
    T v;
    std::memcpy(&v, bytes, sizeof(T));
    return v;
}

} // namespace checkpoint_detail

inline void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta, const ParameterStore& params)
{
    using namespace checkpoint_detail;
    nlohmann::json header;
    header["meta"] = meta;
    header["tensors"] = nlohmann::json::array();
    for (const auto& [name, p] : params) {
        header["tensors"].push_back({{"name", name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
    }
    const std::string text = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write checkpoint " + path.string());
    }
    out.write(magic, sizeof(magic));
    write_le<std::uint32_t>(out, version);
    write_le<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [_, p] : params) {
        for (ad::Index i = 0; i < p.value.size(); ++i) {
            write_le<double>(out, p.value.data()[i]);
        }
    }
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

[[nodiscard]] inline Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    using namespace checkpoint_detail;
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint " + path.string());
    }
    char got[sizeof(magic)];
    in.read(got, sizeof(got));
    if (!in || std::memcmp(got, magic, sizeof(magic)) != 0) {
        throw CheckpointError(path.string() + " is not a checkpoint");
    }
    if (const auto v = read_le<std::uint32_t>(in); v != version) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(v));
    }
    const auto len = read_le<std::uint64_t>(in);
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) {
        throw CheckpointError("truncated checkpoint header");
    }
    Checkpoint ck;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
    }
    ck.meta = header.at("meta");
    for (const auto& t : header.at("tensors")) {
        ad::Matrix m(t.at("rows").get<ad::Index>(), t.at("cols").get<ad::Index>());
        for (ad::Index i = 0; i < m.size(); ++i) {
            m.data()[i] = read_le<double>(in);
        }
        ck.params.add(t.at("name").get<std::string>(), std::move(m));
    }
    return ck;
}

} // namespace propex
