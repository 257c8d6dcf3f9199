#pragma once

#include "ncd/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace ncd {

/// Named tensors plus free-form metadata. On disk:
///
///   bytes 0..7    magic "NCDCKPT1"
///   bytes 8..15   header length H, uint64 little-endian
///   next H bytes  UTF-8 JSON header {"step", "meta", "tensors": [{"name","rows","cols"}...]}
///   payload       each tensor's rows·cols values as IEEE-754 float64 little-endian,
///                 row-major, concatenated in header order
///
/// See docs/checkpoint-format.md.
struct Checkpoint {
    std::uint64_t step = 0;
    nlohmann::json meta = nlohmann::json::object();
    std::vector<std::pair<std::string, Tensor>> tensors;

    void add(std::string name, Tensor t) { tensors.emplace_back(std::move(name), std::move(t)); }
    bool has(const std::string& name) const;
    /// Throws std::out_of_range when absent.
    const Tensor& get(const std::string& name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
/// Throws ParseError on a bad magic, truncated payload or malformed header.
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace ncd
