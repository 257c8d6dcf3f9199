#include "ncd/checkpoint.hpp"

#include "ncd/graph.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ncd {

namespace {

constexpr char kMagic[8] = {'N', 'C', 'D', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::string& out, std::uint64_t x) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((x >> (8 * b)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
    std::uint64_t x = 0;
    for (int b = 0; b < 8; ++b) x |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + b])) << (8 * b);
    return x;
}

} // namespace

bool Checkpoint::has(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return true;
    return false;
}

const Tensor& Checkpoint::get(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw std::out_of_range("checkpoint has no tensor '" + name + "'");
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
    nlohmann::json header;
    header["step"] = ckpt.step;
    header["meta"] = ckpt.meta;
    header["tensors"] = nlohmann::json::array();
    for (const auto& [name, t] : ckpt.tensors)
        header["tensors"].push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
    const std::string text = header.dump();

    std::string out(kMagic, sizeof kMagic);
    put_u64(out, text.size());
    out += text;
    for (const auto& [name, t] : ckpt.tensors)
        for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
        throw ParseError("checkpoint: bad magic");
    const std::uint64_t hlen = get_u64(bytes, 8);
    if (hlen > bytes.size() - 16) throw ParseError("checkpoint: truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(16, hlen));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
    Checkpoint ckpt;
    std::size_t pos = 16 + hlen;
    try {
        ckpt.step = header.at("step").get<std::uint64_t>();
        ckpt.meta = header.at("meta");
        for (const auto& entry : header.at("tensors")) {
            const auto rows = entry.at("rows").get<std::size_t>();
            const auto cols = entry.at("cols").get<std::size_t>();
            if ((bytes.size() - pos) / 8 < rows * cols) throw ParseError("checkpoint: truncated payload");
            std::vector<double> data(rows * cols);
            for (double& v : data) {
                v = std::bit_cast<double>(get_u64(bytes, pos));
                pos += 8;
            }
            ckpt.add(entry.at("name").get<std::string>(), Tensor(rows, cols, std::move(data)));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
    if (pos != bytes.size()) throw ParseError("checkpoint: trailing bytes after payload");
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    const std::string bytes = encode_checkpoint(ckpt);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return decode_checkpoint(ss.str());
}

} // namespace ncd
