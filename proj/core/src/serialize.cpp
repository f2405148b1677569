#include "l2r/serialize.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "l2r/errors.hpp"
#include "l2r/rng.hpp"

namespace l2r {

namespace {
constexpr char kMagic[4] = {'L', '2', 'R', 'B'};
constexpr uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "blob format assumes a little-endian host");

template <typename T>
void append_raw(std::vector<uint8_t>& out, const T& v) {
    const auto* p = reinterpret_cast<const uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}
}  // namespace

std::vector<uint8_t> pack_tensors(const std::vector<NamedTensor>& tensors, const json& meta) {
    json manifest;
    manifest["meta"] = meta;
    manifest["tensors"] = json::array();
    for (const auto& nt : tensors)
        manifest["tensors"].push_back({{"name", nt.name}, {"shape", nt.tensor->shape}});
    std::string mtext = manifest.dump();

    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    append_raw(out, kVersion);
    append_raw(out, static_cast<uint64_t>(mtext.size()));
    out.insert(out.end(), mtext.begin(), mtext.end());
    for (const auto& nt : tensors) {
        const auto& d = nt.tensor->data;
        const auto* p = reinterpret_cast<const uint8_t*>(d.data());
        out.insert(out.end(), p, p + d.size() * sizeof(double));
    }
    return out;
}

PackedTensors unpack_tensors(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw ParseError("unpack_tensors: bad magic");
    uint32_t version;
    std::memcpy(&version, bytes.data() + 4, 4);
    if (version != kVersion)
        throw ParseError("unpack_tensors: unsupported version " + std::to_string(version));
    uint64_t mlen;
    std::memcpy(&mlen, bytes.data() + 8, 8);
    if (16 + mlen > bytes.size()) throw ParseError("unpack_tensors: truncated manifest");
    json manifest = json::parse(bytes.begin() + 16, bytes.begin() + 16 + mlen);

    PackedTensors out;
    out.meta = manifest.value("meta", json::object());
    size_t off = 16 + mlen;
    for (const auto& entry : manifest.at("tensors")) {
        std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        int64_t n = 1;
        for (int e : shape) n *= e;
        if (off + n * sizeof(double) > bytes.size())
            throw ParseError("unpack_tensors: truncated blob");
        std::vector<double> data(n);
        std::memcpy(data.data(), bytes.data() + off, n * sizeof(double));
        off += n * sizeof(double);
        out.tensors.push_back({entry.at("name").get<std::string>(),
                               Tensor::from(std::move(shape), std::move(data))});
    }
    return out;
}

void write_file_atomic(const std::string& path, const void* data, size_t len) {
    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw RunError("cannot open for write: " + tmp.string());
        f.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
        if (!f) throw RunError("write failed: " + tmp.string());
    }
    fs::rename(tmp, target);
}

void write_file_atomic(const std::string& path, const std::string& text) {
    write_file_atomic(path, text.data(), text.size());
}

void write_file_atomic(const std::string& path, const std::vector<uint8_t>& bytes) {
    write_file_atomic(path, bytes.data(), bytes.size());
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open: " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open: " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

uint64_t json_hash(const json& j) { return fnv1a64(j.dump()); }

std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ostringstream os;
    for (size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << "\n";
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
        os << "\n";
    }
    write_file_atomic(path, os.str());
}

}  // namespace l2r
