#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "l2r/tensor.hpp"

namespace l2r {

using json = nlohmann::json;

struct NamedTensor {
    std::string name;
    TensorPtr tensor;
};

// Manifest + blob container: "L2RB" magic, u32 version, u64 manifest length,
// JSON manifest (tensor names and shapes in order, plus free-form "meta"),
// then all tensor payloads as little-endian float64 in manifest order.
std::vector<uint8_t> pack_tensors(const std::vector<NamedTensor>& tensors,
                                  const json& meta = json::object());

struct PackedTensors {
    json meta;
    std::vector<NamedTensor> tensors;
};
PackedTensors unpack_tensors(const std::vector<uint8_t>& bytes);

void write_file_atomic(const std::string& path, const void* data, size_t len);
void write_file_atomic(const std::string& path, const std::string& text);
void write_file_atomic(const std::string& path, const std::vector<uint8_t>& bytes);
std::vector<uint8_t> read_file(const std::string& path);
std::string read_text_file(const std::string& path);

// canonical (sorted-key, no-whitespace) dump hashed with FNV-1a
uint64_t json_hash(const json& j);
std::string hash_hex(uint64_t h);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace l2r
