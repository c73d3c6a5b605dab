// SPDX-License-Identifier: Apache-2.0
#include "trimodal/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace trimodal {

namespace {

constexpr char kMagic[4] = {'T', 'M', 'C', 'K'};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
}

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::vector<uint8_t> bytes;
  bytes.insert(bytes.end(), kMagic, kMagic + 4);
  put_u32(bytes, static_cast<uint32_t>(ck.metadata_json.size()));
  bytes.insert(bytes.end(), ck.metadata_json.begin(), ck.metadata_json.end());
  put_u32(bytes, static_cast<uint32_t>(ck.tensors.size()));
  for (const auto& [name, tensor] : ck.tensors) {
    put_u32(bytes, static_cast<uint32_t>(name.size()));
    bytes.insert(bytes.end(), name.begin(), name.end());
    append_blob_bytes(bytes, tensor, Dtype::f64);  // resume must be bit-exact
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("short write on checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path);
  f.seekg(0, std::ios::end);
  std::vector<uint8_t> bytes(static_cast<size_t>(f.tellg()));
  f.seekg(0);
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("short read on checkpoint " + path);

  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  size_t off = 4;
  uint32_t meta_len = get_u32(bytes.data() + off);
  off += 4;
  if (off + meta_len > bytes.size()) throw std::runtime_error("truncated checkpoint metadata");
  Checkpoint ck;
  ck.metadata_json.assign(reinterpret_cast<const char*>(bytes.data() + off), meta_len);
  off += meta_len;
  if (off + 4 > bytes.size()) throw std::runtime_error("truncated checkpoint");
  uint32_t count = get_u32(bytes.data() + off);
  off += 4;
  for (uint32_t i = 0; i < count; ++i) {
    if (off + 4 > bytes.size()) throw std::runtime_error("truncated checkpoint entry");
    uint32_t name_len = get_u32(bytes.data() + off);
    off += 4;
    if (off + name_len > bytes.size()) throw std::runtime_error("truncated checkpoint name");
    std::string name(reinterpret_cast<const char*>(bytes.data() + off), name_len);
    off += name_len;
    ck.tensors.emplace(std::move(name), parse_blob_bytes(bytes.data(), bytes.size(), off));
  }
  return ck;
}

}  // namespace trimodal
