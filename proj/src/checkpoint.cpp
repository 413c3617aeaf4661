// SPDX-License-Identifier: Apache-2.0
#include "checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ald {

namespace {
constexpr uint32_t kMagic = 0x414c4443;  // "ALDC"
constexpr uint32_t kFormatVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated stream");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}
}  // namespace

void save_tensors(std::ostream& os, const NamedTensors& items,
                  const std::map<std::string, std::string>& meta) {
  nlohmann::json header;
  header["version"] = kFormatVersion;
  header["dtype"] = "f32le";
  header["meta"] = meta;
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [name, t] : items) {
    nlohmann::json e;
    e["name"] = name;
    std::vector<int64_t> dims;
    for (int i = 0; i < t.rank(); ++i) dims.push_back(t.shape()[i]);
    e["shape"] = dims;
    list.push_back(e);
  }
  header["tensors"] = list;
  std::string hs = header.dump();
  write_u32(os, kMagic);
  write_u32(os, static_cast<uint32_t>(hs.size()));
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : items) {
    static_assert(sizeof(float) == 4);
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

NamedTensors load_tensors(std::istream& is, std::map<std::string, std::string>* meta) {
  if (read_u32(is) != kMagic) throw std::runtime_error("checkpoint: bad magic");
  uint32_t hlen = read_u32(is);
  std::string hs(hlen, '\0');
  is.read(hs.data(), hlen);
  if (!is) throw std::runtime_error("checkpoint: truncated header");
  nlohmann::json header = nlohmann::json::parse(hs);
  if (header.at("version").get<uint32_t>() != kFormatVersion)
    throw std::runtime_error("checkpoint: unsupported format version");
  if (meta) *meta = header.value("meta", std::map<std::string, std::string>{});
  NamedTensors out;
  for (const auto& e : header.at("tensors")) {
    Shape s;
    const auto& dims = e.at("shape");
    s.rank = static_cast<int>(dims.size());
    if (s.rank > 4) throw std::runtime_error("checkpoint: rank > 4 unsupported");
    for (int i = 0; i < s.rank; ++i) s[i] = dims[static_cast<size_t>(i)].get<int64_t>();
    Tensor t(s);
    is.read(reinterpret_cast<char*>(t.mutable_data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!is) throw std::runtime_error("checkpoint: truncated payload");
    out.emplace_back(e.at("name").get<std::string>(), std::move(t));
  }
  return out;
}

void save_checkpoint(const std::string& path, const NamedTensors& items,
                     const std::map<std::string, std::string>& meta) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  save_tensors(f, items, meta);
}

NamedTensors load_checkpoint(const std::string& path, std::map<std::string, std::string>* meta) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  return load_tensors(f, meta);
}

std::string serialize_tensors(const NamedTensors& items,
                              const std::map<std::string, std::string>& meta) {
  std::ostringstream ss(std::ios::binary);
  save_tensors(ss, items, meta);
  return ss.str();
}

NamedTensors deserialize_tensors(const std::string& bytes, std::map<std::string, std::string>* meta) {
  std::istringstream ss(bytes, std::ios::binary);
  return load_tensors(ss, meta);
}

}  // namespace ald
