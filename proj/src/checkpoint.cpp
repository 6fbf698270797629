#include "pgt/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "pgt/errors.hpp"

namespace pgt {

namespace {

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

size_t pgtt_byte_size(const Tensor& t) { return 4 + 4 + 4 + 8 * t.rank() + 8 * t.size(); }

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config, const ParamStore& store) {
  std::ostringstream manifest;
  for (const auto& [k, v] : config.to_kv()) manifest << "config." << k << " = " << v << "\n";
  uint64_t offset = 0;
  for (const auto& [name, t] : store.entries()) {
    manifest << "param." << name << " = " << offset << "\n";
    offset += pgtt_byte_size(t);
  }
  const std::string m = manifest.str();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  out.write("PGTA", 4);
  put_u32(out, 1);
  put_u64(out, m.size());
  out.write(m.data(), static_cast<std::streamsize>(m.size()));
  for (const auto& [name, t] : store.entries()) write_pgtt(out, t);
  if (!out) throw DataError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "PGTA", 4) != 0) throw LoadError("checkpoint: bad magic bytes");
  const uint32_t version = get_u32(in);
  if (version != 1) throw LoadError("checkpoint: unsupported version " + std::to_string(version));
  const uint64_t mlen = get_u64(in);
  std::string manifest(mlen, '\0');
  in.read(manifest.data(), static_cast<std::streamsize>(mlen));
  if (!in) throw LoadError("checkpoint: truncated manifest");

  std::map<std::string, std::string> config_kv;
  std::vector<std::pair<std::string, uint64_t>> param_offsets;
  std::istringstream ms(manifest);
  std::string line;
  while (std::getline(ms, line)) {
    const size_t eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    if (key.rfind("config.", 0) == 0)
      config_kv[key.substr(7)] = value;
    else if (key.rfind("param.", 0) == 0)
      param_offsets.emplace_back(key.substr(6), std::stoull(value));
  }

  Checkpoint ckpt;
  ckpt.config = ModelConfig::from_kv(config_kv);
  const std::streampos blob_start = in.tellg();
  for (const auto& [name, offset] : param_offsets) {
    in.seekg(blob_start + static_cast<std::streamoff>(offset));
    ckpt.params.emplace_back(name, read_pgtt(in));
  }
  return ckpt;
}

void apply_checkpoint(const Checkpoint& ckpt, PgtModel& model) {
  ParamStore& store = model.params();
  for (const auto& [name, value] : ckpt.params) {
    if (!store.contains(name))
      throw LoadError("checkpoint parameter not present in model: " + name);
    Tensor dst = store.at(name);
    if (dst.shape() != value.shape())
      throw LoadError("checkpoint shape mismatch for " + name + ": file has " +
                      value.shape_str() + ", model has " + dst.shape_str());
    std::copy(value.data(), value.data() + value.size(), dst.data());
  }
  for (const auto& [name, t] : store.entries()) {
    (void)t;
    bool found = false;
    for (const auto& [n2, v2] : ckpt.params)
      if (n2 == name) {
        found = true;
        break;
      }
    if (!found) throw LoadError("model parameter missing from checkpoint: " + name);
  }
}

}  // namespace pgt
