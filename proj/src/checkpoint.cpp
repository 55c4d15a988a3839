#include "ktts/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace ktts::train {

namespace {

constexpr char kMagic[4] = {'K', 'T', 'T', 'S'};

void put_u32(std::ostream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = char(v >> (8 * i) & 0xff);
  out.write(b, 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = char(v >> (8 * i) & 0xff);
  out.write(b, 8);
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t take_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw CheckpointError(path + ": truncated checkpoint");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

uint64_t take_u64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw CheckpointError(path + ": truncated checkpoint");
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = v << 8 | b[i];
  return v;
}

std::string take_string(std::istream& in, const std::string& path) {
  uint32_t n = take_u32(in, path);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw CheckpointError(path + ": truncated checkpoint");
  return s;
}

void put_tensor(std::ostream& out, const std::string& name, const nets::Tensor& t) {
  put_string(out, name);
  put_u32(out, static_cast<uint32_t>(t.dims.size()));
  for (Index d : t.dims) put_u64(out, static_cast<uint64_t>(d));
  out.put('\0');  // dtype tag 0: float64
  // Payload in logical row-major order.
  const Index d0 = t.dims[0];
  const Index d1 = t.dims.size() > 1 ? t.dims[1] : 1;
  const Index d2 = t.dims.size() > 2 ? t.dims[2] : 1;
  std::vector<char> buf(static_cast<size_t>(t.data.size()) * 8);
  size_t at = 0;
  for (Index i = 0; i < d0; ++i)
    for (Index j = 0; j < d1; ++j)
      for (Index k = 0; k < d2; ++k) {
        Scalar v = t.data(i, k * d1 + j);
        std::memcpy(buf.data() + at, &v, 8);
        at += 8;
      }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

nets::Tensor take_tensor(std::istream& in, const std::string& path, std::string& name) {
  name = take_string(in, path);
  uint32_t rank = take_u32(in, path);
  if (rank < 1 || rank > 3)
    throw CheckpointError(path + ": tensor '" + name + "' has unsupported rank " +
                          std::to_string(rank));
  std::vector<Index> dims(rank);
  for (uint32_t i = 0; i < rank; ++i) dims[i] = static_cast<Index>(take_u64(in, path));
  int dtype = in.get();
  if (dtype == EOF) throw CheckpointError(path + ": truncated checkpoint");
  if (dtype != 0)
    throw CheckpointError(path + ": tensor '" + name + "' has unsupported dtype tag " +
                          std::to_string(dtype));
  nets::Tensor t = nets::Tensor::zeros(dims);
  const Index d0 = dims[0];
  const Index d1 = rank > 1 ? dims[1] : 1;
  const Index d2 = rank > 2 ? dims[2] : 1;
  std::vector<char> buf(static_cast<size_t>(t.data.size()) * 8);
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!in) throw CheckpointError(path + ": truncated tensor payload for '" + name + "'");
  size_t at = 0;
  for (Index i = 0; i < d0; ++i)
    for (Index j = 0; j < d1; ++j)
      for (Index k = 0; k < d2; ++k) {
        Scalar v;
        std::memcpy(&v, buf.data() + at, 8);
        t.data(i, k * d1 + j) = v;
        at += 8;
      }
  return t;
}

}  // namespace

nets::ParameterStore& Checkpoint::section(const std::string& name) {
  for (auto& [n, s] : sections)
    if (n == name) return s;
  throw CheckpointError("checkpoint has no section '" + name + "'");
}

const nets::ParameterStore& Checkpoint::section(const std::string& name) const {
  for (const auto& [n, s] : sections)
    if (n == name) return s;
  throw CheckpointError("checkpoint has no section '" + name + "'");
}

bool Checkpoint::has_section(const std::string& name) const {
  for (const auto& [n, s] : sections)
    if (n == name) return true;
  return false;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(tmp + ": cannot open for writing");
    out.write(kMagic, 4);
    put_u32(out, c.version);
    put_string(out, c.config_text);
    put_u64(out, c.global_step);
    put_u32(out, static_cast<uint32_t>(c.sections.size()));
    for (const auto& [name, store] : c.sections) {
      put_string(out, name);
      put_u32(out, static_cast<uint32_t>(store.size()));
      for (const auto& tname : store.names()) put_tensor(out, tname, store.at(tname));
    }
    if (!out) throw CheckpointError(tmp + ": write failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw CheckpointError(path + ": rename from temp file failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(path + ": cannot open");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError(path + ": bad magic, not a KTTS checkpoint");
  Checkpoint c;
  c.version = take_u32(in, path);
  if (c.version != kCheckpointVersion)
    throw CheckpointError(path + ": unsupported version " + std::to_string(c.version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  c.config_text = take_string(in, path);
  c.global_step = take_u64(in, path);
  uint32_t n_sections = take_u32(in, path);
  for (uint32_t s = 0; s < n_sections; ++s) {
    std::string section_name = take_string(in, path);
    uint32_t n_tensors = take_u32(in, path);
    nets::ParameterStore store;
    for (uint32_t i = 0; i < n_tensors; ++i) {
      std::string tname;
      nets::Tensor t = take_tensor(in, path, tname);
      store.add(tname, std::move(t));
    }
    c.sections.emplace_back(std::move(section_name), std::move(store));
  }
  return c;
}

}  // namespace ktts::train
