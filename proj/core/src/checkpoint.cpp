#include "svf/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

#include <json.hpp>

namespace svf {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'V', 'F', 'C', 'K', 'P', 'T', '1'};

struct FileCloser {
  void operator()(FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

void write_all(FILE* f, const void* data, size_t n, const std::string& path) {
  if (n && std::fwrite(data, 1, n, f) != n)
    throw std::runtime_error("short write: " + path);
}

void read_all(FILE* f, void* data, size_t n, const std::string& path) {
  if (n && std::fread(data, 1, n, f) != n)
    throw std::runtime_error("short read: " + path);
}

} // namespace

void save_checkpoint(const std::string& path, const ParameterStore& store,
                     const std::vector<ExtraBlob>& extras, const CheckpointMeta& meta) {
  json manifest;
  manifest["format"] = 1;
  manifest["step"] = meta.step;
  manifest["meta"] = meta.meta_json.empty() ? json::object() : json::parse(meta.meta_json);

  uint64_t offset = 0;
  json tensors = json::array();
  for (int i = 0; i < store.count(); ++i) {
    const Tensor& t = store.tensor(i);
    uint64_t nbytes = static_cast<uint64_t>(t.size()) * sizeof(double);
    for (const char* kind : {"value", "adam_m", "adam_v"}) {
      json e;
      e["name"] = t.name;
      e["kind"] = kind;
      e["dtype"] = "f64";
      e["shape"] = t.shape;
      e["offset"] = offset;
      e["nbytes"] = nbytes;
      tensors.push_back(e);
      offset += nbytes;
    }
  }
  manifest["tensors"] = std::move(tensors);

  json extras_json = json::array();
  for (const ExtraBlob& b : extras) {
    json e;
    e["name"] = b.name;
    e["dtype"] = b.dtype;
    e["shape"] = b.shape;
    e["offset"] = offset;
    e["nbytes"] = b.bytes.size();
    extras_json.push_back(e);
    offset += b.bytes.size();
  }
  manifest["extras"] = std::move(extras_json);

  std::string mtext = manifest.dump();
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  write_all(f.get(), kMagic, 8, path);
  uint64_t mlen = mtext.size();
  write_all(f.get(), &mlen, sizeof(mlen), path);
  write_all(f.get(), mtext.data(), mtext.size(), path);
  for (int i = 0; i < store.count(); ++i) {
    const Tensor& t = store.tensor(i);
    size_t nbytes = static_cast<size_t>(t.size()) * sizeof(double);
    write_all(f.get(), t.value.data(), nbytes, path);
    write_all(f.get(), t.adam_m.data(), nbytes, path);
    write_all(f.get(), t.adam_v.data(), nbytes, path);
  }
  for (const ExtraBlob& b : extras) write_all(f.get(), b.bytes.data(), b.bytes.size(), path);
}

std::string read_checkpoint_manifest(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open: " + path);
  char magic[8];
  read_all(f.get(), magic, 8, path);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  uint64_t mlen = 0;
  read_all(f.get(), &mlen, sizeof(mlen), path);
  if (mlen > (1ull << 30)) throw std::runtime_error("oversized manifest: " + path);
  std::string mtext(mlen, '\0');
  read_all(f.get(), mtext.data(), mlen, path);
  return mtext;
}

CheckpointMeta load_checkpoint(const std::string& path, ParameterStore& store,
                               std::map<std::string, ExtraBlob>& extras_out) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open: " + path);
  char magic[8];
  read_all(f.get(), magic, 8, path);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  uint64_t mlen = 0;
  read_all(f.get(), &mlen, sizeof(mlen), path);
  if (mlen > (1ull << 30)) throw std::runtime_error("oversized manifest: " + path);
  std::string mtext(mlen, '\0');
  read_all(f.get(), mtext.data(), mlen, path);
  json manifest = json::parse(mtext);

  uint64_t blob_base = 8 + sizeof(uint64_t) + mlen;
  auto read_at = [&](uint64_t offset, void* dst, size_t nbytes) {
    if (std::fseek(f.get(), static_cast<long>(blob_base + offset), SEEK_SET) != 0)
      throw std::runtime_error("seek failed: " + path);
    read_all(f.get(), dst, nbytes, path);
  };

  for (const json& e : manifest.at("tensors")) {
    std::string name = e.at("name");
    TensorId id = store.find(name);
    if (id == kInvalidTensor)
      throw std::runtime_error("checkpoint tensor not in model: " + name);
    Tensor& t = store.tensor(id);
    std::vector<int64_t> shape = e.at("shape").get<std::vector<int64_t>>();
    if (shape != t.shape)
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    uint64_t nbytes = e.at("nbytes");
    if (nbytes != static_cast<uint64_t>(t.size()) * sizeof(double))
      throw std::runtime_error("checkpoint size mismatch for " + name);
    std::string kind = e.at("kind");
    double* dst = kind == "value" ? t.value.data()
                : kind == "adam_m" ? t.adam_m.data()
                : kind == "adam_v" ? t.adam_v.data() : nullptr;
    if (!dst) throw std::runtime_error("unknown tensor kind in checkpoint: " + kind);
    read_at(e.at("offset"), dst, nbytes);
  }

  extras_out.clear();
  for (const json& e : manifest.at("extras")) {
    ExtraBlob b;
    b.name = e.at("name");
    b.dtype = e.at("dtype");
    b.shape = e.at("shape").get<std::vector<int64_t>>();
    b.bytes.resize(e.at("nbytes").get<uint64_t>());
    read_at(e.at("offset"), b.bytes.data(), b.bytes.size());
    extras_out[b.name] = std::move(b);
  }

  CheckpointMeta meta;
  meta.step = manifest.at("step");
  meta.meta_json = manifest.at("meta").dump();
  return meta;
}

} // namespace svf
