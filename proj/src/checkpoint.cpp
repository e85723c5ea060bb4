#include "classrecon/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "classrecon/errors.hpp"

namespace classrecon {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format is little-endian");

constexpr char kMagic[8] = {'C', 'R', 'C', 'K', 'P', 'T', '0', '1'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string take(size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void read_floats(float* dst, size_t n) {
    need(n * sizeof(float));
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(size_t n) const {
    if (pos_ + n > bytes_.size()) throw ConfigError("checkpoint truncated");
  }
  const std::string& bytes_;
  size_t pos_ = 0;
};

}  // namespace

ModelCheckpoint ModelCheckpoint::from_module(const torch::nn::Module& module,
                                             std::map<std::string, std::string> metadata) {
  ModelCheckpoint ckpt;
  ckpt.metadata_ = std::move(metadata);
  for (const auto& p : module.named_parameters(/*recurse=*/true)) ckpt.add(p.key(), p.value());
  for (const auto& b : module.named_buffers(/*recurse=*/true)) ckpt.add(b.key(), b.value());
  return ckpt;
}

void ModelCheckpoint::load_into(torch::nn::Module& module) const {
  torch::NoGradGuard no_grad;
  auto assign = [&](const std::string& name, torch::Tensor& target) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("checkpoint has no entry '" + name + "'");
    if (target.sizes().vec() != it->second.shape) {
      throw ConfigError("checkpoint entry '" + name + "' has mismatched shape");
    }
    target.copy_(tensor(name).to(target.dtype()));
  };
  size_t used = 0;
  for (auto& p : module.named_parameters(true)) {
    assign(p.key(), p.value());
    ++used;
  }
  for (auto& b : module.named_buffers(true)) {
    assign(b.key(), b.value());
    ++used;
  }
  if (used != entries_.size()) {
    throw ConfigError("checkpoint has " + std::to_string(entries_.size()) + " entries, module expects " +
                      std::to_string(used));
  }
}

void ModelCheckpoint::add(const std::string& name, const torch::Tensor& value) {
  if (entries_.count(name)) throw ConfigError("duplicate checkpoint entry '" + name + "'");
  auto t = value.detach().to(torch::kFloat32).contiguous();
  Entry e;
  e.shape = t.sizes().vec();
  e.values.assign(t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
  entries_.emplace(name, std::move(e));
}

torch::Tensor ModelCheckpoint::tensor(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("checkpoint has no entry '" + name + "'");
  const auto& e = it->second;
  return torch::from_blob(const_cast<float*>(e.values.data()), e.shape, torch::kFloat32).clone();
}

const std::string& ModelCheckpoint::meta(const std::string& key) const {
  auto it = metadata_.find(key);
  if (it == metadata_.end()) throw ConfigError("checkpoint metadata lacks '" + key + "'");
  return it->second;
}

int64_t ModelCheckpoint::meta_int(const std::string& key) const { return std::stoll(meta(key)); }
double ModelCheckpoint::meta_double(const std::string& key) const { return std::stod(meta(key)); }

std::string ModelCheckpoint::serialize() const {
  std::string out(kMagic, sizeof kMagic);
  put<uint32_t>(out, kVersion);
  std::string meta_text;
  for (const auto& [k, v] : metadata_) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ConfigError("metadata key/value may not contain '=' in keys or newlines: " + k);
    }
    meta_text += k + "=" + v + "\n";
  }
  put<uint64_t>(out, meta_text.size());
  out += meta_text;
  put<uint64_t>(out, entries_.size());
  for (const auto& [name, e] : entries_) {
    put<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out += name;
    put<uint32_t>(out, static_cast<uint32_t>(e.shape.size()));
    for (int64_t d : e.shape) put<int64_t>(out, d);
    out.append(reinterpret_cast<const char*>(e.values.data()), e.values.size() * sizeof(float));
  }
  return out;
}

ModelCheckpoint ModelCheckpoint::deserialize(const std::string& bytes) {
  Reader in(bytes);
  if (in.take(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) {
    throw ConfigError("not a checkpoint file");
  }
  const auto version = in.get<uint32_t>();
  if (version != kVersion) {
    throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  }
  ModelCheckpoint ckpt;
  std::istringstream meta(in.take(in.get<uint64_t>()));
  for (std::string line; std::getline(meta, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed checkpoint metadata line");
    ckpt.metadata_[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto count = in.get<uint64_t>();
  for (uint64_t i = 0; i < count; ++i) {
    std::string name = in.take(in.get<uint32_t>());
    Entry e;
    e.shape.resize(in.get<uint32_t>());
    size_t numel = 1;
    for (auto& d : e.shape) {
      d = in.get<int64_t>();
      if (d < 0) throw ConfigError("negative dimension in checkpoint");
      numel *= static_cast<size_t>(d);
    }
    e.values.resize(numel);
    in.read_floats(e.values.data(), numel);
    ckpt.entries_.emplace(std::move(name), std::move(e));
  }
  if (!in.done()) throw ConfigError("trailing bytes after checkpoint");
  return ckpt;
}

std::string ModelCheckpoint::checksum() const { return sha256_hex(serialize()); }

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + file.string());
  const std::string bytes = ckpt.serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw PrerequisiteError("missing checkpoint " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return ModelCheckpoint::deserialize(buf.str());
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::string sha256_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw PrerequisiteError("cannot read " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

}  // namespace classrecon
