#include "fgpl/pipeline/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fgpl::pipe {

namespace {

using Kind = CheckpointError::Kind;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  explicit Reader(const std::string& b) : bytes_(b) {}
  bool done() const { return pos_ == bytes_.size(); }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(Kind::Truncated, std::string("checkpoint truncated while reading ") +
                                                 what + " at byte " + std::to_string(pos_));
    }
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const std::string& Checkpoint::get(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw CheckpointError(Kind::Malformed, "checkpoint lacks metadata key: " + key);
  return it->second;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");
  std::string out = "FGPL";
  put_u32(out, kCheckpointVersion);
  std::string meta;
  for (const auto& [k, v] : ckpt.meta) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw std::invalid_argument("checkpoint metadata cannot contain '=' in keys or newlines: " + k);
    }
    meta += k + "=" + v + "\n";
  }
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  for (const auto& [name, t] : ckpt.params) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || bytes.compare(0, 4, "FGPL") != 0) {
    throw CheckpointError(Kind::BadMagic, "not a checkpoint: bad magic");
  }
  r.take(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::BadVersion, "unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  std::istringstream meta(r.take(r.u32("metadata length"), "metadata"));
  for (std::string line; std::getline(meta, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw CheckpointError(Kind::Malformed, "metadata line without '=': " + line);
    }
    ckpt.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  while (!r.done()) {
    const std::string name = r.take(r.u32("name length"), "name");
    const std::uint32_t rank = r.u32("rank");
    if (rank > 8) throw CheckpointError(Kind::Malformed, "implausible rank for " + name);
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.u32("dims"));
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = std::bit_cast<float>(r.u32("values"));
    try {
      ckpt.params.add(name, Tensor(shape, std::move(values)));
    } catch (const std::invalid_argument& e) {
      throw CheckpointError(Kind::Malformed, e.what());
    }
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError(Kind::Io, "cannot write " + tmp);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CheckpointError(Kind::Io, "write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(Kind::Io, "cannot open checkpoint " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace fgpl::pipe
