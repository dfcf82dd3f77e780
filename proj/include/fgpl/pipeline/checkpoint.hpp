#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "fgpl/diffcore/tensor.hpp"

namespace fgpl::pipe {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout, all integers little-endian:
//   "FGPL" | u32 version | u32 n + n bytes of "key=value\n" metadata lines |
//   records until end of file: u32 name length, name, u32 rank,
//   rank × u32 dims, then IEEE-754 float32 values.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  ParamStore params;

  // Throws CheckpointError(Malformed) for a missing key.
  const std::string& get(const std::string& key) const;
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, BadVersion, Truncated, Malformed };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
// Parses a whole buffer; nothing is returned unless every byte checks out.
Checkpoint decode_checkpoint(const std::string& bytes);

// Written to "<path>.tmp" first and renamed, so a failed save leaves any
// previous file intact.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace fgpl::pipe
