#pragma once

// Versioned binary model container.
//
//   magic        8 bytes  "VTECBNN\0"
//   version      u32      kCheckpointVersion
//   input_dim    u32
//   architecture str      (u32 length + bytes), e.g. "V64-D32-D16-D1"
//   encoding     str      input encoding id
//   normalizer   u32 channel count, then f64 means, f64 stddevs, f64 target mean, f64 target stddev
//   provenance   str
//   params       u64 count, then f64 values
//
// Integers and IEEE-754 doubles are little-endian. Nothing may follow the
// parameter block.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "vtec/bnn.hpp"
#include "vtec/dataset.hpp"

namespace vtec {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Model {
  Network network;
  Normalizer normalizer;
  std::string provenance;
};

std::string save_model(const Network& net, const Normalizer& normalizer, std::string_view provenance);
/// Throws ParseError on bad magic, version mismatch, encoding mismatch or a
/// length mismatch.
Model load_model(std::string_view bytes);

void save_model_file(const std::filesystem::path& path, const Network& net, const Normalizer& normalizer,
                     std::string_view provenance);
Model load_model_file(const std::filesystem::path& path);

}  // namespace vtec
