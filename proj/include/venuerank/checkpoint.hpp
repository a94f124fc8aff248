#pragma once

// Parameter checkpoint container.
//
// Layout:
//   "VENUERANK-CKPT\n"
//   <decimal byte length of header>\n
//   <header: UTF-8 JSON {"version", "manifest": [{name, shape, trainable}], "meta"}>
//   <values of every manifest entry, in manifest order, as little-endian IEEE-754 f64>

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "venuerank/params.hpp"

namespace venuerank::nn {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointData {
  nlohmann::json meta;
  ParamStore params;
};

void write_checkpoint(std::ostream& out, const nlohmann::json& meta, const ParamStore& params);
void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                      const ParamStore& params);
CheckpointData read_checkpoint(std::istream& in);
CheckpointData read_checkpoint(const std::filesystem::path& path);

/// Little-endian f64 helpers shared by the binary exports.
void write_f64_le(std::ostream& out, std::span<const double> values);
void read_f64_le(std::istream& in, std::span<double> values);

}  // namespace venuerank::nn
