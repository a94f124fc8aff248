#include "venuerank/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "venuerank/errors.hpp"

namespace venuerank::nn {

namespace {
constexpr const char* kMagic = "VENUERANK-CKPT";
}

void write_f64_le(std::ostream& out, std::span<const double> values) {
  std::array<char, 8> buf{};
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    out.write(buf.data(), 8);
  }
}

void read_f64_le(std::istream& in, std::span<double> values) {
  std::array<unsigned char, 8> buf{};
  for (double& v : values) {
    if (!in.read(reinterpret_cast<char*>(buf.data()), 8)) {
      throw ParseError("truncated binary payload");
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
}

void write_checkpoint(std::ostream& out, const nlohmann::json& meta, const ParamStore& params) {
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& p : params.all()) {
    manifest.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"trainable", p.trainable}});
  }
  const nlohmann::json header = {
      {"version", kCheckpointVersion}, {"manifest", manifest}, {"meta", meta}};
  const std::string text = header.dump();
  out << kMagic << '\n' << text.size() << '\n' << text;
  for (const auto& p : params.all()) write_f64_le(out, p.value.values());
  if (!out) throw std::runtime_error("checkpoint write failed");
}

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                      const ParamStore& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_checkpoint(out, meta, params);
}

CheckpointData read_checkpoint(std::istream& in) {
  std::string magic, len_line;
  if (!std::getline(in, magic) || magic != kMagic) throw ParseError("not a venuerank checkpoint");
  if (!std::getline(in, len_line)) throw ParseError("checkpoint header length missing");
  std::size_t len = 0;
  try {
    len = std::stoull(len_line);
  } catch (const std::exception&) {
    throw ParseError("bad checkpoint header length '" + len_line + "'");
  }
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
    throw ParseError("truncated checkpoint header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (header.value("version", 0) != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + header.value("version", nlohmann::json()).dump());
  }
  CheckpointData data;
  data.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("manifest")) {
    Tensor t(entry.at("shape").get<Shape>());
    read_f64_le(in, t.values());
    data.params.add(entry.at("name").get<std::string>(), std::move(t),
                    entry.value("trainable", true));
  }
  return data;
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace venuerank::nn
