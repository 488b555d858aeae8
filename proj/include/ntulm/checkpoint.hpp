#pragma once

#include <istream>
#include <ostream>
#include <string>

#include <json.hpp>

#include "ntulm/binary_io.hpp"
#include "ntulm/encoder.hpp"

namespace ntulm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "NTUM" | version u32 | header length u32 | header JSON (config + tensor
// shapes) | tensors in declaration order, row-major f32 LE.
inline void write_checkpoint(std::ostream& out, const EncoderState& state) {
  nlohmann::json header;
  header["config"] = state.config;
  nlohmann::json tensors = nlohmann::json::array();
  state.params.for_each([&](const std::string& name, const Mat& m) {
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  });
  header["tensors"] = tensors;
  const std::string blob = header.dump();
  bin::put_magic(out, "NTUM");
  bin::put_u32(out, kCheckpointVersion);
  bin::put_u32(out, static_cast<std::uint32_t>(blob.size()));
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  state.params.for_each([&](const std::string&, const Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) bin::put_f32(out, m(r, c));
  });
}

inline EncoderState read_checkpoint(std::istream& in) {
  bin::expect_magic(in, "NTUM");
  const auto version = bin::get_u32(in);
  if (version != kCheckpointVersion) throw Error(ErrorCode::FormatError, "unsupported checkpoint version");
  std::string blob(bin::get_u32(in), '\0');
  if (!in.read(blob.data(), static_cast<std::streamsize>(blob.size())))
    throw Error(ErrorCode::FormatError, "truncated checkpoint header");
  const auto header = nlohmann::json::parse(blob);
  EncoderState state = init_encoder(header.at("config").get<EncoderConfig>());
  const auto& tensors = header.at("tensors");
  std::size_t i = 0;
  state.params.for_each([&](const std::string& name, Mat& m) {
    if (i >= tensors.size() || tensors[i].at("name") != name || tensors[i].at("rows") != m.rows() ||
        tensors[i].at("cols") != m.cols())
      throw Error(ErrorCode::FormatError, "checkpoint tensor layout mismatch at " + name);
    ++i;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = bin::get_f32(in);
  });
  return state;
}

}  // namespace ntulm
