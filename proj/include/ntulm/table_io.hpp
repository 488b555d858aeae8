#pragma once

#include <cstdio>
#include <istream>
#include <ostream>
#include <string>

#include "ntulm/binary_io.hpp"
#include "ntulm/kg_embed.hpp"

namespace ntulm {

inline constexpr std::uint32_t kTableVersion = 1;

// "NTUE" | version | dim | node_count | relation_count, all u32 LE, then node
// rows and relation rows as row-major f32 LE.
inline void write_table(std::ostream& out, const EmbeddingTable& t) {
  bin::put_magic(out, "NTUE");
  bin::put_u32(out, kTableVersion);
  bin::put_u32(out, static_cast<std::uint32_t>(t.dim));
  bin::put_u32(out, static_cast<std::uint32_t>(t.nodes.rows()));
  bin::put_u32(out, static_cast<std::uint32_t>(t.relations.rows()));
  for (Eigen::Index i = 0; i < t.nodes.size(); ++i) bin::put_f32(out, t.nodes.data()[i]);
  for (Eigen::Index i = 0; i < t.relations.size(); ++i) bin::put_f32(out, t.relations.data()[i]);
}

// Sidecar: <row>\t<kind>\t<key>
inline void write_table_index(std::ostream& out, const EmbeddingTable& t) {
  const auto& nodes = t.registry.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i)
    out << i << '\t' << to_string(nodes[i].kind) << '\t' << nodes[i].key << '\n';
}

inline void write_table_tsv(std::ostream& out, const EmbeddingTable& t) {
  char buf[32];
  for (Eigen::Index i = 0; i < t.nodes.rows(); ++i) {
    out << t.registry.at(static_cast<std::uint32_t>(i)).key;
    for (Eigen::Index c = 0; c < t.nodes.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(static_cast<float>(t.nodes(i, c))));
      out << '\t' << buf;
    }
    out << '\n';
  }
}

inline EmbeddingTable read_table(std::istream& bin_in, std::istream& index_in) {
  bin::expect_magic(bin_in, "NTUE");
  const auto version = bin::get_u32(bin_in);
  if (version != kTableVersion) throw Error(ErrorCode::FormatError, "unsupported table version " + std::to_string(version));
  EmbeddingTable t;
  t.dim = bin::get_u32(bin_in);
  const auto n = bin::get_u32(bin_in);
  const auto r = bin::get_u32(bin_in);
  if (r != kNumRelations) throw Error(ErrorCode::FormatError, "expected 3 relation rows");
  t.nodes.resize(n, static_cast<Eigen::Index>(t.dim));
  t.relations.resize(r, static_cast<Eigen::Index>(t.dim));
  for (Eigen::Index i = 0; i < t.nodes.size(); ++i) t.nodes.data()[i] = bin::get_f32(bin_in);
  for (Eigen::Index i = 0; i < t.relations.size(); ++i) t.relations.data()[i] = bin::get_f32(bin_in);

  std::string line;
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!std::getline(index_in, line)) throw Error(ErrorCode::FormatError, "table index shorter than table");
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) throw Error(ErrorCode::FormatError, "bad index line: " + line);
    const auto kind = parse_node_kind(std::string_view(line).substr(t1 + 1, t2 - t1 - 1));
    if (!kind) throw Error(ErrorCode::FormatError, "bad node kind in: " + line);
    if (t.registry.intern(NodeRef{*kind, line.substr(t2 + 1)}) != i)
      throw Error(ErrorCode::FormatError, "duplicate or out-of-order node: " + line);
  }
  return t;
}

}  // namespace ntulm
