#pragma once

#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "ntulm/hin_graph.hpp"

namespace ntulm {

// ntulm-graph v1 <node_count> <edge_count>
// <index>\t<kind>\t<key>          (node_count lines)
// <head_index>\t<relation>\t<tail_index>   (edge_count lines)
inline void write_graph(std::ostream& out, const HeteroGraph& g) {
  out << "ntulm-graph v1 " << g.num_nodes() << ' ' << g.num_edges() << '\n';
  const auto& nodes = g.registry().nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].key.find_first_of("\t\n") != std::string::npos)
      throw Error(ErrorCode::FormatError, "node key contains tab or newline");
    out << i << '\t' << to_string(nodes[i].kind) << '\t' << nodes[i].key << '\n';
  }
  for (const auto& e : g.edges())
    out << e.head << '\t' << to_string(e.relation) << '\t' << e.tail << '\n';
}

inline HeteroGraph read_graph(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::FormatError, "graph file is empty");
  std::istringstream header(line);
  std::string magic, version;
  std::size_t num_nodes = 0, num_edges = 0;
  if (!(header >> magic >> version >> num_nodes >> num_edges) || magic != "ntulm-graph" || version != "v1")
    throw Error(ErrorCode::FormatError, "bad graph header: " + line);

  HeteroGraph g;
  for (std::size_t i = 0; i < num_nodes; ++i) {
    if (!std::getline(in, line)) throw Error(ErrorCode::FormatError, "truncated node table");
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw Error(ErrorCode::FormatError, "bad node line: " + line);
    const auto kind = parse_node_kind(std::string_view(line).substr(t1 + 1, t2 - t1 - 1));
    if (!kind || std::stoul(line.substr(0, t1)) != i)
      throw Error(ErrorCode::FormatError, "bad node line: " + line);
    g.add_node(NodeRef{*kind, line.substr(t2 + 1)});
  }
  for (std::size_t i = 0; i < num_edges; ++i) {
    if (!std::getline(in, line)) throw Error(ErrorCode::FormatError, "truncated edge table");
    std::istringstream fields(line);
    std::uint32_t head = 0, tail = 0;
    std::string rel;
    if (!(fields >> head >> rel >> tail)) throw Error(ErrorCode::FormatError, "bad edge line: " + line);
    const auto r = parse_relation(rel);
    if (!r) throw Error(ErrorCode::FormatError, "unknown relation: " + rel);
    g.add_edge(Edge{head, *r, tail});
  }
  return g;
}

}  // namespace ntulm
