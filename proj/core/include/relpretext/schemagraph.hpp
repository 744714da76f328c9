#pragma once

#include <string>
#include <vector>

#include "relpretext/relstore.hpp"

namespace relpretext {

// One directed joinable hop. The key pair is an equality join:
// from_row[key_from] == to_row[key_to]. Self-join edges share the same FK
// column on both sides.
struct TraversalEdge {
  std::string from_table;
  std::string to_table;
  std::string key_from;
  std::string key_to;
  bool self_join = false;

  bool operator==(const TraversalEdge& o) const {
    return from_table == o.from_table && to_table == o.to_table &&
           key_from == o.key_from && key_to == o.key_to;
  }
};

struct TraversalGraph {
  std::vector<std::string> nodes;   // table names, store order
  std::vector<TraversalEdge> edges; // deterministic order

  std::vector<const TraversalEdge*> edges_from(const std::string& table) const;
};

// Schema graph made bidirectional, plus one self-join edge per FK column for
// tables holding two or more FK columns.
TraversalGraph build_traversal_graph(const RelationalStore& store);

struct JoinPath {
  std::string root_table;
  std::vector<TraversalEdge> hops;
  std::string name;  // terminal table name, suffixed _1, _2, ... on repeats

  int hop_count() const { return static_cast<int>(hops.size()); }
  const std::string& terminal_table() const { return hops.back().to_table; }
  std::string describe() const;  // "customer -[customer_id]-> review -[product_id=product_id]-> review"
};

// All paths of length 1..k_max that never land back on the root, deduplicated
// by edge sequence, ordered by hop count then lexicographic edge order.
std::vector<JoinPath> enumerate_paths(const TraversalGraph& graph, const std::string& root,
                                      int k_max);

// Optional allowlist by path name; empty list retains everything.
std::vector<JoinPath> filter_paths(std::vector<JoinPath> paths,
                                   const std::vector<std::string>& allow);

// Every hop's key pair must exist in the store schema.
void validate_paths(const RelationalStore& store, const std::vector<JoinPath>& paths);

}  // namespace relpretext
