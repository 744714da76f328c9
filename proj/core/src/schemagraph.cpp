#include "relpretext/schemagraph.hpp"

#include <algorithm>
#include <map>

#include "relpretext/error.hpp"

namespace relpretext {

std::vector<const TraversalEdge*> TraversalGraph::edges_from(const std::string& table) const {
  std::vector<const TraversalEdge*> out;
  for (const auto& e : edges)
    if (e.from_table == table) out.push_back(&e);
  return out;
}

TraversalGraph build_traversal_graph(const RelationalStore& store) {
  TraversalGraph g;
  for (const auto& t : store.tables()) g.nodes.push_back(t.def.name);

  // Count FK columns per table; self-joins appear only when a table can be
  // joined to itself through a shared key, i.e. it holds >= 2 FK columns.
  std::map<std::string, int> fk_count;
  for (const auto& link : store.links()) fk_count[link.child_table]++;

  for (const auto& link : store.links()) {
    const Table& parent = store.table(link.parent_table);
    const std::string parent_pk = parent.def.columns[parent.pk_col].name;
    g.edges.push_back({link.child_table, link.parent_table, link.fk_column, parent_pk, false});
    g.edges.push_back({link.parent_table, link.child_table, parent_pk, link.fk_column, false});
    if (fk_count[link.child_table] >= 2)
      g.edges.push_back({link.child_table, link.child_table, link.fk_column, link.fk_column, true});
  }

  std::sort(g.edges.begin(), g.edges.end(), [](const TraversalEdge& a, const TraversalEdge& b) {
    if (a.from_table != b.from_table) return a.from_table < b.from_table;
    if (a.to_table != b.to_table) return a.to_table < b.to_table;
    if (a.key_from != b.key_from) return a.key_from < b.key_from;
    return a.key_to < b.key_to;
  });
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  return g;
}

std::string JoinPath::describe() const {
  std::string out = root_table;
  for (const auto& h : hops) {
    out += " -[" + h.key_from;
    if (h.key_from != h.key_to) out += "=" + h.key_to;
    out += "]-> " + h.to_table;
  }
  return out;
}

std::vector<JoinPath> enumerate_paths(const TraversalGraph& graph, const std::string& root,
                                      int k_max) {
  if (std::find(graph.nodes.begin(), graph.nodes.end(), root) == graph.nodes.end())
    fail("UnknownRoot", "root table " + root + " is not in the traversal graph");
  check(k_max >= 1, "UnknownRoot", "k_max must be >= 1");

  // Breadth-first by hop count; within a level, extensions follow the sorted
  // edge order, which fixes both path order and _i suffix assignment.
  std::vector<JoinPath> result;
  std::vector<JoinPath> frontier;
  frontier.push_back({root, {}, ""});
  for (int k = 1; k <= k_max; ++k) {
    std::vector<JoinPath> next;
    for (const auto& p : frontier) {
      const std::string& at = p.hops.empty() ? p.root_table : p.hops.back().to_table;
      for (const auto* e : graph.edges_from(at)) {
        if (e->to_table == root) continue;  // never revisit the root
        JoinPath q = p;
        q.hops.push_back(*e);
        next.push_back(std::move(q));
      }
    }
    for (auto& q : next) result.push_back(q);
    frontier = std::move(next);
  }

  // Name by terminal table; first occurrence keeps the bare name, repeats get
  // _1, _2, ... in enumeration order.
  std::map<std::string, int> seen;
  for (auto& p : result) {
    const std::string& term = p.terminal_table();
    int n = seen[term]++;
    p.name = n == 0 ? term : term + "_" + std::to_string(n);
  }
  return result;
}

std::vector<JoinPath> filter_paths(std::vector<JoinPath> paths,
                                   const std::vector<std::string>& allow) {
  if (allow.empty()) return paths;
  std::vector<JoinPath> kept;
  for (auto& p : paths)
    if (std::find(allow.begin(), allow.end(), p.name) != allow.end())
      kept.push_back(std::move(p));
  return kept;
}

void validate_paths(const RelationalStore& store, const std::vector<JoinPath>& paths) {
  for (const auto& p : paths) {
    std::string at = p.root_table;
    for (const auto& h : p.hops) {
      check(h.from_table == at, "PathRootMismatch",
            "path " + p.name + " hop does not start at " + at);
      const Table& from = store.table(h.from_table);
      const Table& to = store.table(h.to_table);
      check(from.column_index(h.key_from) >= 0, "PathRootMismatch",
            "path " + p.name + " missing key column " + h.from_table + "." + h.key_from);
      check(to.column_index(h.key_to) >= 0, "PathRootMismatch",
            "path " + p.name + " missing key column " + h.to_table + "." + h.key_to);
      at = h.to_table;
    }
  }
}

}  // namespace relpretext
