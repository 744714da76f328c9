#include <doctest.h>

#include <fstream>
#include <map>

#include "relpretext/error.hpp"
#include "relpretext/schemagraph.hpp"
#include "test_util.hpp"

using namespace relpretext;
using namespace relpretext::testing;

TEST_CASE("traversal graph on the 3-table schema") {
  RelationalStore store = load_toy_amz();
  TraversalGraph g = build_traversal_graph(store);
  CHECK(g.nodes.size() == 3);
  // customer<->review, product<->review, review<->review on each FK.
  REQUIRE(g.edges.size() == 6);
  int self_joins = 0;
  for (const auto& e : g.edges) {
    if (e.self_join) {
      ++self_joins;
      CHECK(e.from_table == "review");
      CHECK(e.key_from == e.key_to);
    }
  }
  CHECK(self_joins == 2);
}

TEST_CASE("single table without FKs has no edges") {
  TempDir tmp("graph_single");
  std::ofstream(tmp.path() + "/schema.json") << R"({"tables": [
    {"name": "solo", "class": "dimension",
     "columns": [{"name": "id", "kind": "primary_key"}]}]})";
  std::ofstream(tmp.path() + "/solo.csv") << "id\n";
  RelationalStore store = RelationalStore::load(tmp.path() + "/schema.json", tmp.path());
  TraversalGraph g = build_traversal_graph(store);
  CHECK(g.nodes.size() == 1);
  CHECK(g.edges.empty());
  CHECK(enumerate_paths(g, "solo", 3).empty());
}

TEST_CASE("single-FK fact table gets no self-join edge") {
  TempDir tmp("graph_onefk");
  std::ofstream(tmp.path() + "/schema.json") << R"({"tables": [
    {"name": "customer", "class": "dimension",
     "columns": [{"name": "customer_id", "kind": "primary_key"}]},
    {"name": "visit", "class": "fact",
     "columns": [{"name": "visit_id", "kind": "primary_key"},
                 {"name": "customer_id", "kind": "foreign_key", "target": "customer"},
                 {"name": "ts", "kind": "timestamp"}]}]})";
  std::ofstream(tmp.path() + "/customer.csv") << "customer_id\n";
  std::ofstream(tmp.path() + "/visit.csv") << "visit_id,customer_id,ts\n";
  RelationalStore store = RelationalStore::load(tmp.path() + "/schema.json", tmp.path());
  TraversalGraph g = build_traversal_graph(store);
  CHECK(g.edges.size() == 2);
  for (const auto& e : g.edges) CHECK(!e.self_join);
}

TEST_CASE("path enumeration matches the four-set example") {
  RelationalStore store = load_toy_amz();
  TraversalGraph g = build_traversal_graph(store);

  auto k1 = enumerate_paths(g, "customer", 1);
  REQUIRE(k1.size() == 1);
  CHECK(k1[0].name == "review");
  CHECK(k1[0].hop_count() == 1);

  auto k2 = enumerate_paths(g, "customer", 2);
  REQUIRE(k2.size() == 4);
  CHECK(k2[0].name == "review");
  CHECK(k2[1].name == "product");
  CHECK(k2[2].name == "review_1");
  CHECK(k2[3].name == "review_2");
  // The suffix order is fixed by edge sort order: customer_id self-join first.
  CHECK(k2[2].hops[1].key_from == "customer_id");
  CHECK(k2[3].hops[1].key_from == "product_id");
  // No path lands back on the root.
  for (const auto& p : k2)
    for (const auto& h : p.hops) CHECK(h.to_table != "customer");

  validate_paths(store, k2);
}

TEST_CASE("path count is monotone in k_max and enumeration is stable") {
  RelationalStore store = load_toy_amz();
  TraversalGraph g = build_traversal_graph(store);
  size_t prev = 0;
  for (int k = 1; k <= 4; ++k) {
    auto paths = enumerate_paths(g, "customer", k);
    CHECK(paths.size() >= prev);
    prev = paths.size();
  }
  auto a = enumerate_paths(g, "customer", 3);
  auto b = enumerate_paths(g, "customer", 3);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(a[i].describe() == b[i].describe());
  }
}

TEST_CASE("unknown root is rejected; allowlist filters by name") {
  RelationalStore store = load_toy_amz();
  TraversalGraph g = build_traversal_graph(store);
  try {
    enumerate_paths(g, "nope", 1);
    FAIL("expected UnknownRoot");
  } catch (const Error& e) {
    CHECK(e.code() == "UnknownRoot");
  }
  auto paths = enumerate_paths(g, "customer", 2);
  auto kept = filter_paths(paths, {"review", "review_2"});
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].name == "review");
  CHECK(kept[1].name == "review_2");
  CHECK(filter_paths(paths, {}).size() == 4);
}
