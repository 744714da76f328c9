#pragma once

#include <cstdint>
#include <string>

namespace relpretext {

// Planted-signal retail RDB: customer / review / product with weekly
// activity regimes, so next-window review statistics genuinely predict
// churn. Written as schema.json plus one CSV per table.
struct SyntheticSpec {
  int customers = 300;
  int products = 40;
  int weeks = 52;
  uint64_t seed = 7;
  // Weekly review rates per activity regime.
  double rate_hot = 1.6;
  double rate_cool = 0.45;
  double rate_dormant = 0.02;
};

struct SyntheticSummary {
  int customers = 0;
  int products = 0;
  int reviews = 0;
  int64_t max_timestamp = 0;
};

SyntheticSummary generate_planted_rdb(const SyntheticSpec& spec, const std::string& out_dir);

}  // namespace relpretext
