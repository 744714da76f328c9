#include "relpretext/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "relpretext/csv.hpp"
#include "relpretext/error.hpp"
#include "relpretext/rng.hpp"

namespace relpretext {

namespace {

constexpr int kCategories = 5;

// Most columns are deliberately task-irrelevant, the way production schemas
// are; only the interaction dynamics carry the churn signal.
const char* kSchemaJson = R"({
  "tables": [
    {
      "name": "customer",
      "class": "dimension",
      "columns": [
        {"name": "customer_id", "kind": "primary_key"},
        {"name": "segment", "kind": "categorical", "cardinality": 3}
      ]
    },
    {
      "name": "product",
      "class": "dimension",
      "columns": [
        {"name": "product_id", "kind": "primary_key"},
        {"name": "price", "kind": "numeric"},
        {"name": "category", "kind": "categorical", "cardinality": 5},
        {"name": "name_emb", "kind": "embedding", "dim": 4}
      ]
    },
    {
      "name": "review",
      "class": "fact",
      "columns": [
        {"name": "review_id", "kind": "primary_key"},
        {"name": "customer_id", "kind": "foreign_key", "target": "customer"},
        {"name": "product_id", "kind": "foreign_key", "target": "product"},
        {"name": "ts", "kind": "timestamp"},
        {"name": "score", "kind": "numeric"},
        {"name": "amount", "kind": "numeric"},
        {"name": "session_len", "kind": "numeric"}
      ]
    }
  ]
}
)";

enum Regime { kHot = 0, kCool = 1, kDormant = 2 };

}  // namespace

SyntheticSummary generate_planted_rdb(const SyntheticSpec& spec, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  {
    std::ofstream schema(out_dir + "/schema.json");
    if (!schema) fail("FileWrite", "cannot write schema.json in " + out_dir);
    schema << kSchemaJson;
  }

  Rng rng(spec.seed);
  SyntheticSummary summary;
  summary.customers = spec.customers;
  summary.products = spec.products;

  // Products: price lognormal-ish, quality drives review scores.
  std::vector<double> price(spec.products), quality(spec.products);
  std::vector<int> category(spec.products);
  {
    CsvWriter w(out_dir + "/product.csv");
    w.write_row({"product_id", "price", "category", "name_emb"});
    for (int p = 0; p < spec.products; ++p) {
      price[p] = std::round(std::exp(3.0 + 0.6 * rng.normal()) * 100.0) / 100.0;
      quality[p] = 3.5 + 1.0 * rng.uniform();
      category[p] = static_cast<int>(rng.uniform_int(0, kCategories - 1));
      std::string emb;
      for (int k = 0; k < 4; ++k) {
        double v = (k == category[p] % 4 ? 1.0 : 0.0) + 0.25 * rng.normal();
        if (k) emb += ";";
        emb += format_double(std::round(v * 1000.0) / 1000.0);
      }
      w.write_row({"p" + std::to_string(p + 1), format_double(price[p]),
                   "c" + std::to_string(category[p]), emb});
    }
  }

  // Customers walk a hot/cool/dormant regime chain; review counts follow the
  // regime, which is exactly what next-window statistics expose.
  {
    CsvWriter w(out_dir + "/customer.csv");
    w.write_row({"customer_id", "segment"});
    for (int c = 0; c < spec.customers; ++c)
      w.write_row({"u" + std::to_string(c + 1), "s" + std::to_string(rng.uniform_int(0, 2))});
  }

  {
    CsvWriter w(out_dir + "/review.csv");
    w.write_row({"review_id", "customer_id", "product_id", "ts", "score", "amount",
                 "session_len"});
    int review_id = 0;
    const double rates[3] = {spec.rate_hot, spec.rate_cool, spec.rate_dormant};
    for (int c = 0; c < spec.customers; ++c) {
      double u0 = rng.uniform();
      Regime state = u0 < 0.20 ? kHot : (u0 < 0.50 ? kCool : kDormant);
      int preferred = static_cast<int>(rng.uniform_int(0, kCategories - 1));
      for (int week = 1; week <= spec.weeks; ++week) {
        int n = rng.poisson(rates[state]);
        bool bad_experience = false;
        for (int k = 0; k < n; ++k) {
          int64_t ts = static_cast<int64_t>(7 * (week - 1)) + rng.uniform_int(1, 7);
          // Product choice sticks to the preferred category most of the time.
          int p;
          if (rng.uniform() < 0.7) {
            int tries = 0;
            do {
              p = static_cast<int>(rng.uniform_int(0, spec.products - 1));
            } while (category[p] != preferred && ++tries < 40);
          } else {
            p = static_cast<int>(rng.uniform_int(0, spec.products - 1));
          }
          double score = std::clamp(std::round(quality[p] + 1.0 * rng.normal()), 1.0, 5.0);
          if (score <= 2.0) bad_experience = true;
          double amount = std::round(price[p] * (1.0 + 0.2 * rng.normal()) * 100.0) / 100.0;
          if (amount < 0.01) amount = 0.01;
          ++review_id;
          double session = std::round(rng.normal() * 1000.0) / 1000.0;
          w.write_row({"r" + std::to_string(review_id), "u" + std::to_string(c + 1),
                       "p" + std::to_string(p + 1), std::to_string(ts), format_double(score),
                       format_double(amount), format_double(session)});
          if (ts > summary.max_timestamp) summary.max_timestamp = ts;
        }
        // Weekly regime transitions. A bad experience usually sends the
        // customer dormant, so the churn signal lives in the interaction of
        // recency and score, not in either column alone.
        double u = rng.uniform();
        if (bad_experience && u < 0.85) {
          state = kDormant;
        } else {
          switch (state) {
            case kHot: state = u < 0.92 ? kHot : (u < 0.99 ? kCool : kDormant); break;
            case kCool: state = u < 0.10 ? kHot : (u < 0.90 ? kCool : kDormant); break;
            case kDormant: state = u < 0.02 ? kHot : (u < 0.07 ? kCool : kDormant); break;
          }
        }
      }
    }
    summary.reviews = review_id;
  }
  return summary;
}

}  // namespace relpretext
