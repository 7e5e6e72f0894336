#pragma once

// Random JSON Schemas in the supported subset together with records that
// satisfy them. Shared by the schema unit tests and the acceptance run.

#include <string>

#include <json.hpp>

#include "synthforge/rng.hpp"

namespace gen {

using nlohmann::json;
using synthforge::Rng;
using synthforge::uniform_index;

struct SchemaCase {
  json schema;
  json record;
};

inline std::string word(Rng& rng, std::size_t min_len, std::size_t max_len) {
  static const std::string letters = "abcdefghijklmnopqrstuvwxyz";
  const auto len = min_len + uniform_index(rng, max_len - min_len + 1);
  std::string s;
  for (std::size_t i = 0; i < len; ++i) s += letters[uniform_index(rng, letters.size())];
  return s;
}

// One property schema and a conforming value.
inline std::pair<json, json> property(Rng& rng, int depth) {
  const auto pick = uniform_index(rng, depth > 0 ? 9 : 7);
  switch (pick) {
    case 0: {
      const auto lo = 1 + uniform_index(rng, 3);
      return {{{"type", "string"}, {"minLength", lo}, {"maxLength", lo + 6}}, word(rng, lo, lo + 6)};
    }
    case 1: {
      const auto lo = static_cast<int>(uniform_index(rng, 50));
      return {{{"type", "integer"}, {"minimum", lo}, {"maximum", lo + 100}},
              lo + static_cast<int>(uniform_index(rng, 101))};
    }
    case 2:
      return {{{"type", "number"}, {"minimum", 0.0}, {"maximum", 1.0}},
              static_cast<double>(uniform_index(rng, 1000)) / 1000.0};
    case 3: return {{{"type", "boolean"}}, uniform_index(rng, 2) == 0};
    case 4: {
      static const std::vector<std::string> formats{"email", "date", "uuid", "uri"};
      const auto& f = formats[uniform_index(rng, formats.size())];
      std::string v;
      if (f == "email") v = word(rng, 2, 6) + "@" + word(rng, 2, 6) + ".org";
      if (f == "date") v = "20" + std::to_string(10 + uniform_index(rng, 20)) + "-0" + std::to_string(1 + uniform_index(rng, 9)) + "-1" + std::to_string(uniform_index(rng, 9));
      if (f == "uuid") v = "123e4567-e89b-12d3-a456-42661417400" + std::to_string(uniform_index(rng, 10));
      if (f == "uri") v = "https://" + word(rng, 2, 8) + ".com/" + word(rng, 0, 5);
      return {{{"type", "string"}, {"format", f}}, v};
    }
    case 5: {
      json values = json::array({"red", "green", "blue"});
      return {{{"type", "string"}, {"enum", values}}, values[uniform_index(rng, 3)]};
    }
    case 6: return {{{"type", "string"}, {"pattern", "[A-Z]{2}-[0-9]{3}"}}, "AB-" + std::to_string(100 + uniform_index(rng, 900))};
    case 7: {
      const auto n = 1 + uniform_index(rng, 3);
      json items = json::array();
      for (std::size_t i = 0; i < n; ++i) items.push_back(word(rng, 1, 5));
      return {{{"type", "array"}, {"items", {{"type", "string"}, {"minLength", 1}}}, {"minItems", 1}, {"maxItems", 4}},
              items};
    }
    default: {
      json props = json::object(), rec = json::object(), req = json::array();
      const auto n = 1 + uniform_index(rng, 3);
      for (std::size_t i = 0; i < n; ++i) {
        auto [s, v] = property(rng, depth - 1);
        const std::string name = "f" + std::to_string(i);
        props[name] = s;
        rec[name] = v;
        req.push_back(name);
      }
      return {{{"type", "object"}, {"properties", props}, {"required", req}, {"additionalProperties", false}}, rec};
    }
  }
}

inline SchemaCase schema_case(Rng& rng) {
  json props = json::object(), rec = json::object(), req = json::array();
  const auto n = 2 + uniform_index(rng, 5);
  for (std::size_t i = 0; i < n; ++i) {
    auto [s, v] = property(rng, 2);
    const std::string name = "p" + std::to_string(i);
    props[name] = s;
    // Optional members are sometimes left out of the record.
    const bool required = uniform_index(rng, 4) != 0;
    if (required) req.push_back(name);
    if (required || uniform_index(rng, 2) == 0) rec[name] = v;
  }
  return {{{"type", "object"}, {"properties", props}, {"required", req}, {"additionalProperties", false}}, rec};
}

}  // namespace gen
