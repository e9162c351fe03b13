#include "ibdiag/json_schema.hpp"

#include <cmath>
#include <stdexcept>

namespace ibdiag {

namespace {

using nlohmann::json;

bool has_type(const json& v, const std::string& type) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  if (type == "number") return v.is_number();
  if (type == "integer") {
    if (v.is_number_integer()) return true;
    if (!v.is_number_float()) return false;
    const double d = v.get<double>();
    return std::isfinite(d) && std::floor(d) == d;
  }
  throw std::invalid_argument("schema uses unknown type '" + type + "'");
}

std::string escape_token(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') {
      out += "~0";
    } else if (c == '/') {
      out += "~1";
    } else {
      out += c;
    }
  }
  return out;
}

class Checker {
 public:
  explicit Checker(const json& root) : root_(root) {}

  void check(const json& schema, const json& v, const std::string& path, std::vector<SchemaError>& errors) const {
    if (schema.is_boolean()) {
      if (!schema.get<bool>()) errors.push_back({path, "value not allowed here"});
      return;
    }
    if (auto it = schema.find("$ref"); it != schema.end()) {
      check(resolve(it->get<std::string>()), v, path, errors);
      return;
    }
    if (auto it = schema.find("type"); it != schema.end()) {
      bool ok = false;
      std::string names;
      if (it->is_array()) {
        for (const auto& t : *it) {
          ok = ok || has_type(v, t.get<std::string>());
          names += (names.empty() ? "" : " or ") + t.get<std::string>();
        }
      } else {
        ok = has_type(v, it->get<std::string>());
        names = it->get<std::string>();
      }
      if (!ok) {
        errors.push_back({path, "expected " + names + ", got " + v.type_name()});
        return;
      }
    }
    if (auto it = schema.find("const"); it != schema.end() && v != *it) {
      errors.push_back({path, "must equal " + it->dump()});
    }
    if (auto it = schema.find("enum"); it != schema.end()) {
      bool found = false;
      for (const auto& e : *it) found = found || e == v;
      if (!found) errors.push_back({path, "must be one of " + it->dump()});
    }
    if (v.is_number()) check_number(schema, v.get<double>(), path, errors);
    if (v.is_string()) {
      if (auto it = schema.find("minLength"); it != schema.end() && v.get<std::string>().size() < it->get<std::size_t>()) {
        errors.push_back({path, "string shorter than " + it->dump()});
      }
    }
    if (v.is_array()) check_array(schema, v, path, errors);
    if (v.is_object()) check_object(schema, v, path, errors);
    if (auto it = schema.find("oneOf"); it != schema.end()) {
      // report the alternative that fits best; a failed const (a
      // discriminator such as "kind") counts as a poor fit
      std::size_t matches = 0;
      std::vector<SchemaError> best;
      std::size_t best_score = 0;
      for (const auto& option : *it) {
        std::vector<SchemaError> sub;
        check(option, v, path, sub);
        if (sub.empty()) {
          ++matches;
          continue;
        }
        std::size_t score = sub.size();
        for (const auto& e : sub) {
          if (e.message.rfind("must equal", 0) == 0) score += 1000;
        }
        if (best.empty() || score < best_score) {
          best = std::move(sub);
          best_score = score;
        }
      }
      if (matches == 0) {
        errors.insert(errors.end(), best.begin(), best.end());
      } else if (matches > 1) {
        errors.push_back({path, "matches more than one alternative"});
      }
    }
  }

 private:
  const json& resolve(const std::string& ref) const {
    if (ref.empty() || ref[0] != '#') throw std::invalid_argument("only local $ref is supported: " + ref);
    return root_.at(json::json_pointer(ref.substr(1)));
  }

  static void check_number(const json& schema, double x, const std::string& path, std::vector<SchemaError>& errors) {
    if (auto it = schema.find("minimum"); it != schema.end() && x < it->get<double>()) {
      errors.push_back({path, "must be >= " + it->dump()});
    }
    if (auto it = schema.find("maximum"); it != schema.end() && x > it->get<double>()) {
      errors.push_back({path, "must be <= " + it->dump()});
    }
    if (auto it = schema.find("exclusiveMinimum"); it != schema.end() && x <= it->get<double>()) {
      errors.push_back({path, "must be > " + it->dump()});
    }
    if (auto it = schema.find("exclusiveMaximum"); it != schema.end() && x >= it->get<double>()) {
      errors.push_back({path, "must be < " + it->dump()});
    }
  }

  void check_array(const json& schema, const json& v, const std::string& path, std::vector<SchemaError>& errors) const {
    if (auto it = schema.find("minItems"); it != schema.end() && v.size() < it->get<std::size_t>()) {
      errors.push_back({path, "needs at least " + it->dump() + (*it == 1 ? " item" : " items")});
    }
    if (auto it = schema.find("maxItems"); it != schema.end() && v.size() > it->get<std::size_t>()) {
      errors.push_back({path, "allows at most " + it->dump() + (*it == 1 ? " item" : " items")});
    }
    if (auto it = schema.find("items"); it != schema.end()) {
      for (std::size_t i = 0; i < v.size(); ++i) check(*it, v[i], path + "/" + std::to_string(i), errors);
    }
  }

  void check_object(const json& schema, const json& v, const std::string& path, std::vector<SchemaError>& errors) const {
    if (auto it = schema.find("required"); it != schema.end()) {
      for (const auto& key : *it) {
        if (!v.contains(key.get<std::string>())) {
          errors.push_back({path, "missing required property '" + key.get<std::string>() + "'"});
        }
      }
    }
    const json* props = nullptr;
    if (auto it = schema.find("properties"); it != schema.end()) props = &*it;
    const auto extra = schema.find("additionalProperties");
    for (auto it = v.begin(); it != v.end(); ++it) {
      const std::string child = path + "/" + escape_token(it.key());
      if (props && props->contains(it.key())) {
        check((*props)[it.key()], it.value(), child, errors);
      } else if (extra != schema.end()) {
        if (extra->is_boolean() && !extra->get<bool>()) {
          errors.push_back({child, "unknown property '" + it.key() + "'"});
        } else {
          check(*extra, it.value(), child, errors);
        }
      }
    }
  }

  const json& root_;
};

}  // namespace

std::vector<SchemaError> validate_against_schema(const nlohmann::json& schema, const nlohmann::json& doc) {
  std::vector<SchemaError> errors;
  Checker(schema).check(schema, doc, "", errors);
  return errors;
}

std::vector<SchemaError> validate_against_schema(const nlohmann::json& schema, const nlohmann::json& doc,
                                                 const nlohmann::json& root) {
  std::vector<SchemaError> errors;
  Checker(root).check(schema, doc, "", errors);
  return errors;
}

}  // namespace ibdiag
