#pragma once

// Minimal JSON Schema (draft-07 subset) checker for experiment configs.
// Supported keywords: type, enum, const, properties, required,
// additionalProperties, items, minItems, maxItems, minimum, maximum,
// exclusiveMinimum, exclusiveMaximum, minLength, oneOf, $ref ("#/..." only).

#include <string>
#include <vector>

#include "json.hpp"

namespace ibdiag {

struct SchemaError {
  std::string path;  // JSON pointer into the document, "" for the root
  std::string message;
};

std::vector<SchemaError> validate_against_schema(const nlohmann::json& schema, const nlohmann::json& doc);
// Same, resolving $ref against `root` (e.g. a sub-schema of a larger document).
std::vector<SchemaError> validate_against_schema(const nlohmann::json& schema, const nlohmann::json& doc,
                                                 const nlohmann::json& root);

}  // namespace ibdiag
