#pragma once

#include <string>
#include <vector>

#include "ktts/types.hpp"

namespace ktts::csv {

// RFC-4180-style rows: comma separated, double quotes for fields containing
// commas, quotes or newlines. Throws DataError with a row number on
// malformed input.
std::vector<std::vector<std::string>> parse(const std::string& text,
                                            const std::string& source_name);

std::vector<std::vector<std::string>> parse_file(const std::string& path);

std::string escape_field(const std::string& field);

}  // namespace ktts::csv
