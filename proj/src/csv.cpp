#include "ktts/csv.hpp"

#include <fstream>
#include <sstream>

namespace ktts::csv {

std::vector<std::vector<std::string>> parse(const std::string& text,
                                            const std::string& source_name) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  size_t line = 1;

  auto end_field = [&] {
    row.push_back(field);
    field.clear();
    field_was_quoted = false;
  };
  auto end_row = [&] {
    end_field();
    // A lone blank line is not a record.
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(row);
    row.clear();
  };

  for (size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || field_was_quoted)
          throw DataError(source_name + " line " + std::to_string(line) +
                          ": quote inside unquoted field");
        in_quotes = true;
        field_was_quoted = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        ++line;
        break;
      default:
        field += c;
    }
  }
  if (in_quotes)
    throw DataError(source_name + ": unterminated quoted field at end of file");
  if (!field.empty() || !row.empty()) end_row();
  return rows;
}

std::vector<std::vector<std::string>> parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

std::string escape_field(const std::string& field) {
  bool needs = field.find_first_of(",\"\n\r") != std::string::npos;
  if (!needs) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

}  // namespace ktts::csv
