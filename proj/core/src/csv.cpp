#include "relpretext/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "relpretext/error.hpp"

namespace relpretext {

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("FileOpen", "cannot open CSV file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  CsvTable table;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool record_started = false;
  size_t i = 0;
  auto end_field = [&]() {
    record.push_back(field);
    field.clear();
  };
  auto end_record = [&]() {
    end_field();
    if (table.header.empty())
      table.header = record;
    else
      table.rows.push_back(record);
    record.clear();
    record_started = false;
  };
  while (i < text.size()) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      ++i;
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        record_started = true;
        ++i;
        break;
      case ',':
        end_field();
        record_started = true;
        ++i;
        break;
      case '\r':
        ++i;
        break;
      case '\n':
        end_record();
        ++i;
        break;
      default:
        field.push_back(c);
        record_started = true;
        ++i;
    }
  }
  if (in_quotes) fail("CsvParse", "unterminated quoted field in " + path);
  if (record_started || !field.empty() || !record.empty()) end_record();
  return table;
}

std::string csv_escape(const std::string& field) {
  bool needs = field.find_first_of(",\"\n\r") != std::string::npos;
  if (!needs) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) fail("FileOpen", "cannot open CSV file for writing: " + path);
  out_ = f;
}

CsvWriter::~CsvWriter() { close(); }

void CsvWriter::write_row(const std::vector<std::string>& fields) {
  auto* f = static_cast<std::FILE*>(out_);
  if (!f) fail("FileWrite", "CSV writer already closed");
  std::string line;
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) line.push_back(',');
    line += csv_escape(fields[i]);
  }
  line.push_back('\n');
  std::fwrite(line.data(), 1, line.size(), f);
}

void CsvWriter::close() {
  if (out_) {
    std::fclose(static_cast<std::FILE*>(out_));
    out_ = nullptr;
  }
}

}  // namespace relpretext
