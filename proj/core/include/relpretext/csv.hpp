#pragma once

#include <string>
#include <vector>

namespace relpretext {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// RFC-4180: quoted fields, doubled quotes, embedded commas/newlines.
CsvTable read_csv(const std::string& path);

std::string csv_escape(const std::string& field);

// Shortest round-trip decimal form (std::to_chars), locale-free.
std::string format_double(double v);

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);
  ~CsvWriter();
  void write_row(const std::vector<std::string>& fields);
  void close();

 private:
  void* out_;
};

}  // namespace relpretext
