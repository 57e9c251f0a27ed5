#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tabenc/core.hpp"

namespace tabenc {

// JSONL dataset line:
//   {"table": {"header": [...], "rows": [[...], ...]}, "query": "...", "answer": [...]}
// Separators are ", " and ": " and keys appear in exactly this order so that
// files are byte-stable.

std::string json_quote(const std::string& s);
std::string json_string_array(const std::vector<std::string>& xs);
std::string table_to_json(const Table& t);
std::string example_to_json_line(const QAExample& ex);

/// Accepts either a bare table object or a dataset line with a "table" key.
Table table_from_json_text(const std::string& text);
QAExample example_from_json_line(const std::string& line);

std::vector<QAExample> read_dataset(const std::filesystem::path& path);
/// Reads the "answer" array of every non-empty line.
std::vector<std::vector<std::string>> read_answers(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

/// Writes to `<path>.tmp` and renames on success.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace tabenc
