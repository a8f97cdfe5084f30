#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chronotopic/common.hpp"

namespace chronotopic {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Binary matrix format: 16-byte header (magic "EMB1", u32 rows, u32 cols,
// u32 reserved, little-endian) followed by rows*cols float32 little-endian,
// row-major. Shared by embedding dumps and model matrices.
// ---------------------------------------------------------------------------

void write_matrix_f32(const fs::path& path, const MatrixF& m);
MatrixF read_matrix_f32(const fs::path& path);

void write_matrix_f32(const fs::path& path, const Matrix& m);
Matrix read_matrix_f64(const fs::path& path);

// ---------------------------------------------------------------------------
// jsonl: one JSON object per line. Callback receives (1-based line number,
// parsed object). A malformed line raises ParseError naming the line.
// ---------------------------------------------------------------------------

void for_each_jsonl(const fs::path& path,
                    const std::function<void(std::size_t, const nlohmann::json&)>& fn);

void write_text_file(const fs::path& path, const std::string& content);
std::string read_text_file(const fs::path& path);
void append_line(const fs::path& path, const std::string& line);

nlohmann::json read_json_file(const fs::path& path);
void write_json_file(const fs::path& path, const nlohmann::json& j);

/// FNV-1a 64 checksum of a file's raw bytes, as a lowercase hex string.
std::string file_checksum(const fs::path& path);

/// Minimal CSV field quoting: wraps in quotes when the field contains a
/// comma, quote, or newline; embedded quotes doubled.
std::string csv_quote(const std::string& field);

/// Split one CSV record honoring quoted fields. No multi-line fields.
std::vector<std::string> csv_split(const std::string& line);

/// Fixed-point formatting helper ("%.2f" and friends) used everywhere a
/// number lands in a report, so output bytes are locale-independent.
std::string format_fixed(double value, int decimals);

}  // namespace chronotopic
