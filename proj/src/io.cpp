#include "chronotopic/io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace chronotopic {

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_header(std::ostream& out, std::uint32_t rows, std::uint32_t cols) {
  out.write(kMagic, 4);
  put_u32(out, rows);
  put_u32(out, cols);
  put_u32(out, 0);  // reserved
}

std::pair<std::uint32_t, std::uint32_t> read_header(std::istream& in, const fs::path& path,
                                                    std::uintmax_t file_size) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad magic in matrix file: " + path.string());
  std::uint32_t rows = get_u32(in);
  std::uint32_t cols = get_u32(in);
  get_u32(in);  // reserved
  std::uintmax_t expected = 16 + std::uintmax_t{rows} * cols * sizeof(float);
  if (file_size != expected)
    throw FormatError("matrix file " + path.string() + ": header declares " +
                      std::to_string(rows) + "x" + std::to_string(cols) + " (" +
                      std::to_string(expected) + " bytes) but file holds " +
                      std::to_string(file_size) + " bytes");
  return {rows, cols};
}

}  // namespace

void write_matrix_f32(const fs::path& path, const MatrixF& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for write: " + path.string());
  write_header(out, static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols()));
  // MatrixF is row-major; float layout on every supported target is IEEE LE.
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(float) * m.size()));
  if (!out) throw FormatError("short write: " + path.string());
}

void write_matrix_f32(const fs::path& path, const Matrix& m) {
  write_matrix_f32(path, MatrixF(m.cast<float>()));
}

MatrixF read_matrix_f32(const fs::path& path) {
  if (!fs::exists(path)) throw FormatError("no such file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path.string());
  auto [rows, cols] = read_header(in, path, fs::file_size(path));
  MatrixF m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(float) * m.size()));
  if (!in) throw FormatError("short read: " + path.string());
  return m;
}

Matrix read_matrix_f64(const fs::path& path) { return read_matrix_f32(path).cast<double>(); }

void for_each_jsonl(const fs::path& path,
                    const std::function<void(std::size_t, const nlohmann::json&)>& fn) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open: " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": malformed JSON record");
    fn(lineno, j);
  }
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for write: " + path.string());
  out << content;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw FormatError("cannot open for append: " + path.string());
  out << line << '\n';
  out.flush();
}

nlohmann::json read_json_file(const fs::path& path) {
  nlohmann::json j = nlohmann::json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded()) throw ParseError("malformed JSON: " + path.string());
  return j;
}

void write_json_file(const fs::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

std::string file_checksum(const fs::path& path) {
  std::string bytes = read_text_file(path);
  std::uint64_t h = fnv1a64(bytes.data(), bytes.size());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c == '\r') {
      // tolerate CRLF
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

}  // namespace chronotopic
