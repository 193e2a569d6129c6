#pragma once

// Delimited text tables (TSV/CSV). UTF-8, LF or CRLF line endings, optional
// BOM, simple double-quoted fields. Numbers are written in shortest
// round-trip form so reruns produce byte-identical files.

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "longboot/error.hpp"

namespace longboot::io {

/// Infer the delimiter from the file extension: .csv -> ',', anything else -> tab.
inline char delimiter_for(const std::filesystem::path& path,
                          std::optional<char> override_delim = std::nullopt) {
    if (override_delim) return *override_delim;
    auto ext = path.extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return ext == ".csv" ? ',' : '\t';
}

/// Parse "tab", "comma", "\t", "," or a single character.
inline char parse_delimiter(std::string_view name) {
    if (name == "tab" || name == "\\t" || name == "\t") return '\t';
    if (name == "comma" || name == ",") return ',';
    if (name == "semicolon" || name == ";") return ';';
    if (name.size() == 1) return name.front();
    throw UsageError("io", "unknown delimiter '" + std::string(name) + "'");
}

inline std::vector<std::string> split_fields(std::string_view line, char delim) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == delim) {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // 1-based source line of each row
};

/// Read a delimited file. Blank lines are skipped; the first non-blank line is the header.
inline Table read_table(const std::filesystem::path& path, char delim, const std::string& module) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(module, "cannot open '" + path.string() + "'");
    Table table;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
            static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
            line.erase(0, 3);
        }
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto fields = split_fields(line, delim);
        if (!have_header) {
            table.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != table.header.size()) {
            throw MalformedInput(module, path.filename().string() + " row " +
                                             std::to_string(line_no) + ": expected " +
                                             std::to_string(table.header.size()) + " fields, found " +
                                             std::to_string(fields.size()));
        }
        table.rows.push_back(std::move(fields));
        table.line_numbers.push_back(line_no);
    }
    if (!have_header) throw MalformedInput(module, path.filename().string() + ": empty file");
    return table;
}

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

/// Strict integer parse; returns nullopt for anything that is not a base-10 integer.
inline std::optional<std::int64_t> parse_int(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

/// Shortest representation that round-trips; "NA" for non-finite values.
inline std::string format_double(double v) {
    if (!std::isfinite(v)) return "NA";
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

/// Write `text` to `path`, creating parent directories.
inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("io", "cannot write '" + path.string() + "'");
    f << text;
}

/// Accumulates rows and writes them with a fixed delimiter.
class TableWriter {
public:
    explicit TableWriter(char delim = ',') : delim_(delim) {}

    TableWriter& row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << delim_;
            out_ << fields[i];
        }
        out_ << '\n';
        return *this;
    }

    [[nodiscard]] std::string str() const { return out_.str(); }

    void save(const std::filesystem::path& path) const;

private:
    char delim_;
    std::ostringstream out_;
};

inline void TableWriter::save(const std::filesystem::path& path) const { write_text(path, out_.str()); }

}  // namespace longboot::io
