#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace spotv2::io {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path);

/// Writes through a sibling temp file and renames it into place.
void write_file_atomic(const fs::path& path, std::string_view content);

/// Splits on commas; no quoting (none of the project's CSV files quote).
std::vector<std::string_view> split_csv(std::string_view line);

std::string_view trim(std::string_view s);

double parse_double(std::string_view s);
long long parse_int(std::string_view s);

/// Lowercase hex SHA-1.
std::string sha1_hex(std::string_view bytes);

/// Git blob id: sha1("blob <len>\0" + bytes).
std::string git_blob_hash(std::string_view bytes);

std::string file_hash(const fs::path& path);

/// Tree-style hash over regular files in a directory (sorted by name).
std::string dir_hash(const fs::path& dir);

/// Provenance record carried in the header of every stage artifact.
struct Lineage {
    std::string stage;
    std::map<std::string, std::string> fields;

    std::string to_comment() const;  // "# lineage stage=... k=v ..."
    static Lineage from_comment(std::string_view line);
    const std::string& at(const std::string& key) const;
    bool has(const std::string& key) const { return fields.count(key) > 0; }
};

/// Returns the lineage from the first '#' line of a text file if present.
Lineage read_lineage(std::string_view content);

/// Iterates data lines (skipping blank and '#' lines).
std::vector<std::string_view> data_lines(std::string_view content);

}  // namespace spotv2::io
