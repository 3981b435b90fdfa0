#include "spotv2/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "spotv2/error.hpp"

namespace spotv2::io {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, fmt::format("cannot open '{}'", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write '{}'", tmp.string()));
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error(ErrorKind::Io, fmt::format("short write to '{}'", tmp.string()));
    }
    fs::rename(tmp, path);
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

double parse_double(std::string_view s) {
    s = trim(s);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
        throw Error(ErrorKind::Format, fmt::format("bad number '{}'", s));
    }
    return value;
}

long long parse_int(std::string_view s) {
    s = trim(s);
    long long value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
        throw Error(ErrorKind::Format, fmt::format("bad integer '{}'", s));
    }
    return value;
}

std::string sha1_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
        throw Error(ErrorKind::Internal, "sha1 digest failed");
    }
    std::string hex;
    hex.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

std::string git_blob_hash(std::string_view bytes) {
    std::string buf = fmt::format("blob {}", bytes.size());
    buf.push_back('\0');
    buf.append(bytes);
    return sha1_hex(buf);
}

std::string file_hash(const fs::path& path) { return git_blob_hash(read_file(path)); }

std::string dir_hash(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw Error(ErrorKind::Io, fmt::format("not a directory: '{}'", dir.string()));
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::string tree;
    for (const auto& f : files) {
        tree += f.filename().string();
        tree.push_back('\0');
        tree += file_hash(f);
        tree.push_back('\n');
    }
    return sha1_hex(tree);
}

std::string Lineage::to_comment() const {
    std::string out = "# lineage stage=" + stage;
    for (const auto& [k, v] : fields) out += " " + k + "=" + v;
    return out;
}

Lineage Lineage::from_comment(std::string_view line) {
    Lineage lin;
    std::string_view rest = line;
    constexpr std::string_view prefix = "# lineage ";
    if (rest.substr(0, prefix.size()) != prefix) {
        throw Error(ErrorKind::Lineage, "missing lineage header");
    }
    rest.remove_prefix(prefix.size());
    while (!rest.empty()) {
        auto sp = rest.find(' ');
        const std::string_view tok = sp == std::string_view::npos ? rest : rest.substr(0, sp);
        const auto eq = tok.find('=');
        if (eq != std::string_view::npos) {
            std::string key(tok.substr(0, eq));
            std::string val(tok.substr(eq + 1));
            if (key == "stage") lin.stage = val;
            else lin.fields[key] = val;
        }
        if (sp == std::string_view::npos) break;
        rest.remove_prefix(sp + 1);
    }
    return lin;
}

const std::string& Lineage::at(const std::string& key) const {
    auto it = fields.find(key);
    if (it == fields.end()) {
        throw Error(ErrorKind::Lineage, fmt::format("lineage of stage '{}' lacks '{}'", stage, key));
    }
    return it->second;
}

Lineage read_lineage(std::string_view content) {
    auto nl = content.find('\n');
    auto first = trim(content.substr(0, nl));
    return Lineage::from_comment(first);
}

std::vector<std::string_view> data_lines(std::string_view content) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start < content.size()) {
        auto nl = content.find('\n', start);
        if (nl == std::string_view::npos) nl = content.size();
        auto line = content.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!trim(line).empty() && line.front() != '#') out.push_back(line);
        start = nl + 1;
    }
    return out;
}

}  // namespace spotv2::io
