#include "spotv2/nn/checkpoint.hpp"

#include <bit>

#include <fmt/format.h>

#include "spotv2/error.hpp"
#include "spotv2/io.hpp"

namespace spotv2::nn {

namespace fs = std::filesystem;

namespace {

void put_le(std::string& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

double get_le(const char* p) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
    return std::bit_cast<double>(bits);
}

fs::path blob_path(const fs::path& path) { return fs::path(path.string() + ".bin"); }

}  // namespace

void save_checkpoint(const fs::path& path, const ParamSet& params, const nlohmann::json& config) {
    std::string blob;
    blob.reserve(params.count() * 8);
    nlohmann::json entries = nlohmann::json::array();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < params.tensors.size(); ++k) {
        const auto& v = params.tensors[k].value();
        entries.push_back({{"name", params.names[k]}, {"rows", v.rows}, {"cols", v.cols}, {"offset", offset}});
        for (double x : v.data) put_le(blob, x);
        offset += v.size();
    }
    io::write_file_atomic(blob_path(path), blob);
    nlohmann::json manifest = {{"format", "spotv2-checkpoint-1"},
                               {"dtype", "float64-le"},
                               {"blob", blob_path(path).filename().string()},
                               {"blob_sha", io::git_blob_hash(blob)},
                               {"config", config},
                               {"tensors", entries}};
    io::write_file_atomic(path, manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& path) {
    const auto manifest = nlohmann::json::parse(io::read_file(path));
    if (manifest.value("format", "") != "spotv2-checkpoint-1") {
        throw Error(ErrorKind::Format, fmt::format("{} is not a spotv2 checkpoint", path.string()));
    }
    const auto blob = io::read_file(path.parent_path() / manifest.at("blob").get<std::string>());
    if (io::git_blob_hash(blob) != manifest.at("blob_sha").get<std::string>()) {
        throw Error(ErrorKind::Lineage, fmt::format("checkpoint blob for {} does not match its manifest", path.string()));
    }
    Checkpoint ck;
    ck.config = manifest.at("config");
    for (const auto& e : manifest.at("tensors")) {
        Mat m(e.at("rows").get<std::size_t>(), e.at("cols").get<std::size_t>());
        const auto off = e.at("offset").get<std::size_t>();
        if ((off + m.size()) * 8 > blob.size()) throw Error(ErrorKind::Format, "checkpoint blob is truncated");
        for (std::size_t k = 0; k < m.size(); ++k) m.data[k] = get_le(blob.data() + (off + k) * 8);
        ck.tensors.emplace(e.at("name").get<std::string>(), std::move(m));
    }
    return ck;
}

void restore(ParamSet& params, const Checkpoint& ckpt) {
    for (std::size_t k = 0; k < params.tensors.size(); ++k) {
        auto it = ckpt.tensors.find(params.names[k]);
        if (it == ckpt.tensors.end()) {
            throw Error(ErrorKind::Format, fmt::format("checkpoint lacks parameter '{}'", params.names[k]));
        }
        auto& v = params.tensors[k].value();
        if (!v.same_shape(it->second)) {
            throw Error(ErrorKind::Shape, fmt::format("parameter '{}' is {}x{} but checkpoint holds {}x{}", params.names[k],
                                                      v.rows, v.cols, it->second.rows, it->second.cols));
        }
        v.data = it->second.data;
    }
}

}  // namespace spotv2::nn
