#include "spotv2/panel.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "spotv2/error.hpp"
#include "spotv2/io.hpp"

namespace spotv2 {

std::vector<double> intraday_taus() {
    std::vector<double> taus(kPointsPerDay);
    for (int j = 0; j < kPointsPerDay - 1; ++j) taus[j] = j / 13.0;
    taus[kPointsPerDay - 1] = 389.0 / 390.0;
    return taus;
}

std::string_view to_string(SeriesKind kind) {
    switch (kind) {
        case SeriesKind::Vol: return "vol";
        case SeriesKind::Covol: return "covol";
        case SeriesKind::Vov: return "vov";
        case SeriesKind::Covov: return "covov";
    }
    return "?";
}

SeriesKind series_kind_from_string(std::string_view s) {
    if (s == "vol") return SeriesKind::Vol;
    if (s == "covol") return SeriesKind::Covol;
    if (s == "vov") return SeriesKind::Vov;
    if (s == "covov") return SeriesKind::Covov;
    throw Error(ErrorKind::Format, fmt::format("unknown series kind '{}'", s));
}

std::size_t pair_count(std::size_t n) { return n * (n - 1) / 2; }

std::size_t pair_index(std::size_t n, std::size_t i, std::size_t j) {
    if (i == j || i >= n || j >= n) {
        throw Error(ErrorKind::Argument, fmt::format("invalid pair ({}, {}) for {} assets", i, j, n));
    }
    if (i > j) std::swap(i, j);
    return i * n - i * (i + 1) / 2 + (j - i - 1);
}

double SpotPanel::covol_at(std::size_t i, std::size_t j, std::size_t b) const {
    if (i == j) return vol[i][b];
    return covol[pair_index(num_assets(), i, j)][b];
}

double SpotPanel::covov_at(std::size_t i, std::size_t j, std::size_t b) const {
    if (i == j) return vov[i][b];
    return covov[pair_index(num_assets(), i, j)][b];
}

void SpotPanel::resize(std::size_t n_assets, std::size_t points) {
    if (assets.size() != n_assets) {
        assets.resize(n_assets);
        for (std::size_t i = 0; i < n_assets; ++i) {
            if (assets[i].empty()) assets[i] = fmt::format("A{}", i);
        }
    }
    dates.resize(points);
    tau_index.resize(points);
    vol.assign(n_assets, std::vector<double>(points, 0.0));
    vov.assign(n_assets, std::vector<double>(points, 0.0));
    covol.assign(pair_count(n_assets), std::vector<double>(points, 0.0));
    covov.assign(pair_count(n_assets), std::vector<double>(points, 0.0));
}

void SpotPanel::append(const SpotPanel& other) {
    if (other.assets != assets) throw Error(ErrorKind::Argument, "append: asset lists differ");
    dates.insert(dates.end(), other.dates.begin(), other.dates.end());
    tau_index.insert(tau_index.end(), other.tau_index.begin(), other.tau_index.end());
    auto cat = [](auto& dst, const auto& src) {
        for (std::size_t k = 0; k < dst.size(); ++k) {
            dst[k].insert(dst[k].end(), src[k].begin(), src[k].end());
        }
    };
    cat(vol, other.vol);
    cat(vov, other.vov);
    cat(covol, other.covol);
    cat(covov, other.covov);
}

void validate(const SpotPanel& p) {
    const auto n = p.num_assets();
    const auto len = p.size();
    if (p.tau_index.size() != len || p.vol.size() != n || p.vov.size() != n ||
        p.covol.size() != pair_count(n) || p.covov.size() != pair_count(n)) {
        throw Error(ErrorKind::Validation, "panel series counts are inconsistent");
    }
    auto check = [&](const std::vector<std::vector<double>>& series, std::string_view what) {
        for (const auto& s : series) {
            if (s.size() != len) {
                throw Error(ErrorKind::Validation, fmt::format("panel {} series length mismatch", what));
            }
        }
    };
    check(p.vol, "vol");
    check(p.vov, "vov");
    check(p.covol, "covol");
    check(p.covov, "covov");
}

std::string panel_to_csv(const SpotPanel& p, const std::string& lineage_comment) {
    validate(p);
    const auto n = p.num_assets();
    std::string out;
    if (!lineage_comment.empty()) out += lineage_comment + "\n";
    out += "date,tau_index,kind,asset_i,asset_j,value\n";
    for (std::size_t b = 0; b < p.size(); ++b) {
        const auto date = format_date(p.dates[b]);
        const int tau = p.tau_index[b];
        for (std::size_t i = 0; i < n; ++i) {
            out += fmt::format("{},{},vol,{},,{:.17g}\n", date, tau, p.assets[i], p.vol[i][b]);
        }
        for (std::size_t i = 0; i < n; ++i) {
            out += fmt::format("{},{},vov,{},,{:.17g}\n", date, tau, p.assets[i], p.vov[i][b]);
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                out += fmt::format("{},{},covol,{},{},{:.17g}\n", date, tau, p.assets[i], p.assets[j],
                                   p.covol[pair_index(n, i, j)][b]);
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                out += fmt::format("{},{},covov,{},{},{:.17g}\n", date, tau, p.assets[i], p.assets[j],
                                   p.covov[pair_index(n, i, j)][b]);
            }
        }
    }
    return out;
}

SpotPanel panel_from_csv(std::string_view csv) {
    auto lines = io::data_lines(csv);
    if (lines.empty() || io::trim(lines.front()) != "date,tau_index,kind,asset_i,asset_j,value") {
        throw Error(ErrorKind::Format, "bad spot panel header");
    }
    struct Row {
        Date date;
        int tau;
        SeriesKind kind;
        std::string a, b;
        double value;
    };
    std::vector<Row> rows;
    rows.reserve(lines.size());
    std::vector<std::string> assets;
    std::map<std::string, std::size_t> asset_pos;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        auto c = io::split_csv(lines[r]);
        if (c.size() != 6) throw Error(ErrorKind::Format, fmt::format("bad panel row {}", r));
        Row row{parse_date(io::trim(c[0])), static_cast<int>(io::parse_int(c[1])),
                series_kind_from_string(io::trim(c[2])), std::string(io::trim(c[3])),
                std::string(io::trim(c[4])), io::parse_double(c[5])};
        if (row.kind == SeriesKind::Vol && !asset_pos.count(row.a)) {
            asset_pos[row.a] = assets.size();
            assets.push_back(row.a);
        }
        rows.push_back(std::move(row));
    }

    SpotPanel p;
    p.assets = assets;
    // Points are identified by (date, tau) in file order.
    std::vector<std::pair<Date, int>> points;
    for (const auto& row : rows) {
        std::pair<Date, int> key{row.date, row.tau};
        if (points.empty() || points.back() != key) {
            if (!points.empty() && key < points.back()) {
                throw Error(ErrorKind::Format, "panel rows are not in chronological order");
            }
            points.push_back(key);
        }
    }
    p.resize(assets.size(), points.size());
    std::size_t b = 0;
    for (const auto& row : rows) {
        while (points[b] != std::pair<Date, int>{row.date, row.tau}) ++b;
        p.dates[b] = row.date;
        p.tau_index[b] = row.tau;
        auto find = [&](const std::string& name) {
            auto it = asset_pos.find(name);
            if (it == asset_pos.end()) {
                throw Error(ErrorKind::Format, fmt::format("unknown asset '{}' in panel", name));
            }
            return it->second;
        };
        const auto i = find(row.a);
        switch (row.kind) {
            case SeriesKind::Vol: p.vol[i][b] = row.value; break;
            case SeriesKind::Vov: p.vov[i][b] = row.value; break;
            case SeriesKind::Covol: p.covol[pair_index(assets.size(), i, find(row.b))][b] = row.value; break;
            case SeriesKind::Covov: p.covov[pair_index(assets.size(), i, find(row.b))][b] = row.value; break;
        }
    }
    return p;
}

}  // namespace spotv2
