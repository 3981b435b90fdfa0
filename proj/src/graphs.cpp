#include "spotv2/graphs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "spotv2/error.hpp"
#include "spotv2/io.hpp"
#include "spotv2/parallel.hpp"

namespace spotv2::graphs {

namespace fs = std::filesystem;

std::string_view to_string(Horizon h) { return h == Horizon::Single ? "single" : "multi"; }

Horizon horizon_from_string(std::string_view s) {
    if (s == "single") return Horizon::Single;
    if (s == "multi") return Horizon::Multi;
    throw Error(ErrorKind::Config, fmt::format("horizon must be single or multi, got '{}'", s));
}

int horizon_steps(Horizon h) { return h == Horizon::Single ? 1 : kPointsPerDay; }

std::size_t node_feature_len(std::size_t n_assets, int lags) {
    return n_assets * static_cast<std::size_t>(lags + 1);
}

std::size_t edge_feature_len(int lags) { return 3 * static_cast<std::size_t>(lags + 1); }

namespace {

GraphSnapshot make_snapshot(const SpotPanel& p, std::size_t b, int lags, int steps) {
    const auto na = p.num_assets();
    const auto np = pair_count(na);
    const auto width = static_cast<std::size_t>(lags + 1);
    GraphSnapshot s;
    s.b = b;
    s.target_b = b + 1;
    s.target_date = p.dates[b + 1];
    s.node = Mat(na, node_feature_len(na, lags));
    s.edge = Mat(np, edge_feature_len(lags));
    s.target = Mat(na, static_cast<std::size_t>(steps));
    for (std::size_t i = 0; i < na; ++i) {
        std::size_t col = 0;
        for (std::size_t l = 0; l < width; ++l) s.node(i, col++) = p.vol[i][b - l];
        for (std::size_t l = 0; l < width; ++l) {
            for (std::size_t j = 0; j < na; ++j) {
                if (j != i) s.node(i, col++) = p.covol[pair_index(na, i, j)][b - l];
            }
        }
        for (int h = 0; h < steps; ++h) s.target(i, h) = p.vol[i][b + 1 + h];
    }
    for (std::size_t i = 0; i < na; ++i) {
        for (std::size_t j = i + 1; j < na; ++j) {
            const auto k = pair_index(na, i, j);
            for (std::size_t l = 0; l < width; ++l) {
                s.edge(k, l) = p.vov[i][b - l];
                s.edge(k, width + l) = p.vov[j][b - l];
                s.edge(k, 2 * width + l) = p.covov[k][b - l];
            }
        }
    }
    return s;
}

bool complete_next_day(const SpotPanel& p, std::size_t b) {
    if (b + kPointsPerDay >= p.size()) return false;
    for (int h = 0; h < kPointsPerDay; ++h) {
        const auto t = b + 1 + static_cast<std::size_t>(h);
        if (p.tau_index[t] != h || p.dates[t] != p.dates[b + 1]) return false;
    }
    return true;
}

}  // namespace

std::vector<GraphSnapshot> build_snapshots(const SpotPanel& panel, int lags, Horizon horizon,
                                           int workers) {
    validate(panel);
    if (lags < 0) throw Error(ErrorKind::Argument, "lags must be non-negative");
    const int steps = horizon_steps(horizon);
    if (static_cast<std::size_t>(lags) >= panel.size() ||
        panel.size() <= static_cast<std::size_t>(lags + steps)) {
        throw Error(ErrorKind::Argument,
                    fmt::format("panel of {} points is too short for L={} and horizon {}", panel.size(),
                                lags, steps));
    }
    std::vector<std::size_t> at;
    for (auto b = static_cast<std::size_t>(lags); b + 1 < panel.size(); ++b) {
        if (horizon == Horizon::Single) {
            at.push_back(b);
        } else if (panel.tau_index[b] == kPointsPerDay - 1 && complete_next_day(panel, b)) {
            at.push_back(b);
        }
    }
    std::vector<GraphSnapshot> out(at.size());
    parallel_for(at.size(), workers, [&](std::size_t k) { out[k] = make_snapshot(panel, at[k], lags, steps); });
    return out;
}

void validate(const SplitBoundaries& bounds) {
    if (!(bounds.train_end < bounds.val_end && bounds.val_end < bounds.test_end)) {
        throw Error(ErrorKind::Config,
                    fmt::format("split boundaries must be strictly increasing (got {}, {}, {})",
                                format_date(bounds.train_end), format_date(bounds.val_end),
                                format_date(bounds.test_end)));
    }
}

DatasetSplit split_chronological(const std::vector<GraphSnapshot>& snaps,
                                 const SplitBoundaries& bounds) {
    validate(bounds);
    DatasetSplit split;
    for (std::size_t k = 0; k < snaps.size(); ++k) {
        const auto d = snaps[k].target_date;
        if (d <= bounds.train_end) split.train.push_back(k);
        else if (d <= bounds.val_end) split.val.push_back(k);
        else if (d <= bounds.test_end) split.test.push_back(k);
        else ++split.dropped;
    }
    if (split.train.empty()) {
        throw Error(ErrorKind::Config,
                    fmt::format("training partition is empty (train_end {})", format_date(bounds.train_end)));
    }
    return split;
}

PointCounts count_points(const std::vector<Date>& dates, const SplitBoundaries& bounds) {
    validate(bounds);
    PointCounts c;
    for (const auto d : dates) {
        if (d <= bounds.train_end) ++c.train;
        else if (d <= bounds.val_end) ++c.val;
        else if (d <= bounds.test_end) ++c.test;
        else ++c.dropped;
    }
    return c;
}

namespace {

void fit_block(const std::vector<GraphSnapshot>& snaps, const std::vector<std::size_t>& train,
               Mat GraphSnapshot::*field, std::vector<double>& mean, std::vector<double>& sd,
               std::vector<std::string>& warnings, std::string_view what) {
    const auto cols = (snaps[train[0]].*field).cols;
    mean.assign(cols, 0.0);
    sd.assign(cols, 0.0);
    std::vector<double> lo(cols, std::numeric_limits<double>::infinity());
    std::vector<double> hi(cols, -std::numeric_limits<double>::infinity());
    double count = 0.0;
    for (auto k : train) {
        const auto& m = snaps[k].*field;
        for (std::size_t r = 0; r < m.rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                mean[c] += m(r, c);
                lo[c] = std::min(lo[c], m(r, c));
                hi[c] = std::max(hi[c], m(r, c));
            }
        }
        count += static_cast<double>(m.rows);
    }
    for (std::size_t c = 0; c < cols; ++c) {
        // A constant column centres to exactly zero.
        mean[c] = lo[c] == hi[c] ? lo[c] : mean[c] / count;
    }
    for (auto k : train) {
        const auto& m = snaps[k].*field;
        for (std::size_t r = 0; r < m.rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                const double d = m(r, c) - mean[c];
                sd[c] += d * d;
            }
        }
    }
    for (std::size_t c = 0; c < cols; ++c) {
        sd[c] = std::sqrt(sd[c] / count);
        if (sd[c] == 0.0 || sd[c] <= 1e-12 * std::abs(mean[c])) {
            warnings.push_back(fmt::format("{} feature {} has zero variance on train; std clamped to 1", what, c));
            sd[c] = 1.0;
        }
    }
}

void apply(Mat& m, const std::vector<double>& mean, const std::vector<double>& sd, bool forward) {
    if (m.cols != mean.size()) {
        throw Error(ErrorKind::Shape, fmt::format("feature width {} does not match stats width {}", m.cols,
                                                  mean.size()));
    }
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.cols; ++c) {
            m(r, c) = forward ? (m(r, c) - mean[c]) / sd[c] : m(r, c) * sd[c] + mean[c];
        }
    }
}

}  // namespace

FeatureStats fit_stats(const std::vector<GraphSnapshot>& snaps, const std::vector<std::size_t>& train) {
    if (train.empty()) throw Error(ErrorKind::Config, "standardize: training partition is empty");
    FeatureStats s;
    fit_block(snaps, train, &GraphSnapshot::node, s.node_mean, s.node_std, s.warnings, "node");
    if (snaps[train[0]].edge.rows > 0) {
        fit_block(snaps, train, &GraphSnapshot::edge, s.edge_mean, s.edge_std, s.warnings, "edge");
    } else {
        s.edge_mean.assign(snaps[train[0]].edge.cols, 0.0);
        s.edge_std.assign(snaps[train[0]].edge.cols, 1.0);
    }
    return s;
}

void standardize(std::vector<GraphSnapshot>& snaps, const FeatureStats& stats) {
    for (auto& s : snaps) {
        apply(s.node, stats.node_mean, stats.node_std, true);
        apply(s.edge, stats.edge_mean, stats.edge_std, true);
    }
}

void destandardize(std::vector<GraphSnapshot>& snaps, const FeatureStats& stats) {
    for (auto& s : snaps) {
        apply(s.node, stats.node_mean, stats.node_std, false);
        apply(s.edge, stats.edge_mean, stats.edge_std, false);
    }
}

nlohmann::json to_json(const FeatureStats& s) {
    return {{"node_mean", s.node_mean},
            {"node_std", s.node_std},
            {"edge_mean", s.edge_mean},
            {"edge_std", s.edge_std},
            {"warnings", s.warnings}};
}

FeatureStats stats_from_json(const nlohmann::json& j) {
    FeatureStats s;
    s.node_mean = j.at("node_mean").get<std::vector<double>>();
    s.node_std = j.at("node_std").get<std::vector<double>>();
    s.edge_mean = j.at("edge_mean").get<std::vector<double>>();
    s.edge_std = j.at("edge_std").get<std::vector<double>>();
    if (j.contains("warnings")) s.warnings = j.at("warnings").get<std::vector<std::string>>();
    return s;
}

namespace {

void write_rows(std::string& out, std::string_view section, const Mat& m) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        out += fmt::format("{},{}", section, r);
        for (std::size_t c = 0; c < m.cols; ++c) out += fmt::format(",{:.17g}", m(r, c));
        out += '\n';
    }
}

}  // namespace

std::string snapshot_to_csv(const GraphSnapshot& s, const std::string& lineage_comment) {
    std::string out;
    if (!lineage_comment.empty()) out += lineage_comment + "\n";
    out += "section,row,values\n";
    out += fmt::format("meta,{},{},{},{},{},{}\n", s.b, s.target_b, format_date(s.target_date),
                       s.node.rows, s.node.cols, s.edge.cols);
    write_rows(out, "node", s.node);
    write_rows(out, "edge", s.edge);
    write_rows(out, "target", s.target);
    return out;
}

GraphSnapshot snapshot_from_csv(std::string_view csv) {
    const auto lines = io::data_lines(csv);
    if (lines.empty() || lines[0] != "section,row,values") {
        throw Error(ErrorKind::Format, "snapshot: missing 'section,row,values' header");
    }
    GraphSnapshot s;
    bool have_meta = false;
    std::vector<std::vector<double>> node, edge, target;
    for (std::size_t k = 1; k < lines.size(); ++k) {
        const auto f = io::split_csv(lines[k]);
        if (f.size() < 2) throw Error(ErrorKind::Format, fmt::format("snapshot: short line {}", k + 1));
        if (f[0] == "meta") {
            if (f.size() != 7) throw Error(ErrorKind::Format, "snapshot: malformed meta line");
            s.b = static_cast<std::size_t>(io::parse_int(f[1]));
            s.target_b = static_cast<std::size_t>(io::parse_int(f[2]));
            s.target_date = parse_date(f[3]);
            have_meta = true;
            continue;
        }
        std::vector<double> row;
        row.reserve(f.size() - 2);
        for (std::size_t c = 2; c < f.size(); ++c) row.push_back(io::parse_double(f[c]));
        if (f[0] == "node") node.push_back(std::move(row));
        else if (f[0] == "edge") edge.push_back(std::move(row));
        else if (f[0] == "target") target.push_back(std::move(row));
        else throw Error(ErrorKind::Format, fmt::format("snapshot: unknown section '{}'", f[0]));
    }
    if (!have_meta) throw Error(ErrorKind::Format, "snapshot: missing meta line");
    auto to_mat = [](const std::vector<std::vector<double>>& rows, std::size_t fallback_cols) {
        Mat m(rows.size(), rows.empty() ? fallback_cols : rows[0].size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != m.cols) throw Error(ErrorKind::Format, "snapshot: ragged rows");
            std::copy(rows[r].begin(), rows[r].end(), m.data.begin() + static_cast<std::ptrdiff_t>(r * m.cols));
        }
        return m;
    };
    s.node = to_mat(node, 0);
    s.edge = to_mat(edge, 0);
    s.target = to_mat(target, 0);
    return s;
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
    fs::create_directories(dir);
    std::string lineage;
    if (ds.meta.contains("lineage")) lineage = ds.meta.at("lineage").get<std::string>();
    auto emit = [&](std::string_view name, const std::vector<GraphSnapshot>& snaps) {
        const auto sub = dir / "snapshots" / std::string(name);
        if (fs::exists(sub)) fs::remove_all(sub);
        fs::create_directories(sub);
        for (const auto& s : snaps) {
            io::write_file_atomic(sub / fmt::format("{}.csv", s.b), snapshot_to_csv(s, lineage));
        }
    };
    emit("train", ds.train);
    emit("val", ds.val);
    emit("test", ds.test);
    nlohmann::json j = ds.meta;
    j["stats"] = to_json(ds.stats);
    io::write_file_atomic(dir / "stats.json", j.dump(2) + "\n");
}

Dataset read_dataset(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error(ErrorKind::Io, fmt::format("dataset directory {} not found", dir.string()));
    Dataset ds;
    auto j = nlohmann::json::parse(io::read_file(dir / "stats.json"));
    ds.stats = stats_from_json(j.at("stats"));
    j.erase("stats");
    ds.meta = j;
    auto load = [&](std::string_view name) {
        std::vector<GraphSnapshot> out;
        const auto sub = dir / "snapshots" / std::string(name);
        if (!fs::is_directory(sub)) return out;
        for (const auto& entry : fs::directory_iterator(sub)) {
            if (entry.path().extension() == ".csv") out.push_back(snapshot_from_csv(io::read_file(entry.path())));
        }
        std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.b < b.b; });
        return out;
    };
    ds.train = load("train");
    ds.val = load("val");
    ds.test = load("test");
    return ds;
}

}  // namespace spotv2::graphs
