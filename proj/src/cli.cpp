#include "spotv2/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <map>
#include <set>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "spotv2/baselines.hpp"
#include "spotv2/calendar.hpp"
#include "spotv2/error.hpp"
#include "spotv2/evaluate.hpp"
#include "spotv2/explain.hpp"
#include "spotv2/fourier.hpp"
#include "spotv2/gat.hpp"
#include "spotv2/ingest.hpp"
#include "spotv2/io.hpp"
#include "spotv2/nn/checkpoint.hpp"
#include "spotv2/panel.hpp"
#include "spotv2/parallel.hpp"
#include "spotv2/simulate.hpp"

namespace spotv2::cli {

using json = nlohmann::json;

namespace {

std::string hash_json(const json& j) { return io::sha1_hex(j.dump()); }

void require_dir(const fs::path& p) {
    if (!fs::is_directory(p)) throw Error(ErrorKind::Io, fmt::format("input directory not found: {}", p.string()));
}

void require_file(const fs::path& p) {
    if (!fs::is_regular_file(p)) throw Error(ErrorKind::Io, fmt::format("input file not found: {}", p.string()));
}

json read_json(const fs::path& p) {
    require_file(p);
    try {
        return json::parse(io::read_file(p));
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::Config, fmt::format("{}: {}", p.string(), e.what()));
    }
}

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::vector<graphs::GraphSnapshot>& split_of(graphs::Dataset& ds, const std::string& split) {
    if (split == "train") return ds.train;
    if (split == "val") return ds.val;
    if (split == "test") return ds.test;
    throw Error(ErrorKind::Argument, fmt::format("unknown split '{}' (train|val|test)", split));
}

std::vector<std::string> dataset_assets(const graphs::Dataset& ds) {
    return ds.meta.at("assets").get<std::vector<std::string>>();
}

std::string dataset_panel_hash(const graphs::Dataset& ds) {
    return ds.meta.value("panel_hash", std::string());
}

graphs::Horizon dataset_horizon(const graphs::Dataset& ds) {
    return graphs::horizon_from_string(ds.meta.at("horizon").get<std::string>());
}

std::string prediction_file(const std::string& model, graphs::Horizon h, const std::vector<std::size_t>& bs,
                            const std::vector<Mat>& values, const std::vector<std::string>& assets,
                            const io::Lineage& lin) {
    eval::ForecastSet f{model, h, bs, values};
    return lin.to_comment() + "\n" + eval::forecasts_to_csv(f, assets);
}

std::string history_csv(const io::Lineage& lin, const std::vector<std::array<double, 3>>& rows) {
    std::string out = lin.to_comment() + "\nepoch,train_mse,val_mse\n";
    for (const auto& r : rows) out += fmt::format("{},{:.17g},{:.17g}\n", static_cast<int>(r[0]), r[1], r[2]);
    return out;
}

std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t resolve_seed(std::uint64_t fallback) {
    const char* s = std::getenv("SPOTV2_SEED");
    if (s == nullptr || *s == '\0') return fallback;
    const auto v = io::parse_int(s);
    if (v < 0) throw Error(ErrorKind::Config, "SPOTV2_SEED must be a non-negative integer");
    return static_cast<std::uint64_t>(v);
}

// ---------------------------------------------------------------- stages

void simulate(const SimulateOptions& o, std::ostream& log) {
    const auto spec = sim::spec_from_json(o.spec);
    if (o.days == 0) throw Error(ErrorKind::Argument, "simulate: --days must be positive");
    const auto dates = next_sessions(parse_date(o.start), o.days);
    const json cfg = {{"spec", sim::spec_to_json(spec)}, {"days", o.days},   {"n", o.n},
                      {"seed", o.seed},                  {"start", o.start}, {"tick_prob", o.tick_prob}};
    const io::Lineage lin{"simulate", {{"config", hash_json(cfg)}, {"seed", std::to_string(o.seed)}}};
    fs::create_directories(o.out);
    if (!o.ticks.empty()) fs::create_directories(o.ticks);
    std::vector<sim::SimulatedDay> truth(o.days);
    parallel_for(o.days, o.workers, [&](std::size_t d) {
        auto day = sim::simulate_day(spec, o.n, sim::day_seed(o.seed, d), dates[d]);
        for (std::size_t i = 0; i < day.grids.size(); ++i) {
            const auto name = ingest::asset_day_filename(spec.symbols[i], dates[d]);
            io::write_file_atomic(o.out / name, ingest::grid_to_csv(day.grids[i], lin.to_comment()));
            if (!o.ticks.empty()) {
                const auto tseed = mix(sim::day_seed(o.seed ^ 0x7469636bULL, d) + i);
                io::write_file_atomic(o.ticks / name, sim::ticks_csv(day.grids[i], o.tick_prob, tseed));
            }
        }
        day.grids.clear();
        day.spot_path.clear();
        truth[d] = std::move(day);
    });
    io::write_file_atomic(o.out / "truth_panel.csv", panel_to_csv(sim::truth_panel(spec, truth), lin.to_comment()));
    log << fmt::format("simulate: {} days x {} assets at n={} -> {}\n", o.days, spec.size(), o.n, o.out.string());
}

void simulate_planted(const PlantedOptions& o, std::ostream& log) {
    sim::PlantedSpilloverOptions p;
    p.n_assets = o.assets;
    p.days = o.days;
    p.spill_strength = o.spill;
    p.regime_prob = o.regime_prob;
    p.seed = o.seed;
    const auto ds = sim::planted_spillover_dataset(p);
    const json cfg = {{"assets", o.assets}, {"days", o.days}, {"spill", o.spill},
                      {"regime_prob", o.regime_prob}, {"seed", o.seed}};
    const io::Lineage lin{"simulate", {{"config", hash_json(cfg)}, {"planted", "1"}, {"seed", std::to_string(o.seed)}}};
    ensure_parent(o.out);
    io::write_file_atomic(o.out, panel_to_csv(ds.panel, lin.to_comment()));
    log << fmt::format("simulate: planted-spillover panel, {} assets x {} days -> {}\n", o.assets, o.days,
                       o.out.string());
}

void ingest(const IngestOptions& o, std::ostream& log) {
    require_dir(o.in);
    struct Job {
        fs::path path;
        std::string symbol;
        Date day;
    };
    std::vector<Job> jobs;
    for (const auto& e : fs::directory_iterator(o.in)) {
        if (!e.is_regular_file()) continue;
        Job j{e.path(), {}, {}};
        if (ingest::parse_asset_day_filename(e.path().filename().string(), j.symbol, j.day)) jobs.push_back(j);
    }
    std::sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) { return a.path < b.path; });
    if (jobs.empty()) throw Error(ErrorKind::NoData, fmt::format("ingest: no SYMBOL_YYYY-MM-DD.csv files in {}", o.in.string()));
    const json cfg = {{"venue", std::string(1, o.venue)}, {"n", o.n}, {"beta", o.beta}, {"alpha", o.alpha}};
    const auto cfg_hash = hash_json(cfg);
    fs::create_directories(o.out);
    std::vector<std::string> notes(jobs.size());
    parallel_for(jobs.size(), o.workers, [&](std::size_t k) {
        const auto& job = jobs[k];
        const auto text = io::read_file(job.path);
        const auto ticks = ingest::filter_session(ingest::parse_ticks(text, job.symbol), o.venue);
        const auto distinct = ingest::distinct_timestamps(ticks);
        if (2 * distinct < static_cast<std::size_t>(o.n)) {
            notes[k] = fmt::format("{}: {} distinct in-session timestamps (< n/2); day rejected",
                                   job.path.filename().string(), distinct);
            return;
        }
        auto grid = ingest::resample_last_tick(ticks, o.n, {}, job.day);
        grid = ingest::truncate_jumps(grid, o.beta, o.alpha);
        const io::Lineage lin{"ingest", {{"config", cfg_hash}, {"input", io::git_blob_hash(text)}}};
        io::write_file_atomic(o.out / job.path.filename(), ingest::grid_to_csv(grid, lin.to_comment()));
    });
    std::size_t rejected = 0;
    for (const auto& n : notes) {
        if (!n.empty()) {
            ++rejected;
            log << "ingest: " << n << "\n";
        }
    }
    log << fmt::format("ingest: {} asset-days written, {} rejected -> {}\n", jobs.size() - rejected, rejected,
                       o.out.string());
}

void estimate(const EstimateOptions& o, std::ostream& log) {
    require_dir(o.in);
    std::map<Date, std::vector<ingest::LogPriceGrid>> by_day;
    std::set<std::string> symbols;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(o.in)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& p : files) {
        std::string sym;
        Date day;
        if (!ingest::parse_asset_day_filename(p.filename().string(), sym, day)) continue;
        by_day[day].push_back(ingest::grid_from_csv(io::read_file(p), sym, day));
        symbols.insert(sym);
    }
    if (by_day.empty()) throw Error(ErrorKind::NoData, fmt::format("estimate: no grid files in {}", o.in.string()));
    const int n = by_day.begin()->second.front().n;
    const auto freqs = fourier::freqs_from_json(o.freqs, n);
    std::vector<std::vector<ingest::LogPriceGrid>> days;
    for (auto& [d, g] : by_day) days.push_back(std::move(g));
    const std::vector<std::string> assets(symbols.begin(), symbols.end());
    std::vector<std::string> warnings;
    const auto panel = fourier::estimate_panel(assets, days, freqs, intraday_taus(), o.workers, &warnings);
    for (const auto& w : warnings) log << "estimate: " << w << "\n";
    if (panel.size() == 0) throw Error(ErrorKind::NoData, "estimate: no day has grids for every asset");
    const io::Lineage lin{"estimate", {{"config", hash_json(fourier::to_json(freqs))}, {"input", io::dir_hash(o.in)}}};
    ensure_parent(o.out);
    io::write_file_atomic(o.out, panel_to_csv(panel, lin.to_comment()));
    log << fmt::format("estimate: {} days x {} assets (N={}, M={}, S={}, L={}) -> {}\n", panel.size() / kPointsPerDay,
                       assets.size(), freqs.N, freqs.M, freqs.S, freqs.L, o.out.string());
}

void build_graphs(const BuildOptions& o, std::ostream& log) {
    require_file(o.panel);
    const auto text = io::read_file(o.panel);
    const auto panel_hash = io::git_blob_hash(text);
    const auto panel = panel_from_csv(text);
    SplitBoundaries bounds;
    if (o.splits.is_string() && o.splits.get<std::string>() == "djia") {
        bounds = djia_split_boundaries();
    } else {
        bounds = {parse_date(o.splits.at("train_end").get<std::string>()),
                  parse_date(o.splits.at("val_end").get<std::string>()),
                  parse_date(o.splits.at("test_end").get<std::string>())};
    }
    graphs::validate(bounds);
    auto snaps = graphs::build_snapshots(panel, o.lags, o.horizon, o.workers);
    const auto split = graphs::split_chronological(snaps, bounds);
    const auto stats = graphs::fit_stats(snaps, split.train);
    graphs::standardize(snaps, stats);
    graphs::Dataset ds;
    ds.stats = stats;
    for (auto k : split.train) ds.train.push_back(snaps[k]);
    for (auto k : split.val) ds.val.push_back(snaps[k]);
    for (auto k : split.test) ds.test.push_back(snaps[k]);
    const json boundaries = {{"train_end", format_date(bounds.train_end)},
                             {"val_end", format_date(bounds.val_end)},
                             {"test_end", format_date(bounds.test_end)}};
    const json cfg = {{"lags", o.lags}, {"horizon", graphs::to_string(o.horizon)}, {"splits", boundaries}};
    const io::Lineage lin{"build-graphs", {{"config", hash_json(cfg)}, {"panel", panel_hash}}};
    ds.meta = {{"assets", panel.assets},
               {"lags", o.lags},
               {"horizon", graphs::to_string(o.horizon)},
               {"boundaries", boundaries},
               {"counts",
                {{"train", ds.train.size()}, {"val", ds.val.size()}, {"test", ds.test.size()}, {"dropped", split.dropped}}},
               {"panel_hash", panel_hash},
               {"lineage", lin.to_comment()}};
    graphs::write_dataset(o.out, ds);
    for (const auto& w : stats.warnings) log << "build-graphs: " << w << "\n";
    log << fmt::format("build-graphs: {} train / {} val / {} test snapshots ({} dropped) -> {}\n", ds.train.size(),
                       ds.val.size(), ds.test.size(), split.dropped, o.out.string());
}

void train(const TrainOptions& o, std::ostream& log) {
    require_dir(o.data);
    const auto ds = graphs::read_dataset(o.data);
    if (ds.train.empty()) throw Error(ErrorKind::NoData, "train: dataset has no training snapshots");
    const auto horizon = dataset_horizon(ds);
    auto cfg = gat::gat_config_from_json(
        o.config, horizon == graphs::Horizon::Multi ? gat::GatConfig::multi_step() : gat::GatConfig::single_step());
    cfg.lags = ds.meta.at("lags").get<int>();
    cfg.out_dim = graphs::horizon_steps(horizon);
    cfg.seed = resolve_seed(cfg.seed);
    cfg.validate();
    auto model = gat::make_model(cfg, dataset_assets(ds).size(), ds.train.front().node.cols,
                                 ds.train.front().edge.cols);
    const auto t0 = std::chrono::steady_clock::now();
    const auto hist = gat::train(model, ds.train, ds.val);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const io::Lineage lin{"train",
                          {{"config", hash_json(gat::to_json(cfg))},
                           {"dataset", io::sha1_hex(ds.meta.dump())},
                           {"model", o.name},
                           {"panel", dataset_panel_hash(ds)}}};
    ensure_parent(o.out);
    gat::save_model(o.out, model, {{"name", o.name}, {"lineage", lin.to_comment()}});
    if (!o.history.empty()) {
        std::vector<std::array<double, 3>> rows;
        for (const auto& h : hist) rows.push_back({static_cast<double>(h.epoch), h.train, h.val});
        ensure_parent(o.history);
        io::write_file_atomic(o.history, history_csv(lin, rows));
    }
    log << fmt::format("train: {} ({} parameters, {} epochs, {:.1f}s), final train MSE {:.6g} -> {}\n", o.name,
                       model.params.count(), cfg.epochs, secs, hist.empty() ? 0.0 : hist.back().train,
                       o.out.string());
}

void forecast(const ForecastOptions& o, std::ostream& log) {
    require_file(o.model);
    require_dir(o.data);
    const auto ck = nn::load_checkpoint(o.model);
    const auto name = ck.config.value("name", std::string("spotv2net"));
    const auto model = gat::load_model(o.model);
    auto ds = graphs::read_dataset(o.data);
    const auto& snaps = split_of(ds, o.split);
    if (snaps.empty()) throw Error(ErrorKind::NoData, fmt::format("forecast: split '{}' is empty", o.split));
    if (snaps.front().node.cols != model.node_dim || snaps.front().edge.cols != model.edge_dim ||
        snaps.front().node.rows != model.n_assets) {
        throw Error(ErrorKind::Shape, "forecast: checkpoint and dataset feature shapes differ");
    }
    const auto preds = gat::predict(model, snaps, model.cfg.batch_size);
    std::vector<std::size_t> bs;
    for (const auto& s : snaps) bs.push_back(s.b);
    const io::Lineage lin{"forecast",
                          {{"checkpoint", io::file_hash(o.model)}, {"model", name},
                           {"panel", dataset_panel_hash(ds)}, {"split", o.split}}};
    ensure_parent(o.out);
    io::write_file_atomic(o.out, prediction_file(name, dataset_horizon(ds), bs, preds, dataset_assets(ds), lin));
    log << fmt::format("forecast: {} on {} {} snapshots -> {}\n", name, snaps.size(), o.split, o.out.string());
}

void baseline(const BaselineOptions& o, std::ostream& log) {
    require_dir(o.data);
    auto ds = graphs::read_dataset(o.data);
    const auto horizon = dataset_horizon(ds);
    const int steps = graphs::horizon_steps(horizon);
    const auto assets = dataset_assets(ds);
    const auto& target = split_of(ds, o.split);
    if (target.empty()) throw Error(ErrorKind::NoData, fmt::format("baseline: split '{}' is empty", o.split));
    std::vector<std::size_t> bs;
    for (const auto& s : target) bs.push_back(s.b);
    std::vector<Mat> preds;
    json cfg_json = {{"model", o.model}};
    if (o.model == "har" || o.model == "gbt") {
        require_file(o.panel);
        const auto text = io::read_file(o.panel);
        if (io::git_blob_hash(text) != dataset_panel_hash(ds)) {
            throw Error(ErrorKind::Lineage, fmt::format("baseline: {} is not the panel the dataset was built from",
                                                        o.panel.string()));
        }
        const auto panel = panel_from_csv(text);
        const auto train_end = parse_date(ds.meta.at("boundaries").at("train_end").get<std::string>());
        std::vector<std::size_t> fit_bs;
        for (auto b = static_cast<std::size_t>(baselines::kHarHistory - 1); b + 1 < panel.size(); ++b) {
            if (panel.dates[b + 1] <= train_end) fit_bs.push_back(b);
        }
        if (fit_bs.empty()) throw Error(ErrorKind::NoData, "baseline: no training rows with 13 lags");
        auto to_mat = [&](const std::vector<std::vector<double>>& f) {
            Mat m(f.size(), static_cast<std::size_t>(steps));
            for (std::size_t i = 0; i < f.size(); ++i) std::copy(f[i].begin(), f[i].end(), &m(i, 0));
            return m;
        };
        if (o.model == "har") {
            const auto c = baselines::harspot_fit(panel, fit_bs);
            for (auto b : bs) preds.push_back(to_mat(baselines::harspot_forecast(c, baselines::panel_history(panel, b), steps)));
            cfg_json["coefficients"] = baselines::to_json(c);
            if (!o.save.empty()) {
                ensure_parent(o.save);
                io::write_file_atomic(o.save, baselines::to_json(c).dump(2) + "\n");
            }
        } else {
            auto p = baselines::gbt_params_from_json(o.config);
            p.seed = resolve_seed(p.seed);
            p.workers = o.workers;
            Mat X;
            std::vector<double> y;
            baselines::gbt_design(panel, fit_bs, X, y);
            const auto model = baselines::gbt_fit(X, y, p);
            for (auto b : bs) preds.push_back(to_mat(baselines::gbt_forecast(model, baselines::panel_history(panel, b), steps)));
            cfg_json["params"] = baselines::to_json(p);
            if (!o.save.empty()) {
                ensure_parent(o.save);
                io::write_file_atomic(o.save, baselines::to_json(model).dump() + "\n");
            }
        }
    } else if (o.model == "lstm") {
        if (ds.train.empty()) throw Error(ErrorKind::NoData, "baseline: dataset has no training snapshots");
        auto cfg = baselines::lstm_config_from_json(o.config, horizon == graphs::Horizon::Multi
                                                                   ? baselines::LstmConfig::multi_step()
                                                                   : baselines::LstmConfig::single_step());
        cfg.out_dim = steps;
        cfg.seed = resolve_seed(cfg.seed);
        const int lags = ds.meta.at("lags").get<int>();
        const auto na = assets.size();
        auto model = baselines::make_lstm(cfg, na, na + pair_count(na), static_cast<std::size_t>(lags + 1));
        const auto hist = baselines::lstm_train(model, ds.train, ds.val, lags);
        preds = baselines::lstm_predict(model, target, lags);
        cfg_json["lstm"] = baselines::to_json(cfg);
        if (!o.save.empty()) {
            ensure_parent(o.save);
            baselines::save_lstm(o.save, model, {{"name", "lstm"}});
        }
        if (!o.history.empty()) {
            std::vector<std::array<double, 3>> rows;
            for (const auto& h : hist) rows.push_back({static_cast<double>(h.epoch), h.train, h.val});
            ensure_parent(o.history);
            io::write_file_atomic(o.history, history_csv({"baseline", {{"model", "lstm"}}}, rows));
        }
    } else {
        throw Error(ErrorKind::Argument, fmt::format("baseline: unknown model '{}' (har|gbt|lstm)", o.model));
    }
    const io::Lineage lin{"baseline",
                          {{"config", hash_json(cfg_json)}, {"model", o.model}, {"panel", dataset_panel_hash(ds)},
                           {"split", o.split}}};
    ensure_parent(o.out);
    io::write_file_atomic(o.out, prediction_file(o.model, horizon, bs, preds, assets, lin));
    log << fmt::format("baseline: {} on {} {} snapshots -> {}\n", o.model, bs.size(), o.split, o.out.string());
}

void evaluate(const EvaluateOptions& o, std::ostream& log) {
    require_file(o.actuals);
    if (o.preds.empty()) throw Error(ErrorKind::Argument, "evaluate: no prediction files given");
    const auto text = io::read_file(o.actuals);
    const auto panel_hash = io::git_blob_hash(text);
    const auto panel = panel_from_csv(text);
    std::vector<eval::ForecastSet> sets;
    json inputs = json::array();
    for (const auto& p : o.preds) {
        require_file(p);
        const auto body = io::read_file(p);
        const auto lin = io::read_lineage(body);
        if (!lin.has("panel") || lin.at("panel") != panel_hash) {
            throw Error(ErrorKind::Lineage,
                        fmt::format("evaluate: {} was produced from panel {}, but the actuals file hashes to {}",
                                    p.string(), lin.has("panel") ? lin.at("panel") : std::string("<none>"),
                                    panel_hash));
        }
        const auto name = lin.has("model") ? lin.at("model") : p.stem().string();
        sets.push_back(eval::forecasts_from_csv(body, panel.assets, name));
        inputs.push_back({{"file", p.filename().string()}, {"model", name}, {"hash", io::git_blob_hash(body)}});
    }
    eval::ReportOptions ro;
    ro.mcs.alpha = o.config.value("alpha", ro.mcs.alpha);
    ro.mcs.bootstrap = o.config.value("bootstrap", ro.mcs.bootstrap);
    ro.mcs.block_len = o.config.value("block_len", ro.mcs.block_len);
    ro.mcs.seed = resolve_seed(o.config.value("seed", ro.mcs.seed));
    ro.mcs.workers = o.workers;
    ro.dm_hac_lag = o.config.value("hac_lag", ro.dm_hac_lag);
    auto report = eval::build_report(sets, panel, ro);
    report["lineage"] = {{"stage", "evaluate"}, {"actuals", panel_hash}, {"preds", inputs}};
    ensure_parent(o.out);
    io::write_file_atomic(o.out, report.dump(2) + "\n");
    for (const auto& a : report.at("aggregates")) {
        const auto& q = a.at("qlike");
        log << fmt::format("evaluate: {:<14} MSE {:.6g}  QLIKE {}\n", a.at("model").get<std::string>(),
                           a.at("mse").get<double>(), q.is_null() ? std::string("n/a") : fmt::format("{:.6g}", q.get<double>()));
    }
}

void explain(const ExplainOptions& o, std::ostream& log) {
    require_file(o.model);
    require_dir(o.data);
    const auto model = gat::load_model(o.model);
    auto ds = graphs::read_dataset(o.data);
    auto snaps = split_of(ds, o.split);
    if (o.max_snapshots > 0 && snaps.size() > o.max_snapshots) snaps.resize(o.max_snapshots);
    if (snaps.empty()) throw Error(ErrorKind::NoData, fmt::format("explain: split '{}' is empty", o.split));
    auto cfg = explain::explain_config_from_json(o.config);
    cfg.seed = resolve_seed(cfg.seed);
    const auto results = explain::explain_all(model, snaps, o.nstar, cfg, o.workers);
    const auto assets = dataset_assets(ds);
    const auto heat = explain::frequency_heatmap(results, assets.size());
    for (std::size_t t = 0; t < heat.cols; ++t) {
        double col = 0.0;
        for (std::size_t s = 0; s < heat.rows; ++s) col += heat(s, t);
        if (std::abs(col - 100.0 * static_cast<double>(o.nstar)) > 1e-9 * 100.0 * static_cast<double>(o.nstar)) {
            throw Error(ErrorKind::Internal, fmt::format("explain: heatmap column {} sums to {}", t, col));
        }
    }
    const io::Lineage lin{"explain",
                          {{"checkpoint", io::file_hash(o.model)}, {"config", hash_json(explain::to_json(cfg))},
                           {"nstar", std::to_string(o.nstar)}, {"split", o.split}}};
    ensure_parent(o.out);
    io::write_file_atomic(o.out, lin.to_comment() + "\n" + explain::heatmap_to_csv(heat, assets));
    std::size_t flagged = 0;
    for (const auto& r : results) flagged += r.non_monotone ? 1 : 0;
    if (!o.traces.empty()) {
        fs::create_directories(o.traces);
        for (std::size_t i = 0; i < assets.size(); ++i) {
            json arr = json::array();
            for (const auto& r : results) {
                if (r.target == i) arr.push_back(explain::to_json(r));
            }
            io::write_file_atomic(o.traces / (assets[i] + ".json"), json{{"asset", assets[i]}, {"results", arr}}.dump() + "\n");
        }
    }
    log << fmt::format("explain: {} node explanations over {} snapshots ({} with late objective rises) -> {}\n",
                       results.size(), snaps.size(), flagged, o.out.string());
}

fs::path pipeline(const json& config, const fs::path& out, int workers, std::ostream& log) {
    const auto seed = resolve_seed(config.value("seed", std::uint64_t{1}));
    const auto timed = [&](const char* stage, auto&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        log << fmt::format("pipeline: {} done in {:.1f}s\n", stage,
                           std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    };
    fs::create_directories(out);
    const auto& sc = config.at("simulate");
    const int n = sc.value("n", 23400);

    timed("simulate", [&] {
        SimulateOptions o;
        o.spec = sc.at("spec");
        o.days = sc.value("days", std::size_t{60});
        o.n = n;
        o.seed = seed;
        o.start = sc.value("start", o.start);
        o.tick_prob = sc.value("tick_prob", o.tick_prob);
        o.out = out / "sim";
        o.ticks = out / "raw";
        o.workers = workers;
        simulate(o, log);
    });
    timed("ingest", [&] {
        const auto ic = config.value("ingest", json::object());
        IngestOptions o;
        o.in = out / "raw";
        o.out = out / "grids";
        o.venue = ic.value("venue", std::string("N")).at(0);
        o.n = n;
        o.beta = ic.value("beta", o.beta);
        o.alpha = ic.value("alpha", o.alpha);
        o.workers = workers;
        ingest(o, log);
    });
    const auto panel = out / "spot_panel.csv";
    timed("estimate", [&] {
        EstimateOptions o;
        o.in = out / "grids";
        o.out = panel;
        o.freqs = config.value("freqs", json::object());
        o.workers = workers;
        estimate(o, log);
    });
    const auto data = out / "dataset";
    timed("build-graphs", [&] {
        BuildOptions o;
        o.panel = panel;
        o.out = data;
        o.lags = config.value("lags", 42);
        o.horizon = graphs::horizon_from_string(config.value("horizon", std::string("single")));
        o.splits = config.at("splits");
        o.workers = workers;
        build_graphs(o, log);
    });
    const auto models = config.value("models", json::object());
    std::vector<fs::path> preds;
    auto with_seed = [&](json j) {
        if (!j.contains("seed")) j["seed"] = seed;
        return j;
    };
    for (const auto& name : {"spotv2net", "spotv2net_ne"}) {
        if (!models.contains(name)) continue;
        timed(name, [&] {
            TrainOptions t;
            t.name = name;
            t.config = with_seed(models.at(name));
            if (std::string(name) == "spotv2net_ne") t.config["use_edges"] = false;
            t.data = data;
            t.out = out / "models" / (std::string(name) + ".ckpt");
            t.history = out / "models" / (std::string(name) + "_history.csv");
            train(t, log);
            ForecastOptions f;
            f.model = t.out;
            f.data = data;
            f.out = out / "preds" / (std::string(name) + ".csv");
            forecast(f, log);
            preds.push_back(f.out);
        });
    }
    for (const auto& name : {"har", "gbt", "lstm"}) {
        if (!models.contains(name)) continue;
        timed(name, [&] {
            BaselineOptions b;
            b.model = name;
            b.config = with_seed(models.at(name));
            b.data = data;
            b.panel = panel;
            b.out = out / "preds" / (std::string(name) + ".csv");
            b.workers = workers;
            baseline(b, log);
            preds.push_back(b.out);
        });
    }
    const auto report = out / "report.json";
    timed("evaluate", [&] {
        EvaluateOptions e;
        e.preds = preds;
        e.actuals = panel;
        e.out = report;
        e.config = with_seed(config.value("evaluate", json::object()));
        e.workers = workers;
        evaluate(e, log);
    });
    if (config.contains("explain") && models.contains("spotv2net")) {
        timed("explain", [&] {
            const auto& xc = config.at("explain");
            ExplainOptions x;
            x.model = out / "models" / "spotv2net.ckpt";
            x.data = data;
            x.out = out / "explain" / "heatmap.csv";
            x.traces = out / "explain" / "traces";
            x.nstar = xc.value("nstar", std::size_t{5});
            x.split = xc.value("split", x.split);
            x.max_snapshots = xc.value("max_snapshots", std::size_t{0});
            x.config = with_seed(xc.value("optimizer", json::object()));
            x.workers = workers;
            explain(x, log);
        });
    }
    return report;
}

// ------------------------------------------------------------------- CLI

namespace {

constexpr const char* kFormats = R"(CSV formats (every stage output starts with a '# lineage stage=... k=v' line):
  ticks        timestamp,price,venue         ns since midnight or ISO-8601; one file per SYMBOL_YYYY-MM-DD.csv
  grid         grid_index,log_price          n+1 rows on the uniform 09:30-16:00 partition
  spot_panel   date,tau_index,kind,asset_i,asset_j,value
               kind in vol|covol|vov|covov; asset_j empty for vol and vov; tau_index 0..13
  snapshot     section,row,values            sections meta, node, edge, target (dataset/snapshots/{split}/{b}.csv)
  predictions  b,asset,h,pred                panel origin index, horizon step from 1, raw variance units
  history      epoch,train_mse,val_mse
  heatmap      source,<asset...>             % of explained timestamps in which source is in the target's subgraph
Environment: SPOTV2_SEED overrides every configured seed.)";

int exit_code(ErrorKind k) { return k == ErrorKind::Io ? 2 : 1; }

void report_error(std::ostream& err, const std::string& stage, std::string_view kind, const std::string& msg) {
    err << json{{"error", {{"stage", stage}, {"kind", kind}, {"message", msg}}}}.dump() << "\n";
}

json config_section(const std::string& path, const char* section) {
    if (path.empty()) return json::object();
    auto j = read_json(path);
    if (section != nullptr && j.contains(section)) return j.at(section);
    return j;
}

std::vector<fs::path> split_paths(const std::string& s) {
    std::vector<fs::path> out;
    for (auto part : io::split_csv(s)) {
        part = io::trim(part);
        if (!part.empty()) out.emplace_back(std::string(part));
    }
    return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spot volatility estimation, volatility-spillover graph models and forecast evaluation"};
    app.footer(kFormats);
    app.require_subcommand(1);
    int workers = 1;
    app.add_option("--workers", workers, "Worker thread cap")->check(CLI::PositiveNumber);
    std::function<void()> action;
    std::string stage;

    // simulate
    SimulateOptions so;
    PlantedOptions po;
    std::string spec_path, sim_out, ticks_out;
    bool planted = false;
    auto* s = app.add_subcommand("simulate", "Simulate stochastic-volatility days (grids, optional ticks, truth_panel.csv)");
    s->add_option("--spec", spec_path, "SV model spec JSON");
    s->add_option("--days", so.days, "Number of sessions");
    s->add_option("--n", so.n, "Grid steps per day");
    s->add_option("--seed", so.seed, "Seed");
    s->add_option("--start", so.start, "First session date");
    s->add_option("--out", sim_out, "Output directory (or panel CSV with --planted)")->required();
    s->add_option("--ticks", ticks_out, "Also write synthetic tick files here");
    s->add_option("--tick-prob", so.tick_prob, "Per-second trade probability for tick files");
    s->add_flag("--planted", planted, "Write a planted-spillover spot panel instead");
    s->add_option("--assets", po.assets, "Planted: asset count");
    s->add_option("--spill", po.spill, "Planted: spill strength");
    s->add_option("--regime-prob", po.regime_prob, "Planted: daily coupling probability");
    s->callback([&] {
        stage = "simulate";
        action = [&] {
            if (planted) {
                po.days = so.days;
                po.seed = resolve_seed(so.seed);
                po.out = sim_out;
                simulate_planted(po, out);
                return;
            }
            if (spec_path.empty()) throw Error(ErrorKind::Argument, "simulate: --spec is required");
            so.spec = read_json(spec_path);
            so.seed = resolve_seed(so.seed);
            so.out = sim_out;
            so.ticks = ticks_out;
            so.workers = workers;
            simulate(so, out);
        };
    });

    // ingest
    IngestOptions io_;
    std::string venue = "N", in_dir, out_dir;
    auto* ig = app.add_subcommand("ingest", "Tick files -> filtered, resampled, jump-truncated log-price grids");
    ig->add_option("--in", in_dir, "Tick directory")->required();
    ig->add_option("--out", out_dir, "Grid directory")->required();
    ig->add_option("--venue", venue, "Venue code kept");
    ig->add_option("--n", io_.n, "Grid steps per day");
    ig->add_option("--beta", io_.beta, "Jump threshold scale");
    ig->add_option("--alpha", io_.alpha, "Jump threshold exponent");
    ig->callback([&] {
        stage = "ingest";
        action = [&] {
            if (venue.size() != 1) throw Error(ErrorKind::Argument, "ingest: --venue must be one character");
            io_.venue = venue[0];
            io_.in = in_dir;
            io_.out = out_dir;
            io_.workers = workers;
            ingest(io_, out);
        };
    });

    // estimate
    std::string est_in, est_out, freqs_path;
    auto* es = app.add_subcommand("estimate", "Grids -> spot vol, co-vol, vol-of-vol and co-vol-of-vol panel");
    es->add_option("--in", est_in, "Grid directory")->required();
    es->add_option("--freqs", freqs_path, "Cutting frequencies JSON (N, M, S, L, vov_convention, covov_input)");
    es->add_option("--out", est_out, "spot_panel.csv")->required();
    es->callback([&] {
        stage = "estimate";
        action = [&] {
            EstimateOptions o;
            o.in = est_in;
            o.out = est_out;
            if (!freqs_path.empty()) o.freqs = read_json(freqs_path);
            o.workers = workers;
            estimate(o, out);
        };
    });

    // build-graphs
    BuildOptions bo;
    std::string bg_panel, bg_out, horizon = "single", splits_path;
    auto* bg = app.add_subcommand("build-graphs", "Panel -> standardized graph snapshots split by target date");
    bg->add_option("--panel", bg_panel, "spot_panel.csv")->required();
    bg->add_option("--lags", bo.lags, "Lags L");
    bg->add_option("--horizon", horizon, "single|multi");
    bg->add_option("--splits", splits_path, "JSON with train_end, val_end, test_end, or 'djia'")->required();
    bg->add_option("--out", bg_out, "Dataset directory")->required();
    bg->callback([&] {
        stage = "build-graphs";
        action = [&] {
            bo.panel = bg_panel;
            bo.out = bg_out;
            bo.horizon = graphs::horizon_from_string(horizon);
            bo.splits = splits_path == "djia" ? json("djia") : read_json(splits_path);
            if (bo.splits.is_object() && bo.splits.contains("splits")) bo.splits = json(bo.splits.at("splits"));
            bo.workers = workers;
            build_graphs(bo, out);
        };
    });

    // train
    TrainOptions to;
    std::string tr_cfg, tr_data, tr_out, tr_hist;
    bool no_edges = false;
    auto* tr = app.add_subcommand("train", "Train SpotV2Net (or SpotV2Net-NE with --no-edges)");
    tr->add_option("--config", tr_cfg, "JSON with GAT hyperparameters (or a run config with models.spotv2net)");
    tr->add_option("--data", tr_data, "Dataset directory")->required();
    tr->add_option("--out", tr_out, "Checkpoint path")->required();
    tr->add_option("--history", tr_hist, "Per-epoch loss CSV");
    tr->add_flag("--no-edges", no_edges, "Drop edge features (SpotV2Net-NE)");
    tr->callback([&] {
        stage = "train";
        action = [&] {
            to.name = no_edges ? "spotv2net_ne" : "spotv2net";
            auto j = tr_cfg.empty() ? json::object() : read_json(tr_cfg);
            if (j.contains("models") && j.at("models").contains(to.name)) j = j.at("models").at(to.name);
            if (no_edges) j["use_edges"] = false;
            to.config = j;
            to.data = tr_data;
            to.out = tr_out;
            to.history = tr_hist;
            train(to, out);
        };
    });

    // forecast
    ForecastOptions fo;
    std::string fc_model, fc_data, fc_out;
    auto* fc = app.add_subcommand("forecast", "Checkpoint + dataset -> prediction CSV");
    fc->add_option("--model", fc_model, "Checkpoint")->required();
    fc->add_option("--data", fc_data, "Dataset directory")->required();
    fc->add_option("--out", fc_out, "Prediction CSV")->required();
    fc->add_option("--split", fo.split, "train|val|test");
    fc->callback([&] {
        stage = "forecast";
        action = [&] {
            fo.model = fc_model;
            fo.data = fc_data;
            fo.out = fc_out;
            forecast(fo, out);
        };
    });

    // baseline
    BaselineOptions bl;
    std::string bl_cfg, bl_data, bl_panel, bl_out, bl_save, bl_hist;
    auto* ba = app.add_subcommand("baseline", "Fit HAR-Spot, gradient-boosted trees or LSTM and predict");
    ba->add_option("--model", bl.model, "har|gbt|lstm")->required();
    ba->add_option("--config", bl_cfg, "Hyperparameter JSON (or a run config with models.<name>)");
    ba->add_option("--data", bl_data, "Dataset directory")->required();
    ba->add_option("--panel", bl_panel, "spot_panel.csv the dataset was built from (har, gbt)");
    ba->add_option("--out", bl_out, "Prediction CSV")->required();
    ba->add_option("--save", bl_save, "Write the fitted model here");
    ba->add_option("--history", bl_hist, "Per-epoch loss CSV (lstm)");
    ba->add_option("--split", bl.split, "train|val|test");
    ba->callback([&] {
        stage = "baseline";
        action = [&] {
            auto j = bl_cfg.empty() ? json::object() : read_json(bl_cfg);
            if (j.contains("models") && j.at("models").contains(bl.model)) j = j.at("models").at(bl.model);
            bl.config = j;
            bl.data = bl_data;
            bl.panel = bl_panel;
            bl.out = bl_out;
            bl.save = bl_save;
            bl.history = bl_hist;
            bl.workers = workers;
            baseline(bl, out);
        };
    });

    // evaluate
    std::string ev_preds, ev_actuals, ev_out, ev_cfg;
    auto* ev = app.add_subcommand("evaluate", "MSE/QLIKE aggregates, pairwise DM tests and model confidence sets");
    ev->add_option("--preds", ev_preds, "Comma-separated prediction CSVs")->required();
    ev->add_option("--actuals", ev_actuals, "spot_panel.csv")->required();
    ev->add_option("--out", ev_out, "report.json")->required();
    ev->add_option("--config", ev_cfg, "JSON with alpha, bootstrap, block_len, hac_lag, seed (or a run config)");
    ev->callback([&] {
        stage = "evaluate";
        action = [&] {
            EvaluateOptions o;
            o.preds = split_paths(ev_preds);
            o.actuals = ev_actuals;
            o.out = ev_out;
            o.config = config_section(ev_cfg, "evaluate");
            o.workers = workers;
            evaluate(o, out);
        };
    });

    // explain
    ExplainOptions xo;
    std::string ex_model, ex_data, ex_out, ex_traces, ex_cfg;
    auto* ex = app.add_subcommand("explain", "Node-mask explanations and inclusion-frequency heatmap");
    ex->add_option("--model", ex_model, "SpotV2Net checkpoint")->required();
    ex->add_option("--data", ex_data, "Dataset directory")->required();
    ex->add_option("--nstar", xo.nstar, "Subgraph size");
    ex->add_option("--out", ex_out, "Heatmap CSV")->required();
    ex->add_option("--traces", ex_traces, "Directory for per-node JSON traces");
    ex->add_option("--split", xo.split, "train|val|test");
    ex->add_option("--max-snapshots", xo.max_snapshots, "Explain only the first K snapshots (0: all)");
    ex->add_option("--config", ex_cfg, "JSON with lambda1, lambda2, iterations, lr, seed");
    ex->callback([&] {
        stage = "explain";
        action = [&] {
            xo.model = ex_model;
            xo.data = ex_data;
            xo.out = ex_out;
            xo.traces = ex_traces;
            xo.config = config_section(ex_cfg, nullptr);
            if (xo.config.contains("explain")) {
                xo.config = xo.config.at("explain").value("optimizer", json::object());
            }
            xo.workers = workers;
            explain(xo, out);
        };
    });

    // pipeline
    std::string pl_cfg, pl_out = "run";
    auto* pl = app.add_subcommand("pipeline", "Run every stage on simulated data from one run config");
    pl->add_option("--config", pl_cfg, "Run config JSON")->required();
    pl->add_option("--out", pl_out, "Run directory");
    pl->callback([&] {
        stage = "pipeline";
        action = [&] {
            const auto report = pipeline(read_json(pl_cfg), pl_out, workers, out);
            out << "pipeline: report written to " << report.string() << "\n";
        };
    });

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        report_error(err, stage.empty() ? "cli" : stage, "usage", e.what());
        return 2;
    }
    try {
        action();
    } catch (const Error& e) {
        report_error(err, stage, to_string(e.kind()), e.what());
        return exit_code(e.kind());
    } catch (const json::exception& e) {
        report_error(err, stage, "config", e.what());
        return 1;
    } catch (const fs::filesystem_error& e) {
        report_error(err, stage, "io", e.what());
        return 2;
    } catch (const std::exception& e) {
        report_error(err, stage, "internal", e.what());
        return 1;
    }
    return 0;
}

}  // namespace spotv2::cli
