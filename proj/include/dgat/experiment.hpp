#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "io.hpp"
#include "rewire.hpp"
#include "synthgen.hpp"
#include "train.hpp"

namespace dgat {

/**
 * Rewiring applied to the dgat runs of a sweep. `automatic` adds edges
 * (heterophily_prune_and_add with the given epsilon) for mu below the
 * threshold and leaves the graph untouched otherwise.
 */
struct RewirePolicy {
    bool automatic = true;
    RewireMode mode = RewireMode::none;
    double epsilon = std::numeric_limits<double>::infinity();
    double mu_threshold = 0.5;

    RewireMode mode_for(double mu) const {
        if (!automatic) return mode;
        return mu < mu_threshold ? RewireMode::heterophily_prune_and_add : RewireMode::none;
    }
};

struct ExperimentSpec {
    std::vector<double> mus{0.1, 0.5, 0.9};
    std::vector<double> gammas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::size_t n = 400;
    std::size_t classes = 5;
    std::size_t edges_per_node = 2;
    double alpha = 1.0;
    RewirePolicy rewire;
    TrainConfig train;  ///< kind and seed are set per cell
    bool include_gat = true;
    std::string out_dir;  ///< per-cell result files go to out_dir/cells; empty disables files

    void validate() const {
        if (mus.empty() || gammas.empty() || seeds.empty())
            throw std::invalid_argument("ExperimentSpec: mu, gamma and seed grids must be non-empty");
        std::set<std::uint64_t> distinct(seeds.begin(), seeds.end());
        if (distinct.size() != seeds.size()) throw std::invalid_argument("ExperimentSpec: seeds must be distinct");
        for (double g : gammas)
            if (!(g > 0.0 && g <= 1.0)) throw std::invalid_argument("ExperimentSpec: gamma must lie in (0, 1]");
        SynthConfig probe;
        probe.n = n;
        probe.classes = classes;
        probe.edges_per_node = edges_per_node;
        for (double mu : mus) {
            probe.mu = mu;
            probe.validate();
        }
        train.validate();
    }
};

/// One trained model: the gat baseline (gamma empty) or dgat at one gamma.
struct CellResult {
    double mu = 0.0;
    AttentionKind kind = AttentionKind::gat;
    std::optional<double> gamma;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double test_accuracy = 0.0;
    double best_val_accuracy = 0.0;
    std::size_t best_step = 0;
};

struct Summary {
    std::size_t count = 0;
    double mean = 0.0;
    double std = 0.0;  ///< sample standard deviation; 0 for a single value
};

struct MuSummary {
    double mu = 0.0;
    std::optional<Summary> gat;
    std::vector<std::pair<double, Summary>> dgat;  ///< ordered by gamma
    std::optional<double> gamma_star;              ///< argmax of the mean, ties to the lower gamma
    std::optional<double> gamma_minus;             ///< argmin of the mean, ties to the lower gamma
};

struct RunReport {
    std::vector<CellResult> cells;
    std::vector<MuSummary> per_mu;
    std::size_t failures = 0;
};

inline Summary summarize(const std::vector<double>& xs) {
    Summary s;
    s.count = xs.size();
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return s;
}

/// Dataset seed for one (mu, seed) pair; the gat and dgat runs share it.
inline std::uint64_t dataset_seed(std::uint64_t seed, double mu) {
    return derive_seed(seed, static_cast<std::uint64_t>(std::llround(mu * 1e6)));
}

inline std::string cell_file_name(const CellResult& c) {
    char buf[128];
    if (c.gamma)
        std::snprintf(buf, sizeof buf, "mu%.4f_dgat_g%.4f_s%llu.json", c.mu, *c.gamma,
                      static_cast<unsigned long long>(c.seed));
    else
        std::snprintf(buf, sizeof buf, "mu%.4f_gat_s%llu.json", c.mu, static_cast<unsigned long long>(c.seed));
    return buf;
}

inline json cell_to_json(const CellResult& c) {
    json j{{"mu", c.mu}, {"kind", to_string(c.kind)}};
    j["gamma"] = c.gamma ? json(*c.gamma) : json(nullptr);
    j["seed"] = c.seed;
    j["ok"] = c.ok;
    if (c.ok) {
        j["test_accuracy"] = c.test_accuracy;
        j["best_val_accuracy"] = c.best_val_accuracy;
        j["best_step"] = c.best_step;
    } else {
        j["error"] = c.error;
    }
    return j;
}

inline CellResult cell_from_json(const json& j, const std::string& where = "cell") {
    CellResult c;
    c.mu = detail::read_as<double>(j, "mu", where);
    try {
        c.kind = parse_attention_kind(detail::read_as<std::string>(j, "kind", where));
    } catch (const std::invalid_argument& e) {
        throw format_error(where + ": " + e.what());
    }
    const auto& g = detail::require_key(j, "gamma", where);
    if (!g.is_null()) c.gamma = detail::read_as<double>(j, "gamma", where);
    if ((c.kind == AttentionKind::dgat) != c.gamma.has_value())
        throw format_error(where + ": dgat cells carry a gamma and gat cells do not");
    c.seed = detail::read_as<std::uint64_t>(j, "seed", where);
    c.ok = detail::read_as<bool>(j, "ok", where);
    if (c.ok) {
        c.test_accuracy = detail::read_as<double>(j, "test_accuracy", where);
        c.best_val_accuracy = detail::read_as<double>(j, "best_val_accuracy", where);
        c.best_step = detail::read_as<std::size_t>(j, "best_step", where);
        if (!(c.test_accuracy >= 0.0 && c.test_accuracy <= 1.0))
            throw format_error(where + ": test_accuracy outside [0, 1]");
    } else {
        c.error = detail::read_as<std::string>(j, "error", where);
    }
    return c;
}

inline double summary_for(const MuSummary& s, double gamma) {
    for (const auto& [g, sm] : s.dgat)
        if (g == gamma) return sm.mean;
    return std::numeric_limits<double>::quiet_NaN();
}

/// Recomputes every aggregate from the raw cells.
inline RunReport aggregate(std::vector<CellResult> cells) {
    RunReport r;
    std::map<double, std::vector<double>> gat;
    std::map<double, std::map<double, std::vector<double>>> dg;
    std::set<double> mus;
    for (const auto& c : cells) {
        mus.insert(c.mu);
        if (!c.ok) {
            ++r.failures;
            continue;
        }
        if (c.gamma)
            dg[c.mu][*c.gamma].push_back(c.test_accuracy);
        else
            gat[c.mu].push_back(c.test_accuracy);
    }
    for (double mu : mus) {
        MuSummary s;
        s.mu = mu;
        if (gat.count(mu)) s.gat = summarize(gat[mu]);
        for (auto& [g, xs] : dg[mu]) s.dgat.emplace_back(g, summarize(xs));
        for (const auto& [g, sm] : s.dgat) {
            if (!s.gamma_star || sm.mean > summary_for(s, *s.gamma_star)) s.gamma_star = g;
            if (!s.gamma_minus || sm.mean < summary_for(s, *s.gamma_minus)) s.gamma_minus = g;
        }
        r.per_mu.push_back(std::move(s));
    }
    r.cells = std::move(cells);
    return r;
}

inline json report_to_json(const RunReport& r) {
    json cells = json::array();
    for (const auto& c : r.cells) cells.push_back(cell_to_json(c));
    json per_mu = json::array();
    auto sj = [](const Summary& s) { return json{{"count", s.count}, {"mean", s.mean}, {"std", s.std}}; };
    for (const auto& s : r.per_mu) {
        json m{{"mu", s.mu}};
        m["gat"] = s.gat ? sj(*s.gat) : json(nullptr);
        json d = json::array();
        for (const auto& [g, sm] : s.dgat) {
            json e = sj(sm);
            e["gamma"] = g;
            d.push_back(std::move(e));
        }
        m["dgat"] = std::move(d);
        m["gamma_star"] = s.gamma_star ? json(*s.gamma_star) : json(nullptr);
        m["gamma_minus"] = s.gamma_minus ? json(*s.gamma_minus) : json(nullptr);
        per_mu.push_back(std::move(m));
    }
    return json{{"failures", r.failures}, {"per_mu", std::move(per_mu)}, {"cells", std::move(cells)}};
}

/// Accuracies as percentages, mean ± sample std over seeds.
inline std::string report_to_markdown(const RunReport& r) {
    std::ostringstream os;
    char buf[160];
    auto pct = [&](const Summary& s) {
        std::snprintf(buf, sizeof buf, "%.2f ± %.2f", 100.0 * s.mean, 100.0 * s.std);
        return std::string(buf);
    };
    os << "| mu | GAT | DGAT (gamma*) | gamma* | DGAT (gamma-) | gamma- | runs |\n";
    os << "|---|---|---|---|---|---|---|\n";
    for (const auto& s : r.per_mu) {
        std::size_t runs = s.gat ? s.gat->count : 0;
        for (const auto& d : s.dgat) runs += d.second.count;
        std::snprintf(buf, sizeof buf, "%.2f", s.mu);
        os << "| " << buf << " | " << (s.gat ? pct(*s.gat) : "-") << " | ";
        auto dg = [&](const std::optional<double>& g) {
            if (!g) return std::string("- | -");
            for (const auto& [gg, sm] : s.dgat)
                if (gg == *g) {
                    std::string cell = pct(sm);
                    std::snprintf(buf, sizeof buf, "%.2f", gg);
                    return cell + " | " + buf;
                }
            return std::string("- | -");
        };
        os << dg(s.gamma_star) << " | " << dg(s.gamma_minus) << " | " << runs << " |\n";
    }
    if (r.failures > 0) os << "\n" << r.failures << " cell(s) failed.\n";
    return os.str();
}

/// Trains a single cell. Errors are captured in the result, never thrown.
inline CellResult run_cell(const ExperimentSpec& spec, const NodeDataset& ds, double mu, std::optional<double> gamma,
                           std::uint64_t seed) {
    CellResult c;
    c.mu = mu;
    c.gamma = gamma;
    c.kind = gamma ? AttentionKind::dgat : AttentionKind::gat;
    c.seed = seed;
    try {
        PipelineConfig pc;
        pc.kind = c.kind;
        if (gamma) {
            pc.gamma = *gamma;
            pc.alpha = spec.alpha;
            pc.rewire_mode = spec.rewire.mode_for(mu);
            pc.epsilon = spec.rewire.epsilon;
        }
        const PreparedGraph pg = prepare_graph(ds.graph, pc);
        TrainConfig tc = spec.train;
        tc.kind = c.kind;
        tc.seed = seed;
        const TrainResult tr = train(ds, pg.attention, tc);
        c.ok = true;
        c.test_accuracy = tr.test_accuracy;
        c.best_val_accuracy = tr.best_val_accuracy;
        c.best_step = tr.best_step;
    } catch (const std::exception& e) {
        c.ok = false;
        c.error = e.what();
    }
    return c;
}

/**
 * Generates one graph per (mu, seed), trains the gat baseline and dgat at
 * every gamma on it, and aggregates. With an output directory each cell is
 * written to its own file as it finishes and an existing readable cell file
 * is reused instead of retrained.
 */
template <class Progress>
RunReport run_experiment(const ExperimentSpec& spec, Progress&& progress) {
    spec.validate();
    namespace fs = std::filesystem;
    fs::path cell_dir;
    if (!spec.out_dir.empty()) {
        cell_dir = fs::path(spec.out_dir) / "cells";
        fs::create_directories(cell_dir);
    }
    std::vector<CellResult> cells;
    for (double mu : spec.mus) {
        for (std::uint64_t seed : spec.seeds) {
            std::optional<NodeDataset> ds;
            std::vector<std::optional<double>> todo;
            if (spec.include_gat) todo.emplace_back(std::nullopt);
            for (double g : spec.gammas) todo.emplace_back(g);
            for (const auto& gamma : todo) {
                CellResult key;
                key.mu = mu;
                key.gamma = gamma;
                key.seed = seed;
                const fs::path file = cell_dir.empty() ? fs::path() : cell_dir / cell_file_name(key);
                if (!file.empty() && fs::exists(file)) {
                    try {
                        CellResult prev = cell_from_json(read_json(file.string()), file.string());
                        if (prev.ok && prev.mu == mu && prev.gamma == gamma && prev.seed == seed) {
                            progress(prev, true);
                            cells.push_back(std::move(prev));
                            continue;
                        }
                    } catch (const format_error&) {
                    }
                }
                if (!ds) {
                    SynthConfig sc;
                    sc.n = spec.n;
                    sc.classes = spec.classes;
                    sc.mu = mu;
                    sc.edges_per_node = spec.edges_per_node;
                    sc.seed = dataset_seed(seed, mu);
                    ds = generate(sc);
                }
                CellResult c = run_cell(spec, *ds, mu, gamma, seed);
                if (!file.empty()) write_json(file.string(), cell_to_json(c));
                progress(c, false);
                cells.push_back(std::move(c));
            }
        }
    }
    return aggregate(std::move(cells));
}

inline RunReport run_experiment(const ExperimentSpec& spec) {
    return run_experiment(spec, [](const CellResult&, bool) {});
}

/// Collects cell results from files (cell files or full report JSON files).
inline RunReport report_from_files(const std::vector<std::string>& paths) {
    if (paths.empty()) throw format_error("report: no run files given");
    std::vector<CellResult> cells;
    for (const auto& p : paths) {
        const json j = read_json(p);
        if (j.is_object() && j.contains("cells")) {
            const auto& arr = j.at("cells");
            if (!arr.is_array()) throw format_error(p + ": 'cells' is not an array");
            for (std::size_t k = 0; k < arr.size(); ++k)
                cells.push_back(cell_from_json(arr[k], p + ".cells[" + std::to_string(k) + "]"));
        } else {
            cells.push_back(cell_from_json(j, p));
        }
    }
    return aggregate(std::move(cells));
}

}  // namespace dgat
