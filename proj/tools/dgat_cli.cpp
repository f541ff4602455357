// dgat command-line front end.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <dgat/dgat.hpp>

namespace fs = std::filesystem;
using namespace dgat;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_usage = 1;
constexpr int exit_numeric = 2;
constexpr int exit_partial = 3;

struct Globals {
    std::uint64_t seed = 0;
    std::string out_dir = ".";
};

std::string in_out_dir(const Globals& g, const std::string& path, const std::string& fallback) {
    if (!path.empty()) return path;
    fs::create_directories(g.out_dir);
    return (fs::path(g.out_dir) / fallback).string();
}

void emit(const json& j, const std::string& path) {
    if (path.empty() || path == "-")
        std::cout << j.dump(2) << "\n";
    else
        write_json(path, j);
}

double parse_real(const std::string& s) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("not a number: '" + s + "'");
    return v;
}

// synth ----------------------------------------------------------------------

struct SynthArgs {
    SynthConfig cfg;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_synth(CLI::App& app, SynthArgs& a, const Globals& g) {
    auto* sub = app.add_subcommand("synth", "Generate a synthetic node-classification dataset");
    sub->add_option("--n", a.cfg.n, "Number of nodes (multiple of --classes)")->capture_default_str();
    sub->add_option("--classes", a.cfg.classes, "Number of classes")->capture_default_str();
    sub->add_option("--mu", a.cfg.mu, "Homophily coefficient in [0, 1]")->capture_default_str();
    sub->add_option("--edges-per-node", a.cfg.edges_per_node, "Edges drawn by each new node")->capture_default_str();
    sub->add_option("--dim", a.cfg.feature_dim, "Feature dimension (>= 2)")->capture_default_str();
    sub->add_option("--std", a.cfg.feature_std, "Feature noise standard deviation")->capture_default_str();
    sub->add_option("--seed", a.seed, "Seed (overrides the global one)");
    sub->add_option("-o,--output", a.out, "Dataset JSON path (default <out-dir>/dataset.json)");
    sub->callback([&a, &g] {
        a.cfg.seed = a.seed.value_or(g.seed);
        const NodeDataset ds = generate(a.cfg);
        json meta{{"generator", "synth"},     {"n", a.cfg.n},           {"classes", a.cfg.classes},
                  {"mu", a.cfg.mu},           {"edges_per_node", a.cfg.edges_per_node},
                  {"feature_dim", a.cfg.feature_dim}, {"feature_std", a.cfg.feature_std}, {"seed", a.cfg.seed}};
        const std::string path = in_out_dir(g, a.out, "dataset.json");
        write_json(path, dataset_to_json(ds, meta));
        std::cerr << "wrote " << path << " (" << ds.graph.edge_count() << " edges)\n";
    });
}

// metrics --------------------------------------------------------------------

struct MetricsArgs {
    std::string input, out;
};

void add_metrics(CLI::App& app, MetricsArgs& a) {
    auto* sub = app.add_subcommand("metrics", "Homophily metrics of a labeled graph");
    sub->add_option("input", a.input, "Labeled graph JSON ({n, edges, labels}); dataset files work too")->required();
    sub->add_option("-o,--output", a.out, "Output JSON path (default stdout)");
    sub->callback([&a] {
        const LabeledGraph lg = labeled_graph_from_json(read_json(a.input), a.input);
        emit(metrics_to_json(compute_metrics(lg)), a.out);
    });
}

// spectral -------------------------------------------------------------------

struct SpectralArgs {
    std::string input, out;
    double gamma = 1.0, alpha = 1.0, t = 1.0;
    std::size_t k = 5;
    std::vector<std::string> pairs;
    bool largest = false;
};

std::pair<node_t, node_t> parse_pair(const std::string& s) {
    const auto comma = s.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("--pair expects i,j but got '" + s + "'");
    return {static_cast<node_t>(std::stoull(s.substr(0, comma))), static_cast<node_t>(std::stoull(s.substr(comma + 1)))};
}

void add_spectral(CLI::App& app, SpectralArgs& a) {
    auto* sub = app.add_subcommand("spectral", "Eigenpairs of the parameterized Laplacian and node distances");
    sub->add_option("input", a.input, "Graph JSON or edge-list TSV")->required();
    sub->add_option("--gamma", a.gamma, "gamma in (0, 1]")->capture_default_str();
    sub->add_option("--alpha", a.alpha, "alpha in [0, 1]")->capture_default_str();
    sub->add_option("--k", a.k, "Number of eigenvalues to print")->capture_default_str();
    sub->add_option("--t", a.t, "Diffusion time")->capture_default_str();
    sub->add_option("--pair", a.pairs, "Node pair i,j for distances (repeatable)");
    sub->add_flag("--largest-component", a.largest, "Restrict to the largest connected component first");
    sub->add_option("-o,--output", a.out, "Output JSON path (default stdout)");
    sub->callback([&a] {
        Graph g = read_graph(a.input);
        std::vector<node_t> kept;
        if (a.largest) g = largest_component(g, &kept);
        const SpectralBundle b = eigendecompose(g, {a.gamma, a.alpha});
        json out;
        out["gamma"] = a.gamma;
        out["alpha"] = a.alpha;
        out["n"] = g.n();
        json ev = json::array();
        for (Eigen::Index i = 0; i < std::min<Eigen::Index>(static_cast<Eigen::Index>(a.k), b.eigenvalues.size()); ++i)
            ev.push_back(b.eigenvalues[i]);
        out["eigenvalues"] = std::move(ev);
        out["phi1"] = b.phi1;
        out["lambda1_degenerate"] = b.lambda1_degenerate;
        if (a.largest) out["kept_nodes"] = kept;
        json dist = json::object();
        if (!a.pairs.empty()) {
            const SpectralBundle rw = a.alpha == 1.0 ? b : eigendecompose(g, {a.gamma, 1.0});
            for (const auto& p : a.pairs) {
                const auto [i, j] = parse_pair(p);
                dist[std::to_string(i) + "," + std::to_string(j)] =
                    json{{"diffusion", diffusion_distance(rw, i, j, a.t)}, {"spectral", spectral_distance(rw, i, j)}};
            }
            out["distance_member"] = json{{"gamma", a.gamma}, {"alpha", 1.0}, {"t", a.t}};
        }
        out["distances"] = std::move(dist);
        emit(out, a.out);
    });
}

// rewire ---------------------------------------------------------------------

struct RewireArgs {
    std::string input, out, plan_out, mode = "none", epsilon = "0";
    double gamma = 1.0, alpha = 1.0;
};

void add_rewire(CLI::App& app, RewireArgs& a, const Globals& g) {
    auto* sub = app.add_subcommand("rewire", "Prune and add edges guided by the spectral distance");
    sub->add_option("input", a.input, "Graph JSON or edge-list TSV")->required();
    sub->add_option("--mode", a.mode, "none | homophily_prune | heterophily_prune | heterophily_prune_and_add")
        ->capture_default_str();
    sub->add_option("--epsilon", a.epsilon, "Spectral-distance threshold ('inf' allowed)")->capture_default_str();
    sub->add_option("--gamma", a.gamma, "gamma in (0, 1]")->capture_default_str();
    sub->add_option("--alpha", a.alpha, "alpha of the member supplying phi1 (must be 1 to rewire)")
        ->capture_default_str();
    sub->add_option("-o,--output", a.out, "Rewired graph JSON (default <out-dir>/rewired.json)");
    sub->add_option("--plan", a.plan_out, "Plan JSON (default: output path with .plan.json)");
    sub->callback([&a, &g] {
        const Graph in = strip_self_loops(read_graph(a.input));
        const SpectralBundle b = eigendecompose(in, {a.gamma, a.alpha});
        const RewirePlan plan = rewire(in, b, parse_rewire_mode(a.mode), parse_real(a.epsilon));
        const std::string out = in_out_dir(g, a.out, "rewired.json");
        std::string plan_out = a.plan_out;
        if (plan_out.empty()) plan_out = (fs::path(out).replace_extension(".plan.json")).string();
        write_json(out, graph_to_json(plan.result));
        write_json(plan_out, plan_to_json(plan));
        std::cerr << "pruned " << plan.pruned.size() << ", added " << plan.added.size() << "; wrote " << out << " and "
                  << plan_out << "\n";
    });
}

// train / eval ---------------------------------------------------------------

struct TrainArgs {
    std::string dataset, mode = "dgat", rewire_mode = "none", epsilon = "0", run_out, checkpoint_out;
    bool sep = false;
    std::size_t layers = 2, heads = 8, hidden = 8, steps = 1000;
    double lr = 0.01, wd = 0.001, dropout = 0.1, gamma = 1.0, alpha = 1.0;
    std::optional<std::uint64_t> seed;
};

void add_train_options(CLI::App* sub, TrainArgs& a) {
    sub->add_option("--mode", a.mode, "gat | dgat")->capture_default_str();
    sub->add_flag("--sep", a.sep, "Concatenate own embedding with the neighbour aggregate");
    sub->add_option("--layers", a.layers, "Attention layers")->capture_default_str();
    sub->add_option("--heads", a.heads, "Heads per layer")->capture_default_str();
    sub->add_option("--hidden", a.hidden, "Hidden units per head")->capture_default_str();
    sub->add_option("--lr", a.lr, "Adam learning rate")->capture_default_str();
    sub->add_option("--weight-decay", a.wd, "Decoupled weight decay")->capture_default_str();
    sub->add_option("--dropout", a.dropout, "Dropout on inputs and attention")->capture_default_str();
    sub->add_option("--steps", a.steps, "Full-graph training steps")->capture_default_str();
    sub->add_option("--gamma", a.gamma, "gamma of the spectral family (dgat)")->capture_default_str();
    sub->add_option("--alpha", a.alpha, "alpha of the edge-feature eigenvector (dgat)")->capture_default_str();
    sub->add_option("--rewire-mode", a.rewire_mode, "Rewiring before training (dgat)")->capture_default_str();
    sub->add_option("--epsilon", a.epsilon, "Rewiring threshold ('inf' allowed)")->capture_default_str();
    sub->add_option("--seed", a.seed, "Seed (overrides the global one)");
}

PipelineConfig pipeline_of(const TrainArgs& a) {
    PipelineConfig p;
    p.kind = parse_attention_kind(a.mode);
    p.gamma = a.gamma;
    p.alpha = a.alpha;
    p.rewire_mode = parse_rewire_mode(a.rewire_mode);
    p.epsilon = parse_real(a.epsilon);
    return p;
}

TrainConfig train_config_of(const TrainArgs& a, std::uint64_t seed) {
    TrainConfig c;
    c.kind = parse_attention_kind(a.mode);
    c.aggregation = a.sep ? Aggregation::sep : Aggregation::plain;
    c.learning_rate = a.lr;
    c.weight_decay = a.wd;
    c.dropout = a.dropout;
    c.steps = a.steps;
    c.layers = a.layers;
    c.heads = a.heads;
    c.hidden_per_head = a.hidden;
    c.seed = seed;
    return c;
}

void add_train(CLI::App& app, TrainArgs& a, const Globals& g) {
    auto* sub = app.add_subcommand("train", "Train a GAT or DGAT node classifier");
    sub->add_option("dataset", a.dataset, "Dataset JSON")->required();
    add_train_options(sub, a);
    sub->add_option("--run-out", a.run_out, "Run JSON (default <out-dir>/run.json)");
    sub->add_option("--checkpoint", a.checkpoint_out, "Checkpoint JSON (default <out-dir>/checkpoint.json)");
    sub->callback([&a, &g] {
        const NodeDataset ds = dataset_from_json(read_json(a.dataset), a.dataset);
        const PipelineConfig pc = pipeline_of(a);
        const TrainConfig tc = train_config_of(a, a.seed.value_or(g.seed));
        const PreparedGraph pg = prepare_graph(ds.graph, pc);
        const TrainResult r = train(ds, pg.attention, tc);

        json run;
        run["dataset"] = a.dataset;
        run["pipeline"] = pipeline_to_json(pc);
        run["model"] = model_config_to_json(r.best.config);
        run["train"] = json{{"lr", tc.learning_rate}, {"weight_decay", tc.weight_decay}, {"steps", tc.steps},
                            {"seed", tc.seed}};
        if (pg.plan) run["rewire"] = json{{"pruned", pg.plan->pruned.size()}, {"added", pg.plan->added.size()}};
        run["lambda1_degenerate"] = pg.lambda1_degenerate;
        run["result"] = train_result_to_json(r);
        const std::string run_path = in_out_dir(g, a.run_out, "run.json");
        const std::string ckpt_path = in_out_dir(g, a.checkpoint_out, "checkpoint.json");
        write_json(run_path, run);
        write_json(ckpt_path, checkpoint_to_json(r.best, pipeline_to_json(pc)));
        std::cerr << "best step " << r.best_step << ", val " << r.best_val_accuracy << ", test " << r.test_accuracy
                  << "; wrote " << run_path << " and " << ckpt_path << "\n";
    });
}

struct EvalArgs {
    std::string dataset, checkpoint, split = "test", out;
};

void add_eval(CLI::App& app, EvalArgs& a) {
    auto* sub = app.add_subcommand("eval", "Accuracy of a checkpoint on a dataset split");
    sub->add_option("dataset", a.dataset, "Dataset JSON")->required();
    sub->add_option("--checkpoint", a.checkpoint, "Checkpoint JSON")->required();
    sub->add_option("--split", a.split, "train | val | test")->capture_default_str()->check(
        CLI::IsMember({"train", "val", "test"}));
    sub->add_option("-o,--output", a.out, "Output JSON path (default stdout)");
    sub->callback([&a] {
        const NodeDataset ds = dataset_from_json(read_json(a.dataset), a.dataset);
        const json ck = read_json(a.checkpoint);
        const Model model = checkpoint_from_json(ck, a.checkpoint);
        const PipelineConfig pc = pipeline_from_json(detail::require_key(ck, "pipeline", a.checkpoint), a.checkpoint);
        const PreparedGraph pg = prepare_graph(ds.graph, pc);
        const SplitPart part = a.split == "train" ? SplitPart::train : a.split == "val" ? SplitPart::val : SplitPart::test;
        emit(json{{"split", a.split}, {"accuracy", evaluate(model, ds, pg.attention, part)}}, a.out);
    });
}

// report / experiment --------------------------------------------------------

struct ReportArgs {
    std::vector<std::string> files;
    std::string json_out, md_out;
};

void add_report(CLI::App& app, ReportArgs& a) {
    auto* sub = app.add_subcommand("report", "Aggregate cell or report files into a table");
    sub->add_option("files", a.files, "Cell JSON files or report JSON files")->required();
    sub->add_option("--json", a.json_out, "Write the aggregated JSON here");
    sub->add_option("--markdown", a.md_out, "Write the markdown table here (default stdout)");
    sub->callback([&a] {
        const RunReport r = report_from_files(a.files);
        if (!a.json_out.empty()) write_json(a.json_out, report_to_json(r));
        if (a.md_out.empty())
            std::cout << report_to_markdown(r);
        else
            write_text(a.md_out, report_to_markdown(r));
    });
}

struct ExperimentArgs {
    std::vector<double> mus{0.1, 0.5, 0.9};
    std::vector<double> gammas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::size_t n = 400, classes = 5;
    std::string rewire_mode = "auto", epsilon = "inf";
    TrainArgs train;
};

int experiment_status = exit_ok;

void add_experiment(CLI::App& app, ExperimentArgs& a, const Globals& g) {
    auto* sub = app.add_subcommand("experiment", "Sweep mu x gamma x seed and compare DGAT with GAT");
    sub->add_option("--mu", a.mus, "Homophily grid")->delimiter(',')->capture_default_str();
    sub->add_option("--gammas", a.gammas, "gamma grid for DGAT")->delimiter(',')->capture_default_str();
    sub->add_option("--seeds", a.seeds, "Seeds, one graph per (mu, seed)")->delimiter(',')->capture_default_str();
    sub->add_option("--n", a.n, "Nodes per graph")->capture_default_str();
    sub->add_option("--classes", a.classes, "Classes per graph")->capture_default_str();
    sub->add_option("--rewire-mode", a.rewire_mode,
                    "auto (add edges below mu = 0.5, none otherwise) or a fixed rewire mode")->capture_default_str();
    sub->add_option("--epsilon", a.epsilon, "Rewiring threshold ('inf' allowed)")->capture_default_str();
    sub->add_flag("--sep", a.train.sep, "sep aggregation for every model");
    sub->add_option("--layers", a.train.layers)->capture_default_str();
    sub->add_option("--heads", a.train.heads)->capture_default_str();
    sub->add_option("--hidden", a.train.hidden)->capture_default_str();
    sub->add_option("--lr", a.train.lr)->capture_default_str();
    sub->add_option("--weight-decay", a.train.wd)->capture_default_str();
    sub->add_option("--dropout", a.train.dropout)->capture_default_str();
    sub->add_option("--steps", a.train.steps)->capture_default_str();
    sub->add_option("--alpha", a.train.alpha, "alpha of the edge-feature eigenvector")->capture_default_str();
    sub->callback([&a, &g] {
        ExperimentSpec spec;
        spec.mus = a.mus;
        spec.gammas = a.gammas;
        spec.seeds = a.seeds;
        spec.n = a.n;
        spec.classes = a.classes;
        spec.alpha = a.train.alpha;
        spec.rewire.automatic = a.rewire_mode == "auto";
        if (!spec.rewire.automatic) spec.rewire.mode = parse_rewire_mode(a.rewire_mode);
        spec.rewire.epsilon = parse_real(a.epsilon);
        spec.train = train_config_of(a.train, 0);
        spec.out_dir = g.out_dir;
        const RunReport r = run_experiment(spec, [](const CellResult& c, bool cached) {
            std::cerr << "mu=" << c.mu << " " << to_string(c.kind);
            if (c.gamma) std::cerr << " gamma=" << *c.gamma;
            std::cerr << " seed=" << c.seed << (cached ? " (cached)" : "") << ": ";
            if (c.ok)
                std::cerr << c.test_accuracy << "\n";
            else
                std::cerr << "FAILED " << c.error << "\n";
        });
        write_json((fs::path(g.out_dir) / "report.json").string(), report_to_json(r));
        write_text((fs::path(g.out_dir) / "report.md").string(), report_to_markdown(r));
        std::cout << report_to_markdown(r);
        if (r.failures > 0) experiment_status = exit_partial;
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectral graph toolkit and directional graph attention networks"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value file mirroring the flags (subcommand keys go under [name] sections)");
    Globals g;
    app.add_option("--seed", g.seed, "Global seed")->capture_default_str();
    app.add_option("--out-dir", g.out_dir, "Directory for default output paths")->capture_default_str();

    SynthArgs synth;
    MetricsArgs metrics;
    SpectralArgs spectral;
    RewireArgs rew;
    TrainArgs tr;
    EvalArgs ev;
    ReportArgs rep;
    ExperimentArgs ex;
    add_synth(app, synth, g);
    add_metrics(app, metrics);
    add_spectral(app, spectral);
    add_rewire(app, rew, g);
    add_train(app, tr, g);
    add_eval(app, ev);
    add_report(app, rep);
    add_experiment(app, ex, g);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? exit_ok : exit_usage;
    } catch (const numeric_error& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return exit_numeric;
    } catch (const metric_error& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return exit_numeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_usage;
    }
    return experiment_status;
}
