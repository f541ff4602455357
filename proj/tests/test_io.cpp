#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <limits>

#include <dgat/io.hpp>

using namespace dgat;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        path_ = fs::temp_directory_path() /
                ("dgat_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                 ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

NodeDataset sample_dataset() {
    SynthConfig cfg;
    cfg.n = 30;
    cfg.classes = 3;
    cfg.mu = 0.4;
    cfg.feature_dim = 3;
    cfg.seed = 12;
    return generate(cfg);
}

}  // namespace

TEST(GraphJson, RoundTripWithSelfLoops) {
    Graph g = add_self_loops(build_graph(4, {{0, 1}, {2, 3}, {1, 2}}));
    json j = graph_to_json(g);
    EXPECT_EQ(j.dump(), R"({"n":4,"edges":[[0,1],[1,2],[2,3]],"self_loops":[0,1,2,3]})");
    EXPECT_EQ(graph_from_json(j), g);
    Graph plain = build_graph(3, {{0, 2}});
    EXPECT_FALSE(graph_to_json(plain).contains("self_loops"));
    EXPECT_EQ(graph_from_json(graph_to_json(plain)), plain);
}

TEST(GraphJson, Rejections) {
    EXPECT_THROW(graph_from_json(json::parse(R"({"edges":[]})")), format_error);
    EXPECT_THROW(graph_from_json(json::parse(R"({"n":"three","edges":[]})")), format_error);
    EXPECT_THROW(graph_from_json(json::parse(R"({"n":3,"edges":[[0,3]]})")), format_error);
    EXPECT_THROW(graph_from_json(json::parse(R"({"n":3,"edges":[[0,1]],"self_loops":[7]})")), format_error);
    EXPECT_THROW(parse_json("{\"n\": 3,", "inline"), format_error);
}

TEST(GraphTsv, ParsesCommentsAndBlankLines) {
    Graph g = graph_from_tsv("# header\n0\t1\n\n1 2   # trailing\n2\t0\n");
    EXPECT_EQ(g, build_graph(3, {{0, 1}, {1, 2}, {0, 2}}));
    EXPECT_EQ(graph_from_tsv("0\t1\n", 5).n(), 5u);
}

TEST(GraphTsv, ReportsOffendingLine) {
    try {
        graph_from_tsv("0\t1\n1\n", 0, "edges.tsv");
        FAIL() << "expected rejection";
    } catch (const format_error& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
    EXPECT_THROW(graph_from_tsv("0 1 2\n"), format_error);
    EXPECT_THROW(graph_from_tsv("0 -1\n"), format_error);
    EXPECT_THROW(graph_from_tsv("0 4\n", 3), format_error);
}

TEST(ReadGraph, DispatchesOnExtension) {
    TempDir dir;
    write_text(dir.file("g.tsv"), "0\t1\n1\t2\n");
    write_json(dir.file("g.json"), graph_to_json(build_graph(3, {{0, 1}, {1, 2}})));
    EXPECT_EQ(read_graph(dir.file("g.tsv")), read_graph(dir.file("g.json")));
    EXPECT_THROW(read_graph(dir.file("missing.json")), format_error);
}

TEST(LabeledGraphJson, OptionalClassCount) {
    auto lg = labeled_graph_from_json(json::parse(R"({"n":3,"edges":[[0,1],[1,2]],"labels":[0,0,1]})"));
    EXPECT_EQ(lg.num_classes(), 2u);
    auto wide = labeled_graph_from_json(json::parse(R"({"n":3,"edges":[[0,1]],"labels":[0,0,1],"num_classes":4})"));
    EXPECT_EQ(wide.num_classes(), 4u);
    EXPECT_THROW(labeled_graph_from_json(json::parse(R"({"n":3,"edges":[],"labels":[0,1]})")), format_error);
}

TEST(DatasetJson, RoundTripIsExactAndByteStable) {
    TempDir dir;
    auto ds = sample_dataset();
    write_json(dir.file("a.json"), dataset_to_json(ds, json{{"mu", 0.4}}));
    auto back = dataset_from_json(read_json(dir.file("a.json")));
    EXPECT_EQ(back.graph, ds.graph);
    EXPECT_EQ(back.labels, ds.labels);
    EXPECT_EQ(back.num_classes, ds.num_classes);
    ASSERT_EQ(back.features.rows(), ds.features.rows());
    EXPECT_EQ(std::memcmp(back.features.data(), ds.features.data(), sizeof(double) * static_cast<std::size_t>(ds.features.size())), 0);
    EXPECT_EQ(back.split.train, ds.split.train);
    EXPECT_EQ(back.split.val, ds.split.val);
    EXPECT_EQ(back.split.test, ds.split.test);
    EXPECT_EQ(back.fallback_edges, ds.fallback_edges);
    write_json(dir.file("b.json"), dataset_to_json(back, json{{"mu", 0.4}}));
    EXPECT_EQ(read_text(dir.file("a.json")), read_text(dir.file("b.json")));
}

TEST(DatasetJson, RejectsInconsistentFiles) {
    json j = dataset_to_json(sample_dataset());
    json overlap = j;
    overlap["split"]["val"].push_back(overlap["split"]["train"][0]);
    EXPECT_THROW(dataset_from_json(overlap), format_error);
    json range = j;
    range["split"]["test"].push_back(1000);
    EXPECT_THROW(dataset_from_json(range), format_error);
    json ragged = j;
    ragged["features"][1].push_back(0.0);
    EXPECT_THROW(dataset_from_json(ragged), format_error);
    json short_rows = j;
    short_rows["features"].erase(0);
    EXPECT_THROW(dataset_from_json(short_rows), format_error);
    json no_split = j;
    no_split.erase("split");
    EXPECT_THROW(dataset_from_json(no_split), format_error);
}

TEST(PipelineJson, InfiniteEpsilonRoundTrips) {
    PipelineConfig p;
    p.rewire_mode = RewireMode::heterophily_prune_and_add;
    p.epsilon = std::numeric_limits<double>::infinity();
    p.gamma = 0.3;
    json j = pipeline_to_json(p);
    EXPECT_EQ(j["epsilon"], "inf");
    auto back = pipeline_from_json(j, "pipeline");
    EXPECT_TRUE(std::isinf(back.epsilon));
    EXPECT_EQ(back.rewire_mode, p.rewire_mode);
    EXPECT_EQ(back.gamma, 0.3);
    j["rewire_mode"] = "sideways";
    EXPECT_THROW(pipeline_from_json(j, "pipeline"), format_error);
}

TEST(Checkpoint, RoundTripReproducesOutputs) {
    TempDir dir;
    ModelConfig cfg;
    cfg.aggregation = Aggregation::sep;
    cfg.input_dim = 3;
    cfg.num_classes = 3;
    cfg.heads = 2;
    cfg.hidden = 3;
    Model model = init_model(cfg, 21);
    write_json(dir.file("ck.json"), checkpoint_to_json(model, pipeline_to_json({})));
    Model back = checkpoint_from_json(read_json(dir.file("ck.json")));
    auto ds = sample_dataset();
    auto ag = prepare_graph(ds.graph, {}).attention;
    const Eigen::MatrixXd a = forward(model, ag, ds.features), b = forward(back, ag, ds.features);
    EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())), 0);
    EXPECT_EQ(back.config.aggregation, Aggregation::sep);
}

TEST(Checkpoint, Rejections) {
    ModelConfig cfg;
    cfg.heads = 1;
    cfg.hidden = 2;
    json j = checkpoint_to_json(init_model(cfg, 1));
    json wrong_format = j;
    wrong_format["format"] = "something-else";
    EXPECT_THROW(checkpoint_from_json(wrong_format), format_error);
    json wrong_version = j;
    wrong_version["version"] = 99;
    EXPECT_THROW(checkpoint_from_json(wrong_version), format_error);
    json missing = j;
    missing["tensors"].erase("layer1.w_out");
    EXPECT_THROW(checkpoint_from_json(missing), format_error);
    json shape = j;
    shape["tensors"]["layer0.head0.a"] = json::array({json::array({1.0})});
    EXPECT_THROW(checkpoint_from_json(shape), format_error);
    json bad_kind = j;
    bad_kind["config"]["kind"] = "gcn";
    EXPECT_THROW(checkpoint_from_json(bad_kind), format_error);
}

TEST(PlanJson, Fields) {
    auto plan = rewire(build_graph(3, {{0, 1}, {1, 2}}), std::vector<double>{-1.0, 0.0, 1.0},
                       RewireMode::heterophily_prune_and_add, std::numeric_limits<double>::infinity());
    json j = plan_to_json(plan);
    EXPECT_EQ(j["mode"], "heterophily_prune_and_add");
    EXPECT_EQ(j["epsilon"], "inf");
    EXPECT_EQ(j["added"], json::parse("[[0,2]]"));
    EXPECT_EQ(j["vmin"], 0);
    EXPECT_EQ(j["vmax"], 2);
}
