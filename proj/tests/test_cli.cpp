#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "engnn/cli.hpp"

using namespace engnn;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "engnn");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("engnn_cli_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    void write(const std::string& name, const std::string& text) const {
        std::ofstream(dir_ / name, std::ios::binary) << text;
    }

    fs::path dir_;
};

}  // namespace

TEST_F(CliTest, GenDataWritesOneLinePerGraph) {
    const Result r = run({"gen-data", "--task", "count:C3", "--n", "16", "--count", "10", "--seed", "5", "--out",
                          path("a.jsonl")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("records=10"), std::string::npos);
    EXPECT_EQ(line_count(slurp(path("a.jsonl"))), 10u);
    const Dataset d = read_jsonl(path("a.jsonl"));
    for (const Graph& g : d) {
        ASSERT_TRUE(g.targets());
        EXPECT_EQ(g.targets()->values.size(), 16u);
        for (double v : g.targets()->values) EXPECT_EQ(v, std::round(v));
    }
}

TEST_F(CliTest, GenDataIsByteIdenticalOnRerun) {
    for (const char* task : {"count:C4", "subgraph:cutratio", "csl-pairs"}) {
        const std::vector<std::string> common{"gen-data", "--task", task, "--count", "6", "--seed", "9"};
        auto with_out = [&](const std::string& f) {
            auto a = common;
            a.push_back("--out");
            a.push_back(path(f));
            return a;
        };
        ASSERT_EQ(run(with_out("x.jsonl")).code, 0);
        ASSERT_EQ(run(with_out("y.jsonl")).code, 0);
        EXPECT_EQ(slurp(path("x.jsonl")), slurp(path("y.jsonl"))) << task;
    }
}

TEST_F(CliTest, CslPairsSummaryReportsBothCertificates) {
    const Result r = run({"gen-data", "--task", "csl-pairs", "--out", path("c.jsonl")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("records=2"), std::string::npos);
    EXPECT_NE(r.out.find("wl_equal=yes"), std::string::npos);
    EXPECT_NE(r.out.find("spectrally_distinct=yes"), std::string::npos);
    EXPECT_EQ(read_jsonl(path("c.jsonl")).front().node_count(), 11u);
}

TEST_F(CliTest, BadFlagsExitWithUsageCode) {
    EXPECT_EQ(run({"gen-data", "--task", "count:C9", "--out", path("z")}).code, 2);
    EXPECT_EQ(run({"gen-data", "--task", "count:C3"}).code, 2);
    EXPECT_EQ(run({"gen-data", "--task", "count:C3", "--n", "abc", "--out", path("z")}).code, 2);
    EXPECT_EQ(run({"frobnicate"}).code, 2);
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"check", "--what", "nothing"}).code, 2);
    EXPECT_FALSE(fs::exists(path("z")));
}

TEST_F(CliTest, HelpExitsCleanly) {
    const Result r = run({"--help"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("gen-data"), std::string::npos);
}

TEST_F(CliTest, TrainOneEpochWritesArtifacts) {
    write("run.json", R"({"model": {"variant": "MPNN", "C": 4, "layers": 1, "d": 4, "L": 2},
                          "train": {"epochs": 1, "seed": 3},
                          "data": {"task": "count:C3", "n": 10, "count": 20, "seed": 1},
                          "output": {"directory": ")" + path("out") + R"("}})");
    const Result r = run({"train", "--config", path("run.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(path("out/checkpoint.json")));
    const std::string csv = slurp(path("out/metrics.csv"));
    EXPECT_EQ(csv.substr(0, csv.find('\n')), kMetricsHeader);
    EXPECT_GE(line_count(csv), 3u);
    EXPECT_NE(csv.find(",MPNN,test,NMAE,"), std::string::npos);

    const auto [cfg, params] = load_checkpoint(path("out/checkpoint.json"));
    EXPECT_EQ(cfg.variant, Variant::MPNN);
    EXPECT_EQ(cfg.task_level, TaskLevel::Node);
    EXPECT_EQ(parameter_count(params), parameter_count(init_model(cfg, 0)));
}

TEST_F(CliTest, TrainReadsDatasetFromPath) {
    ASSERT_EQ(run({"gen-data", "--task", "subgraph:density", "--n", "10", "--count", "12", "--out", path("s.jsonl")})
                  .code,
              0);
    write("run.json", R"({"model": {"C": 2, "layers": 1, "d": 4, "L": 2, "L0": 2, "L1": 2, "d1": 4},
                          "train": {"epochs": 2, "seed": 0},
                          "data": {"task": "subgraph:density", "n": 10, "path": ")" + path("s.jsonl") + R"("},
                          "output": {"directory": ")" + path("out") + R"(", "run_id": "sub"}})");
    const Result r = run({"train", "--config", path("run.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string csv = slurp(path("out/metrics.csv"));
    EXPECT_NE(csv.find("sub,subgraph:density,ENGNN,test,accuracy,"), std::string::npos);
}

TEST_F(CliTest, SeedEnvironmentVariableOverridesConfig) {
    RunConfig rc;
    rc.train.seed = 4;
    apply_seed_override(rc, nullptr);
    EXPECT_EQ(rc.train.seed, 4u);
    apply_seed_override(rc, "17");
    EXPECT_EQ(rc.train.seed, 17u);
    EXPECT_THROW(apply_seed_override(rc, "-1"), ConfigError);
    EXPECT_THROW(apply_seed_override(rc, "12x"), ConfigError);
}

TEST_F(CliTest, ConfigErrorsExitWithUsageCode) {
    const std::string out = R"("output": {"directory": ")" + path("o") + R"("})";
    const std::vector<std::string> bad{
        R"({"model": {"colour": 1}, "data": {"task": "count:C3"}, )" + out + "}",
        R"({"data": {"task": "count:C3", "extra": 1}, )" + out + "}",
        R"({"data": {"task": "count:C3"}, "train": {"lr": -1}, )" + out + "}",
        R"({"data": {"task": "count:C3"}, "train": {"loss": "cross_entropy"}, )" + out + "}",
        R"({"data": {"task": "count:C3"}, "model": {"task_level": "graph"}, )" + out + "}",
        R"({"data": {"task": "count:C3"}})",
        R"({"data": {"task": "unknown"}, )" + out + "}",
        R"({"data": {"task": "count:C3"}, "logging": {}, )" + out + "}",
        R"({"data": )",
    };
    for (std::size_t i = 0; i < bad.size(); ++i) {
        write("bad.json", bad[i]);
        const Result r = run({"train", "--config", path("bad.json")});
        EXPECT_EQ(r.code, 2) << "case " << i << ": " << r.err;
        EXPECT_FALSE(r.err.empty());
    }
    EXPECT_FALSE(fs::exists(path("o")));
}

TEST_F(CliTest, CheckEquivarianceAndCovering) {
    Result r = run({"check", "--what", "equivariance", "--trials", "12", "--seed", "2"});
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(line_count(r.out), 13u);
    EXPECT_NE(r.out.find("equivariance: PASS"), std::string::npos);

    r = run({"check", "--what", "covering"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("C=1 samples=500 radius=0.3 n_raw="), std::string::npos);
    std::istringstream lines(r.out);
    std::size_t single = 0;
    for (std::string line; std::getline(lines, line);) {
        if (line.find(" C=1 ") == std::string::npos) continue;
        ++single;
        EXPECT_NE(line.find("ratio=1"), std::string::npos) << line;
    }
    EXPECT_EQ(single, covering_radii().size());
}

TEST_F(CliTest, ReportTakesTheMedianAcrossSeeds) {
    const std::string head = std::string(kMetricsHeader) + "\n";
    write("a.csv", head + "r0,count:C3,ENGNN,test,NMAE,0.30,0\nr0,count:C3,MPNN,test,NMAE,0.5,0\n");
    write("b.csv", head + "r1,count:C3,ENGNN,test,NMAE,0.10,1\nr1,count:C3,MPNN,test,NMAE,0.7,1\n");
    write("c.csv", head + "r2,count:C3,ENGNN,test,NMAE,0.20,2\n");
    const Result r = run({"report", "--inputs", path("a.csv"), path("b.csv"), path("c.csv"), "--out", path("m.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    // ENGNN: median of {0.3, 0.1, 0.2} is 0.2; MPNN: mean of the two values, 0.6.
    EXPECT_NE(r.out.find("ENGNN    test   NMAE    3     0.2\n"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("MPNN     test   NMAE    2     0.6\n"), std::string::npos) << r.out;
    EXPECT_EQ(line_count(slurp(path("m.csv"))), 6u);

    const ReportTable t = build_report({path("a.csv"), path("b.csv"), path("c.csv")});
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_DOUBLE_EQ(t.rows[0].median, 0.2);
    EXPECT_DOUBLE_EQ(t.rows[1].median, 0.6);
}

TEST_F(CliTest, ReportSingleInputPassesThrough) {
    const std::string body = std::string(kMetricsHeader) + "\nx,t,MPNN,train,loss,1.5,0\n";
    write("a.csv", body);
    const Result r = run({"report", "--inputs", path("a.csv")});
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(r.out.substr(0, body.size()), body);
    EXPECT_NE(r.out.find("1     1.5"), std::string::npos);
}

TEST_F(CliTest, ReportRejectsBadInputs) {
    write("bad.csv", "run,task,value\nx,y,1\n");
    write("row.csv", std::string(kMetricsHeader) + "\nx,t,MPNN,train,loss,abc,0\n");
    EXPECT_EQ(run({"report"}).code, 2);
    EXPECT_EQ(run({"report", "--inputs", path("bad.csv")}).code, 2);
    EXPECT_EQ(run({"report", "--inputs", path("row.csv")}).code, 2);
    EXPECT_EQ(run({"report", "--inputs", path("missing.csv")}).code, 2);
}

TEST(ShippedConfigs, AllParseAndValidate) {
    std::size_t seen = 0;
    for (const auto& entry : fs::directory_iterator(ENGNN_CONFIG_DIR)) {
        if (entry.path().extension() != ".json") continue;
        std::ifstream in(entry.path());
        EXPECT_NO_THROW(run_config_from_json(nlohmann::json::parse(in))) << entry.path();
        ++seen;
    }
    EXPECT_GE(seen, 4u);
}
