#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "qamine/cli.hpp"
#include "qamine/io.hpp"
#include "support.hpp"

using namespace qamine;
namespace fs = std::filesystem;
namespace t = qamine::testing;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result qamine_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli::run_command(args, out, err);
  return {code, out.str(), err.str()};
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_file(p)); }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override { dir = t::scratch_dir("cli"); }
  void TearDown() override { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
  fs::path dir;
};

}  // namespace

TEST_F(Cli, IngestFixtureWritesOnePairAndManifest) {
  auto r = qamine_run({"ingest", "--posts", (t::toy_dir() / "ingest_fixture.xml").string(), "--out", path("p.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto pairs = read_pairs_jsonl(path("p.jsonl"));
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].question, "t");
  EXPECT_EQ(pairs[0].tags, (std::vector<std::string>{"c", "malloc"}));

  auto diag = read_json(path("p.jsonl.diagnostics.json"));
  EXPECT_EQ(diag["rows_read"], 3);
  EXPECT_EQ(diag["rows_skipped"], 1);
  EXPECT_EQ(diag["pairs_emitted"], 1);

  auto m = read_json(path("p.jsonl.manifest.json"));
  EXPECT_EQ(m["subcommand"], "ingest");
  EXPECT_EQ(m["tool_version"], cli::kToolVersion);
  EXPECT_EQ(m["outputs"][path("p.jsonl")], sha256_file(path("p.jsonl")));
  EXPECT_EQ(m["inputs"][(t::toy_dir() / "ingest_fixture.xml").string()].get<std::string>().size(), 64u);
  EXPECT_TRUE(m.contains("started_at"));
  EXPECT_TRUE(m.contains("finished_at"));
}

TEST_F(Cli, ManifestReconstructsCommandLine) {
  std::vector<std::string> args{"ingest", "--posts", (t::toy_dir() / "ingest_fixture.xml").string(), "--out",
                                path("p.jsonl")};
  ASSERT_EQ(qamine_run(args).code, 0);
  auto first = read_file(path("p.jsonl"));
  auto m = read_json(path("p.jsonl.manifest.json"));
  auto line = m["command_line"].get<std::vector<std::string>>();
  ASSERT_EQ(line.front(), "qamine");
  fs::remove(path("p.jsonl"));
  ASSERT_EQ(qamine_run({line.begin() + 1, line.end()}).code, 0);
  EXPECT_EQ(read_file(path("p.jsonl")), first);
  EXPECT_EQ(m["config"]["posts"], (t::toy_dir() / "ingest_fixture.xml").string());
}

TEST_F(Cli, EvalPerfectRun) {
  { std::ofstream(path("q.tsv")) << "1\t10\n2\t20\n"; }
  { std::ofstream(path("r.tsv")) << "1\t1\t10\t2.0\n2\t1\t20\t1.0\n"; }
  auto r = qamine_run({"eval", "--run", path("r.tsv"), "--qrels", path("q.tsv"), "--k", "10", "--out",
                       path("report.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = read_json(path("report.json"));
  EXPECT_EQ(j["mrr_at_k"]["10"], 1.0);
  EXPECT_EQ(j["recall_at_k"]["10"], 1.0);
  EXPECT_EQ(j["map"], 1.0);
  EXPECT_NE(r.out.find("100.00"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("report.json.txt")));
  EXPECT_TRUE(fs::exists(path("report.json.manifest.json")));
}

TEST_F(Cli, UnknownFlagExits2) {
  auto r = qamine_run({"eval", "--run", "x", "--qrels", "y", "--bogus"});
  EXPECT_EQ(r.code, 2);
  auto err = nlohmann::json::parse(r.err);
  EXPECT_EQ(err["error"]["exit_code"], 2);
  EXPECT_EQ(qamine_run({}).code, 2);
  EXPECT_EQ(qamine_run({"frobnicate"}).code, 2);
}

TEST_F(Cli, MissingInputExits66) {
  auto r = qamine_run({"ingest", "--posts", path("nope.xml"), "--out", path("p.jsonl")});
  EXPECT_EQ(r.code, 66);
  EXPECT_EQ(nlohmann::json::parse(r.err)["error"]["kind"], "input_not_found");
  EXPECT_FALSE(fs::exists(path("p.jsonl")));
}

TEST_F(Cli, InvalidDataExits65) {
  { std::ofstream(path("bad.xml")) << "<posts><row Id=\"1\" </posts>"; }
  auto r = qamine_run({"ingest", "--posts", path("bad.xml"), "--out", path("p.jsonl")});
  EXPECT_EQ(r.code, 65) << r.err;
  EXPECT_FALSE(fs::exists(path("p.jsonl")));

  { std::ofstream(path("bad.jsonl")) << "{\"question_id\": 1}\n"; }
  r = qamine_run({"filter", "--in", path("bad.jsonl"), "--out-dir", path("f")});
  EXPECT_EQ(r.code, 65) << r.err;
  EXPECT_NE(r.err.find("bad.jsonl:1"), std::string::npos) << r.err;

  { std::ofstream(path("q.tsv")) << "1\t10\n"; }
  { std::ofstream(path("r.tsv")) << "1\tone\t10\t2.0\n"; }
  EXPECT_EQ(qamine_run({"eval", "--run", path("r.tsv"), "--qrels", path("q.tsv")}).code, 65);
}

TEST_F(Cli, ConfigErrorsExit2) {
  auto r = qamine_run({"filter", "--in", (t::toy_dir() / "eval_queries.jsonl").string(), "--out-dir", path("f"),
                       "--min-chars", "50", "--max-chars", "10"});
  EXPECT_EQ(r.code, 2);
}

TEST_F(Cli, HelpAndVersionExit0) {
  auto r = qamine_run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("decontaminate"), std::string::npos);
  r = qamine_run({"train", "--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--batch-size"), std::string::npos);
  r = qamine_run({"--version"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find(cli::kToolVersion), std::string::npos);
}

TEST_F(Cli, ConfigFileFillsUnsetFlagsOnly) {
  {
    std::ofstream(path("cfg.json")) << R"({"min-chars": 5, "max-chars": 9, "languages": ["c", "python"]})";
  }
  ASSERT_EQ(qamine_run({"ingest", "--posts", (t::toy_dir() / "Posts.xml").string(), "--out", path("p.jsonl")}).code,
            0);
  auto r = qamine_run({"filter", "--config", path("cfg.json"), "--in", path("p.jsonl"), "--out-dir", path("f"),
                       "--max-chars", "4096"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto m = read_json(path("f/filter.manifest.json"));
  EXPECT_EQ(m["config"]["min-chars"], "5");
  EXPECT_EQ(m["config"]["max-chars"], "4096");
  EXPECT_EQ(m["config"]["languages"], (nlohmann::json{"c", "python"}));
  EXPECT_TRUE(fs::exists(path("f/c.jsonl")));
  EXPECT_FALSE(fs::exists(path("f/java.jsonl")));

  { std::ofstream(path("broken.json")) << "{not json"; }
  EXPECT_EQ(qamine_run({"filter", "--config", path("broken.json"), "--in", path("p.jsonl"), "--out-dir", path("g")})
                .code,
            2);
  EXPECT_EQ(qamine_run({"filter", "--config", path("none.json"), "--in", path("p.jsonl"), "--out-dir", path("g")})
                .code,
            66);
}

TEST_F(Cli, AtomicWriteLeavesNoPartialArtifact) {
  write_file_atomic(dir / "a.txt", std::string_view("old contents"));
  EXPECT_THROW(write_file_atomic(dir / "a.txt",
                                 [](std::ostream& out) {
                                   out << "partial";
                                   throw std::runtime_error("interrupted");
                                 }),
               std::runtime_error);
  EXPECT_EQ(read_file(dir / "a.txt"), "old contents");
  EXPECT_THROW(write_file_atomic(dir / "b.txt",
                                 [](std::ostream& out) {
                                   out << "partial";
                                   throw std::runtime_error("interrupted");
                                 }),
               std::runtime_error);
  EXPECT_FALSE(fs::exists(dir / "b.txt"));
  for (const auto& e : fs::directory_iterator(dir)) {
    EXPECT_EQ(e.path().filename().string().find(".tmp."), std::string::npos) << e.path();
  }
}

TEST_F(Cli, ToyPipelineCompletes) {
  std::string log;
  ASSERT_EQ(t::run_toy_pipeline(dir, 7, &log), 0) << log;
  for (const auto& f : t::toy_pipeline_artifacts()) EXPECT_TRUE(fs::exists(dir / f)) << f;
  auto report = read_json(dir / "bm25_eval.json");
  EXPECT_GT(report["num_queries"].get<int>(), 0);
  EXPECT_GT(report["mrr_at_k"]["10"].get<double>(), 0.0);
  auto contamination = read_json(dir / "clean/python.train.jsonl.contamination.json");
  EXPECT_EQ(contamination["eval_sets"]["toy"]["matched_count"], 1);
  auto run = read_file(dir / "bm25.run");
  EXPECT_NE(run.find("# k1=1.2"), std::string::npos);
  auto dense = read_file(dir / "dense.run");
  EXPECT_NE(dense.find("# model_fingerprint=" + read_json(dir / "model.bin.manifest.json")["outputs"]
                                                    [(dir / "model.bin").string()]
                                                        .get<std::string>()),
            std::string::npos);
}
