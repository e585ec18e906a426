#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "cli.hpp"

using namespace preqmdl;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "preqmdl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("preqmdl_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json read_json(const fs::path& p) { return parse_json(read_text_file(p), p.string()); }

}  // namespace

TEST(Gen, WritesFilesAndIsDeterministic) {
  const auto dir = scratch("gen");
  auto r = run_cli({"gen", "sin-chain3", "--n", "10000", "--seed", "7", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (auto f : {"sin-chain3.csv", "sin-chain3.truth.json", "sin-chain3.manifest.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_FALSE(fs::exists(dir / "sin-chain3.mask.csv"));
  const auto csv = read_text_file(dir / "sin-chain3.csv");
  const auto data = parse_dataset_csv(csv);
  EXPECT_EQ(data.num_rows, 10000u);
  const auto manifest = read_json(dir / "sin-chain3.manifest.json");
  EXPECT_EQ(manifest["config"]["seed"], 7);
  EXPECT_EQ(manifest["outputs"]["data"]["hash"], content_hash(csv));
  const std::vector<Edge> chain{{0, 1}, {1, 2}};
  EXPECT_EQ(dag_from_json(read_json(dir / "sin-chain3.truth.json")), Dag::from_edges(3, chain));

  const auto again = scratch("gen2");
  r = run_cli({"gen", "sin-chain3", "--n", "10000", "--seed", "7", "--out", again.string()});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(read_text_file(again / "sin-chain3.csv"), csv);
  EXPECT_EQ(read_text_file(again / "sin-chain3.manifest.json"), read_text_file(dir / "sin-chain3.manifest.json"));
  fs::remove_all(dir);
  fs::remove_all(again);
}

TEST(Gen, Table4RowMatchesLibrary) {
  const auto dir = scratch("table4");
  const auto r = run_cli({"gen", "table4", "--index", "3", "--n", "2000", "--seed", "5", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto data = parse_dataset_csv(read_text_file(dir / "table4.csv"));
  const auto lib = gen_compound_nonlinear(3, 2000, derive_seed(5, {1}));
  ASSERT_EQ(data.num_rows, 2000u);
  for (std::size_t i = 0; i < data.values.size(); ++i)
    EXPECT_NEAR(data.values[i], lib.data.values[i], 1e-12 * (1 + std::abs(lib.data.values[i])));
  const auto m = read_json(dir / "table4.manifest.json");
  EXPECT_EQ(m["config"]["mechanisms"][3], "D = sin(2*C^3 - B^2) + e");
  EXPECT_EQ(m["config"]["mechanisms"][4], "E = sgn(D)*sin(4*D*A + e)");
  fs::remove_all(dir);
}

TEST(Gen, InterventionsWriteMask) {
  const auto dir = scratch("mask");
  const auto r = run_cli({"gen", "cancer", "--n", "400", "--intervene-from", "200", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto data = parse_dataset_csv(read_text_file(dir / "cancer.csv"));
  attach_mask_csv(data, read_text_file(dir / "cancer.mask.csv"));
  EXPECT_GT(data.masked_count(), 50u);
  for (std::size_t i = 0; i < 200; ++i)
    for (int d = 0; d < 5; ++d) EXPECT_FALSE(data.masked(i, d));
  fs::remove_all(dir);
}

TEST(Score, TabularCompletesAndResumes) {
  const auto dir = scratch("score");
  ASSERT_EQ(run_cli({"gen", "tabular-chain", "--n", "500", "--cardinality", "3", "--out", dir.string()}).code, 0);
  const auto data = (dir / "tabular-chain.csv").string();
  const auto out = (dir / "scores").string();
  auto r = run_cli({"score", "--data", data, "--out", out, "--workers", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("0 cached, 12 to score"), std::string::npos) << r.out;
  const auto cache_file = fs::path(out) / "cache-0.json";
  auto cache = read_json(cache_file);
  ASSERT_EQ(cache["entries"].size(), 12u);
  const auto full = cache.dump();

  // drop three entries as an interrupted run would leave them
  cache["entries"].erase(cache["entries"].begin() + 4, cache["entries"].begin() + 7);
  write_file_atomic(cache_file, cache.dump());
  r = run_cli({"score", "--data", data, "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("9 cached, 3 to score"), std::string::npos) << r.out;
  EXPECT_EQ(read_json(cache_file).dump(), full);

  r = run_cli({"score", "--data", data, "--out", out});
  EXPECT_NE(r.out.find("12 cached, 0 to score"), std::string::npos);

  // a different configuration refuses to reuse the cache
  r = run_cli({"score", "--data", data, "--out", out, "--alpha", "1.0"});
  EXPECT_EQ(r.code, cli::kExitCache);
  EXPECT_NE(r.err.find("different"), std::string::npos);
  // so does different data
  ASSERT_EQ(run_cli({"gen", "tabular-chain", "--n", "500", "--cardinality", "3", "--seed", "9", "--out", dir.string(),
                     "--name", "other"}).code, 0);
  r = run_cli({"score", "--data", (dir / "other.csv").string(), "--out", out});
  EXPECT_EQ(r.code, cli::kExitCache);
  EXPECT_NE(r.err.find("dataset hash"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Search, ExhaustiveFiveNodes) {
  const auto dir = scratch("search5");
  ASSERT_EQ(run_cli({"gen", "cancer", "--n", "300", "--out", dir.string()}).code, 0);
  const auto scores = (dir / "scores").string();
  ASSERT_EQ(run_cli({"score", "--data", (dir / "cancer.csv").string(), "--out", scores, "--seeds", "0,1"}).code, 0);

  const auto plain = (dir / "plain").string();
  auto r = run_cli({"search", "--scores", scores, "--out", plain});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ranking = read_json(fs::path(plain) / "ranking.json");
  ASSERT_EQ(ranking.size(), 29281u);
  EXPECT_TRUE(ranking[0]["shd_to_reference"].is_null());
  EXPECT_TRUE(ranking[0]["in_reference_mec"].is_null());
  EXPECT_EQ(ranking[0]["score_std"].get<double>(), 0.0);  // tabular scores ignore the seed
  const auto csv = read_text_file(fs::path(plain) / "excess.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "dag_id,i,excess_nats");

  const auto annotated = (dir / "annotated").string();
  r = run_cli({"search", "--scores", scores, "--out", annotated, "--ground-truth",
               (dir / "cancer.truth.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto with = read_json(fs::path(annotated) / "ranking.json");
  EXPECT_TRUE(with[0]["shd_to_reference"].is_number());
  EXPECT_TRUE(with[0]["in_reference_mec"].is_boolean());
  const auto m = read_json(fs::path(annotated) / "search.manifest.json");
  EXPECT_TRUE(m["summary"]["reference_rank"].is_number());
  fs::remove_all(dir);
}

TEST(Search, HillClimbReportsPosteriorMetrics) {
  const auto dir = scratch("hc");
  ASSERT_EQ(run_cli({"gen", "cancer", "--n", "300", "--out", dir.string()}).code, 0);
  const auto scores = (dir / "scores").string();
  ASSERT_EQ(run_cli({"score", "--data", (dir / "cancer.csv").string(), "--out", scores, "--max-parents", "2"}).code, 0);
  const auto out = (dir / "out").string();
  auto r = run_cli({"search", "--scores", scores, "--search", "hillclimb", "--max-parents", "2", "--out", out,
                    "--ground-truth", (dir / "cancer.truth.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = read_json(fs::path(out) / "search.manifest.json");
  EXPECT_TRUE(m["posterior_metrics"]["pwa_shd"].is_number());
  EXPECT_GT(m["posterior_metrics"]["expected_links"].get<double>(), 0.0);
  // exhaustive needs every parent set
  r = run_cli({"search", "--scores", scores, "--out", out});
  EXPECT_EQ(r.code, cli::kExitCache);
  EXPECT_NE(r.err.find("incomplete"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Score, NeuralRecordsLearningRatePerBlock) {
  const auto dir = scratch("neural");
  ASSERT_EQ(run_cli({"gen", "sin-chain3", "--n", "300", "--out", dir.string()}).code, 0);
  const auto out = (dir / "scores").string();
  const auto r = run_cli({"score", "--data", (dir / "sin-chain3.csv").string(), "--model", "neural", "--out", out,
                          "--blocks", "3", "--first-split", "30", "--hidden-layers", "1", "--hidden-width", "8",
                          "--fourier-features", "8", "--bins", "8", "--batch-size", "16", "--max-steps", "40",
                          "--learning-rates", "0.001,0.003"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto cache = read_json(fs::path(out) / "cache-0.json");
  ASSERT_EQ(cache["entries"].size(), 12u);
  for (const auto& e : cache["entries"]) {
    ASSERT_EQ(e["blocks"].size(), 3u);
    EXPECT_TRUE(e["blocks"][0]["train_report"].is_null());  // head block
    for (int k = 1; k < 3; ++k) {
      const double lr = e["blocks"][k]["train_report"]["learning_rate"].get<double>();
      EXPECT_TRUE(lr == 0.001 || lr == 0.003) << lr;
    }
  }
  fs::remove_all(dir);
}

TEST(EndToEnd, SinChain3SearchAgreesWithLibrary) {
  const auto dir = scratch("e2e");
  ASSERT_EQ(run_cli({"gen", "sin-chain3", "--n", "600", "--seed", "1", "--out", dir.string()}).code, 0);
  const auto scores = (dir / "scores").string();
  auto r = run_cli({"score", "--data", (dir / "sin-chain3.csv").string(), "--model", "neural", "--out", scores,
                    "--blocks", "3", "--first-split", "100", "--hidden-layers", "1", "--hidden-width", "16",
                    "--fourier-features", "16", "--fourier-scale", "2", "--bins", "32", "--batch-size", "32",
                    "--max-steps", "200", "--learning-rates", "0.003", "--seeds", "0,1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto out = (dir / "out").string();
  const auto truth_path = dir / "sin-chain3.truth.json";
  r = run_cli({"search", "--scores", scores, "--out", out, "--ground-truth", truth_path.string()});
  ASSERT_EQ(r.code, 0) << r.err;

  std::vector<CpdScoreTable> tables;
  for (auto s : {"cache-0.json", "cache-1.json"})
    tables.push_back(score_table_from_json(read_json(fs::path(scores) / s)));
  const auto lib = exhaustive_search(std::span<const CpdScoreTable>(tables));
  const Dag truth = dag_from_json(read_json(truth_path));
  const auto ranking = read_json(fs::path(out) / "ranking.json");
  ASSERT_EQ(ranking.size(), 25u);
  for (std::size_t i = 0; i < 25; ++i) {
    EXPECT_EQ(ranking[i]["dag"], edge_list_json(lib.entries[i].dag));
    EXPECT_DOUBLE_EQ(ranking[i]["score_mean"].get<double>(), lib.entries[i].score_mean);
    EXPECT_EQ(ranking[i]["in_reference_mec"].get<bool>(), same_mec(lib.entries[i].dag, truth));
  }
  const auto m = read_json(fs::path(out) / "search.manifest.json");
  EXPECT_EQ(m["summary"]["top_in_reference_mec"].get<bool>(), same_mec(lib.top().dag, truth));
  EXPECT_EQ(m["summary"]["reference_rank"].get<std::size_t>(), lib.rank_of(truth).value());
  const auto curves = read_text_file(fs::path(out) / "excess.csv");
  EXPECT_EQ(m["summary"]["curve_resolution"], "per-block");
  EXPECT_EQ(std::count(curves.begin(), curves.end(), '\n'), 1 + 25 * 3);
  fs::remove_all(dir);
}

TEST(ExitCodes, ConfigDataAndParse) {
  const auto dir = scratch("codes");
  EXPECT_EQ(run_cli({"gen", "nonsense"}).code, cli::kExitConfig);
  EXPECT_EQ(run_cli({"gen", "table4", "--index", "21", "--out", dir.string()}).code, cli::kExitConfig);
  EXPECT_EQ(run_cli({"score", "--data", (dir / "missing.csv").string()}).code, cli::kExitConfig);
  EXPECT_EQ(run_cli({"score"}).code, cli::kExitConfig);
  EXPECT_EQ(run_cli({"search", "--out", dir.string()}).code, cli::kExitConfig);
  write_file_atomic(dir / "bad.csv", "A,B\n1,2\n3\n");
  EXPECT_EQ(run_cli({"score", "--data", (dir / "bad.csv").string(), "--out", dir.string()}).code, cli::kExitData);
  write_file_atomic(dir / "cache-0.json", "{not json");
  EXPECT_EQ(run_cli({"search", "--cache", (dir / "cache-0.json").string(), "--out", dir.string()}).code,
            cli::kExitData);
  EXPECT_EQ(run_cli({"--version"}).code, 0);
  fs::remove_all(dir);
}

TEST(ExitCodes, Binary) {
  const std::string tool = PREQMDL_TOOL;
  EXPECT_EQ(WEXITSTATUS(std::system((tool + " gen nonsense >/dev/null 2>&1").c_str())), cli::kExitConfig);
  const auto dir = scratch("binary");
  const auto cmd = tool + " gen star5 --n 20 --out " + dir.string() + " >/dev/null 2>&1";
  EXPECT_EQ(WEXITSTATUS(std::system(cmd.c_str())), 0);
  EXPECT_TRUE(fs::exists(dir / "star5.csv"));
  fs::remove_all(dir);
}
