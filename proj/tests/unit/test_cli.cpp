// Exercises the C interface and the command-line tool as a client would,
// without linking the C++ core.

#include <gtest/gtest.h>
#include <openssl/evp.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "common/small_config.hpp"
#include "gmtl/gmtl.h"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

std::string sha256(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("gmtl-cli-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

struct ConfigDeleter {
  void operator()(gmtl_config* c) const { gmtl_config_free(c); }
};
using ConfigPtr = std::unique_ptr<gmtl_config, ConfigDeleter>;

const std::vector<std::string>& kSmall = gmtl::testing::small_overrides();

ConfigPtr make_config(const std::vector<std::string>& extra = {}) {
  gmtl_config* raw = nullptr;
  EXPECT_EQ(gmtl_config_load(nullptr, &raw), GMTL_OK) << gmtl_last_error();
  ConfigPtr c(raw);
  for (const std::string& s : kSmall) EXPECT_EQ(gmtl_config_set(c.get(), s.c_str()), GMTL_OK) << s;
  for (const std::string& s : extra) EXPECT_EQ(gmtl_config_set(c.get(), s.c_str()), GMTL_OK) << s << ": " << gmtl_last_error();
  return c;
}

std::string quoted(const std::string& s) { return "\"" + s + "\""; }

int run(const gmtl_config* c, const char* sub, const std::string& dir) {
  char* out_dir = nullptr;
  char* warnings = nullptr;
  const int status = gmtl_run(c, sub, dir.c_str(), &out_dir, &warnings);
  if (status == GMTL_OK) {
    EXPECT_EQ(std::string(out_dir), dir);
  }
  gmtl_string_free(out_dir);
  gmtl_string_free(warnings);
  return status;
}

void run_ok(const std::vector<std::string>& extra, const char* sub, const std::string& dir) {
  ConfigPtr c = make_config(extra);
  ASSERT_EQ(run(c.get(), sub, dir), GMTL_OK) << sub << ": " << gmtl_last_error();
}

// Every regular file in the run directory is either hashed in the manifest
// with its true digest or listed as a wall-clock sidecar.
void expect_complete_manifest(const fs::path& dir, const std::string& subcommand) {
  const json m = json::parse(read_file(dir / "manifest.json"));
  EXPECT_EQ(m["schema"], "gmtl.manifest");
  EXPECT_EQ(m["subcommand"], subcommand);
  EXPECT_TRUE(m.contains("config"));
  std::set<std::string> listed;
  for (const auto& o : m["outputs"]) {
    const std::string file = o["file"];
    listed.insert(file);
    EXPECT_EQ(o["sha256"], sha256(read_file(dir / file))) << file;
  }
  for (const auto& s : m["nondeterministic"]) listed.insert(s.get<std::string>());
  EXPECT_FALSE(m["outputs"].empty());
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name == "manifest.json") continue;
    EXPECT_TRUE(listed.count(name)) << subcommand << " left unlisted file " << name;
  }
  for (const auto& in : m["inputs"]) EXPECT_EQ(in["sha256"], sha256(read_file(in["path"].get<std::string>())));
}

// Deterministic outputs of a run directory, keyed by file name.
std::map<std::string, std::string> outputs_of(const fs::path& dir) {
  const json m = json::parse(read_file(dir / "manifest.json"));
  std::map<std::string, std::string> out;
  for (const auto& o : m["outputs"]) out[o["file"]] = read_file(dir / o["file"].get<std::string>());
  return out;
}

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new TempDir();
    const TempDir& r = *root_;
    run_ok({}, "generate", r / "data");
    data_ = {"paths.data_dir=" + quoted(r / "data")};
    run_ok(data_, "train", r / "train");
    auto single = data_;
    single.push_back("model.single_task=true");
    run_ok(single, "train", r / "single");
  }
  static void TearDownTestSuite() { delete root_; }

  static std::vector<std::string> with_model(std::vector<std::string> extra = {}) {
    extra.insert(extra.begin(), data_.begin(), data_.end());
    extra.push_back("paths.model=" + quoted(*root_ / "train/model.ckpt"));
    return extra;
  }

  static TempDir* root_;
  static std::vector<std::string> data_;
};

TempDir* Pipeline::root_ = nullptr;
std::vector<std::string> Pipeline::data_;

TEST_F(Pipeline, EverySubcommandWritesACompleteManifest) {
  const TempDir& r = *root_;
  expect_complete_manifest(r / "data", "generate");
  expect_complete_manifest(r / "train", "train");
  expect_complete_manifest(r / "single", "train");
  run_ok(with_model(), "evaluate", r / "evaluate");
  expect_complete_manifest(r / "evaluate", "evaluate");
  run_ok(with_model(), "transfer", r / "transfer");
  expect_complete_manifest(r / "transfer", "transfer");
  run_ok(with_model(), "index", r / "index");
  expect_complete_manifest(r / "index", "index");
  run_ok({"paths.index=" + quoted(r / "index/index.lsh"), "lsh.seed_ids=[\"p000001\",\"p000002\"]"}, "retrieve",
         r / "retrieve");
  expect_complete_manifest(r / "retrieve", "retrieve");
  run_ok({"paths.metrics_mtl=" + quoted(r / "train/metrics_val.json"),
          "paths.metrics_optimal=" + quoted(r / "single/metrics_val.json")},
         "analyze", r / "analyze");
  expect_complete_manifest(r / "analyze", "analyze");
  run_ok(with_model(), "project", r / "project");
  expect_complete_manifest(r / "project", "project");

  const json report = json::parse(read_file(fs::path(r / "analyze") / "analysis_report.json"));
  EXPECT_EQ(report["tasks"].size(), 10u);
  EXPECT_TRUE(report["balance_correlation"].contains("pearson_r"));
  // Rows recomputed by hand from the two metric files.
  const json mtl = json::parse(read_file(fs::path(r / "train") / "metrics_val.json"));
  const json opt = json::parse(read_file(fs::path(r / "single") / "metrics_val.json"));
  ASSERT_EQ(mtl["tasks"].size(), report["tasks"].size());
  for (std::size_t i = 0; i < report["tasks"].size(); ++i) {
    const json& row = report["tasks"][i];
    const json& a = mtl["tasks"][i];
    json b;
    for (const json& t : opt["tasks"])
      if (t["name"] == a["name"]) b = t;
    ASSERT_FALSE(b.is_null()) << a["name"];
    EXPECT_EQ(row["name"], a["name"]);
    EXPECT_EQ(row["err_mtl"].get<double>(), a["error"].get<double>());
    EXPECT_EQ(row["err_optimal"].get<double>(), b["error"].get<double>());
    const double ea = a["error"], eb = b["error"];
    if (eb > 0) {
      EXPECT_NEAR(row["relative_increase_pct"].get<double>(), 100.0 * (ea - eb) / eb, 1e-9);
    } else {
      EXPECT_TRUE(row["relative_increase_pct"].is_null());
    }
  }
  const std::string neighbors = read_file(fs::path(r / "retrieve") / "neighbors.csv");
  EXPECT_EQ(neighbors.rfind("rank,id,distance\n", 0), 0u);
}

TEST_F(Pipeline, IdenticalConfigsGiveIdenticalBytes) {
  const TempDir& r = *root_;
  run_ok({}, "generate", r / "data2");
  EXPECT_EQ(outputs_of(r / "data"), outputs_of(r / "data2"));
  EXPECT_EQ(read_file(fs::path(r / "data") / "manifest.json"), read_file(fs::path(r / "data2") / "manifest.json"));
  run_ok(data_, "train", r / "train2");
  EXPECT_EQ(outputs_of(r / "train"), outputs_of(r / "train2"));
  EXPECT_EQ(read_file(fs::path(r / "train") / "manifest.json"), read_file(fs::path(r / "train2") / "manifest.json"));
  run_ok(with_model(), "transfer", r / "transfer_a");
  run_ok(with_model(), "transfer", r / "transfer_b");
  EXPECT_EQ(outputs_of(r / "transfer_a"), outputs_of(r / "transfer_b"));
}

TEST_F(Pipeline, DifferentSeedChangesTheData) {
  const TempDir& r = *root_;
  run_ok({"seed=12"}, "generate", r / "data_other");
  EXPECT_NE(read_file(fs::path(r / "data") / "train.jsonl"), read_file(fs::path(r / "data_other") / "train.jsonl"));
}

TEST_F(Pipeline, InputsAreNotModified) {
  const TempDir& r = *root_;
  std::map<std::string, std::string> before;
  for (const char* f : {"data/train.jsonl", "data/val.jsonl", "data/holdout.jsonl", "train/model.ckpt"})
    before[f] = sha256(read_file(r / f));
  run_ok(data_, "train", r / "train3");
  run_ok(with_model(), "evaluate", r / "evaluate3");
  run_ok(with_model(), "transfer", r / "transfer3");
  for (const auto& [f, digest] : before) EXPECT_EQ(sha256(read_file(r / f)), digest) << f;
}

TEST_F(Pipeline, ZeroLearningRateKeepsTheInitialWeights) {
  const TempDir& r = *root_;
  auto one = data_, two = data_;
  one.insert(one.end(), {"train.lr=0", "train.max_epochs=1"});
  two.insert(two.end(), {"train.lr=0", "train.max_epochs=2"});
  run_ok(one, "train", r / "lr0_a");
  run_ok(two, "train", r / "lr0_b");
  EXPECT_EQ(read_file(fs::path(r / "lr0_a") / "model.ckpt"), read_file(fs::path(r / "lr0_b") / "model.ckpt"));
  EXPECT_NE(read_file(fs::path(r / "lr0_a") / "model.ckpt"), read_file(fs::path(r / "train") / "model.ckpt"));
}

TEST_F(Pipeline, ModelAndIndexHandles) {
  const TempDir& r = *root_;
  gmtl_model* model = nullptr;
  ASSERT_EQ(gmtl_model_load((r / "train/model.ckpt").c_str(), &model), GMTL_OK) << gmtl_last_error();
  size_t item_dim = 0, embed_dim = 0;
  ASSERT_EQ(gmtl_model_dims(model, &item_dim, &embed_dim), GMTL_OK);
  EXPECT_EQ(item_dim, 8u);
  EXPECT_EQ(embed_dim, 16u);

  std::vector<double> items(3 * item_dim), reversed(3 * item_dim);
  for (std::size_t i = 0; i < items.size(); ++i) items[i] = std::sin(0.7 * static_cast<double>(i));
  for (std::size_t row = 0; row < 3; ++row)
    std::copy_n(items.begin() + row * item_dim, item_dim, reversed.begin() + (2 - row) * item_dim);
  std::vector<double> e1(embed_dim), e2(embed_dim);
  ASSERT_EQ(gmtl_model_embed(model, items.data(), 3, item_dim, e1.data()), GMTL_OK);
  ASSERT_EQ(gmtl_model_embed(model, reversed.data(), 3, item_dim, e2.data()), GMTL_OK);
  for (std::size_t d = 0; d < embed_dim; ++d) EXPECT_NEAR(e1[d], e2[d], 1e-12);
  EXPECT_EQ(gmtl_model_embed(model, items.data(), 3, item_dim + 1, e1.data()), GMTL_ERR_SHAPE);
  EXPECT_EQ(gmtl_model_embed(model, items.data(), 0, item_dim, e1.data()), GMTL_ERR_INVALID_ARGUMENT);
  gmtl_model_free(model);

  const char* ids[] = {"a", "b", "c"};
  const double vecs[] = {0, 0, 1, 0, 5, 5};
  gmtl_index* index = nullptr;
  ASSERT_EQ(gmtl_index_build(ids, vecs, 3, 2, 4, 2, 0.0, 9, &index), GMTL_OK) << gmtl_last_error();
  const char* hit_ids[3];
  double dist[3];
  size_t count = 0;
  ASSERT_EQ(gmtl_index_query(index, vecs + 4, 1, 2, 3, hit_ids, dist, &count), GMTL_OK);
  ASSERT_GE(count, 1u);
  EXPECT_STREQ(hit_ids[0], "c");
  EXPECT_EQ(dist[0], 0.0);
  ASSERT_EQ(gmtl_index_save(index, (r / "small.lsh").c_str()), GMTL_OK);
  gmtl_index* loaded = nullptr;
  ASSERT_EQ(gmtl_index_load((r / "small.lsh").c_str(), &loaded), GMTL_OK);
  size_t n = 0, dim = 0;
  ASSERT_EQ(gmtl_index_size(loaded, &n, &dim), GMTL_OK);
  EXPECT_EQ(n, 3u);
  EXPECT_EQ(dim, 2u);
  gmtl_index_free(loaded);
  gmtl_index_free(index);
}

TEST(CApi, ErrorsCarryCategoryAndMessage) {
  gmtl_model* model = nullptr;
  EXPECT_EQ(gmtl_model_load("/nonexistent/model.ckpt", &model), GMTL_ERR_NOT_FOUND);
  EXPECT_EQ(model, nullptr);
  EXPECT_NE(std::string(gmtl_last_error()), "");
  EXPECT_STREQ(gmtl_status_name(GMTL_ERR_NOT_FOUND), "not_found");
  EXPECT_STREQ(gmtl_status_name(GMTL_OK), "ok");
  EXPECT_STREQ(gmtl_status_name(99), "unknown");
  EXPECT_EQ(gmtl_model_load(nullptr, &model), GMTL_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(gmtl_config_load(nullptr, nullptr), GMTL_ERR_INVALID_ARGUMENT);
  gmtl_config* c = nullptr;
  ASSERT_EQ(gmtl_config_load("", &c), GMTL_OK);
  EXPECT_EQ(std::string(gmtl_last_error()), "");
  EXPECT_EQ(gmtl_run(c, "bogus", "/tmp/unused", nullptr, nullptr), GMTL_ERR_INVALID_ARGUMENT);
  gmtl_config_free(c);
}

TEST(CApi, OverridesAreStrict) {
  gmtl_config* raw = nullptr;
  ASSERT_EQ(gmtl_config_load(nullptr, &raw), GMTL_OK);
  ConfigPtr c(raw);
  char* before = nullptr;
  ASSERT_EQ(gmtl_config_dump(c.get(), &before), GMTL_OK);
  EXPECT_EQ(gmtl_config_set(c.get(), "train.no_such_key=1"), GMTL_ERR_CONFIG);
  EXPECT_EQ(gmtl_config_set(c.get(), "train.lr=\"fast\""), GMTL_ERR_CONFIG);
  EXPECT_EQ(gmtl_config_set(c.get(), "model.scheme=\"sometimes\""), GMTL_ERR_CONFIG);
  EXPECT_EQ(gmtl_config_set(c.get(), "no_equals_sign"), GMTL_ERR_CONFIG);
  char* after = nullptr;
  ASSERT_EQ(gmtl_config_dump(c.get(), &after), GMTL_OK);
  EXPECT_STREQ(before, after);
  ASSERT_EQ(gmtl_config_set(c.get(), "train.lr=0.5"), GMTL_OK);
  char* changed = nullptr;
  ASSERT_EQ(gmtl_config_dump(c.get(), &changed), GMTL_OK);
  EXPECT_EQ(json::parse(changed)["train"]["lr"], 0.5);
  gmtl_string_free(before);
  gmtl_string_free(after);
  gmtl_string_free(changed);

  TempDir dir;
  write_file(dir / "bad.json", R"({"train": {"lr": 0.1, "typo": 3}})");
  gmtl_config* bad = nullptr;
  EXPECT_EQ(gmtl_config_load((dir / "bad.json").c_str(), &bad), GMTL_ERR_CONFIG);
  write_file(dir / "broken.json", "{not json");
  EXPECT_EQ(gmtl_config_load((dir / "broken.json").c_str(), &bad), GMTL_ERR_CONFIG);
  EXPECT_EQ(gmtl_config_load((dir / "absent.json").c_str(), &bad), GMTL_ERR_NOT_FOUND);
}

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult cli(const std::string& args) {
  TempDir capture;
  const std::string cmd = std::string(GMTL_CLI_PATH) + " " + args + " >" + (capture / "out") + " 2>" + (capture / "err");
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = read_file(capture / "out");
  r.err = read_file(capture / "err");
  return r;
}

std::string small_flags() {
  std::string flags;
  for (const std::string& s : kSmall) flags += " --set '" + s + "'";
  return flags;
}

TEST(Cli, DistinctExitCodesPerCategory) {
  TempDir dir;
  const CliResult gen = cli("generate --run-dir " + (dir / "data") + small_flags());
  ASSERT_EQ(gen.code, 0) << gen.err;
  EXPECT_EQ(gen.out, (dir / "data") + "\n");

  const CliResult unknown_task =
      cli("train --run-dir " + (dir / "t") + " --data " + (dir / "data") + small_flags() + " --set 'model.tasks=[\"zz\"]'");
  EXPECT_EQ(unknown_task.code, GMTL_ERR_UNKNOWN_TASK) << unknown_task.err;
  EXPECT_NE(unknown_task.err.find("category=unknown_task"), std::string::npos) << unknown_task.err;
  EXPECT_NE(unknown_task.err.find("zz"), std::string::npos);

  const CliResult missing = cli("evaluate --run-dir " + (dir / "e") + " --model " + (dir / "nope.ckpt"));
  EXPECT_EQ(missing.code, GMTL_ERR_NOT_FOUND) << missing.err;
  EXPECT_NE(missing.err.find("category=not_found"), std::string::npos);

  fs::create_directories(dir.path() / "v2");
  for (const char* f : {"train.jsonl", "val.jsonl", "holdout.jsonl"}) {
    std::string text = read_file(fs::path(dir / "data") / f);
    const auto at = text.find("\"version\":1");
    ASSERT_NE(at, std::string::npos);
    text.replace(at, 11, "\"version\":2");
    write_file(dir.path() / "v2" / f, text);
  }
  const CliResult schema = cli("train --run-dir " + (dir / "s") + " --data " + (dir / "v2") + small_flags());
  EXPECT_EQ(schema.code, GMTL_ERR_SCHEMA_VERSION) << schema.err;
  EXPECT_NE(schema.err.find("category=schema_version"), std::string::npos);

  const CliResult config = cli("train --set train.nonsense=1");
  EXPECT_EQ(config.code, GMTL_ERR_CONFIG);

  const CliResult flag = cli("train --no-such-flag");
  EXPECT_EQ(flag.code, GMTL_ERR_INVALID_ARGUMENT);

  std::set<int> codes{unknown_task.code, missing.code, schema.code, config.code, flag.code};
  EXPECT_EQ(codes.size(), 5u);
}

TEST(Cli, PrintConfigAppliesFlagsAndEnvironment) {
  TempDir dir;
  write_file(dir / "cfg.json", R"({"train": {"lr": 0.25}})");
  const CliResult r = cli("train --print-config --config " + (dir / "cfg.json") + " --seed 42 --data /some/where");
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  EXPECT_EQ(j["seed"], 42);
  EXPECT_EQ(j["train"]["lr"], 0.25);
  EXPECT_EQ(j["paths"]["data_dir"], "/some/where");
  const CliResult env = cli("train --print-config");
  ASSERT_EQ(env.code, 0);
  EXPECT_EQ(json::parse(env.out)["train"]["lr"], 1e-4);
  const std::string cmd = "GMTL_CONFIG=" + (dir / "cfg.json") + " " + GMTL_CLI_PATH + " train --print-config >" +
                          (dir / "out.json");
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_EQ(json::parse(read_file(dir / "out.json"))["train"]["lr"], 0.25);
}

TEST(Cli, CliAndCApiProduceTheSameBytes) {
  TempDir dir;
  ASSERT_EQ(cli("generate --run-dir " + (dir / "cli") + small_flags()).code, 0);
  run_ok({}, "generate", dir / "api");
  EXPECT_EQ(outputs_of(dir / "cli"), outputs_of(dir / "api"));
}

}  // namespace
