#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <set>

#include "common/fixtures.hpp"
#include "gmtl/error.hpp"
#include "gmtl/synthdata.hpp"

namespace gmtl {
namespace {

using testing::read_file;
using testing::TempDir;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

ErrorCode load_error(const std::string& path, std::string* message = nullptr) {
  try {
    load_dataset(path);
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.code();
  }
  return ErrorCode::kInternal;
}

double positive_fraction(const GeneratedData& d, const std::string& task) {
  double pos = 0.0, n = 0.0;
  for (const auto* split : {&d.train, &d.val}) {
    for (const PropertyRecord& r : *split) {
      pos += r.labels.at(task);
      n += 1.0;
    }
  }
  return pos / n;
}

TEST(Generate, BalancedTaskAtTenThousand) {
  GenSpec spec = GenSpec::default_spec();
  spec.n_max = 6;  // gallery length does not affect labels
  const GeneratedData d = generate(spec, 2024);
  ASSERT_EQ(d.train.size() + d.val.size(), 10000u);
  std::vector<double> labels;
  for (const auto* split : {&d.train, &d.val}) {
    for (const PropertyRecord& r : *split) labels.push_back(r.labels.at("b1"));
  }
  const double minority = minority_fraction(labels);
  EXPECT_GE(minority, 0.48);
  EXPECT_LE(minority, 0.52);
}

TEST(Generate, ImbalancedTargetsWithinSamplingError) {
  GenSpec spec = GenSpec::default_spec();
  spec.n_max = 6;
  const GeneratedData d = generate(spec, 99);
  for (const TaskGen& t : spec.tasks) {
    if (t.kind != TaskKind::kBinary) continue;
    const double sd = std::sqrt(t.balance * (1 - t.balance) / 10000.0);
    EXPECT_NEAR(positive_fraction(d, t.name), t.balance, 4 * sd) << t.name;
  }
}

TEST(Generate, BalanceIsMonotoneInThreshold) {
  GenSpec spec = testing::small_spec(3000);
  spec.tasks = {TaskGen{"b", TaskKind::kBinary}};
  double previous = 1.0;
  for (double tau : {-1.5, -0.8, -0.2, 0.0, 0.4, 1.0, 1.7}) {
    spec.tasks[0].threshold = tau;
    const double frac = positive_fraction(generate(spec, 5), "b");
    EXPECT_LT(frac, previous) << tau;
    previous = frac;
  }
}

TEST(Generate, InfeasibleThresholdIsAnError) {
  GenSpec spec = testing::small_spec(200);
  spec.tasks = {TaskGen{"b", TaskKind::kBinary}};
  spec.tasks[0].threshold = 50.0;
  EXPECT_THROW(generate(spec, 1), Error);
  spec.tasks[0].threshold.reset();
  spec.tasks[0].balance = 0.0;
  EXPECT_THROW(generate(spec, 1), Error);
}

TEST(Generate, SplitIsDisjointAndExhaustive) {
  const GenSpec spec = testing::small_spec(1000);
  const GeneratedData d = generate(spec, 8);
  EXPECT_EQ(d.train.size(), 900u);
  std::set<std::string> ids;
  for (const auto* split : {&d.train, &d.val}) {
    for (const PropertyRecord& r : *split) EXPECT_TRUE(ids.insert(r.id).second) << r.id;
  }
  EXPECT_EQ(ids.size(), 1000u);
  EXPECT_EQ(*ids.begin(), "p000000");
  EXPECT_EQ(*ids.rbegin(), "p000999");
  EXPECT_EQ(d.holdout.labels.size(), 1000u);
}

TEST(Generate, GalleriesWithinLengthRangeAndLabelsComplete) {
  GenSpec spec = testing::small_spec(500);
  spec.n_min = 5;
  spec.n_max = 44;
  const GeneratedData d = generate(spec, 3);
  std::set<std::size_t> lengths;
  for (const PropertyRecord& r : d.train) {
    EXPECT_GE(r.gallery.length(), 5u);
    EXPECT_LE(r.gallery.length(), 44u);
    lengths.insert(r.gallery.length());
    EXPECT_EQ(r.labels.size(), spec.tasks.size());
    EXPECT_FALSE(r.labels.contains(spec.holdout.name));
  }
  EXPECT_GT(lengths.size(), 30u);
  for (const TaskSpec& t : d.header.tasks) EXPECT_NE(t.name, spec.holdout.name);
}

TEST(Generate, SameSeedGivesByteIdenticalFiles) {
  const GenSpec spec = testing::small_spec(300);
  TempDir a("gen-a"), b("gen-b");
  const auto files = write_generated(generate(spec, 11), spec, a.path().string());
  write_generated(generate(spec, 11), spec, b.path().string());
  ASSERT_EQ(files.size(), 5u);
  for (const std::string& f : files) EXPECT_EQ(read_file(a.file(f)), read_file(b.file(f))) << f;
  TempDir c("gen-c");
  write_generated(generate(spec, 12), spec, c.path().string());
  EXPECT_NE(read_file(a.file("train.jsonl")), read_file(c.file("train.jsonl")));
}

TEST(Generate, NoiselessLabelRecoverableFromOneItem) {
  GenSpec spec = testing::small_spec(400);
  spec.view_noise = 0.0;
  spec.item_noise = 0.0;
  spec.style_scale = 0.0;
  const GeneratedData d = generate(spec, 21);
  const std::size_t k = spec.latent_dim, dim = spec.item_dim;
  Eigen::MatrixXd A(dim, k);
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t c = 0; c < k; ++c) A(r, c) = d.world.view_map[r * k + c];
  const auto solver = A.colPivHouseholderQr();

  std::size_t checked = 0;
  for (std::size_t t = 0; t < spec.tasks.size(); ++t) {
    if (spec.tasks[t].kind != TaskKind::kBinary) continue;
    const auto& target = d.world.targets[t];
    for (const PropertyRecord& rec : d.train) {
      // Any single item: invert tanh and solve the linear view map for z.
      const auto item = rec.gallery.item(rec.gallery.length() - 1);
      Eigen::VectorXd pre(dim);
      for (std::size_t r = 0; r < dim; ++r) pre(r) = std::atanh(std::clamp(item[r], -0.999999, 0.999999));
      const Eigen::VectorXd z = solver.solve(pre);
      double score = 0.0;
      for (std::size_t c = 0; c < k; ++c) score += target.weights[c] * z(c);
      if (std::abs(score - target.threshold) < 1e-2) continue;  // inside the quantization margin
      EXPECT_EQ(score > target.threshold ? 1.0 : 0.0, rec.labels.at(spec.tasks[t].name)) << rec.id;
      ++checked;
    }
  }
  EXPECT_GT(checked, 600u);
}

TEST(DatasetFormat, RoundTripPreservesEveryValue) {
  const GenSpec spec = testing::small_spec(200);
  const GeneratedData d = generate(spec, 4);
  TempDir dir("rt");
  write_generated(d, spec, dir.path().string());
  const Dataset back = load_dataset(dir.file("train.jsonl"));
  ASSERT_EQ(back.records.size(), d.train.size());
  EXPECT_EQ(back.header.item_dim, spec.item_dim);
  ASSERT_EQ(back.header.tasks.size(), d.header.tasks.size());
  for (std::size_t t = 0; t < back.header.tasks.size(); ++t) {
    EXPECT_EQ(back.header.tasks[t].name, d.header.tasks[t].name);
    EXPECT_EQ(back.header.tasks[t].kind, d.header.tasks[t].kind);
    EXPECT_EQ(back.header.tasks[t].num_classes, d.header.tasks[t].num_classes);
  }
  for (std::size_t i = 0; i < back.records.size(); ++i) {
    EXPECT_EQ(back.records[i].id, d.train[i].id);
    EXPECT_EQ(back.records[i].gallery.items, d.train[i].gallery.items);
    EXPECT_EQ(back.records[i].labels, d.train[i].labels);
  }
  const HoldoutLabels h = load_holdout(dir.file("holdout.jsonl"));
  EXPECT_EQ(h.labels, d.holdout.labels);
  EXPECT_EQ(h.task.name, spec.holdout.name);
  EXPECT_EQ(h.task.num_classes, spec.holdout.num_classes);
}

TEST(DatasetFormat, EmptyFileYieldsNothing) {
  TempDir dir("empty");
  write_text(dir.file("e.jsonl"), "");
  DatasetReader reader(dir.file("e.jsonl"));
  EXPECT_FALSE(reader.next().has_value());
  EXPECT_TRUE(load_dataset(dir.file("e.jsonl")).records.empty());
}

TEST(DatasetFormat, HandWrittenThreeRecords) {
  TempDir dir("three");
  write_text(dir.file("f.jsonl"),
             "{\"schema\":\"gmtl.dataset\",\"version\":1,\"item_dim\":2,\"tasks\":["
             "{\"name\":\"pool\",\"kind\":\"binary\"},{\"name\":\"price\",\"kind\":\"regression\"}]}\n"
             "{\"id\":\"h1\",\"gallery\":[[0.5,-1.25]],\"labels\":{\"pool\":1,\"price\":99.5}}\n"
             "{\"id\":\"h2\",\"gallery\":[[1,2],[3,4],[5,6]],\"labels\":{\"pool\":0,\"price\":-3}}\n"
             "\n"
             "{\"id\":\"h3\",\"gallery\":[[0.125,0],[1e-3,7]],\"labels\":{\"price\":0.1,\"pool\":1}}\n");
  const Dataset d = load_dataset(dir.file("f.jsonl"));
  ASSERT_EQ(d.records.size(), 3u);
  EXPECT_EQ(d.records[0].id, "h1");
  EXPECT_EQ(d.records[0].gallery.items, (std::vector<double>{0.5, -1.25}));
  EXPECT_EQ(d.records[1].gallery.length(), 3u);
  EXPECT_EQ(d.records[1].gallery.items, (std::vector<double>{1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(d.records[1].labels.at("price"), -3.0);
  EXPECT_EQ(d.records[2].gallery.items, (std::vector<double>{0.125, 0, 1e-3, 7}));
  EXPECT_EQ(d.records[2].labels.at("price"), 0.1);
  EXPECT_EQ(d.records[2].labels.at("pool"), 1.0);
  EXPECT_EQ(d.header.tasks[1].kind, TaskKind::kRegression);
}

TEST(DatasetFormat, Length44GalleryMask) {
  Gallery g{3, std::vector<double>(44 * 3, 0.25)};
  const Gallery one[] = {g};
  const GalleryBatch b = make_batch(std::span<const Gallery>(one));
  double total = 0.0;
  for (double m : b.mask.data()) total += m;
  EXPECT_EQ(total, 44.0);
  EXPECT_EQ(b.lengths[0], 44u);
}

TEST(DatasetFormat, MalformedLineReportsLineNumber) {
  TempDir dir("bad");
  write_text(dir.file("b.jsonl"),
             "{\"id\":\"a\",\"gallery\":[[1]],\"labels\":{}}\n"
             "{\"id\":\"b\",\"gallery\":[[1]],\"labels\":{}}\n"
             "{\"id\":\"c\",\"gallery\":[[1]],\"labels\":\n");
  std::string msg;
  EXPECT_EQ(load_error(dir.file("b.jsonl"), &msg), ErrorCode::kFormat);
  EXPECT_NE(msg.find(":3:"), std::string::npos) << msg;

  write_text(dir.file("r.jsonl"), "{\"id\":\"a\",\"gallery\":[[1,2],[3]],\"labels\":{}}\n");
  EXPECT_EQ(load_error(dir.file("r.jsonl")), ErrorCode::kFormat);
  write_text(dir.file("e.jsonl"), "{\"id\":\"a\",\"gallery\":[],\"labels\":{}}\n");
  EXPECT_EQ(load_error(dir.file("e.jsonl")), ErrorCode::kFormat);
}

TEST(DatasetFormat, UnknownTaskIsRejected) {
  TempDir dir("unk");
  write_text(dir.file("u.jsonl"),
             "{\"schema\":\"gmtl.dataset\",\"version\":1,\"item_dim\":1,\"tasks\":[{\"name\":\"pool\",\"kind\":\"binary\"}]}\n"
             "{\"id\":\"a\",\"gallery\":[[1]],\"labels\":{\"pool\":1,\"sauna\":0}}\n");
  EXPECT_EQ(load_error(dir.file("u.jsonl")), ErrorCode::kUnknownTask);
}

TEST(DatasetFormat, SchemaVersionMismatch) {
  TempDir dir("ver");
  write_text(dir.file("v.jsonl"), "{\"schema\":\"gmtl.dataset\",\"version\":2,\"item_dim\":1,\"tasks\":[]}\n");
  EXPECT_EQ(load_error(dir.file("v.jsonl")), ErrorCode::kSchemaVersion);
}

TEST(DatasetFormat, MissingFileIsNotFound) {
  EXPECT_EQ(load_error("/nonexistent/dir/data.jsonl"), ErrorCode::kNotFound);
}

TEST(DatasetFormat, StreamingReaderYieldsRecordsInOrder) {
  const GenSpec spec = testing::small_spec(100);
  const GeneratedData d = generate(spec, 6);
  TempDir dir("stream");
  write_dataset(dir.file("v.jsonl"), d.header, d.val);
  DatasetReader reader(dir.file("v.jsonl"));
  ASSERT_TRUE(reader.header().has_value());
  std::size_t n = 0;
  while (auto rec = reader.next()) EXPECT_EQ(rec->id, d.val[n++].id);
  EXPECT_EQ(n, d.val.size());
}

}  // namespace
}  // namespace gmtl
