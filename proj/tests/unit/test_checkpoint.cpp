#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "common/fixtures.hpp"
#include "gmtl/checkpoint.hpp"
#include "gmtl/error.hpp"
#include "gmtl/model.hpp"

namespace gmtl {
namespace {

using testing::TempDir;

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return static_cast<ErrorCode>(0);
}

void expect_same_parameters(const MtlModel& a, const MtlModel& b) {
  const auto pa = a.named_parameters(), pb = b.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_EQ(pa[i].tensor.shape(), pb[i].tensor.shape());
    EXPECT_TRUE(std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(), pb[i].tensor.data().begin()))
        << pa[i].name;
  }
}

class CheckpointTest : public ::testing::TestWithParam<WeightingScheme> {};

TEST_P(CheckpointTest, RoundTripIsExact) {
  const auto d = testing::make_small_data(testing::small_spec(200), 4);
  const MtlModel model = testing::small_model(d.train, 8, GetParam(), 6, 1);
  TempDir dir("ckpt");
  model.save(dir.file("m.ckpt"));
  const MtlModel loaded = MtlModel::load(dir.file("m.ckpt"));
  expect_same_parameters(model, loaded);
  EXPECT_EQ(loaded.scheme(), GetParam());
  EXPECT_EQ(loaded.encoder().config().frozen_prefix, 1u);
  EXPECT_EQ(loaded.encoder().config().hidden_dims, model.encoder().config().hidden_dims);
  const auto ra = model.roster(), rb = loaded.roster();
  ASSERT_EQ(ra.size(), rb.size());
  for (std::size_t t = 0; t < ra.size(); ++t) {
    EXPECT_EQ(ra[t].name, rb[t].name);
    EXPECT_EQ(ra[t].kind, rb[t].kind);
    EXPECT_EQ(ra[t].sample_variance, rb[t].sample_variance);
  }
  if (GetParam() == WeightingScheme::kKendall) {
    EXPECT_EQ(model.uncertainty().names(), loaded.uncertainty().names());
  }
  model.save(dir.file("again.ckpt"));
  loaded.save(dir.file("reloaded.ckpt"));
  EXPECT_EQ(testing::read_file(dir.file("again.ckpt")), testing::read_file(dir.file("reloaded.ckpt")));
}

INSTANTIATE_TEST_SUITE_P(Schemes, CheckpointTest,
                         ::testing::Values(WeightingScheme::kPseudoUniform, WeightingScheme::kKendall));

TEST(Checkpoint, HeaderLayout) {
  TempDir dir("ckpt");
  Checkpoint c{"{\"x\":1}", {{"w", Tensor::from({2}, {1.5, -2.0})}}};
  save_checkpoint(dir.file("c.ckpt"), c);
  const std::string bytes = testing::read_file(dir.file("c.ckpt"));
  ASSERT_GE(bytes.size(), 20u);
  EXPECT_EQ(bytes.substr(0, 8), "GMTLCKPT");
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 8, 4);
  EXPECT_EQ(version, kCheckpointVersion);
  double last = 0.0;
  std::memcpy(&last, bytes.data() + bytes.size() - 8, 8);
  EXPECT_EQ(last, -2.0);
  const Checkpoint back = load_checkpoint(dir.file("c.ckpt"));
  EXPECT_EQ(back.meta_json, c.meta_json);
  ASSERT_EQ(back.tensors.size(), 1u);
  EXPECT_EQ(back.tensors[0].name, "w");
}

TEST(Checkpoint, LoadErrors) {
  TempDir dir("ckpt");
  EXPECT_EQ(code_of([&] { load_checkpoint(dir.file("absent.ckpt")); }), ErrorCode::kNotFound);
  {
    std::ofstream(dir.file("junk.ckpt")) << "definitely not a checkpoint";
  }
  EXPECT_EQ(code_of([&] { load_checkpoint(dir.file("junk.ckpt")); }), ErrorCode::kFormat);

  save_checkpoint(dir.file("v.ckpt"), Checkpoint{"{}", {{"w", Tensor::from({1}, {1.0})}}});
  std::string bytes = testing::read_file(dir.file("v.ckpt"));
  const std::uint32_t future = kCheckpointVersion + 1;
  std::memcpy(bytes.data() + 8, &future, 4);
  std::ofstream(dir.file("future.ckpt"), std::ios::binary) << bytes;
  EXPECT_EQ(code_of([&] { load_checkpoint(dir.file("future.ckpt")); }), ErrorCode::kSchemaVersion);

  const std::string good = testing::read_file(dir.file("v.ckpt"));
  std::ofstream(dir.file("short.ckpt"), std::ios::binary) << good.substr(0, good.size() - 3);
  EXPECT_EQ(code_of([&] { load_checkpoint(dir.file("short.ckpt")); }), ErrorCode::kFormat);
}

}  // namespace
}  // namespace gmtl
