// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "gbh/model/checkpoint.hpp"

namespace gbh::model {
namespace {

namespace fs = std::filesystem;

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("gbh_ckpt_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

Tensor<float> random_input(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(0, 1);
  Tensor<float> t(Shape{1, 3, 64, 64});
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

std::vector<char> bytes_of(const std::string& p) { return read_file_bytes(p); }

void write_bytes(const std::string& p, const std::vector<char>& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(b.data(), static_cast<std::streamsize>(b.size()));
}

TEST_F(CheckpointTest, SaveLoadSaveIsByteIdentical) {
  Model<float> m(ModelVariant::tiny("gbh", 64), 3);
  // make BN running stats non-trivial
  m.set_training(true);
  (void)m.forward(random_input(1));
  m.set_training(false);
  save_checkpoint(m, path("a.gbhw"), 7);
  auto ck = load_checkpoint(path("a.gbhw"));
  EXPECT_EQ(ck.epoch, 7u);
  save_checkpoint(*ck.model, path("b.gbhw"), 7);
  EXPECT_EQ(bytes_of(path("a.gbhw")), bytes_of(path("b.gbhw")));
}

TEST_F(CheckpointTest, ForwardOutputsBitIdenticalAfterLoad) {
  for (auto name : kVariantNames) {
    Model<float> m(ModelVariant::tiny(name, 64), 4);
    save_checkpoint(m, path("m.gbhw"));
    auto ck = load_checkpoint(path("m.gbhw"), std::string(name));
    auto x = random_input(5);
    auto a = m.forward(x);
    auto b = ck.model->forward(x);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].values(), b[i].values()) << name;
  }
}

TEST_F(CheckpointTest, AnchorsAndExtrasRoundTrip) {
  auto v = ModelVariant::tiny("yolov5s", 64);
  v.anchors = {{{3, 4}, {5, 6}, {7, 8}}, {{9, 10}, {11, 12}, {13, 14}}, {{15, 16}, {17, 18}, {19, 20}}};
  Model<float> m(v, 1);
  save_checkpoint(m, path("x.gbhw"), 2, {RawTensor{"adam.step", {1}, {42}}});
  auto ck = load_checkpoint(path("x.gbhw"));
  EXPECT_EQ(ck.model->anchors()[2][1].w, 17);
  ASSERT_TRUE(ck.extras.count("adam.step"));
  EXPECT_EQ(ck.extras.at("adam.step").values[0], 42);
}

TEST_F(CheckpointTest, LayoutHeader) {
  Model<float> m(ModelVariant::tiny("gbh", 64));
  save_checkpoint(m, path("h.gbhw"));
  auto b = bytes_of(path("h.gbhw"));
  ASSERT_GE(b.size(), 12u);
  EXPECT_EQ(std::string(b.data(), 4), "GBHW");
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[5], 0);
  const auto tensors = decode_checkpoint(b, "h");
  const std::uint32_t count = static_cast<unsigned char>(b[8]) | static_cast<unsigned char>(b[9]) << 8 |
                              static_cast<unsigned char>(b[10]) << 16 | static_cast<unsigned char>(b[11]) << 24;
  // The header count includes the trailing checksum tensor.
  EXPECT_EQ(count, tensors.size() + 1);
  const std::string tail = "meta.crc32";
  EXPECT_EQ(std::string(b.end() - 4 - 4 - 1 - 1 - static_cast<long>(tail.size()), b.end() - 10), tail);
}

TEST_F(CheckpointTest, TamperedMagicRejected) {
  Model<float> m(ModelVariant::tiny("gbh", 64));
  save_checkpoint(m, path("t.gbhw"));
  auto b = bytes_of(path("t.gbhw"));
  b[0] = 'X';
  write_bytes(path("t.gbhw"), b);
  EXPECT_THROW(load_checkpoint(path("t.gbhw")), CheckpointError);
}

TEST_F(CheckpointTest, WrongVersionRejected) {
  Model<float> m(ModelVariant::tiny("gbh", 64));
  save_checkpoint(m, path("v.gbhw"));
  auto b = bytes_of(path("v.gbhw"));
  b[4] = 2;
  write_bytes(path("v.gbhw"), b);
  EXPECT_THROW(load_checkpoint(path("v.gbhw")), CheckpointError);
}

TEST_F(CheckpointTest, TruncationRejectedAtEveryCut) {
  Model<float> m(ModelVariant::tiny("yolov5s", 64));
  save_checkpoint(m, path("c.gbhw"));
  const auto b = bytes_of(path("c.gbhw"));
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{11}, std::size_t{20}, b.size() / 2, b.size() - 1}) {
    write_bytes(path("cut.gbhw"), std::vector<char>(b.begin(), b.begin() + static_cast<long>(cut)));
    EXPECT_THROW(load_checkpoint(path("cut.gbhw")), CheckpointError) << cut;
  }
  auto extra = b;
  extra.push_back(0);
  write_bytes(path("cut.gbhw"), extra);
  EXPECT_THROW(load_checkpoint(path("cut.gbhw")), CheckpointError);
}

TEST_F(CheckpointTest, FlippedPayloadBitRejected) {
  Model<float> m(ModelVariant::tiny("gbh", 64));
  save_checkpoint(m, path("f.gbhw"));
  const auto b = bytes_of(path("f.gbhw"));
  for (std::size_t at : {std::size_t{12}, b.size() / 3, b.size() / 2, b.size() - 5, b.size() - 1}) {
    auto c = b;
    c[at] ^= 0x01;
    write_bytes(path("flip.gbhw"), c);
    EXPECT_THROW(load_checkpoint(path("flip.gbhw")), CheckpointError) << at;
  }
}

TEST_F(CheckpointTest, UnknownTensorRejected) {
  Model<float> m(ModelVariant::tiny("gbh", 64));
  auto tensors = checkpoint_tensors(m, 0);
  tensors.push_back({"model.99.bogus", {1}, {0}});
  write_bytes(path("u.gbhw"), encode_checkpoint(tensors));
  EXPECT_THROW(load_checkpoint(path("u.gbhw")), CheckpointError);
}

TEST_F(CheckpointTest, ShapeMismatchRejected) {
  Model<float> m(ModelVariant::tiny("gbh", 64));
  auto tensors = checkpoint_tensors(m, 0);
  for (auto& t : tensors) {
    if (t.name.rfind("model.", 0) == 0) {
      t.shape.push_back(1);
      break;
    }
  }
  write_bytes(path("s.gbhw"), encode_checkpoint(tensors));
  EXPECT_THROW(load_checkpoint(path("s.gbhw")), CheckpointError);
}

TEST_F(CheckpointTest, VariantMismatchRejected) {
  Model<float> m(ModelVariant::tiny("yolov5-2", 64));
  save_checkpoint(m, path("w.gbhw"));
  EXPECT_THROW(load_checkpoint(path("w.gbhw"), "gbh"), CheckpointError);
  EXPECT_NO_THROW(load_checkpoint(path("w.gbhw"), "yolov5-2"));
}

TEST_F(CheckpointTest, MissingFileRejected) {
  EXPECT_THROW(load_checkpoint(path("nope.gbhw")), CheckpointError);
}

}  // namespace
}  // namespace gbh::model
