#include <gtest/gtest.h>

#include <opencv2/imgcodecs.hpp>

#include "bayesfusion/dataset_io.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace bfuse;
using testing_support::TempDir;

namespace {

TEST(LoadGrayscale, PgmUnitScale) {
  TempDir dir("load");
  testing_support::write_pgm(dir / "a.pgm", 2, 2, {0, 255, 128, 64});
  const ImagePlane p = load_grayscale(dir / "a.pgm");
  EXPECT_EQ(p.height(), 2u);
  EXPECT_EQ(p(0, 0), 0.0);
  EXPECT_EQ(p(0, 1), 1.0);
  EXPECT_NEAR(p(1, 0), 0.502, 5e-4);
  EXPECT_NEAR(p(1, 1), 0.251, 5e-4);
  EXPECT_EQ(p(1, 0), 128.0 / 255.0);

  const ImagePlane b = load_grayscale(dir / "a.pgm", Scale::byte);
  EXPECT_EQ(b(1, 0), 128.0);
}

TEST(LoadGrayscale, RgbUsesLuminanceWeights) {
  TempDir dir("rgb");
  cv::Mat m(2, 2, CV_8UC3, cv::Scalar(0, 0, 0));
  m.at<cv::Vec3b>(0, 0) = {0, 0, 255};  // BGR: pure red
  m.at<cv::Vec3b>(0, 1) = {255, 0, 0};  // pure blue
  m.at<cv::Vec3b>(1, 0) = {0, 255, 0};  // pure green
  m.at<cv::Vec3b>(1, 1) = {90, 90, 90};
  ASSERT_TRUE(cv::imwrite((dir / "c.png").string(), m));
  const ImagePlane p = load_grayscale(dir / "c.png");
  EXPECT_NEAR(p(0, 0), 0.299, 1e-12);
  EXPECT_NEAR(p(0, 1), 0.114, 1e-12);
  EXPECT_NEAR(p(1, 0), 0.587, 1e-12);
  EXPECT_EQ(p(1, 1), 90.0 / 255.0);

  ASSERT_TRUE(cv::imwrite((dir / "c.bmp").string(), m));
  EXPECT_EQ(load_grayscale(dir / "c.bmp"), p);
}

TEST(LoadGrayscale, SixteenBit) {
  TempDir dir("16");
  cv::Mat m(2, 3, CV_16UC1, cv::Scalar(0));
  m.at<std::uint16_t>(0, 1) = 65535;
  m.at<std::uint16_t>(1, 2) = 32768;
  ASSERT_TRUE(cv::imwrite((dir / "d.png").string(), m));
  const ImagePlane p = load_grayscale(dir / "d.png");
  EXPECT_EQ(p(0, 1), 1.0);
  EXPECT_EQ(p(1, 2), 32768.0 / 65535.0);
}

TEST(LoadGrayscale, Errors) {
  TempDir dir("err");
  try {
    load_grayscale(dir / "missing.png");
    FAIL() << "expected io_error";
  } catch (const io_error& e) {
    EXPECT_NE(std::string(e.what()).find("missing.png"), std::string::npos);
  }
  testing_support::write_bytes(dir / "junk.png", "definitely not a png");
  EXPECT_THROW(load_grayscale(dir / "junk.png"), io_error);

  cv::Mat f(3, 3, CV_32FC1, cv::Scalar(0.5));
  ASSERT_TRUE(cv::imwrite((dir / "f.tiff").string(), f));
  EXPECT_THROW(load_grayscale(dir / "f.tiff"), format_error);
}

TEST(SaveGrayscale, RoundTripIsExactOnGrid) {
  TempDir dir("save");
  std::mt19937_64 rng(40);
  const ImagePlane p = testing_support::random_grid_plane(rng, 9, 11);
  for (const char* name : {"g.png", "g.pgm", "g.bmp"}) {
    save_grayscale(p, dir / name);
    EXPECT_EQ(load_grayscale(dir / name), p) << name;
  }
}

TEST(SaveGrayscale, RoundTripErrorBound) {
  TempDir dir("bound");
  std::mt19937_64 rng(41);
  const ImagePlane p = oracle::random_plane(rng, 13, 7);
  save_grayscale(p, dir / "r.png");
  EXPECT_LE(oracle::max_abs_diff(load_grayscale(dir / "r.png"), p), 1.0 / (2 * 255) + 1e-15);
}

TEST(SaveGrayscale, HalfRoundsUp) {
  TempDir dir("half");
  save_grayscale(ImagePlane(2, 2, 0.5), dir / "h.pgm");
  const cv::Mat m = cv::imread((dir / "h.pgm").string(), cv::IMREAD_UNCHANGED);
  EXPECT_EQ(m.at<std::uint8_t>(0, 0), 128);
}

TEST(SaveGrayscale, Errors) {
  TempDir dir("saveerr");
  ImagePlane p(2, 2, 0.5);
  p(0, 0) = 1.2;
  EXPECT_THROW(save_grayscale(p, dir / "x.png"), invalid_input);
  EXPECT_FALSE(fs::exists(dir / "x.png"));
  EXPECT_THROW(save_grayscale(ImagePlane(2, 2), dir / "no" / "such" / "dir.png"), io_error);
}

class Discover : public ::testing::Test {
 protected:
  TempDir dir{"discover"};
  std::mt19937_64 rng{42};

  void put(const fs::path& p, std::size_t h = 4, std::size_t w = 5) {
    fs::create_directories(p.parent_path());
    save_grayscale(testing_support::random_grid_plane(rng, h, w), p);
  }
};

TEST_F(Discover, FlatLayoutReportsOrphans) {
  put(dir / "a_ir.png");
  put(dir / "a_vis.png");
  put(dir / "b_ir.png");
  testing_support::write_bytes(dir / "notes.txt", "x");
  const DiscoveryResult r = discover_pairs(dir.path(), Layout::flat);
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0].id, "a");
  EXPECT_EQ(r.pairs[0].ir_path, dir / "a_ir.png");
  EXPECT_EQ(r.pairs[0].vis_path, dir / "a_vis.png");
  ASSERT_EQ(r.issues.size(), 1u);
  EXPECT_EQ(r.issues[0].id, "b");
  EXPECT_EQ(r.issues[0].kind, PairIssue::Kind::orphan);
}

TEST_F(Discover, EmptyDirectoryFails) {
  try {
    discover_pairs(dir.path(), Layout::flat);
    FAIL() << "expected io_error";
  } catch (const io_error& e) {
    EXPECT_NE(std::string(e.what()).find("no pairs found"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("_ir"), std::string::npos);
  }
  EXPECT_THROW(discover_pairs(dir / "nope", Layout::flat), io_error);
}

TEST_F(Discover, NirLayout) {
  put(dir / "0001_nir.png");
  put(dir / "0001_rgb.png");
  const DiscoveryResult r = discover_pairs(dir.path(), Layout::nir);
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0].id, "0001");
  EXPECT_TRUE(r.issues.empty());
}

TEST_F(Discover, TnoSiblingDirectories) {
  put(dir / "IR" / "scene2.png");
  put(dir / "VIS" / "scene2.png");
  put(dir / "IR" / "scene1.bmp");
  put(dir / "VIS" / "scene1.bmp");
  const DiscoveryResult r = discover_pairs(dir.path(), Layout::tno);
  ASSERT_EQ(r.pairs.size(), 2u);
  EXPECT_EQ(r.pairs[0].id, "scene1");
  EXPECT_EQ(r.pairs[1].id, "scene2");
}

TEST_F(Discover, TnoSceneDirectories) {
  put(dir / "Marne_04" / "IR_marne_04.bmp");
  put(dir / "Marne_04" / "VIS_marne_04.bmp");
  put(dir / "Kaptein" / "sub" / "IR_k.png");
  put(dir / "Kaptein" / "sub" / "VIS_k.png");
  put(dir / "Lonely" / "IR_l.png");
  const DiscoveryResult r = discover_pairs(dir.path(), Layout::tno);
  ASSERT_EQ(r.pairs.size(), 2u);
  EXPECT_EQ(r.pairs[0].id, "Kaptein_sub");
  EXPECT_EQ(r.pairs[1].id, "Marne_04");
  ASSERT_EQ(r.issues.size(), 1u);
  EXPECT_EQ(r.issues[0].id, "Lonely");
}

TEST_F(Discover, DimensionMismatchAndCorruptAreRejectedNotDropped) {
  put(dir / "a_ir.png", 4, 5);
  put(dir / "a_vis.png", 4, 6);
  put(dir / "b_ir.png");
  testing_support::write_bytes(dir / "b_vis.png", "garbage");
  put(dir / "c_ir.png");
  put(dir / "c_vis.png");
  const DiscoveryResult r = discover_pairs(dir.path(), Layout::flat);
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0].id, "c");
  ASSERT_EQ(r.issues.size(), 2u);
  EXPECT_EQ(r.issues[0].id, "a");
  EXPECT_EQ(r.issues[0].kind, PairIssue::Kind::rejected);
  EXPECT_NE(r.issues[0].message.find("dimension"), std::string::npos);
  EXPECT_EQ(r.issues[1].id, "b");
  EXPECT_EQ(r.issues[1].kind, PairIssue::Kind::rejected);
}

TEST_F(Discover, OutputIsSortedAndRepeatable) {
  for (const char* id : {"zeta", "alpha", "mid", "beta"}) {
    put(dir / (std::string(id) + "_ir.png"));
    put(dir / (std::string(id) + "_vis.png"));
  }
  const DiscoveryResult a = discover_pairs(dir.path(), Layout::flat);
  const DiscoveryResult b = discover_pairs(dir.path(), Layout::flat);
  ASSERT_EQ(a.pairs.size(), 4u);
  for (std::size_t k = 0; k < a.pairs.size(); ++k) {
    EXPECT_EQ(a.pairs[k].id, b.pairs[k].id);
    if (k) {
      EXPECT_LT(a.pairs[k - 1].id, a.pairs[k].id);
    }
  }
}

TEST_F(Discover, IdListFilter) {
  for (const char* id : {"a", "b", "c"}) {
    put(dir / (std::string(id) + "_ir.png"));
    put(dir / (std::string(id) + "_vis.png"));
  }
  testing_support::write_bytes(dir / "ids.txt", "# subset\nc\n\n a \nzz\n");
  const auto ids = read_id_list(dir / "ids.txt");
  EXPECT_EQ(ids, (std::vector<std::string>{"c", "a", "zz"}));
  std::vector<std::string> missing;
  const DiscoveryResult r = filter_by_ids(discover_pairs(dir.path(), Layout::flat), ids, &missing);
  ASSERT_EQ(r.pairs.size(), 2u);
  EXPECT_EQ(r.pairs[0].id, "a");
  EXPECT_EQ(r.pairs[1].id, "c");
  EXPECT_EQ(missing, std::vector<std::string>{"zz"});
}

}  // namespace
