#include <gtest/gtest.h>

#include <random>

#include "raap/correspondence.hpp"
#include "raap/errors.hpp"

namespace raap {
namespace {

FeatureImage random_image(int h, int w, int c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  FeatureImage img(h, w, c);
  for (Eigen::Index i = 0; i < img.pixels.size(); ++i) img.pixels.data()[i] = dist(rng);
  return img;
}

// Exhaustive scan with an explicit ordering key.
Eigen::Vector2i correspondence_oracle(const FeatureImage& ref, const Eigen::Vector2i& c, const FeatureImage& q) {
  Eigen::RowVectorXd f = Eigen::RowVectorXd::Zero(ref.channels());
  int n = 0;
  for (int y = c.y() - 1; y <= c.y() + 1; ++y) {
    for (int x = c.x() - 1; x <= c.x() + 1; ++x) {
      if (ref.contains(x, y)) {
        f += ref.pixel(x, y);
        ++n;
      }
    }
  }
  f /= n;
  double best = -2.0;
  Eigen::Vector2i arg(-1, -1);
  for (int y = 0; y < q.height; ++y) {
    for (int x = 0; x < q.width; ++x) {
      const double norm = q.pixel(x, y).norm();
      if (norm == 0.0) continue;
      const double s = q.pixel(x, y).dot(f) / (norm * f.norm());
      if (s > best) {
        best = s;
        arg = {x, y};
      }
    }
  }
  return arg;
}

TEST(Correspondence, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const FeatureImage ref = random_image(12, 10, 5, rng);
    const FeatureImage q = random_image(9, 11, 5, rng);
    const Eigen::Vector2i c(trial % 10, (trial * 7) % 12);
    EXPECT_EQ(transfer_contact(ref, c, q), correspondence_oracle(ref, c, q));
  }
}

TEST(Correspondence, UniqueSignatureIsFound) {
  FeatureImage ref(6, 6, 3);
  ref.pixels.col(0).setOnes();
  // The contact feature averages a 3x3 window, so the signature covers one.
  for (int y = 1; y <= 3; ++y)
    for (int x = 3; x <= 5; ++x) ref.pixel(x, y) << 0.0, 1.0, 0.0;
  FeatureImage q(6, 6, 3);
  q.pixels.col(0).setOnes();
  q.pixel(1, 4) << 0.0, 1.0, 0.0;
  EXPECT_EQ(transfer_contact(ref, Eigen::Vector2i(4, 2), q), Eigen::Vector2i(1, 4));
}

TEST(Correspondence, TiesGoToFirstRowMajorPixel) {
  FeatureImage ref(3, 3, 2);
  ref.pixels.col(0).setOnes();
  FeatureImage q(4, 4, 2);
  q.pixels.col(0).setOnes();
  EXPECT_EQ(transfer_contact(ref, Eigen::Vector2i(1, 1), q), Eigen::Vector2i(0, 0));
}

TEST(Correspondence, ZeroQueryPixelsNeverMatch) {
  FeatureImage ref(3, 3, 2);
  ref.pixels.col(0).setOnes();
  FeatureImage q(3, 3, 2);
  q.pixel(2, 2) << -1.0, 0.0;
  EXPECT_EQ(transfer_contact(ref, Eigen::Vector2i(1, 1), q), Eigen::Vector2i(2, 2));
}

TEST(Correspondence, ArgmaxInvariantToPositiveRescaling) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int trial = 0; trial < 20; ++trial) {
    const FeatureImage ref = random_image(8, 8, 4, rng);
    FeatureImage q = random_image(8, 8, 4, rng);
    const Eigen::Vector2i c(3, 4);
    const Eigen::Vector2i before = transfer_contact(ref, c, q);
    FeatureImage ref_scaled = ref;
    ref_scaled.pixels *= scale(rng);
    for (Eigen::Index i = 0; i < q.pixels.rows(); ++i) q.pixels.row(i) *= scale(rng);
    EXPECT_EQ(transfer_contact(ref_scaled, c, q), before);
  }
}

TEST(Correspondence, Errors) {
  FeatureImage ref(3, 3, 2);
  FeatureImage q(3, 3, 2);
  q.pixels.setOnes();
  EXPECT_THROW(transfer_contact(ref, Eigen::Vector2i(1, 1), q), NoCorrespondenceError);
  ref.pixels.setOnes();
  EXPECT_THROW(transfer_contact(ref, Eigen::Vector2i(3, 1), q), ContractError);
  EXPECT_THROW(transfer_contact(ref, Eigen::Vector2i(1, 1), FeatureImage(3, 3, 3)), DimensionError);
}

TEST(Correspondence, ContactPixelFloors) {
  EXPECT_EQ(contact_pixel(Eigen::Vector2d(3.99, 0.0)), Eigen::Vector2i(3, 0));
  EXPECT_EQ(contact_pixel(Eigen::Vector2d(-0.5, 2.5)), Eigen::Vector2i(-1, 2));
}

}  // namespace
}  // namespace raap
