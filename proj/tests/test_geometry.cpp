#include "trajvis/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "trajvis/types.hpp"

using namespace trajvis;

namespace {

Homography random_mild_homography(Rng& rng) {
  const double angle = rng.uniform(-0.05, 0.05);
  const double scale = rng.uniform(0.95, 1.05);
  const double tx = rng.uniform(-20.0, 20.0);
  const double ty = rng.uniform(-20.0, 20.0);
  const double p1 = rng.uniform(-1e-4, 1e-4);
  const double p2 = rng.uniform(-1e-4, 1e-4);
  const double c = scale * std::cos(angle), s = scale * std::sin(angle);
  return Homography({c, -s, tx, s, c, ty, p1, p2, 1.0});
}

std::vector<Correspondence> exact_matches(const Homography& h, Rng& rng, int n,
                                          double lo = 0.0, double hi = 1000.0) {
  std::vector<Correspondence> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const Point2 src{rng.uniform(lo, hi), rng.uniform(lo, hi)};
    out.push_back({src, apply(h, src), true});
  }
  return out;
}

double max_coeff_error(const Homography& a, const Homography& b) {
  double worst = 0.0;
  for (int i = 0; i < 9; ++i)
    worst = std::max(worst, std::abs(a.coeffs()[i] - b.coeffs()[i]));
  return worst;
}

}  // namespace

TEST(Homography, IdentityApply) {
  const Point2 q = apply(Homography::identity(), {125.0, 290.0});
  EXPECT_DOUBLE_EQ(q.x, 125.0);
  EXPECT_DOUBLE_EQ(q.y, 290.0);
}

TEST(Homography, TranslationApply) {
  const Point2 q = apply(Homography::translation(10.0, -5.0), {0.0, 0.0});
  EXPECT_DOUBLE_EQ(q.x, 10.0);
  EXPECT_DOUBLE_EQ(q.y, -5.0);
}

TEST(Homography, DiagonalScaleApply) {
  const Point2 q = apply(Homography::scaling(2.0, 2.0), {3.0, 4.0});
  EXPECT_DOUBLE_EQ(q.x, 6.0);
  EXPECT_DOUBLE_EQ(q.y, 8.0);
}

TEST(Homography, CanonicalScaleLastCoefficient) {
  const Homography h({2, 0, 0, 0, 2, 0, 0, 0, 2});
  EXPECT_DOUBLE_EQ(h.coeffs()[0], 1.0);
  EXPECT_DOUBLE_EQ(h.coeffs()[8], 1.0);
}

TEST(Homography, CanonicalScaleFrobeniusBranch) {
  // m[8] = 0 forces the unit-Frobenius branch.
  const Homography h({0, -3, 0, 3, 0, 0, 0, 0, 0});
  double fro = 0.0;
  for (double v : h.coeffs()) fro += v * v;
  EXPECT_NEAR(fro, 1.0, 1e-12);
  double largest = 0.0;
  for (double v : h.coeffs())
    if (std::abs(v) > std::abs(largest)) largest = v;
  EXPECT_GT(largest, 0.0);
}

TEST(Homography, PointAtInfinityThrown) {
  // Third row (0, 1, 0): s vanishes on the x-axis.
  const Homography h({1, 0, 0, 0, 1, 0, 0, 1, 0});
  EXPECT_THROW(apply(h, {5.0, 0.0}), PointAtInfinity);
  EXPECT_NO_THROW(apply(h, {5.0, 2.0}));
}

TEST(Homography, InverseRoundTrip) {
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    const Homography h = random_mild_homography(rng);
    const Homography hi = h.inverse();
    for (int k = 0; k < 20; ++k) {
      const Point2 p{rng.uniform(0.0, 1280.0), rng.uniform(0.0, 720.0)};
      const Point2 q = apply(h, apply(hi, p));
      EXPECT_NEAR(q.x, p.x, 1e-6);
      EXPECT_NEAR(q.y, p.y, 1e-6);
    }
  }
}

TEST(Homography, CompositionMatchesSequentialApply) {
  Rng rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    const Homography a = random_mild_homography(rng);
    const Homography b = random_mild_homography(rng);
    const Homography ab = a * b;
    const Point2 p{rng.uniform(0.0, 1000.0), rng.uniform(0.0, 1000.0)};
    const Point2 q1 = apply(ab, p);
    const Point2 q2 = apply(a, apply(b, p));
    EXPECT_NEAR(q1.x, q2.x, 1e-6);
    EXPECT_NEAR(q1.y, q2.y, 1e-6);
  }
}

TEST(Homography, SingularInverseThrows) {
  const Homography h({1, 0, 0, 0, 1, 0, 0, 1, 0});  // det = 0
  EXPECT_THROW(h.inverse(), DegenerateConfiguration);
}

TEST(FitDlt, IdentityOnUnitSquare) {
  const std::vector<Correspondence> m = {
      {{0, 0}, {0, 0}, true},
      {{1, 0}, {1, 0}, true},
      {{1, 1}, {1, 1}, true},
      {{0, 1}, {0, 1}, true},
  };
  const Homography h = fit_dlt(m);
  EXPECT_LT(max_coeff_error(h, Homography::identity()), 1e-9);
}

TEST(FitDlt, RecoversPerspectiveHomography) {
  const Homography truth({1.02, -0.03, 12.0, 0.04, 0.98, -7.0, 1e-4, -2e-4, 1.0});
  Rng rng(3);
  const auto m = exact_matches(truth, rng, 8, 0.0, 500.0);
  const Homography h = fit_dlt(m);
  EXPECT_LT(max_coeff_error(h, truth), 1e-6);
}

TEST(FitDlt, ThreeMatchesDegenerate) {
  const std::vector<Correspondence> m = {
      {{0, 0}, {0, 0}, true},
      {{1, 0}, {1, 0}, true},
      {{1, 1}, {1, 1}, true},
  };
  EXPECT_THROW(fit_dlt(m), DegenerateConfiguration);
}

TEST(FitDlt, CollinearPointsDegenerate) {
  std::vector<Correspondence> m;
  for (int i = 0; i < 8; ++i) {
    const Point2 p{static_cast<double>(i), 2.0 * i + 1.0};
    m.push_back({p, p, true});
  }
  EXPECT_THROW(fit_dlt(m), DegenerateConfiguration);
}

TEST(FitDlt, CoincidentPointsDegenerate) {
  std::vector<Correspondence> m(6, Correspondence{{5, 5}, {5, 5}, true});
  EXPECT_THROW(fit_dlt(m), DegenerateConfiguration);
}

TEST(FitDlt, InvalidMatchesIgnored) {
  const Homography truth = Homography::translation(4.0, -2.0);
  Rng rng(13);
  auto m = exact_matches(truth, rng, 8);
  // Poison two entries but mark them invalid; fit must not use them.
  m.push_back({{1, 1}, {900, -900}, false});
  m.push_back({{2, 2}, {-50, 333}, false});
  const Homography h = fit_dlt(m);
  EXPECT_LT(max_coeff_error(h, truth), 1e-6);
}

TEST(FitDlt, ExactOnRandomHomographies) {
  Rng rng(29);
  for (int rep = 0; rep < 20; ++rep) {
    const Homography truth = random_mild_homography(rng);
    const auto m = exact_matches(truth, rng, 12);
    const Homography h = fit_dlt(m);
    EXPECT_LT(max_coeff_error(h, truth), 1e-6) << "rep " << rep;
  }
}

TEST(FitDlt, TranslationConjugationProperty) {
  Rng rng(31);
  const Homography truth = random_mild_homography(rng);
  const auto m = exact_matches(truth, rng, 10);
  const double ox = 37.5, oy = -12.25;
  std::vector<Correspondence> shifted = m;
  for (auto& c : shifted) {
    c.src.x += ox;
    c.src.y += oy;
    c.dst.x += ox;
    c.dst.y += oy;
  }
  const Homography h = fit_dlt(m);
  const Homography hs = fit_dlt(shifted);
  const Homography t = Homography::translation(ox, oy);
  const Homography expect = t * h * t.inverse();
  for (int k = 0; k < 20; ++k) {
    const Point2 p{rng.uniform(0.0, 1000.0), rng.uniform(0.0, 1000.0)};
    const Point2 a = apply(hs, p);
    const Point2 b = apply(expect, p);
    EXPECT_NEAR(a.x, b.x, 1e-6);
    EXPECT_NEAR(a.y, b.y, 1e-6);
  }
}

TEST(Ransac, AllExactMatches) {
  const Homography truth({1.01, 0.02, 5.0, -0.02, 0.99, 3.0, 2e-5, -1e-5, 1.0});
  Rng rng(17);
  const auto m = exact_matches(truth, rng, 100);
  const RansacResult r = ransac_homography(m, {});
  EXPECT_EQ(r.inlier_count, 100);
  for (bool f : r.inliers) EXPECT_TRUE(f);
  EXPECT_LT(max_coeff_error(r.h, truth), 1e-6);
}

TEST(Ransac, ThirtyPercentOutliersMonteCarlo) {
  int worst_recovered = 100;
  double worst_err = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed * 1000 + 7);
    const Homography truth = random_mild_homography(rng);
    auto m = exact_matches(truth, rng, 100);
    for (int i = 0; i < 70; ++i) {
      m[i].dst.x += rng.normal() * 0.2;
      m[i].dst.y += rng.normal() * 0.2;
    }
    for (int i = 70; i < 100; ++i)
      m[i].dst = {rng.uniform(0.0, 1000.0), rng.uniform(0.0, 1000.0)};

    RansacParams prm;
    prm.inlier_thresh = 1.0;
    prm.seed = seed;
    const RansacResult r = ransac_homography(m, prm);

    int recovered = 0;
    double err = 0.0;
    for (int i = 0; i < 70; ++i) {
      if (r.inliers[i]) ++recovered;
      err += distance(apply(r.h, m[i].src), m[i].dst);
    }
    err /= 70.0;
    worst_recovered = std::min(worst_recovered, recovered);
    worst_err = std::max(worst_err, err);
  }
  EXPECT_GE(worst_recovered, 68);
  EXPECT_LE(worst_err, 0.5);
}

TEST(Ransac, ThreeValidMatchesNoConsensus) {
  std::vector<Correspondence> m = {
      {{0, 0}, {1, 1}, true},
      {{10, 0}, {11, 1}, true},
      {{10, 10}, {11, 11}, true},
      {{0, 10}, {1, 11}, false},
  };
  EXPECT_THROW(ransac_homography(m, {}), NoConsensus);
}

TEST(Ransac, PureNoiseNoConsensus) {
  Rng rng(23);
  std::vector<Correspondence> m;
  for (int i = 0; i < 60; ++i)
    m.push_back({{rng.uniform(0.0, 1000.0), rng.uniform(0.0, 1000.0)},
                 {rng.uniform(0.0, 1000.0), rng.uniform(0.0, 1000.0)},
                 true});
  RansacParams prm;
  prm.inlier_thresh = 0.05;
  prm.max_iters = 200;
  EXPECT_THROW(ransac_homography(m, prm), NoConsensus);
}

TEST(Ransac, DeterministicForFixedSeed) {
  const Homography truth = Homography::translation(3.0, -8.0);
  Rng rng(41);
  auto m = exact_matches(truth, rng, 50);
  for (int i = 40; i < 50; ++i)
    m[i].dst = {rng.uniform(0.0, 1000.0), rng.uniform(0.0, 1000.0)};
  RansacParams prm;
  prm.seed = 99;
  const RansacResult a = ransac_homography(m, prm);
  const RansacResult b = ransac_homography(m, prm);
  EXPECT_EQ(a.inlier_count, b.inlier_count);
  EXPECT_EQ(a.iterations, b.iterations);
  for (int i = 0; i < 9; ++i) EXPECT_EQ(a.h.coeffs()[i], b.h.coeffs()[i]);
}
