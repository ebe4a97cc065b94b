#include "trajvis/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "trajvis/geometry.hpp"
#include "trajvis/trajectory.hpp"
#include "trajvis/types.hpp"

using namespace trajvis;

namespace {

std::vector<FrameRecord> straight_line(int frames, double step) {
  std::vector<FrameRecord> out;
  for (int t = 0; t < frames; ++t) {
    FrameRecord rec;
    rec.frame = t;
    for (int o = 0; o <= t; ++o)
      rec.points.push_back({o, {100.0 + step * o, 200.0 + step * o}});
    out.push_back(rec);
  }
  return out;
}

std::vector<FrameRecord> shifted(std::vector<FrameRecord> records, double dx, double dy) {
  for (FrameRecord& rec : records)
    for (TrajPoint& tp : rec.points) {
      tp.p.x += dx;
      tp.p.y += dy;
    }
  return records;
}

}  // namespace

TEST(Mppte, IdenticalTrajectoriesZero) {
  const auto ref = straight_line(10, 2.0);
  EXPECT_DOUBLE_EQ(mppte(ref, ref, 1280, 720), 0.0);
}

TEST(Mppte, UniformShiftThreeFourFive) {
  const auto ref = straight_line(10, 2.0);
  const auto pred = shifted(ref, 3.0, 4.0);
  EXPECT_DOUBLE_EQ(mppte(pred, ref, 1280, 720), 5.0);
}

TEST(Mppte, FrameCountMismatchThrows) {
  const auto ref = straight_line(10, 2.0);
  const auto pred = straight_line(9, 2.0);
  EXPECT_THROW(mppte(pred, ref, 1280, 720), FrameCountMismatch);
}

TEST(Mppte, ClippedPairDiagonalPenalty) {
  auto ref = straight_line(4, 1.0);
  auto pred = ref;
  // Drop origin 0 from every predicted frame: it is "clipped" on the
  // prediction side while the reference still sees it.
  for (FrameRecord& rec : pred)
    rec.points.erase(rec.points.begin());

  const double diag = std::hypot(1280.0, 720.0);
  // Each frame: one missing pair (penalty diag) averaged with the matched
  // exact pairs (0), then averaged over frames.
  double expect = 0.0;
  for (int t = 0; t < 4; ++t) expect += diag / (t + 1);
  expect /= 4.0;
  EXPECT_NEAR(mppte(pred, ref, 1280, 720, ClippedPairRule::FrameDiagonalPenalty),
              expect, 1e-9);
}

TEST(Mppte, ClippedPairSkipRule) {
  auto ref = straight_line(4, 1.0);
  auto pred = ref;
  for (FrameRecord& rec : pred) rec.points.erase(rec.points.begin());
  EXPECT_DOUBLE_EQ(mppte(pred, ref, 1280, 720, ClippedPairRule::SkipPair), 0.0);
}

TEST(Mppte, TranslationInvariantWhenBothShifted) {
  const auto ref = straight_line(8, 3.0);
  const auto pred = shifted(ref, 1.0, -2.0);
  const double base = mppte(pred, ref, 1280, 720);
  const double moved = mppte(shifted(pred, 50.0, 60.0), shifted(ref, 50.0, 60.0), 1280, 720);
  EXPECT_NEAR(base, moved, 1e-9);
}

TEST(Dtw, IdenticalZero) {
  const std::vector<Point2> a = {{0, 0}, {1, 0}, {2, 0}};
  EXPECT_DOUBLE_EQ(dtw(a, a), 0.0);
}

TEST(Dtw, HandEnumeratedExample) {
  const std::vector<Point2> a = {{0, 0}, {1, 0}};
  const std::vector<Point2> b = {{0, 0}, {1, 0}, {2, 0}};
  EXPECT_DOUBLE_EQ(dtw(a, b), 1.0);
}

TEST(Dtw, Symmetry) {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<Point2> a, b;
    const int na = 2 + static_cast<int>(rng.next_below(10));
    const int nb = 2 + static_cast<int>(rng.next_below(10));
    for (int i = 0; i < na; ++i) a.push_back({rng.uniform(0, 100), rng.uniform(0, 100)});
    for (int i = 0; i < nb; ++i) b.push_back({rng.uniform(0, 100), rng.uniform(0, 100)});
    EXPECT_DOUBLE_EQ(dtw(a, b), dtw(b, a));
  }
}

TEST(Dtw, EmptyThrows) {
  const std::vector<Point2> a = {{0, 0}};
  EXPECT_THROW(dtw({}, a), EmptyTrajectory);
  EXPECT_THROW(dtw(a, {}), EmptyTrajectory);
}

TEST(Dtw, NonNegativeAndZeroOnSelf) {
  Rng rng(9);
  std::vector<Point2> a;
  for (int i = 0; i < 15; ++i) a.push_back({rng.uniform(0, 500), rng.uniform(0, 500)});
  EXPECT_DOUBLE_EQ(dtw(a, a), 0.0);
  std::vector<Point2> b = a;
  b[7].x += 4.0;
  EXPECT_GT(dtw(a, b), 0.0);
}

TEST(MeanPairwiseDtw, SkipsEmptyFrames) {
  auto ref = straight_line(5, 2.0);
  auto pred = ref;
  pred[2].points.clear();  // empty side contributes zero, not an error
  const double v = mean_pairwise_dtw(pred, ref);
  EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(HomographyMse, IdenticalZero) {
  const Homography h({1.1, 0, 3, 0, 0.9, -2, 0, 0, 1});
  EXPECT_DOUBLE_EQ(homography_mse(h, h), 0.0);
}

TEST(HomographyMse, SingleCoefficientShift) {
  const Homography a = Homography::identity();
  const Homography b = Homography::translation(3.0, 0.0);
  EXPECT_DOUBLE_EQ(homography_mse(a, b), 1.0);
}

TEST(SuccessAuc, IdenticalBoxes) {
  std::vector<BBox> boxes(10, BBox{10, 10, 50, 50});
  const SuccessResult r = success_auc(boxes, boxes);
  EXPECT_DOUBLE_EQ(r.auc, 100.0);
  // Strict thresholds: IoU 1.0 beats every threshold below 1.0.
  EXPECT_DOUBLE_EQ(r.curve[0], 1.0);
  EXPECT_DOUBLE_EQ(r.curve[19], 1.0);
}

TEST(SuccessAuc, DisjointBoxesZero) {
  std::vector<BBox> pred(6, BBox{0, 0, 10, 10});
  std::vector<BBox> gt(6, BBox{500, 500, 10, 10});
  const SuccessResult r = success_auc(pred, gt);
  EXPECT_DOUBLE_EQ(r.auc, 0.0);
  for (double v : r.curve) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(SuccessAuc, HalfShiftOneThird) {
  std::vector<BBox> gt(8, BBox{100, 100, 60, 60});
  std::vector<BBox> pred(8, BBox{130, 100, 60, 60});  // shifted half a width
  const SuccessResult r = success_auc(pred, gt);
  EXPECT_NEAR(r.auc, 100.0 / 3.0, 0.1);
}

TEST(SuccessAuc, LengthMismatchThrows) {
  std::vector<BBox> a(3, BBox{0, 0, 10, 10});
  std::vector<BBox> b(4, BBox{0, 0, 10, 10});
  EXPECT_THROW(success_auc(a, b), LengthMismatch);
}

TEST(Timing, DeltaTPositive) {
  // 30 frames at 50 ms each = 1.5 s total against a 1.0 s clip.
  std::vector<double> samples(30, 50.0);
  const TimingSummary t = timing(samples, 1.0);
  EXPECT_DOUBLE_EQ(t.mean_ms, 50.0);
  EXPECT_DOUBLE_EQ(t.fps, 20.0);
  EXPECT_DOUBLE_EQ(t.delta_t, 0.5);
}

TEST(Timing, FasterThanRealTimeClampsToZero) {
  std::vector<double> samples(30, 10.0);  // 0.3 s total
  const TimingSummary t = timing(samples, 1.0);
  EXPECT_DOUBLE_EQ(t.delta_t, 0.0);
}

TEST(Timing, EmptyThrows) {
  EXPECT_THROW(timing({}, 1.0), std::invalid_argument);
}

TEST(Aggregate, MeansAcrossClips) {
  ClipScores a, b;
  a.clip_id = "a";
  a.mppte = 2.0;
  a.dtw = 10.0;
  a.homography_mse = 0.5;
  a.auc = 80.0;
  a.mean_ms = 40.0;
  a.delta_t = 1.0;
  b.clip_id = "b";
  b.mppte = 4.0;
  b.dtw = 30.0;
  b.homography_mse = 1.5;
  b.auc = 60.0;
  b.mean_ms = 60.0;
  b.delta_t = 0.0;
  const EvalReport rep = aggregate_clips({a, b});
  EXPECT_DOUBLE_EQ(rep.mppte, 3.0);
  EXPECT_DOUBLE_EQ(rep.dtw, 20.0);
  EXPECT_DOUBLE_EQ(rep.homography_mse, 1.0);
  EXPECT_DOUBLE_EQ(rep.auc, 70.0);
  EXPECT_DOUBLE_EQ(rep.mean_ms, 50.0);
  EXPECT_DOUBLE_EQ(rep.fps, 20.0);  // recomputed from aggregated ms
  EXPECT_DOUBLE_EQ(rep.delta_t, 0.5);
  ASSERT_EQ(rep.clips.size(), 2u);
}
