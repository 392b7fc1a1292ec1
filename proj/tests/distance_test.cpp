#include "efflex/distance.hpp"
#include "efflex/errors.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace efflex;
using namespace efflex::testing;

namespace {

using Pts = std::vector<Point>;

constexpr DistanceKind kAllKinds[] = {DistanceKind::DTW, DistanceKind::Frechet, DistanceKind::Hausdorff,
                                      DistanceKind::Euclidean};

Dataset random_dataset(std::uint64_t seed, std::size_t n, std::size_t max_len = 30) {
  Rng rng(seed);
  Dataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    const auto len = 2 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(max_len - 1));
    ds.trajectories.push_back({static_cast<std::uint32_t>(i), random_points(rng, len, 500.0)});
  }
  return ds;
}

} // namespace

TEST(Dtw, Identity) {
  Rng rng(1);
  const auto t = random_points(rng, 17);
  EXPECT_EQ(dtw(t, t), 0.0);
}

TEST(Dtw, SinglePair) { EXPECT_DOUBLE_EQ(dtw(Pts{{0, 0}}, Pts{{3, 4}}), 5.0); }

TEST(Dtw, SmallHandCase) {
  const Pts a{{0, 0}, {1, 0}};
  const Pts b{{0, 0}, {1, 0}, {2, 0}};
  EXPECT_DOUBLE_EQ(dtw_oracle(a, b), 1.0);
  EXPECT_DOUBLE_EQ(dtw(a, b), 1.0);
}

TEST(Frechet, Identity) {
  Rng rng(2);
  const auto t = random_points(rng, 9);
  EXPECT_EQ(discrete_frechet(t, t), 0.0);
}

TEST(Frechet, ParallelSegments) {
  const Pts a{{0, 0}, {1, 0}};
  const Pts b{{0, 1}, {1, 1}};
  EXPECT_DOUBLE_EQ(frechet_oracle(a, b), 1.0);
  EXPECT_DOUBLE_EQ(discrete_frechet(a, b), 1.0);
}

TEST(Hausdorff, Basics) {
  Rng rng(3);
  const auto t = random_points(rng, 9);
  EXPECT_EQ(hausdorff(t, t), 0.0);
  EXPECT_DOUBLE_EQ(hausdorff(Pts{{0, 0}}, Pts{{3, 4}}), 5.0);
}

TEST(Kernels, EmptyInputIsDomainError) {
  const Pts e;
  const Pts one{{0, 0}};
  EXPECT_THROW(dtw(e, one), DomainError);
  EXPECT_THROW(discrete_frechet(one, e), DomainError);
  EXPECT_THROW(hausdorff(e, e), DomainError);
  EXPECT_THROW(euclidean_aligned(one, one, 4), DomainError);
}

TEST(Kernels, MatchOraclesOnShortRandomPairs) {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const auto la = 1 + static_cast<std::size_t>(rng.uniform() * 8);
    const auto lb = 1 + static_cast<std::size_t>(rng.uniform() * 8);
    const auto a = random_points(rng, la);
    const auto b = random_points(rng, lb);
    EXPECT_NEAR(dtw(a, b), dtw_oracle(a, b), 1e-9);
    EXPECT_NEAR(discrete_frechet(a, b), frechet_oracle(a, b), 1e-9);
    EXPECT_NEAR(hausdorff(a, b), hausdorff_oracle(a, b), 1e-9);
  }
}

TEST(Kernels, Properties) {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_points(rng, 2 + trial % 13);
    const auto b = random_points(rng, 2 + (trial * 7) % 11);
    const Point shift{rng.uniform(-1e4, 1e4), rng.uniform(-1e4, 1e4)};
    Pts as = a, bs = b;
    for (auto& p : as) p.x += shift.x, p.y += shift.y;
    for (auto& p : bs) p.x += shift.x, p.y += shift.y;
    for (auto k : kAllKinds) {
      const double d = distance(k, a, b, 16);
      EXPECT_GE(d, 0.0);
      EXPECT_EQ(d, distance(k, b, a, 16)) << to_string(k);
      EXPECT_NEAR(distance(k, as, bs, 16), d, 1e-9 * std::max(1.0, d)) << to_string(k);
    }
    EXPECT_GE(discrete_frechet(a, b), hausdorff(a, b));
  }
}

TEST(Euclidean, IdenticalAndConstantOffset) {
  Rng rng(5);
  const auto t = random_points(rng, 10);
  EXPECT_EQ(euclidean_aligned(t, t, 16), 0.0);
  for (std::size_t len : {2u, 3u, 7u, 64u})
    EXPECT_NEAR(euclidean_aligned(Pts{{0, 0}, {1, 0}}, Pts{{0, 1}, {1, 1}}, len), 1.0, 1e-12);
}

TEST(Euclidean, CurvedPairByHand) {
  // a: L-shape of length 6 -> (0,0) (2,0) (3,1) (3,3); b: straight -> (0,1) (2,1) (4,1) (6,1).
  // Squared gaps 1 + 1 + 1 + 13 = 16, RMS = sqrt(16 / 4) = 2.
  const Pts a{{0, 0}, {3, 0}, {3, 3}};
  const Pts b{{0, 1}, {6, 1}};
  const auto ra = resample_arc_length(a, 4);
  EXPECT_NEAR(ra[2].x, 3.0, 1e-12);
  EXPECT_NEAR(ra[2].y, 1.0, 1e-12);
  EXPECT_NEAR(euclidean_aligned(a, b, 4), 2.0, 1e-12);
}

TEST(Euclidean, DegenerateInputs) {
  EXPECT_THROW(euclidean_aligned(Pts{{1, 1}, {1, 1}}, Pts{{0, 0}, {1, 0}}, 8), DomainError);
  EXPECT_THROW(euclidean_aligned(Pts{{0, 0}, {1, 0}}, Pts{{0, 0}, {1, 0}}, 1), DomainError);
}

TEST(Pairwise, IdenticalTrajectoriesGiveZeroMatrix) {
  Dataset ds;
  for (std::uint32_t i = 0; i < 3; ++i) ds.trajectories.push_back({i, {{0, 0}, {5, 5}, {9, 1}}});
  for (auto k : kAllKinds) {
    const auto dm = pairwise_matrix(ds, k);
    for (double v : dm.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Pairwise, WorkerCountDoesNotChangeResult) {
  const auto ds = random_dataset(9, 50);
  for (auto k : kAllKinds) {
    const auto one = pairwise_matrix(ds, k, {1, 32});
    const auto eight = pairwise_matrix(ds, k, {8, 32});
    EXPECT_TRUE(one == eight) << to_string(k);
  }
}

TEST(Pairwise, MatchesPerPairKernelCalls) {
  const auto ds = random_dataset(10, 10);
  const auto dm = pairwise_matrix(ds, DistanceKind::DTW, {3});
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(dm(i, i), 0.0);
    for (std::size_t j = 0; j < 10; ++j) {
      EXPECT_EQ(dm(i, j), dm(j, i));
      if (i != j) EXPECT_EQ(dm(i, j), dtw(ds.trajectories[i], ds.trajectories[j]));
    }
  }
}

TEST(Pairwise, ErrorsNameTheOffendingPair) {
  Dataset ds;
  ds.trajectories = {{0, {{0, 0}, {1, 0}}}, {1, {{0, 0}, {1, 1}}}, {2, {{3, 3}, {3, 3}}}};
  try {
    pairwise_matrix(ds, DistanceKind::Euclidean, {2, 8});
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("(0, 2)"), std::string::npos) << e.what();
  }
  Dataset tiny;
  tiny.trajectories = {{0, {{0, 0}}}};
  EXPECT_THROW(pairwise_matrix(tiny, DistanceKind::DTW), DomainError);
}

TEST(DistanceMatrixFile, RoundTripAndCorruption) {
  const auto ds = random_dataset(12, 15);
  const auto dm = pairwise_matrix(ds, DistanceKind::Hausdorff);
  const auto dir = std::filesystem::temp_directory_path() / "efflex_distance_test";
  std::filesystem::create_directories(dir);
  const auto p = dir / "m.eflxdm";
  save_distance_matrix(dm, p);
  EXPECT_TRUE(load_distance_matrix(p) == dm);
  std::filesystem::resize_file(p, std::filesystem::file_size(p) - 8);
  EXPECT_THROW(load_distance_matrix(p), FormatError);
}

TEST(DistanceKindNames, ParseRoundTrip) {
  for (auto k : kAllKinds) EXPECT_EQ(parse_distance_kind(to_string(k)), k);
  EXPECT_EQ(parse_distance_kind("DTW"), DistanceKind::DTW);
  EXPECT_FALSE(parse_distance_kind("edr"));
}
