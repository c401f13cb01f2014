#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "trajnas/errors.hpp"
#include "trajnas/genome.hpp"

using namespace trajnas;

namespace {

// A space whose every gene is fixed; legal input for genome operations even
// though validate() rejects it as unsearchable.
SearchSpaceSpec singleton_space() {
  SearchSpaceSpec space;
  space.name = "fixed";
  space.cardinalities = {1, 1, 1};
  space.segments = {{SegmentKind::kTrunkDepth, 0, 3}};
  return space;
}

}  // namespace

TEST_CASE("desk space shape") {
  const SearchSpaceSpec space = default_space(SpaceScale::kDesk);
  CHECK(space.name == "desk");
  REQUIRE(space.num_genes() == 21);
  const std::vector<int> expected = {4, 3, 3, 3, 3, 4, 3, 3, 3, 3, 3,
                                     3, 3, 3, 3, 3, 2, 2, 2, 2, 2};
  CHECK(space.cardinalities == expected);
  CHECK(space.segment_genes(SegmentKind::kTrunkDepth) == std::vector<int>{0});
  CHECK(space.segment_genes(SegmentKind::kTrunkBlockType) ==
        std::vector<int>{1, 2, 3, 4});
  CHECK(space.segment_genes(SegmentKind::kTrunkWidth) == std::vector<int>{5});
  CHECK(space.segment_genes(SegmentKind::kHeadDepth) ==
        std::vector<int>{6, 7, 8, 9, 10});
  CHECK(space.segment_genes(SegmentKind::kHeadWidth) ==
        std::vector<int>{11, 12, 13, 14, 15});
  CHECK(space.segment_genes(SegmentKind::kHeadSharedStem) ==
        std::vector<int>{16, 17, 18, 19, 20});
}

TEST_CASE("desk space size matches the closed form") {
  const SearchSpaceSpec space = default_space(SpaceScale::kDesk);
  // 4 * 3^4 * 4 * 3^5 * 3^5 * 2^5, multiplied out by hand.
  REQUIRE(space.exact_size().has_value());
  CHECK(*space.exact_size() == 2448880128ULL);
  // log2: 2 + 4*log2(3) + 2 + 5*log2(3) + 5*log2(3) + 5 = 9 + 14*log2(3).
  const double closed_form = 9.0 + 14.0 * std::log2(3.0);
  CHECK(space.log2_size() == doctest::Approx(closed_form).epsilon(1e-12));
  CHECK(space.log2_size() == doctest::Approx(31.1895).epsilon(1e-4));
  // Cross-check against the exhaustive product.
  CHECK(std::exp2(space.log2_size()) ==
        doctest::Approx(2448880128.0).epsilon(1e-9));
}

TEST_CASE("paper space is 300 binary genes, size only") {
  const SearchSpaceSpec space = default_space(SpaceScale::kPaper);
  CHECK(space.name == "paper");
  CHECK(space.num_genes() == 300);
  for (int c : space.cardinalities) CHECK(c == 2);
  CHECK(space.log2_size() == 300.0);
  // 2^300 overflows 64-bit exact counting.
  CHECK(!space.exact_size().has_value());
}

TEST_CASE("enumerable test space stays under brute-force scale") {
  const SearchSpaceSpec space = enumerable_test_space();
  CHECK(space.name == "test18");
  CHECK(space.num_genes() == 18);
  REQUIRE(space.exact_size().has_value());
  CHECK(*space.exact_size() == 196608ULL);  // 3 * 2^16
}

TEST_CASE("all-cardinality-1 space has log2 size zero") {
  CHECK(singleton_space().log2_size() == 0.0);
  REQUIRE(singleton_space().exact_size().has_value());
  CHECK(*singleton_space().exact_size() == 1ULL);
}

TEST_CASE("validate rejects malformed spaces") {
  SearchSpaceSpec space = default_space(SpaceScale::kDesk);
  CHECK_NOTHROW(space.validate());

  CHECK_THROWS_AS(singleton_space().validate(), InvalidParams);

  SearchSpaceSpec unnamed = space;
  unnamed.name.clear();
  CHECK_THROWS_AS(unnamed.validate(), InvalidParams);

  SearchSpaceSpec zero_card = space;
  zero_card.cardinalities[3] = 0;
  CHECK_THROWS_AS(zero_card.validate(), InvalidParams);

  SearchSpaceSpec gap = space;
  gap.segments[1].end = 4;  // gene 4 uncovered
  CHECK_THROWS_AS(gap.validate(), InvalidParams);

  SearchSpaceSpec overlap = space;
  overlap.segments[1].begin = 0;  // gene 0 covered twice
  CHECK_THROWS_AS(overlap.validate(), InvalidParams);
}

TEST_CASE("segment kind names round-trip") {
  for (int i = 0; i < 6; ++i) {
    const SegmentKind kind = static_cast<SegmentKind>(i);
    const auto back = segment_kind_from_name(segment_kind_name(kind));
    REQUIRE(back.has_value());
    CHECK(*back == kind);
  }
  CHECK(!segment_kind_from_name("no_such_segment").has_value());
}

TEST_CASE("random_genome is deterministic in the seed") {
  const SearchSpaceSpec space = default_space(SpaceScale::kDesk);
  const Genome a = random_genome(space, 7);
  const Genome b = random_genome(space, 7);
  CHECK(a == b);
  CHECK(GenomeHash{}(a) == GenomeHash{}(b));
}

TEST_CASE("random_genome regression fixtures") {
  const SearchSpaceSpec space = default_space(SpaceScale::kDesk);
  const Genome g1 = random_genome(space, 1);
  const Genome g2 = random_genome(space, 2);
  CHECK(serialize(g1) == "desk:1,2,0,2,0,3,1,0,0,0,1,2,0,2,2,1,1,1,0,0,1");
  CHECK(serialize(g2) == "desk:1,0,2,1,2,3,0,0,2,0,0,1,2,0,1,1,0,0,1,0,1");
  CHECK(!(g1 == g2));
  CHECK_NOTHROW(validate_genome(g1, space));
  CHECK_NOTHROW(validate_genome(g2, space));
}

TEST_CASE("random_genome on a fixed space is forced to all zeros") {
  const Genome g = random_genome(singleton_space(), 999);
  CHECK(g.space_id == "fixed");
  CHECK(g.genes == std::vector<int>{0, 0, 0});
}

TEST_CASE("mutate moves exactly one gene to a different valid value") {
  const SearchSpaceSpec space = default_space(SpaceScale::kDesk);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Genome g = random_genome(space, seed * 31 + 5);
    const Genome m = mutate(g, space, seed);
    CHECK_NOTHROW(validate_genome(m, space));
    int diffs = 0;
    for (int i = 0; i < space.num_genes(); ++i)
      if (g.genes[i] != m.genes[i]) ++diffs;
    CHECK(diffs == 1);
    CHECK(!(g == m));
  }
}

TEST_CASE("mutate on a binary single-gene space flips the bit") {
  SearchSpaceSpec space;
  space.name = "bit";
  space.cardinalities = {2};
  space.segments = {{SegmentKind::kHeadSharedStem, 0, 1}};
  space.validate();
  const Genome zero{"bit", {0}};
  const Genome one{"bit", {1}};
  for (std::uint64_t seed = 0; seed < 16; ++seed) {
    CHECK(mutate(zero, space, seed) == one);
    CHECK(mutate(one, space, seed) == zero);
  }
}

TEST_CASE("mutate without any mutable gene throws") {
  const SearchSpaceSpec space = singleton_space();
  const Genome g = random_genome(space, 1);
  CHECK_THROWS_AS(mutate(g, space, 4), NoMutableGene);
}

TEST_CASE("mutate picks the changed gene uniformly") {
  const SearchSpaceSpec space = default_space(SpaceScale::kDesk);
  const Genome g = random_genome(space, 7);
  std::vector<int> hits(space.num_genes(), 0);
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    const Genome m = mutate(g, space, static_cast<std::uint64_t>(t));
    for (int i = 0; i < space.num_genes(); ++i)
      if (g.genes[i] != m.genes[i]) ++hits[i];
  }
  for (int i = 0; i < space.num_genes(); ++i) {
    const double freq = static_cast<double>(hits[i]) / trials;
    CHECK(std::fabs(freq - 1.0 / 21.0) < 0.01);
  }
}

TEST_CASE("serialize and deserialize round-trip") {
  const SearchSpaceSpec space = default_space(SpaceScale::kDesk);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Genome g = random_genome(space, seed);
    CHECK(deserialize(serialize(g), space) == g);
  }
}

TEST_CASE("deserialize accepts the all-zero desk genome") {
  const SearchSpaceSpec space = default_space(SpaceScale::kDesk);
  const Genome g =
      deserialize("desk:0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0", space);
  CHECK(g.space_id == "desk");
  for (int v : g.genes) CHECK(v == 0);
}

TEST_CASE("deserialize rejects out-of-range genes as SpaceMismatch") {
  const SearchSpaceSpec space = default_space(SpaceScale::kDesk);
  // Gene 0 has cardinality 4; 9 is out of range.
  CHECK_THROWS_AS(
      deserialize("desk:9,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0", space),
      SpaceMismatch);
  // Negative values are equally out of range.
  CHECK_THROWS_AS(
      deserialize("desk:-1,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0", space),
      SpaceMismatch);
  // Wrong gene count.
  CHECK_THROWS_AS(deserialize("desk:0,0,0", space), SpaceMismatch);
  // Wrong space id.
  const Genome other{"test18", std::vector<int>(18, 0)};
  CHECK_THROWS_AS(deserialize(serialize(other), space), SpaceMismatch);
}

TEST_CASE("deserialize rejects malformed text as ParseError") {
  const SearchSpaceSpec space = default_space(SpaceScale::kDesk);
  CHECK_THROWS_AS(deserialize("desk", space), ParseError);
  CHECK_THROWS_AS(deserialize("desk:", space), ParseError);
  CHECK_THROWS_AS(deserialize("desk:1,,2", space), ParseError);
  CHECK_THROWS_AS(deserialize("desk:1,two,3", space), ParseError);
  CHECK_THROWS_AS(deserialize("desk:1,2,", space), ParseError);
}

TEST_CASE("validate_genome enforces space membership") {
  const SearchSpaceSpec space = default_space(SpaceScale::kDesk);
  Genome g = random_genome(space, 3);
  CHECK_NOTHROW(validate_genome(g, space));
  g.genes[5] = 4;  // cardinality 4 allows 0..3
  CHECK_THROWS_AS(validate_genome(g, space), SpaceMismatch);
}

TEST_CASE("genome equality and hashing agree") {
  const SearchSpaceSpec space = default_space(SpaceScale::kDesk);
  const Genome a = random_genome(space, 13);
  Genome b = a;
  CHECK(a == b);
  CHECK(GenomeHash{}(a) == GenomeHash{}(b));
  b.genes[0] = (b.genes[0] + 1) % space.cardinalities[0];
  CHECK(!(a == b));
  CHECK(GenomeHash{}(a) != GenomeHash{}(b));
}
