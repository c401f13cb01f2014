#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace trajnas {

// Architecture dimensions a gene range can control.
enum class SegmentKind {
  kTrunkDepth,
  kTrunkBlockType,
  kTrunkWidth,
  kHeadDepth,
  kHeadWidth,
  kHeadSharedStem,
};

const char* segment_kind_name(SegmentKind kind);
std::optional<SegmentKind> segment_kind_from_name(const std::string& name);

// Half-open gene index range [begin, end) assigned to one segment.
struct SegmentRange {
  SegmentKind kind;
  int begin = 0;
  int end = 0;
};

// A fixed-length integer genome space. Gene i takes values in
// [0, cardinalities[i]). Segment ranges must be disjoint and jointly cover
// all gene indices.
struct SearchSpaceSpec {
  std::string name;  // space_id used in the textual genome form
  std::vector<int> cardinalities;
  std::vector<SegmentRange> segments;

  int num_genes() const { return static_cast<int>(cardinalities.size()); }

  // Sum of log2 cardinalities; exact for spaces too large for uint64.
  double log2_size() const;

  // Product of cardinalities, or nullopt if it exceeds uint64 range.
  std::optional<std::uint64_t> exact_size() const;

  // Genes of the given segment kind, in gene-index order.
  std::vector<int> segment_genes(SegmentKind kind) const;

  // Throws InvalidParams if cardinalities/segments violate the invariants:
  // every cardinality >= 1, at least one >= 2, segments disjoint + covering.
  void validate() const;
};

enum class SpaceScale { kDesk, kPaper };

// kDesk: 21 genes spanning trunk depth/type/width, per-head depth/width and
// shared-stem bits (2^9 * 3^14 ~ 2.45e9 architectures).
// kPaper: 300 binary genes, size reporting only; decode is unsupported.
SearchSpaceSpec default_space(SpaceScale scale);

// 18-gene reduced space ("test18", ~1.97e5 architectures) with the same
// segment structure as the desk space. Small enough for exhaustive
// enumeration, so search quality can be judged against the true optimum.
SearchSpaceSpec enumerable_test_space();

struct Genome {
  std::string space_id;
  std::vector<int> genes;

  bool operator==(const Genome& other) const {
    return space_id == other.space_id && genes == other.genes;
  }
};

struct GenomeHash {
  std::size_t operator()(const Genome& g) const;
};

// Throws SpaceMismatch if g does not belong to `space` or violates its
// cardinalities.
void validate_genome(const Genome& g, const SearchSpaceSpec& space);

// Uniform sample over the space. Deterministic in (space, seed).
Genome random_genome(const SearchSpaceSpec& space, std::uint64_t rng_seed);

// Hamming-distance-1 move: picks a uniformly random gene among those with
// cardinality >= 2, then a uniformly random *different* value for it.
// Throws NoMutableGene if every gene has cardinality 1.
Genome mutate(const Genome& g, const SearchSpaceSpec& space,
              std::uint64_t rng_seed);

// Textual form "space_id:g0,g1,...,gN-1".
std::string serialize(const Genome& g);

// Inverse of serialize. Throws ParseError on malformed text and
// SpaceMismatch if the space id or gene values do not fit `space`.
Genome deserialize(const std::string& text, const SearchSpaceSpec& space);

}  // namespace trajnas
