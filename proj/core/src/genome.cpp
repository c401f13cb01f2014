#include "trajnas/genome.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "trajnas/errors.hpp"
#include "trajnas/rng.hpp"

namespace trajnas {

namespace {

const char* const kSegmentNames[] = {
    "trunk_depth",  "trunk_block_type", "trunk_width",
    "head_depth",   "head_width",       "head_shared_stem",
};

}  // namespace

const char* segment_kind_name(SegmentKind kind) {
  return kSegmentNames[static_cast<int>(kind)];
}

std::optional<SegmentKind> segment_kind_from_name(const std::string& name) {
  for (int i = 0; i < 6; ++i) {
    if (name == kSegmentNames[i]) return static_cast<SegmentKind>(i);
  }
  return std::nullopt;
}

double SearchSpaceSpec::log2_size() const {
  double sum = 0.0;
  for (int c : cardinalities) sum += std::log2(static_cast<double>(c));
  return sum;
}

std::optional<std::uint64_t> SearchSpaceSpec::exact_size() const {
  std::uint64_t size = 1;
  for (int c : cardinalities) {
    const std::uint64_t uc = static_cast<std::uint64_t>(c);
    if (size > UINT64_MAX / uc) return std::nullopt;
    size *= uc;
  }
  return size;
}

std::vector<int> SearchSpaceSpec::segment_genes(SegmentKind kind) const {
  std::vector<int> genes;
  for (const SegmentRange& seg : segments) {
    if (seg.kind != kind) continue;
    for (int i = seg.begin; i < seg.end; ++i) genes.push_back(i);
  }
  std::sort(genes.begin(), genes.end());
  return genes;
}

void SearchSpaceSpec::validate() const {
  if (name.empty()) throw InvalidParams("search space needs a non-empty name");
  if (cardinalities.empty())
    throw InvalidParams("search space '" + name + "' has no genes");
  bool any_mutable = false;
  for (std::size_t i = 0; i < cardinalities.size(); ++i) {
    if (cardinalities[i] < 1)
      throw InvalidParams("space '" + name + "': gene " + std::to_string(i) +
                          " has cardinality " +
                          std::to_string(cardinalities[i]));
    if (cardinalities[i] >= 2) any_mutable = true;
  }
  if (!any_mutable)
    throw InvalidParams("space '" + name + "': every gene has cardinality 1");

  // Segment ranges must partition [0, num_genes).
  std::vector<int> cover(cardinalities.size(), 0);
  for (const SegmentRange& seg : segments) {
    if (seg.begin < 0 || seg.end > num_genes() || seg.begin >= seg.end)
      throw InvalidParams("space '" + name + "': bad segment range [" +
                          std::to_string(seg.begin) + ", " +
                          std::to_string(seg.end) + ")");
    for (int i = seg.begin; i < seg.end; ++i) ++cover[i];
  }
  for (std::size_t i = 0; i < cover.size(); ++i) {
    if (cover[i] != 1)
      throw InvalidParams("space '" + name + "': gene " + std::to_string(i) +
                          (cover[i] == 0 ? " not covered by any segment"
                                         : " covered by multiple segments"));
  }
}

SearchSpaceSpec default_space(SpaceScale scale) {
  SearchSpaceSpec space;
  if (scale == SpaceScale::kDesk) {
    space.name = "desk";
    space.cardinalities = {4,                // trunk_depth in {1..4}
                           3, 3, 3, 3,       // block type per trunk layer
                           4,                // trunk_width in {16,32,64,128}
                           3, 3, 3, 3, 3,    // head_depth in {1,2,3}
                           3, 3, 3, 3, 3,    // head_width in {16,32,64}
                           2, 2, 2, 2, 2};   // head_shared_stem bit
    space.segments = {
        {SegmentKind::kTrunkDepth, 0, 1},
        {SegmentKind::kTrunkBlockType, 1, 5},
        {SegmentKind::kTrunkWidth, 5, 6},
        {SegmentKind::kHeadDepth, 6, 11},
        {SegmentKind::kHeadWidth, 11, 16},
        {SegmentKind::kHeadSharedStem, 16, 21},
    };
  } else {
    // 300 binary genes. Only the size is meaningful; the genes carry no
    // decodable architecture semantics, so the segment split is an even
    // six-way partition purely to satisfy the coverage invariant.
    space.name = "paper";
    space.cardinalities.assign(300, 2);
    space.segments = {
        {SegmentKind::kTrunkDepth, 0, 50},
        {SegmentKind::kTrunkBlockType, 50, 100},
        {SegmentKind::kTrunkWidth, 100, 150},
        {SegmentKind::kHeadDepth, 150, 200},
        {SegmentKind::kHeadWidth, 200, 250},
        {SegmentKind::kHeadSharedStem, 250, 300},
    };
  }
  space.validate();
  return space;
}

SearchSpaceSpec enumerable_test_space() {
  SearchSpaceSpec space;
  space.name = "test18";
  space.cardinalities = {1,                // trunk_depth fixed at 1
                         3,                // block type of the single layer
                         2,                // trunk_width in {16,32}
                         2, 2, 2, 2, 2,    // head_depth in {1,2}
                         2, 2, 2, 2, 2,    // head_width in {16,32}
                         2, 2, 2, 2, 2};   // head_shared_stem bit
  space.segments = {
      {SegmentKind::kTrunkDepth, 0, 1},
      {SegmentKind::kTrunkBlockType, 1, 2},
      {SegmentKind::kTrunkWidth, 2, 3},
      {SegmentKind::kHeadDepth, 3, 8},
      {SegmentKind::kHeadWidth, 8, 13},
      {SegmentKind::kHeadSharedStem, 13, 18},
  };
  space.validate();
  return space;
}

std::size_t GenomeHash::operator()(const Genome& g) const {
  // FNV-1a over the space id and gene values.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::uint64_t byte) {
    h ^= byte;
    h *= 0x100000001b3ULL;
  };
  for (char c : g.space_id) feed(static_cast<unsigned char>(c));
  feed(0xff);  // separator
  for (int v : g.genes) {
    feed(static_cast<std::uint64_t>(v) & 0xff);
    feed((static_cast<std::uint64_t>(v) >> 8) & 0xff);
  }
  return static_cast<std::size_t>(h);
}

void validate_genome(const Genome& g, const SearchSpaceSpec& space) {
  if (g.space_id != space.name)
    throw SpaceMismatch("genome belongs to space '" + g.space_id +
                        "', expected '" + space.name + "'");
  if (static_cast<int>(g.genes.size()) != space.num_genes())
    throw SpaceMismatch("genome has " + std::to_string(g.genes.size()) +
                        " genes, space '" + space.name + "' expects " +
                        std::to_string(space.num_genes()));
  for (int i = 0; i < space.num_genes(); ++i) {
    if (g.genes[i] < 0 || g.genes[i] >= space.cardinalities[i])
      throw SpaceMismatch("gene " + std::to_string(i) + " value " +
                          std::to_string(g.genes[i]) +
                          " outside cardinality " +
                          std::to_string(space.cardinalities[i]));
  }
}

Genome random_genome(const SearchSpaceSpec& space, std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  Genome g;
  g.space_id = space.name;
  g.genes.resize(space.cardinalities.size());
  for (std::size_t i = 0; i < space.cardinalities.size(); ++i) {
    g.genes[i] = static_cast<int>(
        rng.uniform_index(static_cast<std::uint64_t>(space.cardinalities[i])));
  }
  return g;
}

Genome mutate(const Genome& g, const SearchSpaceSpec& space,
              std::uint64_t rng_seed) {
  validate_genome(g, space);
  std::vector<int> mutable_genes;
  for (int i = 0; i < space.num_genes(); ++i) {
    if (space.cardinalities[i] >= 2) mutable_genes.push_back(i);
  }
  if (mutable_genes.empty())
    throw NoMutableGene("space '" + space.name +
                        "' has no gene with cardinality >= 2");
  Rng rng(rng_seed);
  const int gene = mutable_genes[rng.uniform_index(mutable_genes.size())];
  // Pick among the cardinality-1 other values so the result always differs.
  const int card = space.cardinalities[gene];
  int value = static_cast<int>(
      rng.uniform_index(static_cast<std::uint64_t>(card - 1)));
  if (value >= g.genes[gene]) ++value;
  Genome out = g;
  out.genes[gene] = value;
  return out;
}

std::string serialize(const Genome& g) {
  std::ostringstream out;
  out << g.space_id << ':';
  for (std::size_t i = 0; i < g.genes.size(); ++i) {
    if (i > 0) out << ',';
    out << g.genes[i];
  }
  return out.str();
}

Genome deserialize(const std::string& text, const SearchSpaceSpec& space) {
  const std::size_t colon = text.find(':');
  if (colon == std::string::npos)
    throw ParseError("genome text lacks the 'space_id:' prefix: " + text);
  Genome g;
  g.space_id = text.substr(0, colon);
  const std::string body = text.substr(colon + 1);
  if (body.empty()) throw ParseError("genome text has no gene values: " + text);

  std::size_t pos = 0;
  while (pos <= body.size()) {
    std::size_t comma = body.find(',', pos);
    if (comma == std::string::npos) comma = body.size();
    const std::string tok = body.substr(pos, comma - pos);
    if (tok.empty())
      throw ParseError("empty gene value in genome text: " + text);
    std::size_t used = 0;
    int value = 0;
    try {
      value = std::stoi(tok, &used);
    } catch (const std::exception&) {
      throw ParseError("non-integer gene value '" + tok + "' in: " + text);
    }
    if (used != tok.size())
      throw ParseError("non-integer gene value '" + tok + "' in: " + text);
    g.genes.push_back(value);
    pos = comma + 1;
    if (comma == body.size()) break;
  }
  validate_genome(g, space);
  return g;
}

}  // namespace trajnas
