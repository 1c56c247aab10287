#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "pqscan/adc_scan.hpp"
#include "pqscan/table_quantization.hpp"

namespace pqscan {

// PQ Fast Scan for 8x8 codes. Codes are grouped on the high nibbles of their
// first four components; inside a group those nibbles are implied by the
// group key, so each code stores 6 bytes. A lower bound on the quantized
// distance is computed from eight 16-entry 8-bit tables and the exact distance
// is only computed when the bound does not exceed the quantized distance of
// the current r-th best result. Results are identical to scan().

/// Relabels the centroids of codebooks 4..7 so that indexes 16p..16p+15 form
/// one same-size cluster p. Requires m = 8, b = 8.
ProductQuantizer optimize_centroid_assignment(const ProductQuantizer& pq,
                                              const TrainConfig& cfg = {});

/// The relabeling permutation for one codebook of 256 centroids: order[i] is
/// the old index of new centroid i.
std::vector<std::uint32_t> clustered_centroid_order(const Codebook& codebook,
                                                    const TrainConfig& cfg = {});

using GroupKey = std::uint16_t;  // i0 << 12 | i1 << 8 | i2 << 4 | i3

inline GroupKey group_key_of(std::span<const std::uint16_t> code) {
  return static_cast<GroupKey>(((code[0] >> 4) << 12) | ((code[1] >> 4) << 8) |
                               ((code[2] >> 4) << 4) | (code[3] >> 4));
}

/// 6-byte packing of an 8x8 code: byte 0 = c0 & 15 | (c1 & 15) << 4,
/// byte 1 = c2 & 15 | (c3 & 15) << 4, bytes 2..5 = c4..c7.
using PackedCode6 = std::array<std::uint8_t, 6>;
PackedCode6 pack6(std::span<const std::uint16_t> code);
Code unpack6(const PackedCode6& packed, GroupKey key);

class GroupedDatabase {
 public:
  static constexpr std::size_t kBlock = 16;
  static constexpr std::size_t kRows = 6;
  static constexpr std::size_t kBlockBytes = kBlock * kRows;

  struct Group {
    GroupKey key = 0;
    std::size_t first_block = 0;
    std::size_t count = 0;

    bool operator==(const Group&) const = default;
  };

  std::size_t size() const noexcept { return n_; }
  const std::vector<Group>& groups() const noexcept { return groups_; }

  /// Block b of the storage: 6 rows of 16 bytes, row r holding byte r of the
  /// 6-byte packing for the 16 codes. Tail blocks of a group are zero padded.
  const std::uint8_t* block(std::size_t b) const { return bytes_.data() + b * kBlockBytes; }
  std::size_t block_count() const noexcept { return bytes_.size() / kBlockBytes; }

  PackedCode6 packed(const Group& g, std::size_t t) const;
  Code code(const Group& g, std::size_t t) const { return unpack6(packed(g, t), g.key); }
  std::int64_t id(const Group& g, std::size_t t) const { return ids_[g.first_block * kBlock + t]; }

  /// All codes in storage (group) order, ids preserved.
  CodeList ungroup() const;

  bool operator==(const GroupedDatabase&) const = default;

  // Persistence: "PQG1", u64 n, u32 group count, directory of (u16 key,
  // u64 first_block, u64 count), u64 block count, blocks, then one i64 id per
  // block slot (padding slots hold -1).
  void save(std::ostream& out) const;
  static GroupedDatabase load(std::istream& in, std::uint64_t base_offset = 0);
  void save(const std::filesystem::path& path) const;
  static GroupedDatabase load(const std::filesystem::path& path);

  friend GroupedDatabase group_codes(const CodeList& list);

 private:
  std::size_t n_ = 0;
  std::vector<Group> groups_;
  std::vector<std::uint8_t> bytes_;
  std::vector<std::int64_t> ids_;  // one per block slot
};

/// Groups an 8x8 code list by key; order inside a group follows the list.
GroupedDatabase group_codes(const CodeList& list);

/// Eight 16-entry tables of values in [0, 127]. Tables 0..3 are the quantized
/// portions of D0..D3 selected by the group key; tables 4..7 hold the quantized
/// minima of the 16 portions of D4..D7.
struct SmallTables {
  std::array<std::array<std::uint8_t, 16>, 8> t{};
};

SmallTables build_small_tables(const LookupTables& tables, const QuantParams& params, GroupKey key);

/// Saturating (at 127) sum of S0[c0&15] .. S3[c3&15] and S4[c4>>4] .. S7[c7>>4].
std::uint8_t lower_bound(const SmallTables& small, const PackedCode6& packed);

struct FastScanStats {
  std::size_t init_scanned = 0;  // codes used to pick qmax
  std::size_t checked = 0;       // exact distances computed in the main pass
  std::size_t pruned = 0;        // codes discarded on their lower bound
  QuantParams params;

  double pruned_fraction() const {
    const std::size_t total = checked + pruned;
    return total == 0 ? 0.0 : static_cast<double>(pruned) / static_cast<double>(total);
  }
};

enum class Kernel { Auto, Scalar };

/// `init` is the fraction of the database scanned up front (spread evenly over
/// the storage) to pick qmax.
NeighborSet fast_scan(const GroupedDatabase& grouped, const LookupTables& tables, double init,
                      std::size_t r, FastScanStats* stats = nullptr, Kernel kernel = Kernel::Auto);

}  // namespace pqscan
