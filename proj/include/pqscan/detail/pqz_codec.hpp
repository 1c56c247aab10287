#pragma once

#include <cstdint>

#include "pqscan/binary_io.hpp"
#include "pqscan/product_quantizer.hpp"

namespace pqscan::detail {

inline constexpr std::uint8_t kPqzRotation = 0x01;
inline constexpr std::uint8_t kPqzDerived = 0x02;

/// Magic, header and codebooks of a PQZ1 blob. `extra_flags` lets extensions
/// announce trailing sections.
void write_pqz(io::BinaryWriter& w, const ProductQuantizer& pq, std::uint8_t extra_flags);

/// Reads up to the end of the base codebooks; `flags` receives the flag byte.
ProductQuantizer read_pqz(io::BinaryReader& r, std::uint8_t& flags);

/// Reads the derived-quantizer trailer: u32 bbar, then m codebooks of
/// 2^bbar x dsub f32.
std::pair<std::size_t, std::vector<Codebook>> read_derived_trailer(io::BinaryReader& r,
                                                                   std::size_t m,
                                                                   std::size_t dsub);

}  // namespace pqscan::detail
