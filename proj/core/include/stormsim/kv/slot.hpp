#pragma once

#include <cstdint>
#include <cstring>
#include <span>

namespace stormsim::kv {

/// Per-object metadata inlined ahead of the value so one one-sided read
/// fetches everything needed to validate it: key, lock word (0 or the
/// owning transaction id) and a version counter.
struct SlotHeader {
  std::uint64_t key = 0;
  std::uint64_t lock = 0;
  std::uint64_t version = 0;
};
static_assert(sizeof(SlotHeader) == 24);

constexpr std::uint32_t kSlotHeaderBytes = sizeof(SlotHeader);

inline SlotHeader read_slot_header(std::span<const std::uint8_t> buf) {
  SlotHeader h;
  std::memcpy(&h, buf.data(), sizeof h);
  return h;
}

/// Deterministic 64-bit multiplicative mix used for bucket placement
/// and key partitioning.
inline std::uint64_t hash64(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdull;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ull;
  x ^= x >> 33;
  return x;
}

}  // namespace stormsim::kv
