#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace mixbart {

// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as
// easy as 1, 2, 3"). Pure: the same counter and key always give the same block.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// A counter-based random stream. The key is the seed and the high half of the
// counter is the stream id, so any number of streams can be derived from one
// seed without coordination. Satisfies UniformRandomBitGenerator.
//
// A stream is a value type and is not safe to share between threads; give each
// worker its own substream().
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  // Uniform on (0, 1); safe to take the log of.
  double uniform_open();

  // Deterministically derived independent stream. Distinct (a, b) pairs give
  // distinct streams; the parent's position does not matter.
  RngStream substream(std::uint64_t a, std::uint64_t b = 0) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  // Number of 64-bit words consumed so far.
  std::uint64_t position() const { return 2 * block_ - (has_spare_ ? 1 : 0); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::uint64_t spare_ = 0;
  bool has_spare_ = false;
};

// SplitMix64 finalizer; used to hash stream identifiers.
std::uint64_t mix64(std::uint64_t x);

}  // namespace mixbart
