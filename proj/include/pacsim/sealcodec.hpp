// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Deterministic PAC emulation and the bit layout of sealed pointer words.
//
// A sealed word packs a 39-bit virtual address (bits 0-38), a 24-bit seal
// (bits 39-62) and a reserved zero bit 63. The seal is produced by a keyed
// SplitMix-style mixer, not a real cipher: the simulator only needs a
// fixed, unpredictable-to-the-program map, and a bit-exact definition so
// regression vectors stay portable.

#pragma once

#include <cstdint>
#include <cstdlib>
#include <string>

#include "pacsim/errors.hpp"

namespace pacsim {

inline constexpr int kAddrBits = 39;
inline constexpr int kSealBits = 24;
inline constexpr uint64_t kAddrMask = (uint64_t{1} << kAddrBits) - 1;
inline constexpr uint32_t kSealMask = (uint32_t{1} << kSealBits) - 1;
inline constexpr uint64_t kMaxAddr = kAddrMask;

// Key for the whole run. Fixed default so regression vectors are stable;
// override with the PACSIM_KEY environment variable (16 hex digits).
inline constexpr uint64_t kDefaultKey = 0x5AC5000000000001ull;

struct PacKey {
  uint64_t value = kDefaultKey;
};

struct SealedWord {
  uint64_t raw = 0;

  friend bool operator==(SealedWord a, SealedWord b) { return a.raw == b.raw; }
  friend bool operator!=(SealedWord a, SealedWord b) { return a.raw != b.raw; }
};

namespace detail {

inline uint64_t rotl64(uint64_t x, int r) {
  return (x << r) | (x >> (64 - r));
}

// Shared 64-bit mix behind pac24 and bm32. All arithmetic mod 2^64.
inline uint64_t mix64(PacKey key, uint64_t value, uint64_t modifier) {
  uint64_t x = key.value ^ (value * 0x9E3779B97F4A7C15ull) ^ rotl64(modifier, 21);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  x = x ^ (x >> 31);
  return x;
}

}  // namespace detail

// 24-bit keyed tag over (value, modifier).
inline uint32_t pac24(PacKey key, uint64_t value, uint64_t modifier) {
  return static_cast<uint32_t>(detail::mix64(key, value, modifier)) & kSealMask;
}

// 32-bit pseudo-random birthmark. Same mix as pac24, wider truncation.
// The dynamic counter stands in for the stack pointer entropy source and
// the site constant for a per-site compile-time random.
inline uint32_t bm32(PacKey key, uint64_t dynamic_counter, uint64_t site_constant) {
  return static_cast<uint32_t>(detail::mix64(key, dynamic_counter, site_constant));
}

inline SealedWord encode(uint64_t addr, uint32_t seal) {
  if (addr > kMaxAddr)
    throw CodecRangeError("address does not fit 39 bits: " + std::to_string(addr));
  if (seal > kSealMask)
    throw CodecRangeError("seal does not fit 24 bits: " + std::to_string(seal));
  return SealedWord{addr | (uint64_t{seal} << kAddrBits)};
}

inline uint64_t strip(SealedWord w) {
  return w.raw & kAddrMask;
}

inline uint32_t extract_seal(SealedWord w) {
  return static_cast<uint32_t>(w.raw >> kAddrBits) & kSealMask;
}

// PACSIM_KEY (exactly 16 hex digits) or the default constant.
inline PacKey key_from_env() {
  const char* env = std::getenv("PACSIM_KEY");
  if (env == nullptr) return PacKey{kDefaultKey};
  std::string s(env);
  if (s.size() != 16 || s.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos)
    throw SimError("PACSIM_KEY must be exactly 16 hex digits, got '" + s + "'");
  return PacKey{std::stoull(s, nullptr, 16)};
}

}  // namespace pacsim
