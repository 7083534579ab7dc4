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

// The runtime checks: one bound check per dereference (which subsumes the
// temporal check, since freed objects leave an empty or re-owned slot),
// authentication before heap deallocation, and the boundary operations for
// crossing into and out of unprotected modules.
//
// Detection uses only the metadata table. Ground truth is consulted for
// classification of an already-detected event, never for the verdict.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "pacsim/metatable.hpp"
#include "pacsim/sealcodec.hpp"

namespace pacsim {

enum class ViolationKind {
  kSpatialOob,
  kTemporalInvalid,
  kDoubleFree,
  kInvalidFree,
  kBoundaryDangling,
};

enum class AccessKind { kRead, kWrite, kFree, kBoundary };

inline const char* to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::kSpatialOob: return "spatial-oob";
    case ViolationKind::kTemporalInvalid: return "temporal-invalid";
    case ViolationKind::kDoubleFree: return "double-free";
    case ViolationKind::kInvalidFree: return "invalid-free";
    case ViolationKind::kBoundaryDangling: return "boundary-dangling";
  }
  return "?";
}

inline const char* to_string(AccessKind k) {
  switch (k) {
    case AccessKind::kRead: return "read";
    case AccessKind::kWrite: return "write";
    case AccessKind::kFree: return "free";
    case AccessKind::kBoundary: return "boundary";
  }
  return "?";
}

struct Violation {
  ViolationKind kind = ViolationKind::kSpatialOob;
  std::string site;                 // statement identifier, e.g. "main#4"
  uint32_t seal = 0;                // seal carried by the offending word
  std::optional<int64_t> offset;    // pointer offset to base, when computable
  AccessKind access = AccessKind::kRead;
};

struct CheckerConfig {
  bool write_only = false;
  // Conservative extent handed to pointers received from unprotected
  // modules: whole reachable space by default.
  uint64_t boundary_conservative_base = 0;
  uint32_t boundary_conservative_size = 0xFFFFFFFFu;
};

// Ground-truth hooks used for classification only.
class SealGroundTruth {
 public:
  virtual ~SealGroundTruth() = default;
  // Liveness of the object that most recently owned this seal; nullopt if
  // the seal was never assigned.
  virtual std::optional<bool> seal_owner_live(uint32_t seal) const = 0;
};

// Interprets the low 39 bits of (addr - base) as a signed quantity, so an
// underflowing gep reads back as a small negative offset.
inline int64_t signed_offset39(uint64_t addr, uint64_t base) {
  uint64_t diff = (addr - base) & kAddrMask;
  if (diff & (uint64_t{1} << (kAddrBits - 1))) diff |= ~kAddrMask;
  return static_cast<int64_t>(diff);
}

// Bound check for an n-byte access through w. `origin_live` is the
// machine's ground-truth liveness of the object the pointer was derived
// from; it selects the spatial/temporal label of a failed check and has no
// effect on detection.
inline std::optional<Violation> check_access(const MetadataTable& table, SealedWord w,
                                             uint64_t n, AccessKind access,
                                             const CheckerConfig& cfg, bool origin_live = true,
                                             std::string site = {}) {
  if (cfg.write_only && access == AccessKind::kRead) return std::nullopt;

  const uint32_t seal = extract_seal(w);
  const MetadataEntry entry = table.lookup(seal);
  if (entry.empty())
    return Violation{ViolationKind::kTemporalInvalid, std::move(site), seal, std::nullopt, access};

  const uint64_t base = strip(entry.sealed_base);
  const int64_t off = signed_offset39(strip(w), base);
  if (off < 0 || static_cast<uint64_t>(off) + n > entry.size) {
    const auto kind =
        origin_live ? ViolationKind::kSpatialOob : ViolationKind::kTemporalInvalid;
    return Violation{kind, std::move(site), seal, off, access};
  }
  return std::nullopt;
}

struct FreeOk {
  MetadataEntry entry;
};

// Deallocation check: the entry must exist, the pointer must sit exactly at
// the signed base, and re-signing base with the stored modifier must
// reproduce the seal. The caller clears the entry and releases the region
// with the stripped raw address.
inline std::variant<FreeOk, Violation> check_free(const MetadataTable& table, PacKey key,
                                                  const SealGroundTruth& gt, SealedWord w,
                                                  std::string site = {}) {
  const uint32_t seal = extract_seal(w);
  const MetadataEntry entry = table.lookup(seal);
  if (entry.empty()) {
    const auto owner_live = gt.seal_owner_live(seal);
    const auto kind = (owner_live.has_value() && !*owner_live) ? ViolationKind::kDoubleFree
                                                               : ViolationKind::kInvalidFree;
    return Violation{kind, std::move(site), seal, std::nullopt, AccessKind::kFree};
  }
  const uint64_t base = strip(entry.sealed_base);
  if (strip(w) != base)
    return Violation{ViolationKind::kInvalidFree, std::move(site), seal,
                     signed_offset39(strip(w), base), AccessKind::kFree};
  if (pac24(key, base, seal_modifier(entry.birthmark, entry.size)) != seal)
    return Violation{ViolationKind::kInvalidFree, std::move(site), seal, std::nullopt,
                     AccessKind::kFree};
  return FreeOk{entry};
}

// Verify-and-strip for a pointer escaping to an unprotected module.
inline std::variant<uint64_t, Violation> boundary_out(const MetadataTable& table, SealedWord w,
                                                      const CheckerConfig& cfg,
                                                      std::string site = {}) {
  CheckerConfig full = cfg;
  full.write_only = false;  // boundary checks apply to every escape
  if (auto v = check_access(table, w, 1, AccessKind::kBoundary, full, true, site)) {
    v->kind = ViolationKind::kBoundaryDangling;
    return *v;
  }
  return strip(w);
}

// Re-seal a raw pointer arriving from an unprotected module under the
// memoized conservative entry (created once per run). Every later bound
// check through such a word passes: a documented attack surface.
inline SealedWord boundary_in(MetadataTable& table, PacKey key, const CheckerConfig& cfg,
                              std::optional<uint32_t>& conservative_seal, uint64_t raw,
                              uint64_t& alloc_counter) {
  static constexpr uint64_t kBoundarySite = 0xB0DA'11EDull;
  if (!conservative_seal) {
    auto created = table.create(key, cfg.boundary_conservative_base,
                                cfg.boundary_conservative_size, alloc_counter++, kBoundarySite);
    conservative_seal = created.seal;
  }
  return encode(raw & kAddrMask, *conservative_seal);
}

}  // namespace pacsim
