#pragma once

namespace dynhat {

// Reserved vocabulary layout shared by corpus generation, masking and
// decoding.
inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kNumReservedIds = 4;

}  // namespace dynhat
