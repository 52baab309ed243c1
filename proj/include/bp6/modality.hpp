#pragma once

#include <array>
#include <cstddef>
#include <string_view>

namespace bp6 {

inline constexpr std::size_t kNumModalities = 6;

struct ModalitySpec {
  std::string_view key;       // short symbol: e, p, l, t, a, g
  std::string_view encoder;   // checkpoint prefix
  std::size_t first_channel;  // index into kChannelNames
  std::size_t channels;
};

// Canonical order (e, p, l, t, a, g); fused features follow this order.
inline constexpr std::array<ModalitySpec, kNumModalities> kModalities{{
    {"e", "tcn", 0, 1},
    {"p", "cacnn_ppg", 1, 6},
    {"l", "cacnn_lc", 7, 2},
    {"t", "cacnn_temp", 9, 3},
    {"a", "cacnn_acc", 12, 3},
    {"g", "cacnn_gyro", 15, 3},
}};

inline constexpr std::size_t kNumChannels = 18;

inline constexpr std::array<std::string_view, kNumChannels> kChannelNames{
    "ecg",  "pleth_1", "pleth_2", "pleth_3", "pleth_4", "pleth_5", "pleth_6", "lc_1", "lc_2",
    "temp_1", "temp_2", "temp_3", "a_x",  "a_y",  "a_z",  "g_x",  "g_y",  "g_z",
};

}  // namespace bp6
