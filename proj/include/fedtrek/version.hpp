// Copyright (c) 2026 the fedtrek authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string_view>

namespace fedtrek {

inline constexpr std::string_view kToolName = "fedtrek";
inline constexpr std::string_view kToolVersion = "0.1.0";

}  // namespace fedtrek
