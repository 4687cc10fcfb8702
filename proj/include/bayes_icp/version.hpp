#pragma once

namespace bayes_icp {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace bayes_icp
