#pragma once

#include <cstddef>

namespace pep {

/// Sets the OpenMP team size used by every parallel loop in the library.
/// Values < 1 are clamped to 1.
void set_num_threads(int n);
int num_threads();

/// Work items are grouped into fixed-size blocks whose partial results are
/// reduced in block order, so reductions do not depend on the thread count.
inline constexpr std::size_t kReductionBlock = 8;

}  // namespace pep
