// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace resadapt {

/// Worker cap: RESADAPT_THREADS if set to a positive integer, otherwise the
/// hardware concurrency.
std::size_t worker_count();

/// Calls fn(begin, end) over disjoint ranges covering [0, n). Ranges hold at
/// least `grain` items, so small inputs run inline on the caller.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn);

} // namespace resadapt
