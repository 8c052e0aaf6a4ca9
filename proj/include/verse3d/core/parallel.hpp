#pragma once

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>

namespace verse3d {

/// Runs fn(i) for i in [0, n). Each index must write disjoint output, so the
/// result never depends on scheduling.
template <typename Fn>
void parallel_for_each_index(int n, Fn&& fn) {
  tbb::parallel_for(tbb::blocked_range<int>(0, n), [&](const tbb::blocked_range<int>& r) {
    for (int i = r.begin(); i != r.end(); ++i) fn(i);
  });
}

}  // namespace verse3d
