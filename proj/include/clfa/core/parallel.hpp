#pragma once

#include <cstddef>

namespace clfa::core {

// Global thread setting for the OpenMP kernels. 0 means "use OMP default".
// Every parallel kernel partitions work so that results are bit-identical to
// the serial reference for any thread count.
void set_thread_count(int n);
int thread_count();

// True when a kernel of roughly `work` scalar ops is worth forking for.
bool should_parallelize(size_t work);

}  // namespace clfa::core
