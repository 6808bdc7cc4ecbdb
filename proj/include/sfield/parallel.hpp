#pragma once
// Deterministic task parallelism. Work is split into a fixed number of
// chunks independent of the worker count, and any reduction happens in
// chunk order, so outputs are bit-identical for any SCENEFIELD_WORKERS.

#include <cstddef>
#include <functional>

namespace sfield {

// Worker count from SCENEFIELD_WORKERS (>=1); defaults to 1.
int worker_count();

// Runs fn(chunk_index) for chunk_index in [0, n_chunks). Chunks may run on
// any worker; fn must write only to chunk-owned storage.
void parallel_chunks(std::size_t n_chunks, const std::function<void(std::size_t)>& fn);

}  // namespace sfield
