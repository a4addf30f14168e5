#include "mfp/parallel.hpp"

#include <atomic>

namespace mfp {

namespace {
std::atomic<int> g_workers{1};
}

int workers() { return g_workers.load(); }

void set_workers(int n) { g_workers.store(n < 1 ? 1 : n); }

} // namespace mfp
