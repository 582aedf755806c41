#include "handcontact/parallel.hpp"

#include <atomic>

namespace hc {

namespace {
std::atomic<int> g_workers{0};
}

void set_worker_threads(int n) { g_workers.store(n < 0 ? 0 : n); }

int worker_threads() {
    const int n = g_workers.load();
    if (n > 0) return n;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(std::min(hw, 8u));
}

}  // namespace hc
