#include <atomic>
#include <cstdlib>
#include <string_view>

#include "snncodec/kernels.hpp"

namespace snncodec::kernels {
namespace {

const KernelTable* initial_table() {
  const char* forced = std::getenv("SNNCODEC_KERNELS");
  if (forced != nullptr && std::string_view(forced) == "scalar") return &scalar_table();
  if (const KernelTable* fast = avx2_table()) return fast;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

bool select(std::string_view name) {
  if (name == "scalar") {
    current().store(&scalar_table(), std::memory_order_release);
    return true;
  }
  if (name == "avx2" && avx2_table() != nullptr) {
    current().store(avx2_table(), std::memory_order_release);
    return true;
  }
  return false;
}

}  // namespace snncodec::kernels
