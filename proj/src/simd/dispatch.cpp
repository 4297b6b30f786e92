#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "drf/simd/kernels.hpp"

namespace drf::simd {
namespace {

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) || defined(__i386__)
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* pick_default() {
    const char* env = std::getenv("DRF_SIMD");
    if (env && std::string(env) == "scalar") return &scalar_kernels();
    if (isa_supported(Isa::Avx2)) return avx2_kernels();
    return &scalar_kernels();
}

std::atomic<const KernelTable*>& active_table() {
    static std::atomic<const KernelTable*> table{pick_default()};
    return table;
}

}  // namespace

bool isa_supported(Isa isa) {
    switch (isa) {
        case Isa::Scalar:
            return true;
        case Isa::Avx2:
            return avx2_kernels() != nullptr && cpu_has_avx2_fma();
    }
    return false;
}

const KernelTable& kernels() { return *active_table().load(std::memory_order_relaxed); }

Isa active_isa() { return kernels().isa; }

void set_active_isa(Isa isa) {
    if (!isa_supported(isa)) {
        throw std::runtime_error("SIMD variant not supported on this CPU: " +
                                 std::string(isa_name(isa)));
    }
    active_table().store(isa == Isa::Avx2 ? avx2_kernels() : &scalar_kernels());
}

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::Scalar:
            return "scalar";
        case Isa::Avx2:
            return "avx2";
    }
    return "unknown";
}

}  // namespace drf::simd
