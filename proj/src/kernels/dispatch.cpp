/*
 Copyright 2026 The koopmpc Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#include <atomic>
#include <string>

#include "koopmpc/kernels.hpp"

namespace koopmpc::kernels {

#if defined(KOOPMPC_HAVE_AVX2)
const KernelTable* avx2_table_compiled();
#endif

const KernelTable* avx2_table() {
#if defined(KOOPMPC_HAVE_AVX2)
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported ? avx2_table_compiled() : nullptr;
#else
    return nullptr;
#endif
}

namespace {

const KernelTable* best_available() {
    if (const KernelTable* t = avx2_table()) return t;
    return &scalar_table();
}

const KernelTable* resolve(std::string_view name) {
    if (name == "scalar") return &scalar_table();
    if (name == "avx2") return avx2_table();
    if (name == "auto" || name.empty()) return best_available();
    return nullptr;
}

std::atomic<const KernelTable*>& slot() {
    static std::atomic<const KernelTable*> table{best_available()};
    return table;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

bool select(std::string_view name) {
    const KernelTable* t = resolve(name);
    if (!t) return false;
    slot().store(t, std::memory_order_release);
    return true;
}

}  // namespace koopmpc::kernels
