// Copyright (C) 2026 the mrpweights authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#ifndef MRPW_PARALLEL_HPP_
#define MRPW_PARALLEL_HPP_

#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace mrpw {

// Run fn(0..n_tasks-1) across up to n_threads workers with static
// round-robin assignment. Tasks must write disjoint state; results are then
// independent of the thread count. The first exception is rethrown after all
// workers join. n_threads <= 0 means hardware concurrency.
inline void parallel_for(int n_tasks, int n_threads, const std::function<void(int)>& fn) {
    if (n_tasks <= 0) return;
    if (n_threads <= 0) n_threads = static_cast<int>(std::thread::hardware_concurrency());
    if (n_threads < 1) n_threads = 1;
    if (n_threads > n_tasks) n_threads = n_tasks;

    if (n_threads == 1) {
        for (int i = 0; i < n_tasks; ++i) fn(i);
        return;
    }

    std::vector<std::exception_ptr> errors(n_threads);
    std::vector<std::thread> workers;
    workers.reserve(n_threads);
    for (int w = 0; w < n_threads; ++w) {
        workers.emplace_back([&, w]() {
            try {
                for (int i = w; i < n_tasks; i += n_threads) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace mrpw

#endif  // MRPW_PARALLEL_HPP_
