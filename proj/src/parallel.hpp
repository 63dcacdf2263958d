#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>

namespace xlr::detail {

// Runs body(i) for i in [0, n) on the OpenMP team and rethrows the first
// exception after the loop finishes.
template <typename Body>
void parallel_for(std::size_t n, Body&& body)
{
    std::exception_ptr error;
    const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t i = 0; i < count; ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(xlr_parallel_for_error)
            if (!error) {
                error = std::current_exception();
            }
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

}  // namespace xlr::detail
