// Copyright Contributors to the scat-occ Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace scat {

// Bad configs, bad shapes, violated preconditions. Maps to CLI exit code 1.
class ValidationError : public std::runtime_error {
  public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf, tolerance breaches, diverged runs. Maps to CLI exit code 2.
class NumericalError : public std::runtime_error {
  public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
template <typename... Args>
std::string format_check_msg(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}
} // namespace detail

} // namespace scat

#define SCAT_CHECK(cond, ...)                                                                      \
    do {                                                                                           \
        if (!(cond)) {                                                                             \
            throw ::scat::ValidationError(::scat::detail::format_check_msg(__VA_ARGS__));          \
        }                                                                                          \
    } while (0)

#define SCAT_NUMERIC_CHECK(cond, ...)                                                              \
    do {                                                                                           \
        if (!(cond)) {                                                                             \
            throw ::scat::NumericalError(::scat::detail::format_check_msg(__VA_ARGS__));           \
        }                                                                                          \
    } while (0)
