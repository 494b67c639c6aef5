#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace stcnet {

/// Error type thrown by every stcnet precondition and runtime check.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

[[noreturn]] inline void throw_check_failure(const char* expr, const std::string& msg) {
    std::ostringstream os;
    os << "check failed: " << expr;
    if (!msg.empty()) os << " (" << msg << ")";
    throw Error(os.str());
}

} // namespace detail

} // namespace stcnet

#define STC_CHECK(cond, msg)                                                   \
    do {                                                                       \
        if (!(cond)) {                                                         \
            std::ostringstream stc_check_os_;                                  \
            stc_check_os_ << msg;                                              \
            ::stcnet::detail::throw_check_failure(#cond, stc_check_os_.str()); \
        }                                                                      \
    } while (0)

#define STC_FAIL(msg)                                    \
    do {                                                 \
        std::ostringstream stc_fail_os_;                 \
        stc_fail_os_ << msg;                             \
        throw ::stcnet::Error(stc_fail_os_.str());       \
    } while (0)
