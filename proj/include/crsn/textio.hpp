#ifndef CRSN_TEXTIO_HPP
#define CRSN_TEXTIO_HPP

#include <string>
#include <string_view>

namespace crsn {

// Shortest round-trip decimal form of a double (std::to_chars), so CSV
// round trips are bit-exact and reruns are byte-identical.
std::string format_double(double v);

// Strict parse of a full token; rejects trailing junk. Returns false on
// failure. Non-finite values parse successfully and are rejected by callers
// that require finite data.
bool parse_double(std::string_view token, double& out);

bool parse_u64(std::string_view token, unsigned long long& out);

} // namespace crsn

#endif
