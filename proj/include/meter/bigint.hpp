#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <string>

namespace meter {

using BigInt = boost::multiprecision::cpp_int;

/// Natural log of a positive integer of any size. Values past the double
/// range are shifted down first so the mantissa keeps ~53 bits.
double log_of(const BigInt& value);

BigInt ipow(unsigned base, unsigned exponent);

/// Exact binomial coefficient; zero when k > n.
BigInt binomial(unsigned n, unsigned k);

inline std::string to_decimal(const BigInt& value) { return value.str(); }

} // namespace meter
