#include "meter/bigint.hpp"

#include "meter/error.hpp"

#include <cmath>
#include <numbers>

namespace meter {

double log_of(const BigInt& value) {
    if (value <= 0) {
        invalid("parameter_out_of_range", "log_of requires a positive integer");
    }
    const auto top_bit = boost::multiprecision::msb(value);
    if (top_bit < 1000) {
        return std::log(value.convert_to<double>());
    }
    const auto shift = top_bit - 62;
    const BigInt mantissa = value >> shift;
    return std::log(mantissa.convert_to<double>()) + static_cast<double>(shift) * std::numbers::ln2;
}

BigInt ipow(unsigned base, unsigned exponent) {
    return boost::multiprecision::pow(BigInt(base), exponent);
}

BigInt binomial(unsigned n, unsigned k) {
    if (k > n) {
        return 0;
    }
    k = std::min(k, n - k);
    BigInt result = 1;
    for (unsigned i = 1; i <= k; ++i) {
        // Each partial product is C(n−k+i, i), so the division is exact.
        result *= n - k + i;
        result /= i;
    }
    return result;
}

} // namespace meter
