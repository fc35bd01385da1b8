#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

namespace prosemble {

namespace detail {

inline double log_choose(long long n, long long k) {
    return std::lgamma(static_cast<double>(n + 1)) - std::lgamma(static_cast<double>(k + 1)) -
           std::lgamma(static_cast<double>(n - k + 1));
}

}  // namespace detail

// Two-sided Fisher's exact test on a 2x2 table [[a, b], [c, d]]: the sum of
// hypergeometric probabilities (margins fixed) of every table at most as
// probable as the observed one, with a small relative slack absorbing
// floating-point noise in the comparison.
inline double fisher_exact_two_sided(const std::array<std::array<long long, 2>, 2>& table) {
    const long long a = table[0][0], b = table[0][1], c = table[1][0], d = table[1][1];
    if (a < 0 || b < 0 || c < 0 || d < 0) throw std::invalid_argument("fisher: negative count");
    const long long r1 = a + b, r2 = c + d, c1 = a + c, n = r1 + r2;
    if (n == 0) return 1.0;

    const auto log_prob = [&](long long x) {
        return detail::log_choose(r1, x) + detail::log_choose(r2, c1 - x) - detail::log_choose(n, c1);
    };
    const double observed = log_prob(a);
    const long long x_min = std::max<long long>(0, c1 - r2);
    const long long x_max = std::min(r1, c1);
    double p = 0.0;
    for (long long x = x_min; x <= x_max; ++x) {
        const double lp = log_prob(x);
        if (lp <= observed + 1e-12) p += std::exp(lp);
    }
    return std::min(p, 1.0);
}

// Two-sided exact binomial test by CDF doubling: 2·min(P(X ≤ k), P(X ≥ k)),
// capped at 1. Matches the symmetric construction exactly for p0 = 0.5.
inline double binomial_two_sided(long long k, long long n, double p0 = 0.5) {
    if (n < 0 || k < 0 || k > n) throw std::invalid_argument("binomial: need 0 <= k <= n");
    if (p0 <= 0.0 || p0 >= 1.0) throw std::invalid_argument("binomial: need 0 < p0 < 1");
    if (n == 0) return 1.0;
    const auto log_pmf = [&](long long i) {
        return detail::log_choose(n, i) + static_cast<double>(i) * std::log(p0) +
               static_cast<double>(n - i) * std::log1p(-p0);
    };
    double lower = 0.0;  // P(X <= k)
    for (long long i = 0; i <= k; ++i) lower += std::exp(log_pmf(i));
    double upper = 0.0;  // P(X >= k)
    for (long long i = k; i <= n; ++i) upper += std::exp(log_pmf(i));
    return std::min(1.0, 2.0 * std::min(lower, upper));
}

// Holm-Bonferroni step-down adjustment; result is in input order.
inline std::vector<double> holm_bonferroni(const std::vector<double>& p_values) {
    const std::size_t m = p_values.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return p_values[i] < p_values[j]; });
    std::vector<double> adjusted(m, 0.0);
    double running = 0.0;
    for (std::size_t rank = 0; rank < m; ++rank) {
        const double scaled = static_cast<double>(m - rank) * p_values[order[rank]];
        running = std::max(running, scaled);
        adjusted[order[rank]] = std::min(1.0, running);
    }
    return adjusted;
}

namespace detail {

inline double binomial_cdf(long long k, long long n, double p) {
    if (k < 0) return 0.0;
    if (k >= n) return 1.0;
    if (p <= 0.0) return 1.0;  // all mass at 0 <= k
    if (p >= 1.0) return 0.0;  // all mass at n > k
    double total = 0.0;
    for (long long i = 0; i <= k; ++i) {
        total += std::exp(log_choose(n, i) + static_cast<double>(i) * std::log(p) +
                          static_cast<double>(n - i) * std::log1p(-p));
    }
    return std::min(total, 1.0);
}

}  // namespace detail

// 95% confidence interval for a proportion. Default is the Wilson score
// interval; `exact` switches to Clopper-Pearson (binomial CDF inversion by
// bisection).
inline std::pair<double, double> proportion_ci_95(long long matched, long long considered, bool exact = false) {
    if (considered <= 0 || matched < 0 || matched > considered)
        throw std::invalid_argument("proportion_ci_95: need 0 <= matched <= considered, considered > 0");
    const double n = static_cast<double>(considered);
    const double phat = static_cast<double>(matched) / n;
    if (!exact) {
        const double z = 1.959963984540054;
        const double z2 = z * z;
        const double denom = 1.0 + z2 / n;
        const double center = (phat + z2 / (2.0 * n)) / denom;
        const double half = z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom;
        return {std::max(0.0, center - half), std::min(1.0, center + half)};
    }
    const auto invert = [&](auto cdf_target, double lo0, double hi0) {
        double lo = lo0, hi = hi0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (cdf_target(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return 0.5 * (lo + hi);
    };
    const double lo =
        matched == 0 ? 0.0 : invert([&](double p) { return 1.0 - detail::binomial_cdf(matched - 1, considered, p) < 0.025; },
                                    0.0, 1.0);
    const double hi =
        matched == considered
            ? 1.0
            : invert([&](double p) { return detail::binomial_cdf(matched, considered, p) >= 0.025; }, 0.0, 1.0);
    return {lo, hi};
}

// Fraction of the baseline→oracle accuracy gap closed by a criterion.
inline double gap_closure(double acc_criterion, double acc_baseline, double acc_oracle) {
    const double denom = acc_oracle - acc_baseline;
    if (denom <= 0.0) throw std::invalid_argument("gap_closure: oracle accuracy must exceed the baseline");
    return (acc_criterion - acc_baseline) / denom;
}

}  // namespace prosemble
