#pragma once

// Test-only oracles, independent of the library's computation paths.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <vector>

namespace oracle {

// central finite difference of f at x[i], step h
inline double central_diff(const std::function<double()>& f, double& slot, double h) {
    const double saved = slot;
    slot = saved + h;
    const double up = f();
    slot = saved - h;
    const double down = f();
    slot = saved;
    return (up - down) / (2.0 * h);
}

// relative error measure used by every gradient check
inline double rel_err(double analytic, double numeric) {
    const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / scale;
}

// cross entropy at extended precision by direct summation (no max shift)
inline double cross_entropy_longdouble(const std::vector<double>& logits, std::size_t target) {
    long double z = 0.0L;
    for (double l : logits) z += std::exp(static_cast<long double>(l));
    const long double loss = std::log(z) - static_cast<long double>(logits[target]);
    return static_cast<double>(loss);
}

// exact two-sided Student-t p-value for integer dof via the classic
// trigonometric closed forms (finite sums, no continued fraction)
inline double t_two_sided_p_exact(double t, std::size_t dof) {
    const long double theta = std::atan(std::abs((long double)t) / std::sqrt((long double)dof));
    long double a; // P(|T| <= t)
    if (dof % 2 == 1) {
        long double series = 0.0L;
        if (dof >= 3) {
            long double term = std::cos(theta); // j = 0 term
            series = term;
            for (std::size_t j = 1; 2 * j + 1 <= dof - 2; ++j) {
                term *= (2.0L * j) / (2.0L * j + 1.0L) * std::cos(theta) * std::cos(theta);
                series += term;
            }
        }
        a = 2.0L / std::numbers::pi_v<long double> * (theta + std::sin(theta) * series);
    } else {
        long double term = 1.0L;
        long double series = term;
        for (std::size_t j = 1; 2 * j <= dof - 2; ++j) {
            term *= (2.0L * j - 1.0L) / (2.0L * j) * std::cos(theta) * std::cos(theta);
            series += term;
        }
        a = std::sin(theta) * series;
    }
    const long double p = 1.0L - a;
    return std::max(0.0, std::min(1.0, static_cast<double>(p)));
}

// ---- brute-force ROUGE ----

inline std::vector<std::string> split_lower(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(char(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

inline double brute_f1(double overlap, double nc, double nr) {
    if (nc == 0.0 || nr == 0.0) return 0.0;
    const double p = overlap / nc, r = overlap / nr;
    return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

// the empty-text convention applies to the token lists, not the gram sets
inline bool empty_convention(const std::vector<std::string>& ct,
                             const std::vector<std::string>& rt, double& out) {
    if (ct.empty() && rt.empty()) {
        out = 1.0;
        return true;
    }
    if (ct.empty() || rt.empty()) {
        out = 0.0;
        return true;
    }
    return false;
}

inline std::map<std::string, int> gram_counts(const std::vector<std::string>& toks,
                                              std::size_t n) {
    std::map<std::string, int> counts;
    if (toks.size() < n) return counts;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
        std::string key;
        for (std::size_t j = 0; j < n; ++j) key += toks[i + j] + "\x1f";
        ++counts[key];
    }
    return counts;
}

inline double brute_rouge_n(const std::string& cand, const std::string& ref, std::size_t n) {
    double conv;
    if (empty_convention(split_lower(cand), split_lower(ref), conv)) return conv;
    const auto cc = gram_counts(split_lower(cand), n);
    const auto rc = gram_counts(split_lower(ref), n);
    double overlap = 0.0, nc = 0.0, nr = 0.0;
    for (const auto& [g, c] : cc) nc += c;
    for (const auto& [g, c] : rc) nr += c;
    for (const auto& [g, c] : cc) {
        const auto it = rc.find(g);
        if (it != rc.end()) overlap += std::min(c, it->second);
    }
    return brute_f1(overlap, nc, nr);
}

// recursive memoized LCS, deliberately a different algorithmic route from an
// iterative rolling-array implementation
inline int lcs_memo(const std::vector<std::string>& a, const std::vector<std::string>& b,
                    std::size_t i, std::size_t j, std::vector<int>& memo) {
    if (i == a.size() || j == b.size()) return 0;
    int& slot = memo[i * b.size() + j];
    if (slot >= 0) return slot;
    if (a[i] == b[j])
        slot = 1 + lcs_memo(a, b, i + 1, j + 1, memo);
    else
        slot = std::max(lcs_memo(a, b, i + 1, j, memo), lcs_memo(a, b, i, j + 1, memo));
    return slot;
}

inline double brute_rouge_l(const std::string& cand, const std::string& ref) {
    const auto ct = split_lower(cand);
    const auto rt = split_lower(ref);
    double conv;
    if (empty_convention(ct, rt, conv)) return conv;
    std::vector<int> memo(ct.size() * rt.size(), -1);
    const double lcs = lcs_memo(ct, rt, 0, 0, memo);
    return brute_f1(lcs, double(ct.size()), double(rt.size()));
}

} // namespace oracle
