#pragma once

// Deliberately naive metric implementations used as test oracles, plus
// random fixture generators shared by the unit and acceptance suites.

#include <cmath>
#include <cstddef>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "policylens/detail/rng.hpp"
#include "policylens/metrics.hpp"

namespace policylens::testing {

inline double naive_div(double a, double b) { return b == 0.0 ? 0.0 : a / b; }

/// Macro presence/absence P, R, F1 straight from boolean columns.
inline prf naive_macro_prf(std::vector<bool> const& predicted, std::vector<bool> const& truth)
{
    double dir_p[2];
    double dir_r[2];
    double dir_f[2];
    for (int dir = 0; dir < 2; ++dir) {
        bool const positive = dir == 0;
        double predicted_pos = 0;
        double true_pos = 0;
        double both = 0;
        for (std::size_t i = 0; i < predicted.size(); ++i) {
            if (predicted[i] == positive) {
                predicted_pos += 1;
            }
            if (truth[i] == positive) {
                true_pos += 1;
            }
            if (predicted[i] == positive && truth[i] == positive) {
                both += 1;
            }
        }
        dir_p[dir] = naive_div(both, predicted_pos);
        dir_r[dir] = naive_div(both, true_pos);
        dir_f[dir] = naive_div(2 * dir_p[dir] * dir_r[dir], dir_p[dir] + dir_r[dir]);
    }
    return {(dir_p[0] + dir_p[1]) / 2, (dir_r[0] + dir_r[1]) / 2, (dir_f[0] + dir_f[1]) / 2};
}

inline double naive_top_k(std::vector<ranked_prediction> const& preds, std::size_t k)
{
    if (preds.empty()) {
        return 0.0;
    }
    double hits = 0;
    for (auto const& p : preds) {
        bool hit = false;
        for (std::size_t i = 0; i < p.candidates.size(); ++i) {
            for (auto r : p.relevant) {
                if (i < k && p.candidates[i] == r) {
                    hit = true;
                }
            }
        }
        hits += hit ? 1 : 0;
    }
    return hits / static_cast<double>(preds.size());
}

inline double naive_ndcg(ranked_prediction const& p, std::size_t k)
{
    std::vector<double> rel;
    for (auto c : p.candidates) {
        rel.push_back(p.relevant.count(c) ? 1.0 : 0.0);
    }
    double dcg = 0;
    for (std::size_t i = 1; i <= k && i <= rel.size(); ++i) {
        dcg += rel[i - 1] / std::log2(static_cast<double>(i) + 1.0);
    }
    std::vector<double> ideal(p.relevant.size(), 1.0);
    double idcg = 0;
    for (std::size_t i = 1; i <= k && i <= ideal.size(); ++i) {
        idcg += ideal[i - 1] / std::log2(static_cast<double>(i) + 1.0);
    }
    return naive_div(dcg, idcg);
}

inline double naive_ap(ranked_prediction const& p)
{
    if (p.relevant.empty()) {
        return 0.0;
    }
    double sum = 0;
    for (auto r : p.relevant) {
        for (std::size_t rank = 0; rank < p.candidates.size(); ++rank) {
            if (p.candidates[rank] != r) {
                continue;
            }
            double rel_in_prefix = 0;
            for (std::size_t j = 0; j <= rank; ++j) {
                rel_in_prefix += p.relevant.count(p.candidates[j]) ? 1 : 0;
            }
            sum += rel_in_prefix / static_cast<double>(rank + 1);
        }
    }
    return sum / static_cast<double>(p.relevant.size());
}

inline double naive_map(std::vector<ranked_prediction> const& preds)
{
    double sum = 0;
    double n = 0;
    for (auto const& p : preds) {
        if (!p.relevant.empty()) {
            sum += naive_ap(p);
            n += 1;
        }
    }
    return naive_div(sum, n);
}

/// Bhattacharyya form, independent of the library's norm form.
inline double naive_hellinger(std::vector<double> const& p, std::vector<double> const& q)
{
    double bc = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        bc += std::sqrt(p[i]) * std::sqrt(q[i]);
    }
    return std::sqrt(std::max(0.0, 1.0 - bc));
}

inline double naive_kappa(std::vector<std::string> const& a, std::vector<std::string> const& b,
                          std::vector<std::string> const& universe)
{
    auto const L = universe.size();
    std::vector<std::vector<double>> table(L, std::vector<double>(L, 0.0));
    for (std::size_t i = 0; i < a.size(); ++i) {
        std::size_t ia = 0;
        std::size_t ib = 0;
        for (std::size_t l = 0; l < L; ++l) {
            if (universe[l] == a[i]) {
                ia = l;
            }
            if (universe[l] == b[i]) {
                ib = l;
            }
        }
        table[ia][ib] += 1;
    }
    auto const n = static_cast<double>(a.size());
    double po = 0;
    double pe = 0;
    for (std::size_t i = 0; i < L; ++i) {
        po += table[i][i] / n;
        double row = 0;
        double col = 0;
        for (std::size_t j = 0; j < L; ++j) {
            row += table[i][j];
            col += table[j][i];
        }
        pe += (row / n) * (col / n);
    }
    if (pe == 1.0) {
        return po == 1.0 ? 1.0 : 0.0;
    }
    return (po - pe) / (1 - pe);
}

// ---------------------------------------------------------------------------
// Random fixtures

inline ranked_prediction random_ranking(std::mt19937_64& gen)
{
    std::size_t universe = 1 + detail::uniform_below(gen, 12);
    std::vector<std::size_t> ids(universe);
    for (std::size_t i = 0; i < universe; ++i) {
        ids[i] = i;
    }
    detail::shuffle(ids, gen);
    ranked_prediction p;
    p.candidates.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(1 + detail::uniform_below(gen, universe)));
    for (std::size_t i = 0; i < universe; ++i) {
        if (detail::uniform_unit(gen) < 0.3) {
            p.relevant.insert(i);
        }
    }
    return p;
}

inline std::vector<double> random_distribution(std::mt19937_64& gen, std::size_t n, bool sparse)
{
    std::vector<double> p(n);
    double sum = 0;
    for (auto& x : p) {
        x = sparse && detail::uniform_unit(gen) < 0.3 ? 0.0 : detail::uniform_unit(gen);
        sum += x;
    }
    if (sum == 0.0) {
        p[0] = sum = 1.0;
    }
    for (auto& x : p) {
        x /= sum;
    }
    return p;
}

}  // namespace policylens::testing
