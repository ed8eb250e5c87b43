// Straightforward reference implementations used to cross-check the library.
// They work on plain ints and doubles and share no code with src/.
#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <vector>

namespace oracle {

inline double kappa_quadratic(const std::vector<int>& pred, const std::vector<int>& gold) {
    const int k = 5;
    const double n = static_cast<double>(gold.size());
    double obs[5][5] = {};
    double row[5] = {}, col[5] = {};
    for (std::size_t u = 0; u < gold.size(); ++u) {
        obs[gold[u] - 1][pred[u] - 1] += 1.0 / n;
        row[gold[u] - 1] += 1.0 / n;
        col[pred[u] - 1] += 1.0 / n;
    }
    double num = 0, den = 0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            const double w = double((i - j) * (i - j)) / double((k - 1) * (k - 1));
            num += w * obs[i][j];
            den += w * row[i] * col[j];
        }
    if (den == 0.0) return num == 0.0 ? 1.0 : 0.0;
    return 1.0 - num / den;
}

struct PerClass {
    double precision[5] = {};
    double recall[5] = {};
    double f1[5] = {};
};

inline PerClass per_class(const std::vector<int>& pred, const std::vector<int>& gold) {
    PerClass out;
    for (int c = 1; c <= 5; ++c) {
        int tp = 0, predicted = 0, actual = 0;
        for (std::size_t u = 0; u < gold.size(); ++u) {
            if (pred[u] == c && gold[u] == c) ++tp;
            if (pred[u] == c) ++predicted;
            if (gold[u] == c) ++actual;
        }
        const double p = predicted ? double(tp) / predicted : 0.0;
        const double r = actual ? double(tp) / actual : 0.0;
        out.precision[c - 1] = p;
        out.recall[c - 1] = r;
        out.f1[c - 1] = (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
    }
    return out;
}

inline double macro_precision(const std::vector<int>& pred, const std::vector<int>& gold) {
    const auto pc = per_class(pred, gold);
    double s = 0;
    for (double v : pc.precision) s += v;
    return s / 5.0;
}

inline double macro_f1(const std::vector<int>& pred, const std::vector<int>& gold) {
    const auto pc = per_class(pred, gold);
    double s = 0;
    for (double v : pc.f1) s += v;
    return s / 5.0;
}

inline double mae(const std::vector<int>& pred, const std::vector<int>& gold) {
    double s = 0;
    for (std::size_t u = 0; u < gold.size(); ++u) s += std::abs(pred[u] - gold[u]);
    return s / double(gold.size());
}

inline std::optional<double> pearson(const std::vector<int>& x, const std::vector<int>& y) {
    const double n = double(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0 || syy == 0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

inline std::optional<double> cwa(const std::vector<int>& pred, const std::vector<int>& gold,
                                 const std::vector<double>& conf) {
    double right = 0, all = 0;
    for (std::size_t u = 0; u < gold.size(); ++u) {
        all += conf[u];
        if (pred[u] == gold[u]) right += conf[u];
    }
    if (all == 0) return std::nullopt;
    return right / all;
}

inline double entropy(const std::vector<int>& labels) {
    std::map<int, int> counts;
    for (int l : labels) ++counts[l];
    double h = 0;
    for (const auto& [l, c] : counts) {
        const double p = double(c) / double(labels.size());
        h -= p * std::log(p);
    }
    return h;
}

inline double population_sd(const std::vector<double>& xs) {
    double m = 0;
    for (double x : xs) m += x;
    m /= double(xs.size());
    double v = 0;
    for (double x : xs) v += (x - m) * (x - m);
    return std::sqrt(v / double(xs.size()));
}

struct Point {
    double kw;
    double effort;
};

// Indices of points no other point dominates (maximise kw, minimise effort).
inline std::vector<std::size_t> nondominated(const std::vector<Point>& pts) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < pts.size() && !dominated; ++j) {
            if (i == j) continue;
            const bool ge = pts[j].kw >= pts[i].kw && pts[j].effort <= pts[i].effort;
            const bool gt = pts[j].kw > pts[i].kw || pts[j].effort < pts[i].effort;
            dominated = ge && gt;
        }
        if (!dominated) out.push_back(i);
    }
    return out;
}

}  // namespace oracle
