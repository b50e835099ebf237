#include "fslpn/select.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace fslpn {

double mutual_information(const double* values, std::size_t stride, std::size_t rows,
                          const std::vector<int>& labels, int bins) {
    double lo = values[0], hi = values[0];
    for (std::size_t r = 1; r < rows; ++r) {
        const double v = values[r * stride];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi <= lo) return 0.0;  // constant feature carries no information

    const double width = (hi - lo) / bins;
    std::vector<double> joint(static_cast<std::size_t>(bins) * 2, 0.0);
    std::vector<double> px(bins, 0.0);
    double py[2] = {0.0, 0.0};
    for (std::size_t r = 0; r < rows; ++r) {
        int b = static_cast<int>((values[r * stride] - lo) / width);
        if (b >= bins) b = bins - 1;
        const int y = labels[r] ? 1 : 0;
        joint[static_cast<std::size_t>(b) * 2 + y] += 1.0;
        px[b] += 1.0;
        py[y] += 1.0;
    }
    const double n = static_cast<double>(rows);
    double mi = 0.0;
    for (int b = 0; b < bins; ++b) {
        for (int y = 0; y < 2; ++y) {
            const double pxy = joint[static_cast<std::size_t>(b) * 2 + y] / n;
            if (pxy <= 0.0) continue;
            mi += pxy * std::log(pxy * n * n / (px[b] * py[y]));
        }
    }
    return mi < 0.0 ? 0.0 : mi;
}

double pearson_correlation(const double* a, const double* b, std::size_t stride, std::size_t rows) {
    double ma = 0.0, mb = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        ma += a[r * stride];
        mb += b[r * stride];
    }
    ma /= rows;
    mb /= rows;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const double da = a[r * stride] - ma;
        const double db = b[r * stride] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) return 0.0;  // constant column
    return sab / std::sqrt(saa * sbb);
}

std::vector<std::size_t> FeatureSelectionReport::kept_indices() const {
    std::vector<std::size_t> kept;
    for (const auto& d : decisions)
        if (d.kept) kept.push_back(d.index);
    std::sort(kept.begin(), kept.end());
    return kept;
}

std::string FeatureSelectionReport::to_text() const {
    std::ostringstream os;
    os << "# feature selection report\n";
    os << "# features=" << feature_count << " target=" << target_count
       << " correlation_threshold=" << correlation_threshold << "\n";
    os << "# name\tmis\tdecision\treason\n";
    for (const auto& d : decisions) {
        os << d.name << "\t" << std::setprecision(6) << std::fixed << d.mis << "\t"
           << (d.kept ? "kept" : "dropped") << "\t" << d.reason << "\n";
    }
    return os.str();
}

FeatureSelectionReport sulov_select(const Dataset& ds, const SelectConfig& cfg) {
    if (ds.rows == 0) throw_data("sulov_select: empty dataset");
    const std::size_t F = ds.cols;
    std::size_t target = cfg.target_count;
    if (target == 0 || target > F) {
        if (cfg.target_count > F)
            throw_contract("sulov_select: target count " + std::to_string(cfg.target_count) +
                           " exceeds feature count " + std::to_string(F));
        throw_contract("sulov_select: target count must be in [1, feature count]");
    }

    FeatureSelectionReport report;
    report.feature_count = F;
    report.target_count = target;
    report.correlation_threshold = cfg.correlation_threshold;
    report.decisions.resize(F);
    report.correlation.assign(F * F, 0.0);

    std::vector<bool> constant(F, false);
    for (std::size_t i = 0; i < F; ++i) {
        auto& d = report.decisions[i];
        d.name = ds.feature_names[i];
        d.index = i;
        d.mis = mutual_information(ds.values.data() + i, F, ds.rows, ds.labels,
                                   cfg.histogram_bins);
        double lo = ds.values[i], hi = ds.values[i];
        for (std::size_t r = 1; r < ds.rows; ++r) {
            lo = std::min(lo, ds.values[r * F + i]);
            hi = std::max(hi, ds.values[r * F + i]);
        }
        constant[i] = hi <= lo;
    }
    for (std::size_t i = 0; i < F; ++i) {
        report.correlation[i * F + i] = constant[i] ? 0.0 : 1.0;
        for (std::size_t j = i + 1; j < F; ++j) {
            const double c =
                pearson_correlation(ds.values.data() + i, ds.values.data() + j, F, ds.rows);
            report.correlation[i * F + j] = c;
            report.correlation[j * F + i] = c;
        }
    }

    // Constant features go first, with an explicit reason.
    std::vector<bool> alive(F, true);
    for (std::size_t i = 0; i < F; ++i) {
        if (constant[i]) {
            alive[i] = false;
            report.decisions[i].reason = "zero information (constant feature)";
        }
    }

    // Correlated pairs, strongest first; the lower-MIS member of each alive
    // pair is dropped. Ties on MIS keep the lower original column index.
    struct Pair {
        double abs_corr;
        std::size_t i, j;
    };
    std::vector<Pair> pairs;
    for (std::size_t i = 0; i < F; ++i)
        for (std::size_t j = i + 1; j < F; ++j)
            if (std::fabs(report.corr(i, j)) > cfg.correlation_threshold)
                pairs.push_back({std::fabs(report.corr(i, j)), i, j});
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.abs_corr != b.abs_corr) return a.abs_corr > b.abs_corr;
        if (a.i != b.i) return a.i < b.i;
        return a.j < b.j;
    });
    for (const auto& p : pairs) {
        if (!alive[p.i] || !alive[p.j]) continue;
        const auto& di = report.decisions[p.i];
        const auto& dj = report.decisions[p.j];
        std::size_t drop =
            (di.mis < dj.mis) ? p.i : (dj.mis < di.mis) ? p.j : std::max(p.i, p.j);
        std::size_t keep = drop == p.i ? p.j : p.i;
        alive[drop] = false;
        std::ostringstream why;
        why << "correlated with " << report.decisions[keep].name << " (|r|=" << std::setprecision(3)
            << std::fixed << p.abs_corr << "), lower MIS";
        report.decisions[drop].reason = why.str();
    }

    // Rank survivors by MIS (ties by original column index) and cut.
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < F; ++i)
        if (alive[i]) order.push_back(i);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (report.decisions[a].mis != report.decisions[b].mis)
            return report.decisions[a].mis > report.decisions[b].mis;
        return a < b;
    });
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        auto& d = report.decisions[order[rank]];
        if (rank < target) {
            d.kept = true;
            d.reason = "selected (MIS rank " + std::to_string(rank + 1) + ")";
        } else {
            d.reason = "below MIS rank cutoff";
        }
    }

    // If the pair pass dropped too many, revive by MIS to honor the target
    // count; these kept features may violate the correlation constraint and
    // say so.
    std::size_t kept_n = std::min(order.size(), target);
    if (kept_n < target) {
        std::vector<std::size_t> dropped;
        for (std::size_t i = 0; i < F; ++i)
            if (!alive[i]) dropped.push_back(i);
        std::sort(dropped.begin(), dropped.end(), [&](std::size_t a, std::size_t b) {
            if (report.decisions[a].mis != report.decisions[b].mis)
                return report.decisions[a].mis > report.decisions[b].mis;
            return a < b;
        });
        for (std::size_t i : dropped) {
            if (kept_n == target) break;
            report.decisions[i].kept = true;
            report.decisions[i].reason += "; revived to meet target count";
            ++kept_n;
        }
    }
    return report;
}

}  // namespace fslpn
