#include "attrib/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "attrib/error.hpp"

namespace attrib {

namespace {

void split_scores(const std::vector<EvalRecord>& records, std::vector<double>& seen, std::vector<double>& unseen,
                  const char* what) {
    for (const auto& r : records) (r.seen ? seen : unseen).push_back(r.score());
    if (seen.empty() || unseen.empty())
        throw UsageError(std::string(what) + " needs both seen and unseen records");
}

struct Contingency {
    std::map<std::pair<std::size_t, std::size_t>, double> cells;
    std::vector<double> rows, cols;
    double n = 0;
};

Contingency contingency(const std::vector<std::string>& a, const std::vector<std::string>& b, const char* what) {
    if (a.size() != b.size())
        throw DimensionError(std::string(what) + ": label lists differ in length (" + std::to_string(a.size()) +
                             " vs " + std::to_string(b.size()) + ")");
    if (a.empty()) throw UsageError(std::string(what) + " of empty labelings");
    std::map<std::string, std::size_t> ia, ib;
    for (const auto& s : a) ia.emplace(s, ia.size());
    for (const auto& s : b) ib.emplace(s, ib.size());
    Contingency c;
    c.rows.assign(ia.size(), 0.0);
    c.cols.assign(ib.size(), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const std::size_t r = ia.at(a[i]), k = ib.at(b[i]);
        c.cells[{r, k}] += 1.0;
        c.rows[r] += 1.0;
        c.cols[k] += 1.0;
    }
    c.n = static_cast<double>(a.size());
    return c;
}

double entropy(const std::vector<double>& counts, double n) {
    double h = 0.0;
    for (double c : counts)
        if (c > 0) h -= (c / n) * std::log(c / n);
    return h;
}

double comb2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

double accuracy(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw UsageError("accuracy of an empty record set");
    std::size_t correct = 0;
    for (const auto& r : records) {
        if (!r.seen) throw UsageError("accuracy expects seen-model records only, got '" + r.true_class + "'");
        if (r.prediction.seen() && r.prediction.class_id == r.true_class) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(records.size());
}

double auc(const std::vector<EvalRecord>& records) {
    std::vector<double> seen, unseen;
    split_scores(records, seen, unseen, "auc");
    // Midranks over the pooled scores.
    std::vector<std::pair<double, bool>> all;
    for (double s : seen) all.emplace_back(s, false);
    for (double s : unseen) all.emplace_back(s, true);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        while (j < all.size() && all[j].first == all[i].first) ++j;
        const double mid = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (all[k].second) rank_sum += mid;
        i = j;
    }
    const double np = static_cast<double>(unseen.size()), nn = static_cast<double>(seen.size());
    return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double oscr(const std::vector<EvalRecord>& records) {
    std::vector<double> seen, unseen;
    split_scores(records, seen, unseen, "oscr");
    const double ns = static_cast<double>(seen.size()), nu = static_cast<double>(unseen.size());
    // Each record contributes to CCR (seen and argmin-correct) or FPR (unseen) once its score is accepted.
    std::vector<std::pair<double, int>> events;
    for (const auto& r : records) {
        if (r.seen)
            events.emplace_back(r.score(), r.prediction.class_id == r.true_class ? 1 : 0);
        else
            events.emplace_back(r.score(), 2);
    }
    std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    double area = 0.0, ccr = 0.0, fpr = 0.0;
    for (std::size_t i = 0; i < events.size();) {
        double dc = 0.0, df = 0.0;
        std::size_t j = i;
        for (; j < events.size() && events[j].first == events[i].first; ++j) {
            if (events[j].second == 1) dc += 1.0;
            if (events[j].second == 2) df += 1.0;
        }
        const double nc = ccr + dc / ns, nf = fpr + df / nu;
        area += (nf - fpr) * (ccr + nc) / 2.0;
        ccr = nc;
        fpr = nf;
        i = j;
    }
    return area;
}

double nmi(const std::vector<std::string>& pred, const std::vector<std::string>& truth) {
    const Contingency c = contingency(pred, truth, "nmi");
    const double hp = entropy(c.rows, c.n), ht = entropy(c.cols, c.n);
    if (c.rows.size() == 1 && c.cols.size() == 1) return 1.0;
    if (hp == 0.0 || ht == 0.0) return 0.0;
    double mi = 0.0;
    for (const auto& [rc, v] : c.cells) {
        const double pij = v / c.n;
        mi += pij * std::log(v * c.n / (c.rows[rc.first] * c.cols[rc.second]));
    }
    return std::clamp(mi / std::sqrt(hp * ht), 0.0, 1.0);
}

double ari(const std::vector<std::string>& pred, const std::vector<std::string>& truth) {
    const Contingency c = contingency(pred, truth, "ari");
    double index = 0.0, sa = 0.0, sb = 0.0;
    for (const auto& [_, v] : c.cells) index += comb2(v);
    for (double v : c.rows) sa += comb2(v);
    for (double v : c.cols) sb += comb2(v);
    const double expected = sa * sb / comb2(c.n);
    const double max_index = (sa + sb) / 2.0;
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

double acc_u(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw UsageError("acc_u of an empty record set");
    std::size_t correct = 0;
    for (const auto& r : records) {
        if (r.seen) throw UsageError("acc_u expects unseen-model records only, got '" + r.true_class + "'");
        const Decision want = r.true_family == Family::Gan ? Decision::UnseenGan : Decision::UnseenDm;
        if (r.true_family != Family::Real && r.prediction.decision == want) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(records.size());
}

std::vector<std::string> predicted_labels(const std::vector<EvalRecord>& records) {
    std::vector<std::string> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.prediction.label());
    return out;
}

std::vector<std::string> true_labels(const std::vector<EvalRecord>& records) {
    std::vector<std::string> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.true_class);
    return out;
}

}  // namespace attrib
