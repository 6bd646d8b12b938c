#pragma once

// Closed-set and open-set attribution metrics.

#include <string>
#include <vector>

#include "attrib/family.hpp"
#include "attrib/rfc.hpp"

namespace attrib {

struct EvalRecord {
    std::string true_class;
    Family true_family = Family::Real;
    bool seen = true;
    AttributionResult prediction;

    // Unseen score: larger means more likely unseen.
    double score() const { return prediction.d_min; }
};

// Fraction of seen-model records attributed to their own class.
double accuracy(const std::vector<EvalRecord>& records);

// Rank AUC of the unseen score (unseen = positive), ties counted as 1/2.
double auc(const std::vector<EvalRecord>& records);

// Area under correct-classification rate against false-positive rate as
// the acceptance threshold sweeps every distinct score.
double oscr(const std::vector<EvalRecord>& records);

// Normalized mutual information with the sqrt(H(P) H(T)) normalizer.
// Two single-cluster labelings score 1; exactly one scores 0.
double nmi(const std::vector<std::string>& pred, const std::vector<std::string>& truth);

// Adjusted Rand index from the contingency table.
double ari(const std::vector<std::string>& pred, const std::vector<std::string>& truth);

// Fraction of unseen-model records rejected and routed to the right family.
double acc_u(const std::vector<EvalRecord>& records);

std::vector<std::string> predicted_labels(const std::vector<EvalRecord>& records);
std::vector<std::string> true_labels(const std::vector<EvalRecord>& records);

}  // namespace attrib
