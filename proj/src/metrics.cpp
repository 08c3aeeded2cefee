#include "gridflow/metrics.hpp"

#include <cmath>

#include "gridflow/error.hpp"

namespace gridflow {

NmseStats nmse(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth, const Eigen::MatrixXd& column_mask)
{
    if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "nmse: prediction and truth shapes differ");
    }
    const bool masked = column_mask.size() > 0;
    if (masked && (column_mask.rows() != truth.rows() || column_mask.cols() != truth.cols())) {
        throw Error(ErrorCode::DimensionMismatch, "nmse: mask shape differs");
    }
    std::vector<double> values;
    for (Eigen::Index r = 0; r < truth.rows(); ++r) {
        double num = 0.0;
        double den = 0.0;
        for (Eigen::Index c = 0; c < truth.cols(); ++c) {
            if (masked && column_mask(r, c) == 0.0) continue;
            const double e = predicted(r, c) - truth(r, c);
            num += e * e;
            den += truth(r, c) * truth(r, c);
        }
        if (den > 0.0) values.push_back(num / den);
    }
    NmseStats s;
    s.count = static_cast<int>(values.size());
    if (values.empty()) return s;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    for (double v : values) s.std += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(s.std / static_cast<double>(values.size()));
    return s;
}

double dc_violation_rate(const Eigen::MatrixXd& flows, const Eigen::VectorXd& f_max)
{
    if (flows.cols() != f_max.size()) throw Error(ErrorCode::DimensionMismatch, "flow width differs from limits");
    if (flows.rows() == 0 || flows.cols() == 0) return 0.0;
    const Eigen::ArrayXXd excess =
        (flows.array().abs().rowwise() - f_max.transpose().array()).cwiseMax(0.0).rowwise() /
        f_max.transpose().array();
    return excess.sum() / static_cast<double>(flows.rows() * flows.cols());
}

double ac_violation_rate(const Eigen::MatrixXd& from_to, const Eigen::MatrixXd& to_from, const Eigen::VectorXd& s_max)
{
    if (from_to.rows() == 0 || from_to.cols() == 0) return 0.0;
    return 0.5 * (dc_violation_rate(from_to, s_max) + dc_violation_rate(to_from, s_max));
}

BinaryMetrics binary_metrics(const std::vector<char>& truth, const std::vector<char>& predicted)
{
    if (truth.size() != predicted.size()) throw Error(ErrorCode::DimensionMismatch, "label vectors differ in length");
    BinaryMetrics m;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] && predicted[i]) ++m.tp;
        if (!truth[i] && predicted[i]) ++m.fp;
        if (truth[i] && !predicted[i]) ++m.fn;
        if (!truth[i] && !predicted[i]) ++m.tn;
    }
    if (m.tp + m.fn == 0) throw Error(ErrorCode::NoBindingEvents, "no positive samples; recall is undefined");
    m.recall = static_cast<double>(m.tp) / (m.tp + m.fn);
    m.precision = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / (m.tp + m.fp) : 0.0;
    m.f1 = 2.0 * m.tp / (2.0 * m.tp + m.fp + m.fn);
    return m;
}

ClassificationSummary classification_summary(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& predicted)
{
    if (truth.rows() != predicted.rows() || truth.cols() != predicted.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "classification shapes differ");
    }
    ClassificationSummary s;
    int used = 0;
    for (Eigen::Index k = 0; k < truth.cols(); ++k) {
        std::vector<char> t(truth.rows());
        std::vector<char> p(truth.rows());
        for (Eigen::Index r = 0; r < truth.rows(); ++r) {
            t[r] = truth(r, k) > 0.5;
            p[r] = predicted(r, k) > 0.5;
        }
        try {
            const BinaryMetrics m = binary_metrics(t, p);
            s.macro_recall += m.recall;
            s.macro_f1 += m.f1;
            ++used;
            s.per_line.push_back(m);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NoBindingEvents) throw;
            s.skipped.push_back(static_cast<int>(k));
            BinaryMetrics m;
            for (std::size_t r = 0; r < t.size(); ++r) (p[r] ? m.fp : m.tn)++;
            s.per_line.push_back(m);
        }
    }
    if (used == 0) throw Error(ErrorCode::NoBindingEvents, "no evaluated line has a binding sample");
    s.macro_recall /= used;
    s.macro_f1 /= used;
    return s;
}

}  // namespace gridflow
