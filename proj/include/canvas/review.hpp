#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace canvas {

enum class ReviewTask { Background, Aspect };

inline const char* review_task_name(ReviewTask t) {
    return t == ReviewTask::Background ? "background" : "aspect";
}

inline ReviewTask parse_review_task(const std::string& s) {
    if (s == "background") return ReviewTask::Background;
    if (s == "aspect") return ReviewTask::Aspect;
    throw std::invalid_argument("unknown review task: " + s);
}

/// Question order is the template order; answers align by index.
inline const std::vector<std::string>& template_questions(ReviewTask t) {
    static const std::vector<std::string> background = {"product", "background"};
    static const std::vector<std::string> aspect = {"human_eligibility",
                                                    "solid_background_eligibility",
                                                    "band_defect"};
    return t == ReviewTask::Background ? background : aspect;
}

struct RaterRecord {
    std::string image_id;
    std::string rater_id;
    ReviewTask task = ReviewTask::Background;
    std::vector<bool> defect;

    void require_valid() const {
        if (defect.size() != template_questions(task).size())
            throw std::invalid_argument("RaterRecord: answer count does not match template");
    }
};

struct ReviewOutcome {
    std::string image_id;
    ReviewTask task = ReviewTask::Background;
    std::vector<bool> defect;
    bool overall_defective = false;
};

/// Either-rater rule: a question is defective if either rater flags it, and
/// the image is defective if any aggregated question is.
inline ReviewOutcome aggregate_review(const RaterRecord& a, const RaterRecord& b) {
    a.require_valid();
    b.require_valid();
    if (a.task != b.task) throw std::invalid_argument("aggregate_review: mismatched templates");
    if (a.image_id != b.image_id)
        throw std::invalid_argument("aggregate_review: records for different images");
    ReviewOutcome out;
    out.image_id = a.image_id;
    out.task = a.task;
    out.defect.resize(a.defect.size());
    for (std::size_t q = 0; q < a.defect.size(); ++q) {
        out.defect[q] = a.defect[q] || b.defect[q];
        out.overall_defective = out.overall_defective || out.defect[q];
    }
    return out;
}

inline ReviewOutcome aggregate_review(const std::vector<RaterRecord>& records) {
    if (records.size() != 2)
        throw std::invalid_argument("aggregate_review: exactly two raters per image");
    return aggregate_review(records[0], records[1]);
}

struct RateReport {
    ReviewTask task = ReviewTask::Background;
    std::vector<double> per_question_no_defect;
    double overall_no_defect = 0.0;
    std::size_t count = 0;
};

inline RateReport no_defect_rates(const std::vector<ReviewOutcome>& outcomes) {
    if (outcomes.empty()) throw std::invalid_argument("no_defect_rates: empty outcome list");
    const ReviewTask task = outcomes[0].task;
    const std::size_t nq = template_questions(task).size();
    std::vector<std::size_t> clean(nq, 0);
    std::size_t overall_clean = 0;
    for (const auto& o : outcomes) {
        if (o.task != task || o.defect.size() != nq)
            throw std::invalid_argument("no_defect_rates: mixed templates");
        for (std::size_t q = 0; q < nq; ++q) clean[q] += !o.defect[q];
        overall_clean += !o.overall_defective;
    }
    RateReport r;
    r.task = task;
    r.count = outcomes.size();
    r.per_question_no_defect.resize(nq);
    for (std::size_t q = 0; q < nq; ++q)
        r.per_question_no_defect[q] = double(clean[q]) / double(outcomes.size());
    r.overall_no_defect = double(overall_clean) / double(outcomes.size());

    const double min_q =
        *std::min_element(r.per_question_no_defect.begin(), r.per_question_no_defect.end());
    if (r.overall_no_defect > min_q + 1e-12)
        throw std::logic_error("no_defect_rates: overall rate above a per-question rate");
    return r;
}

/// Validates externally reported rates (e.g. published tables) against the
/// defining inequality of either-rater aggregation.
inline RateReport ingest_rate_row(ReviewTask task, const std::vector<double>& per_question,
                                  double overall, std::size_t count) {
    if (per_question.size() != template_questions(task).size())
        throw std::invalid_argument("ingest_rate_row: rate count does not match template");
    for (double r : per_question)
        if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("ingest_rate_row: rate range");
    if (!(overall >= 0.0 && overall <= 1.0))
        throw std::invalid_argument("ingest_rate_row: rate range");
    const double min_q = *std::min_element(per_question.begin(), per_question.end());
    if (overall > min_q + 1e-12)
        throw std::invalid_argument("ingest_rate_row: overall exceeds a per-question rate");
    RateReport r;
    r.task = task;
    r.per_question_no_defect = per_question;
    r.overall_no_defect = overall;
    r.count = count;
    return r;
}

}  // namespace canvas
