#include <catch2/catch_amalgamated.hpp>

#include <stdexcept>
#include <vector>

#include "canvas/review.hpp"

using namespace canvas;

namespace {

RaterRecord record(const char* image, const char* rater, ReviewTask task,
                   std::vector<bool> defect) {
    RaterRecord r;
    r.image_id = image;
    r.rater_id = rater;
    r.task = task;
    r.defect = std::move(defect);
    return r;
}

}  // namespace

TEST_CASE("templates fix the question lists") {
    const auto& bg = template_questions(ReviewTask::Background);
    REQUIRE(bg == std::vector<std::string>{"product", "background"});
    const auto& aspect = template_questions(ReviewTask::Aspect);
    REQUIRE(aspect == std::vector<std::string>{"human_eligibility",
                                               "solid_background_eligibility", "band_defect"});
    REQUIRE(parse_review_task("background") == ReviewTask::Background);
    REQUIRE(parse_review_task("aspect") == ReviewTask::Aspect);
    REQUIRE_THROWS_AS(parse_review_task("other"), std::invalid_argument);
}

TEST_CASE("either rater flagging a question marks it defective") {
    const auto a = record("img-1", "r1", ReviewTask::Background, {true, false});
    const auto b = record("img-1", "r2", ReviewTask::Background, {false, true});
    const ReviewOutcome out = aggregate_review(a, b);
    REQUIRE(out.defect == std::vector<bool>{true, true});
    REQUIRE(out.overall_defective);

    const auto c = record("img-1", "r1", ReviewTask::Background, {false, false});
    const auto d = record("img-1", "r2", ReviewTask::Background, {false, false});
    const ReviewOutcome clean = aggregate_review(c, d);
    REQUIRE(clean.defect == std::vector<bool>{false, false});
    REQUIRE(!clean.overall_defective);
}

TEST_CASE("aggregation rejects malformed pairs") {
    const auto a = record("img-1", "r1", ReviewTask::Background, {true, false});
    const auto other_task = record("img-1", "r2", ReviewTask::Aspect, {false, false, false});
    REQUIRE_THROWS_AS(aggregate_review(a, other_task), std::invalid_argument);

    const auto other_image = record("img-2", "r2", ReviewTask::Background, {false, false});
    REQUIRE_THROWS_AS(aggregate_review(a, other_image), std::invalid_argument);

    const auto short_answers = record("img-1", "r2", ReviewTask::Background, {false});
    REQUIRE_THROWS_AS(aggregate_review(a, short_answers), std::invalid_argument);

    REQUIRE_THROWS_AS(aggregate_review(std::vector<RaterRecord>{a}), std::invalid_argument);
    REQUIRE_THROWS_AS(aggregate_review(std::vector<RaterRecord>{a, a, a}),
                      std::invalid_argument);
}

TEST_CASE("no-defect rates on the four-outcome fixture") {
    auto outcome = [](bool q0, bool q1) {
        ReviewOutcome o;
        o.task = ReviewTask::Background;
        o.defect = {q0, q1};
        o.overall_defective = q0 || q1;
        return o;
    };
    const std::vector<ReviewOutcome> outcomes = {outcome(false, false), outcome(true, false),
                                                 outcome(false, true), outcome(true, true)};
    const RateReport r = no_defect_rates(outcomes);
    REQUIRE(r.count == 4);
    REQUIRE(r.per_question_no_defect[0] == Catch::Approx(0.5));
    REQUIRE(r.per_question_no_defect[1] == Catch::Approx(0.5));
    REQUIRE(r.overall_no_defect == Catch::Approx(0.25));
}

TEST_CASE("rate computation enforces the aggregation inequality") {
    REQUIRE_THROWS_AS(no_defect_rates({}), std::invalid_argument);

    ReviewOutcome inconsistent;
    inconsistent.task = ReviewTask::Background;
    inconsistent.defect = {true, true};
    inconsistent.overall_defective = false;
    REQUIRE_THROWS_AS(no_defect_rates({inconsistent}), std::logic_error);

    ReviewOutcome bg;
    bg.task = ReviewTask::Background;
    bg.defect = {false, false};
    ReviewOutcome aspect;
    aspect.task = ReviewTask::Aspect;
    aspect.defect = {false, false, false};
    REQUIRE_THROWS_AS(no_defect_rates({bg, aspect}), std::invalid_argument);
}

TEST_CASE("external rate rows are validated before use") {
    const RateReport r =
        ingest_rate_row(ReviewTask::Background, {0.840, 0.549}, 0.472, 1000);
    REQUIRE(r.per_question_no_defect[0] == 0.840);
    REQUIRE(r.per_question_no_defect[1] == 0.549);
    REQUIRE(r.overall_no_defect == 0.472);
    REQUIRE(r.count == 1000);

    REQUIRE_THROWS_AS(ingest_rate_row(ReviewTask::Background, {0.840, 0.549}, 0.6, 1000),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(ingest_rate_row(ReviewTask::Background, {0.840}, 0.472, 1000),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(ingest_rate_row(ReviewTask::Background, {1.2, 0.5}, 0.4, 1000),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(ingest_rate_row(ReviewTask::Background, {0.8, 0.5}, -0.1, 1000),
                      std::invalid_argument);
    REQUIRE_NOTHROW(ingest_rate_row(ReviewTask::Aspect, {0.9, 0.8, 0.7}, 0.7, 250));
}
