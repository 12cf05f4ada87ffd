#include "vlab/service/grading.hpp"

#include <cmath>

namespace vlab::service {

using nlohmann::json;

GradeOutcome auto_grade(const Assignment& a, const RunRecord& run, const std::vector<int>& quiz_answers)
{
    GradeOutcome out;
    json items = json::array();
    const sim::TimeSeries* result = run.status == RunStatus::Done && run.result ? &*run.result : nullptr;

    auto record = [&](json item, bool passed) {
        item["passed"] = passed;
        items.push_back(std::move(item));
        ++out.total;
        out.passed += passed ? 1 : 0;
    };

    for (const auto& c : a.criteria.checks) {
        json item{{"kind", "check"}, {"channel", c.channel}, {"probe", c.probe}, {"expected", c.expected},
                  {"rel_tol", c.rel_tol}};
        if (!result) {
            item["reason"] = "run_failed";
            record(std::move(item), false);
            continue;
        }
        if (!result->has_channel(c.channel)) {
            item["reason"] = "missing_channel";
            record(std::move(item), false);
            continue;
        }
        double actual;
        try {
            actual = sim::sample_at(*result, c.channel, c.probe);
        } catch (const std::out_of_range&) {
            item["reason"] = "probe_outside_result";
            record(std::move(item), false);
            continue;
        }
        item["actual"] = actual;
        record(std::move(item), std::abs(actual - c.expected) <= c.rel_tol * std::abs(c.expected));
    }

    for (const auto& p : a.criteria.properties) {
        const bool below = p.property == PropertyCheck::Kind::FinalValueBelow;
        json item{{"kind", "property"},
                  {"channel", p.channel},
                  {"property", below ? "final_value_below" : "final_value_above"},
                  {"threshold", p.threshold}};
        if (!result || !result->has_channel(p.channel) || result->size() == 0) {
            item["reason"] = result ? "missing_channel" : "run_failed";
            record(std::move(item), false);
            continue;
        }
        const double last = result->channel(p.channel).values.back();
        item["actual"] = last;
        record(std::move(item), below ? last < p.threshold : last > p.threshold);
    }

    for (std::size_t i = 0; i < a.quiz.size(); ++i) {
        const auto& q = a.quiz[i];
        const bool answered = i < quiz_answers.size();
        json item{{"kind", "quiz"}, {"question_id", q.question_id}, {"answered", answered}};
        record(std::move(item), answered && quiz_answers[i] == q.correct_index);
    }

    out.score = out.total == 0 ? 100.0 : 100.0 * out.passed / out.total;
    out.report = {{"score", out.score}, {"passed", out.passed}, {"total", out.total}, {"items", std::move(items)}};
    return out;
}

} // namespace vlab::service
