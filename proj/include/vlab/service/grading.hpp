#pragma once

#include "vlab/service/state.hpp"

namespace vlab::service {

struct GradeOutcome {
    /// 0..100; 100 when there is nothing to check.
    double score = 0.0;
    int passed = 0;
    int total = 0;
    nlohmann::json report;
};

/// Grades a finished run (Done or Failed) against the assignment criteria
/// and quiz. Every check and every quiz question weighs the same; a failed
/// run fails all simulation checks.
GradeOutcome auto_grade(const Assignment& assignment, const RunRecord& run, const std::vector<int>& quiz_answers);

} // namespace vlab::service
