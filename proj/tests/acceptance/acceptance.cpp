// Acceptance runner: one Catch2 session over every case tagged [acc:<id>],
// then one PASS/FAIL line per criterion.

#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace {

struct Criterion {
    std::string id;
    std::string title;
};

const std::vector<Criterion> kCriteria{
    {"vacuum-analytic", "vacuum single-chamber pump-down vs closed form"},
    {"vacuum-steady", "vacuum equilibrium vs dense solve, gas conservation"},
    {"optics", "optics determinant, Twiss invariant, FODO phase, drift envelope"},
    {"matching", "two-quad matching round trip"},
    {"circuits", "RC, LC, Kirchhoff, PFN pulse"},
    {"scheme", "built-in templates, random configs, determinism"},
    {"service", "authorization matrix, replay, state machine, restart, integration"},
    {"cli", "labctl run determinism, exit codes, seed and check"},
};

struct Tally {
    int cases = 0;
    int failed_cases = 0;
    std::vector<std::string> failures;
    double seconds = 0;
};

std::map<std::string, Tally>& tallies()
{
    static std::map<std::string, Tally> t;
    return t;
}

std::string criterion_of(const Catch::TestCaseInfo& info)
{
    for (const auto& tag : info.tags) {
        std::string t(tag.original.data(), tag.original.size());
        if (t.rfind("acc:", 0) == 0)
            return t.substr(4);
    }
    return {};
}

class CriterionListener : public Catch::EventListenerBase {
public:
    using EventListenerBase::EventListenerBase;

    void testCaseStarting(const Catch::TestCaseInfo&) override { start_ = std::chrono::steady_clock::now(); }

    void testCaseEnded(const Catch::TestCaseStats& stats) override
    {
        const auto id = criterion_of(*stats.testInfo);
        if (id.empty())
            return;
        auto& t = tallies()[id];
        ++t.cases;
        t.seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        if (stats.totals.assertions.failed > 0 || stats.totals.testCases.failed > 0) {
            ++t.failed_cases;
            t.failures.push_back(stats.testInfo->name);
        }
    }

private:
    std::chrono::steady_clock::time_point start_;
};

} // namespace

CATCH_REGISTER_LISTENER(CriterionListener)

int main(int argc, char* argv[])
{
    Catch::Session session;
    if (const int rc = session.applyCommandLine(argc, argv); rc != 0)
        return rc;
    if (session.configData().testsOrTags.empty()) {
        std::string spec;
        for (const auto& c : kCriteria)
            spec += (spec.empty() ? "" : ",") + std::string("[acc:") + c.id + "]";
        session.configData().testsOrTags = {spec};
    }
    session.run();

    bool all = true;
    std::cout << "\n";
    for (const auto& c : kCriteria) {
        const auto it = tallies().find(c.id);
        const bool ran = it != tallies().end() && it->second.cases > 0;
        const bool ok = ran && it->second.failed_cases == 0;
        all = all && ok;
        std::cout << (ok ? "PASS " : "FAIL ") << c.id << ": " << c.title;
        if (ran) {
            std::cout << " (" << it->second.cases << " cases, " << std::fixed;
            std::cout.precision(2);
            std::cout << it->second.seconds << " s)";
            for (const auto& f : it->second.failures)
                std::cout << " failed: \"" << f << "\"";
        } else {
            std::cout << " (not run)";
        }
        std::cout << "\n";
    }
    return all ? 0 : 1;
}
