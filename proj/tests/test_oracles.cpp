#include <doctest.h>

#include <json.hpp>

#include "dufm/oracles.hpp"

using namespace dufm;

// Smoke runs with small trial counts; the full-tolerance suite runs in the
// acceptance binary. Here the focus is determinism, report structure, and
// that nothing regresses catastrophically.

TEST_CASE("counterexample report pins the published values") {
    const VerificationReport report = verify_counterexample();
    CHECK(report.passed);
    CHECK(report.lemma == "counterexample");
    const nlohmann::json doc = nlohmann::json::parse(report.to_json());
    CHECK(doc.at("passed").get<bool>());
}

TEST_CASE("ridge verifier passes a short run") {
    const VerificationReport report = verify_ridge(10, 1, 1e-4);
    CHECK(report.passed);
    CHECK(report.trials == 10);
    CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("row-constrained verifier passes a short run") {
    const VerificationReport report = verify_row_kkt(6, 2, 1e-3);
    CHECK(report.passed);
}

TEST_CASE("spectrum-transfer verifier settles the squared convention") {
    const VerificationReport report = verify_key_lemma(2, 3, 5e-3);
    CHECK(report.passed);
    CHECK(report.convention == "squared");
}

TEST_CASE("schatten verifier passes a short run") {
    const VerificationReport report = verify_schatten(4, 4, 5e-3);
    CHECK(report.passed);
}

TEST_CASE("factorization verifier passes a short run") {
    const VerificationReport report = verify_variational(10, 5, 1e-4);
    CHECK(report.passed);
}

TEST_CASE("optimal-value verifier passes a short run") {
    const VerificationReport report = verify_sigma_opt(4, 6, 1e-3);
    CHECK(report.passed);
}

TEST_CASE("verifier reports are deterministic in the seed") {
    const VerificationReport a = verify_ridge(5, 99, 1e-4);
    const VerificationReport b = verify_ridge(5, 99, 1e-4);
    CHECK(a.max_rel_error == b.max_rel_error);
    CHECK(a.worst_case == b.worst_case);
    const VerificationReport c = verify_ridge(5, 100, 1e-4);
    CHECK(a.max_rel_error != c.max_rel_error);
}
