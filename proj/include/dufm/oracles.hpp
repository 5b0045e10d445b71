// Independent numerical verifiers. Each one re-derives a closed-form optimal
// value by brute-force or penalty search and compares against the theory
// module. Searches are multi-restart local descent with numeric gradients;
// the closed forms act as certificates, so a search that *beats* a closed
// form by more than the tolerance fails the report loudly.

#ifndef DUFM_ORACLES_HPP
#define DUFM_ORACLES_HPP

#include <cstdint>
#include <string>

namespace dufm {

struct VerificationReport {
    std::string lemma;
    int trials = 0;
    double max_rel_error = 0.0;
    std::string worst_case;
    bool passed = false;
    double tol = 0.0;
    std::string convention;  // only set by verify_key_lemma

    std::string to_json() const;
};

VerificationReport verify_ridge(int trials, uint64_t seed, double tol);
VerificationReport verify_key_lemma(int trials, uint64_t seed, double tol);
VerificationReport verify_row_kkt(int trials, uint64_t seed, double tol);
VerificationReport verify_schatten(int trials, uint64_t seed, double tol);
VerificationReport verify_variational(int trials, uint64_t seed, double tol);
VerificationReport verify_sigma_opt(int trials, uint64_t seed, double tol);
VerificationReport verify_counterexample();

}  // namespace dufm

#endif
