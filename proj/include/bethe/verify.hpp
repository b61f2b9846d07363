#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace bethe::verify {

/// One verification check. run() returns an empty string on success and a
/// short failure description otherwise.
struct Check {
    std::string name;
    std::function<std::string()> run;
};

/// The fast self-check suite: closed-form-vs-quadrature exactness, gradient
/// integrity, bound orderings, limit identities, and metric self-consistency.
std::vector<Check> all_checks();

/// Runs every check, prints one pass/fail line per check, returns the number
/// of failures.
int run_all(std::ostream& out);

// Individual suites, exposed for the acceptance harness.
std::string check_convolution_exactness();
std::string check_gradient_integrity();
std::string check_jensen_ordering();
std::string check_map_limit();
std::string check_dv_identities();
std::string check_ordinal_reduction();
std::string check_v1_fixed_point();
std::string check_special_function_tails();
std::string check_ordinal_prob_sums();
std::string check_calib_err_self_consistency();
std::string check_gradcheck_sensitivity();

}  // namespace bethe::verify
