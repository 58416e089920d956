#pragma once

#include <functional>
#include <string>
#include <vector>

#include "frs/rng.hpp"
#include "frs/tensor.hpp"

namespace frs {

/// One gradcheck entry: deterministic input builder plus a scalar loss over
/// those inputs. Gradients are checked for every input with requires_grad.
struct GradCheckCase {
    std::string op;
    std::function<std::vector<Tensor>(Rng&)> make_inputs;
    std::function<Tensor(const std::vector<Tensor>&)> loss;
};

struct GradCheckResult {
    std::string op;
    double max_rel_err = 0.0;
    bool pass = true;
};

struct GradCheckReport {
    uint64_t seed = 0;
    double tolerance = 0.0;
    std::vector<GradCheckResult> results;

    bool all_pass() const;
    /// Names of failing ops, comma separated (empty when all pass).
    std::string failing_ops() const;
    std::string table() const;
};

/// Central finite differences (h = 1e-5) against the analytic gradients of
/// every case, on randomized small tensors drawn from `seed`. Relative error
/// uses max(|analytic|, |numeric|, 1e-3) as the scale.
GradCheckReport run_gradcheck(uint64_t seed, const std::vector<GradCheckCase>& cases,
                              double tolerance = 1e-4);

/// Cases covering every differentiable autograd op. Composite-loss cases
/// (FPN/head distillation, detection loss) live in the train harness, which
/// owns those compositions.
std::vector<GradCheckCase> op_gradcheck_cases();

}  // namespace frs
