#include "frs/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "frs/ops.hpp"

namespace frs {

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kScaleFloor = 1e-3;

std::vector<double> random_values(Rng& rng, int64_t n, double lo, double hi) {
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

// Uniform in [-2,2] excluding a band around zero, for ops with a kink there.
std::vector<double> random_values_away_from(Rng& rng, int64_t n, double margin) {
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) {
        do {
            x = rng.uniform(-2.0, 2.0);
        } while (std::fabs(x) < margin);
    }
    return v;
}

Tensor rand_tensor(Rng& rng, Shape shape, double lo, double hi, bool requires_grad = true) {
    auto n = numel(shape);
    return Tensor::from(std::move(shape), random_values(rng, n, lo, hi), requires_grad);
}

// Fixed random projection so the scalar loss exercises every output element
// with a generic weighting.
Tensor projection(Rng& rng, Shape shape) {
    auto n = numel(shape);
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = rng.uniform(0.25, 1.75) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    return Tensor::from(std::move(shape), std::move(v), false);
}

Tensor project_to_scalar(const Tensor& out, const Tensor& proj) {
    return sum_all(mul(out, proj));
}

}  // namespace

bool GradCheckReport::all_pass() const {
    return std::all_of(results.begin(), results.end(),
                       [](const GradCheckResult& r) { return r.pass; });
}

std::string GradCheckReport::failing_ops() const {
    std::string s;
    for (const auto& r : results) {
        if (r.pass) continue;
        if (!s.empty()) s += ", ";
        s += r.op;
    }
    return s;
}

std::string GradCheckReport::table() const {
    std::ostringstream os;
    os << "gradcheck seed=" << seed << " tolerance=" << tolerance << "\n";
    size_t width = 12;
    for (const auto& r : results) width = std::max(width, r.op.size());
    for (const auto& r : results) {
        os << "  " << std::left << std::setw(static_cast<int>(width + 2)) << r.op << std::scientific
           << std::setprecision(3) << r.max_rel_err << "  " << (r.pass ? "ok" : "FAIL") << "\n";
    }
    return os.str();
}

GradCheckReport run_gradcheck(uint64_t seed, const std::vector<GradCheckCase>& cases,
                              double tolerance) {
    GradCheckReport report;
    report.seed = seed;
    report.tolerance = tolerance;
    for (const auto& c : cases) {
        Rng rng = Rng::named(seed, c.op);
        std::vector<Tensor> inputs = c.make_inputs(rng);

        Tensor loss = c.loss(inputs);
        if (loss.size() != 1)
            throw ShapeError("gradcheck: case '" + c.op + "' loss is not scalar");
        loss.backward();

        double max_rel = 0.0;
        for (auto& input : inputs) {
            if (!input.requires_grad()) continue;
            auto analytic = input.grad();
            auto values = input.data_mut();
            for (size_t j = 0; j < values.size(); ++j) {
                const double saved = values[j];
                NoGradGuard no_grad;
                values[j] = saved + kFdStep;
                const double up = c.loss(inputs).item();
                values[j] = saved - kFdStep;
                const double down = c.loss(inputs).item();
                values[j] = saved;
                const double numeric = (up - down) / (2.0 * kFdStep);
                const double a = analytic.empty() ? 0.0 : analytic[j];
                const double scale = std::max({std::fabs(a), std::fabs(numeric), kScaleFloor});
                max_rel = std::max(max_rel, std::fabs(a - numeric) / scale);
            }
        }
        report.results.push_back({c.op, max_rel, max_rel < tolerance});
    }
    return report;
}

std::vector<GradCheckCase> op_gradcheck_cases() {
    std::vector<GradCheckCase> cases;

    auto unary = [&](std::string name, Tensor (*op)(const Tensor&), bool away_from_zero) {
        cases.push_back(
            {std::move(name),
             [away_from_zero](Rng& rng) {
                 Shape shape{2, 3, 4, 4};
                 auto n = numel(shape);
                 std::vector<double> v = away_from_zero ? random_values_away_from(rng, n, 0.05)
                                                        : random_values(rng, n, -2.0, 2.0);
                 Tensor x = Tensor::from(shape, std::move(v), true);
                 return std::vector<Tensor>{x, projection(rng, shape)};
             },
             [op](const std::vector<Tensor>& in) { return project_to_scalar(op(in[0]), in[1]); }});
    };
    unary("relu", &relu, true);
    unary("sigmoid", &sigmoid, false);
    unary("exp", &exp, false);

    auto binary = [&](std::string name, Tensor (*op)(const Tensor&, const Tensor&)) {
        cases.push_back({std::move(name),
                         [](Rng& rng) {
                             Shape shape{2, 2, 3, 3};
                             Tensor a = rand_tensor(rng, shape, -2.0, 2.0);
                             Tensor b = rand_tensor(rng, shape, -2.0, 2.0);
                             return std::vector<Tensor>{a, b, projection(rng, shape)};
                         },
                         [op](const std::vector<Tensor>& in) {
                             return project_to_scalar(op(in[0], in[1]), in[2]);
                         }});
    };
    binary("add", &add);
    binary("mul", &mul);
    binary("mse_elementwise", &mse_elementwise);

    // abs_diff has a kink where a == b; keep the operands separated.
    cases.push_back({"abs_diff",
                     [](Rng& rng) {
                         Shape shape{2, 2, 3, 3};
                         Tensor a = rand_tensor(rng, shape, -2.0, -0.1);
                         Tensor b = rand_tensor(rng, shape, 0.1, 2.0);
                         return std::vector<Tensor>{a, b, projection(rng, shape)};
                     },
                     [](const std::vector<Tensor>& in) {
                         return project_to_scalar(abs_diff(in[0], in[1]), in[2]);
                     }});

    cases.push_back({"mul_scalar",
                     [](Rng& rng) {
                         Shape shape{1, 2, 4, 4};
                         return std::vector<Tensor>{rand_tensor(rng, shape, -2.0, 2.0),
                                                    projection(rng, shape)};
                     },
                     [](const std::vector<Tensor>& in) {
                         return project_to_scalar(mul_scalar(in[0], -0.73), in[1]);
                     }});

    // max picks a channel; keep per-site channel values separated so the
    // argmax is stable under the finite-difference step.
    cases.push_back({"max_over_channels",
                     [](Rng& rng) {
                         Shape shape{2, 4, 3, 3};
                         const int hw = 9;
                         std::vector<double> v(2 * 4 * hw);
                         for (int n = 0; n < 2; ++n)
                             for (int i = 0; i < hw; ++i) {
                                 double base = rng.uniform(-2.0, 0.0);
                                 int top = rng.uniform_int(4);
                                 for (int c = 0; c < 4; ++c)
                                     v[static_cast<size_t>((n * 4 + c) * hw + i)] =
                                         c == top ? base + 1.0 : base + rng.uniform(-0.5, 0.5);
                             }
                         Tensor x = Tensor::from(shape, std::move(v), true);
                         return std::vector<Tensor>{x, projection(rng, {2, 1, 3, 3})};
                     },
                     [](const std::vector<Tensor>& in) {
                         return project_to_scalar(max_over_channels(in[0]), in[1]);
                     }});

    cases.push_back({"upsample_nearest2x",
                     [](Rng& rng) {
                         Shape shape{1, 3, 3, 3};
                         return std::vector<Tensor>{rand_tensor(rng, shape, -2.0, 2.0),
                                                    projection(rng, {1, 3, 6, 6})};
                     },
                     [](const std::vector<Tensor>& in) {
                         return project_to_scalar(upsample_nearest2x(in[0]), in[1]);
                     }});

    cases.push_back({"avg_pool2x",
                     [](Rng& rng) {
                         Shape shape{1, 3, 4, 4};
                         return std::vector<Tensor>{rand_tensor(rng, shape, -2.0, 2.0),
                                                    projection(rng, {1, 3, 2, 2})};
                     },
                     [](const std::vector<Tensor>& in) {
                         return project_to_scalar(avg_pool2x(in[0]), in[1]);
                     }});

    cases.push_back({"sum_channels",
                     [](Rng& rng) {
                         Shape shape{2, 3, 3, 3};
                         return std::vector<Tensor>{rand_tensor(rng, shape, -2.0, 2.0),
                                                    projection(rng, {2, 1, 3, 3})};
                     },
                     [](const std::vector<Tensor>& in) {
                         return project_to_scalar(sum_channels(in[0]), in[1]);
                     }});

    cases.push_back({"sum_all",
                     [](Rng& rng) {
                         return std::vector<Tensor>{rand_tensor(rng, {2, 2, 3, 3}, -2.0, 2.0)};
                     },
                     [](const std::vector<Tensor>& in) { return sum_all(in[0]); }});

    cases.push_back({"bce_prob",
                     [](Rng& rng) {
                         Shape shape{2, 3, 3, 3};
                         Tensor p = rand_tensor(rng, shape, 0.05, 0.95);
                         Tensor t = rand_tensor(rng, shape, 0.0, 1.0, false);
                         return std::vector<Tensor>{p, t, projection(rng, shape)};
                     },
                     [](const std::vector<Tensor>& in) {
                         return project_to_scalar(bce_prob(in[0], in[1]), in[2]);
                     }});

    cases.push_back({"focal_bce",
                     [](Rng& rng) {
                         Shape shape{2, 3, 3, 3};
                         Tensor p = rand_tensor(rng, shape, 0.05, 0.95);
                         std::vector<double> t(static_cast<size_t>(numel(shape)));
                         for (auto& x : t) x = rng.uniform() < 0.3 ? 1.0 : 0.0;
                         return std::vector<Tensor>{p, Tensor::from(shape, std::move(t), false),
                                                    projection(rng, shape)};
                     },
                     [](const std::vector<Tensor>& in) {
                         return project_to_scalar(focal_bce(in[0], in[1], 2.0, 0.25), in[2]);
                     }});

    cases.push_back({"conv2d",
                     [](Rng& rng) {
                         Tensor x = rand_tensor(rng, {2, 3, 5, 5}, -2.0, 2.0);
                         Tensor w = rand_tensor(rng, {4, 3, 3, 3}, -1.0, 1.0);
                         Tensor b = rand_tensor(rng, {4}, -1.0, 1.0);
                         return std::vector<Tensor>{x, w, b, projection(rng, {2, 4, 5, 5})};
                     },
                     [](const std::vector<Tensor>& in) {
                         return project_to_scalar(conv2d(in[0], in[1], in[2], 1, 1), in[3]);
                     }});

    cases.push_back({"conv2d_stride2",
                     [](Rng& rng) {
                         Tensor x = rand_tensor(rng, {1, 2, 7, 7}, -2.0, 2.0);
                         Tensor w = rand_tensor(rng, {3, 2, 3, 3}, -1.0, 1.0);
                         Tensor b = rand_tensor(rng, {3}, -1.0, 1.0);
                         return std::vector<Tensor>{x, w, b, projection(rng, {1, 3, 3, 3})};
                     },
                     [](const std::vector<Tensor>& in) {
                         return project_to_scalar(conv2d(in[0], in[1], in[2], 2, 0), in[3]);
                     }});

    return cases;
}

}  // namespace frs
