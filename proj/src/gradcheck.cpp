#include "adaptlab/gradcheck.hpp"

#include <cmath>

namespace adaptlab {

GradCheckReport gradient_check(const std::function<TensorRef(Tape&)>& f,
                               const std::vector<TensorRef>& params, double eps,
                               double tol) {
    if (eps < 1e-6 || eps > 1e-4)
        throw ConfigError("gradient_check: eps " + std::to_string(eps) +
                          " outside [1e-6, 1e-4]");
    GradCheckReport report;

    for (const auto& p : params) p->zero_grad();
    Tape tape;
    TensorRef loss = f(tape);
    if (!loss || loss->size() != 1)
        throw ConfigError("gradient_check: f must return a scalar loss");
    tape.backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) analytic.push_back(p->grad);

    auto eval = [&]() {
        Tape t;
        return f(t)->values[0];
    };

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = *params[pi];
        for (i64 c = 0; c < p.size(); ++c) {
            const double saved = p.values[c];
            p.values[c] = saved + eps;
            const double up = eval();
            p.values[c] = saved - eps;
            const double down = eval();
            p.values[c] = saved;

            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic[pi][c];
            if (!std::isfinite(a) || !std::isfinite(numeric)) {
                report.pass = false;
                report.param_index = static_cast<int>(pi);
                report.coord = c;
                report.max_rel_err = std::numeric_limits<double>::infinity();
                report.note = "non-finite gradient at param " +
                              std::to_string(pi) + " coord " + std::to_string(c);
                return report;
            }
            const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
            const double rel = std::abs(a - numeric) / denom;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.param_index = static_cast<int>(pi);
                report.coord = c;
            }
        }
    }
    report.pass = report.max_rel_err <= tol;
    return report;
}

}  // namespace adaptlab
