#include "dashlab/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dashlab/errors.hpp"

namespace dashlab {

namespace {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

double dot(const Vec& a, const Vec& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

Mat identity(std::size_t n)
{
    Mat m(n, Vec(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        m[i][i] = 1.0;
    }
    return m;
}

void project(Vec& x, const Vec& lower, const Vec& upper)
{
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = std::clamp(x[i], lower[i], upper[i]);
    }
}

double projectedGradientNorm(const Vec& x, const Vec& g, const Vec& lower, const Vec& upper)
{
    double norm = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double moved = std::clamp(x[i] - g[i], lower[i], upper[i]);
        norm = std::max(norm, std::abs(moved - x[i]));
    }
    return norm;
}

}  // namespace

MinimizeResult minimizeInBox(const GradientObjective& objective, Vec start, const Vec& lower,
                             const Vec& upper, const BoxMinimizerOptions& options)
{
    const std::size_t n = start.size();
    if (lower.size() != n || upper.size() != n) {
        throw ConfigError("bound dimensions do not match the start point");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!(lower[i] <= upper[i])) {
            throw ConfigError("empty box");
        }
    }
    project(start, lower, upper);

    MinimizeResult result;
    Vec x = std::move(start);
    Vec g(n, 0.0);
    double f = objective(x, g);
    if (!std::isfinite(f)) {
        result.x = x;
        result.value = f;
        return result;
    }
    Mat h = identity(n);
    bool scaled = false;

    for (int iter = 0; iter < options.maxIterations; ++iter) {
        result.iterations = iter + 1;
        if (projectedGradientNorm(x, g, lower, upper) <= options.gradientTolerance) {
            result.converged = true;
            break;
        }

        // Freeze variables held against a bound.
        std::vector<bool> active(n, false);
        for (std::size_t i = 0; i < n; ++i) {
            active[i] = (x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0);
        }
        Vec d(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (active[i]) {
                continue;
            }
            for (std::size_t j = 0; j < n; ++j) {
                if (!active[j]) {
                    d[i] -= h[i][j] * g[j];
                }
            }
        }
        bool steepest = false;
        auto useSteepest = [&] {
            h = identity(n);
            scaled = false;
            steepest = true;
            for (std::size_t i = 0; i < n; ++i) {
                d[i] = active[i] ? 0.0 : -g[i];
            }
        };
        if (!(dot(d, g) < 0.0)) {
            useSteepest();
        }

        Vec trial(n);
        Vec trialGrad(n, 0.0);
        double trialValue = 0.0;
        bool accepted = false;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            double alpha = 1.0;
            for (int back = 0; back < 60; ++back) {
                for (std::size_t i = 0; i < n; ++i) {
                    trial[i] = x[i] + alpha * d[i];
                }
                project(trial, lower, upper);
                Vec step(n);
                for (std::size_t i = 0; i < n; ++i) {
                    step[i] = trial[i] - x[i];
                }
                trialValue = objective(trial, trialGrad);
                if (std::isfinite(trialValue) && trialValue <= f + 1e-4 * dot(g, step)) {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!accepted && !steepest) {
                useSteepest();
            } else {
                break;
            }
        }
        if (!accepted) {
            // No descent along the projected steepest path at any resolvable
            // step: a kink or a stationary point.
            result.converged = true;
            break;
        }

        Vec s(n);
        Vec y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = trial[i] - x[i];
            y[i] = trialGrad[i] - g[i];
        }
        const double previous = f;
        x = trial;
        g = trialGrad;
        f = trialValue;

        const double sy = dot(s, y);
        if (sy > 1e-12 * std::sqrt(dot(s, s) * dot(y, y))) {
            if (!scaled) {
                const double gamma = sy / dot(y, y);
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        h[i][j] = (i == j) ? gamma : 0.0;
                    }
                }
                scaled = true;
            }
            // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            const double rho = 1.0 / sy;
            Vec hy(n, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    hy[i] += h[i][j] * y[j];
                }
            }
            const double yhy = dot(y, hy);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) +
                               (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }

        if (std::abs(previous - f) <= options.valueTolerance * (1.0 + std::abs(f))) {
            result.converged = true;
            break;
        }
    }
    result.x = std::move(x);
    result.value = f;
    return result;
}

GradientObjective withNumericGradient(std::function<double(const Vec&)> f, double relativeStep)
{
    return [f = std::move(f), relativeStep](const Vec& x, Vec& grad) {
        const double value = f(x);
        Vec probe = x;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double h = relativeStep * std::max(1.0, std::abs(x[i]));
            probe[i] = x[i] + h;
            const double up = f(probe);
            probe[i] = x[i] - h;
            const double down = f(probe);
            probe[i] = x[i];
            grad[i] = (up - down) / (2.0 * h);
        }
        return value;
    };
}

ScalarMinimum goldenSectionMinimize(const std::function<double(double)>& f, double lo, double hi,
                                    double tolerance)
{
    const double invPhi = 1.0 / std::numbers::phi;
    double a = lo;
    double b = hi;
    double c = b - (b - a) * invPhi;
    double d = a + (b - a) * invPhi;
    double fc = f(c);
    double fd = f(d);
    int evaluations = 2;
    while (b - a > tolerance) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * invPhi;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * invPhi;
            fd = f(d);
        }
        ++evaluations;
    }
    return fc <= fd ? ScalarMinimum{c, fc, evaluations} : ScalarMinimum{d, fd, evaluations};
}

}  // namespace dashlab
