#include "npcviz/tsne.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "npcviz/random.hpp"

namespace npcviz::tsne {
namespace {

[[noreturn]] void fail(ProjectionErrorKind kind, const std::string& message, nlohmann::json detail = nullptr) {
    throw ProjectionError(kind, message, std::move(detail));
}

bool all_finite(const double* data, Eigen::Index count) {
    return std::all_of(data, data + count, [](double v) { return std::isfinite(v); });
}

// Gradient of KL with P scaled by `exaggeration`. Each unordered pair is
// visited once, in a fixed order, so results are reproducible.
Layout gradient_impl(const Matrix& p, const Layout& y, double exaggeration) {
    const Eigen::Index n = y.rows();
    double z = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double dx = y(i, 0) - y(j, 0);
            const double dy = y(i, 1) - y(j, 1);
            z += 1.0 / (1.0 + dx * dx + dy * dy);
        }
    }
    z = std::max(2.0 * z, kNormalizerFloor);

    Layout grad = Layout::Zero(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double dx = y(i, 0) - y(j, 0);
            const double dy = y(i, 1) - y(j, 1);
            const double w = 1.0 / (1.0 + dx * dx + dy * dy);
            const double force = 4.0 * (exaggeration * p(i, j) - w / z) * w;
            grad(i, 0) += force * dx;
            grad(i, 1) += force * dy;
            grad(j, 0) -= force * dx;
            grad(j, 1) -= force * dy;
        }
    }
    return grad;
}

void check_shapes(const Matrix& p, const Layout& y) {
    if (p.rows() != p.cols() || p.rows() != y.rows()) {
        fail(ProjectionErrorKind::shape_mismatch,
             fmt::format("affinity matrix is {}x{} but layout has {} rows", p.rows(), p.cols(), y.rows()));
    }
}

Layout random_init(Eigen::Index n, const ProjectionConfig& config) {
    PortableRng rng(config.seed);
    Layout y(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        y(i, 0) = rng.normal() * config.init_scale;
        y(i, 1) = rng.normal() * config.init_scale;
    }
    return y;
}

Layout pca_init(const Matrix& x, const ProjectionConfig& config) {
    const Eigen::Index n = x.rows();
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Matrix centered = x.rowwise() - mean;
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success || cov.cols() < 2) {
        return random_init(n, config);
    }
    Eigen::MatrixXd axes(cov.cols(), 2);
    axes.col(0) = solver.eigenvectors().col(cov.cols() - 1);
    axes.col(1) = solver.eigenvectors().col(cov.cols() - 2);
    for (Eigen::Index c = 0; c < 2; ++c) {
        Eigen::Index pivot = 0;
        axes.col(c).cwiseAbs().maxCoeff(&pivot);
        if (axes(pivot, c) < 0.0) axes.col(c) *= -1.0;
    }
    Layout y = centered * axes;
    const double sd = std::sqrt(y.col(0).squaredNorm() / static_cast<double>(n));
    if (!(sd > 0.0) || !std::isfinite(sd)) {
        return random_init(n, config);
    }
    y *= config.init_scale / sd;
    return y;
}

}  // namespace

std::string_view to_string(InitMethod method) {
    return method == InitMethod::pca ? "pca" : "random_gaussian";
}

InitMethod parse_init_method(std::string_view text) {
    if (text == "pca") return InitMethod::pca;
    if (text == "random_gaussian" || text == "random") return InitMethod::random_gaussian;
    fail(ProjectionErrorKind::invalid_config, fmt::format("unknown init method '{}'", text));
}

void validate(const ProjectionConfig& c, std::size_t n) {
    const auto bad = [](const std::string& what) { fail(ProjectionErrorKind::invalid_config, what); };
    if (n < 4) bad(fmt::format("t-SNE needs at least 4 points, got {}", n));
    if (!(c.perplexity > 0.0)) bad("perplexity must be positive");
    const double max_perplexity = static_cast<double>(n - 1) / 3.0;
    if (c.perplexity > max_perplexity) {
        fail(ProjectionErrorKind::invalid_config,
             fmt::format("perplexity {} exceeds (n-1)/3 = {} for n = {}", c.perplexity, max_perplexity, n),
             {{"perplexity", c.perplexity}, {"max_perplexity", max_perplexity}});
    }
    if (c.num_iterations <= 0) bad("num_iterations must be positive");
    if (!(c.early_exaggeration_factor >= 1.0)) bad("early_exaggeration_factor must be >= 1");
    if (c.exaggeration_iters < 0 || c.exaggeration_iters > c.num_iterations) {
        bad("exaggeration_iters must lie in [0, num_iterations]");
    }
    if (!(c.learning_rate > 0.0)) bad("learning_rate must be positive");
    for (double m : {c.momentum_initial, c.momentum_final}) {
        if (!(m >= 0.0 && m < 1.0)) bad("momentum must lie in [0, 1)");
    }
    if (c.momentum_switch_iter < 0) bad("momentum_switch_iter must be non-negative");
    if (!(c.init_scale > 0.0) || !std::isfinite(c.init_scale)) bad("init_scale must be positive");
}

RowCalibration calibrate_row(std::span<const double> distances_sq, double target_perplexity) {
    if (distances_sq.empty()) {
        fail(ProjectionErrorKind::infeasible_perplexity, "calibration needs at least one neighbour");
    }
    for (double d : distances_sq) {
        if (!std::isfinite(d) || d < 0.0) {
            fail(ProjectionErrorKind::non_finite_input, "squared distances must be finite and non-negative");
        }
    }
    const auto neighbours = static_cast<double>(distances_sq.size());
    if (!(target_perplexity >= 1.0 && target_perplexity <= neighbours)) {
        fail(ProjectionErrorKind::infeasible_perplexity,
             fmt::format("perplexity {} is infeasible with {} neighbours", target_perplexity, distances_sq.size()),
             {{"perplexity", target_perplexity}, {"neighbours", distances_sq.size()}});
    }

    // Shifting by the minimum leaves p unchanged and keeps exp() away from underflow.
    const double d_min = *std::min_element(distances_sq.begin(), distances_sq.end());
    const double target_bits = std::log2(target_perplexity);

    RowCalibration out;
    out.probabilities.resize(distances_sq.size());
    double beta = 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double entropy_bits = 0.0;

    for (int step = 1; step <= kMaxBisectionSteps; ++step) {
        double sum = 0.0;
        double weighted = 0.0;
        for (std::size_t j = 0; j < distances_sq.size(); ++j) {
            const double shifted = distances_sq[j] - d_min;
            const double w = std::exp(-beta * shifted);
            out.probabilities[j] = w;
            sum += w;
            weighted += w * shifted;
        }
        entropy_bits = (std::log(sum) + beta * weighted / sum) / std::numbers::ln2;
        for (auto& p : out.probabilities) p /= sum;
        out.beta = beta;
        out.steps = step;

        const double diff = entropy_bits - target_bits;
        if (std::abs(diff) <= kPerplexityTolerance) {
            out.converged = true;
            break;
        }
        if (diff > 0.0) {
            lo = beta;
            beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
        } else {
            hi = beta;
            beta = 0.5 * (beta + lo);
        }
    }
    out.achieved_perplexity = std::exp2(entropy_bits);
    return out;
}

Matrix squared_distances(const Matrix& points) {
    const Eigen::Index n = points.rows();
    const Eigen::Index d = points.cols();
    Matrix dist = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double* xi = points.row(i).data();
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double* xj = points.row(j).data();
            double acc = 0.0;
            for (Eigen::Index k = 0; k < d; ++k) {
                const double diff = xi[k] - xj[k];
                acc += diff * diff;
            }
            dist(i, j) = acc;
            dist(j, i) = acc;
        }
    }
    return dist;
}

Affinities compute_affinities(const Matrix& embeddings, double perplexity) {
    const Eigen::Index n = embeddings.rows();
    if (n < 4) {
        fail(ProjectionErrorKind::invalid_config, fmt::format("affinities need at least 4 points, got {}", n));
    }
    if (!all_finite(embeddings.data(), embeddings.size())) {
        fail(ProjectionErrorKind::non_finite_input, "embeddings contain non-finite values");
    }

    const Matrix dist = squared_distances(embeddings);
    Matrix conditional = Matrix::Zero(n, n);
    Affinities out;
    out.betas.resize(static_cast<std::size_t>(n));
    out.converged.resize(static_cast<std::size_t>(n));

    std::vector<double> row(static_cast<std::size_t>(n - 1));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0, k = 0; j < n; ++j) {
            if (j != i) row[static_cast<std::size_t>(k++)] = dist(i, j);
        }
        const RowCalibration cal = calibrate_row(row, perplexity);
        for (Eigen::Index j = 0, k = 0; j < n; ++j) {
            if (j != i) conditional(i, j) = cal.probabilities[static_cast<std::size_t>(k++)];
        }
        out.betas[static_cast<std::size_t>(i)] = cal.beta;
        out.converged[static_cast<std::size_t>(i)] = cal.converged;
        if (!cal.converged) ++out.unconverged_rows;
    }

    out.p = Matrix::Zero(n, n);
    const double denom = 2.0 * static_cast<double>(n);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = std::max((conditional(i, j) + conditional(j, i)) / denom, kAffinityFloor);
            out.p(i, j) = v;
            total += v;
        }
    }
    total *= 2.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = out.p(i, j) / total;
            out.p(i, j) = v;
            out.p(j, i) = v;
        }
    }
    return out;
}

Layout gradient(const Matrix& p, const Layout& y) {
    check_shapes(p, y);
    return gradient_impl(p, y, 1.0);
}

double kl_divergence(const Matrix& p, const Layout& y) {
    check_shapes(p, y);
    const Eigen::Index n = y.rows();
    double z = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double dx = y(i, 0) - y(j, 0);
            const double dy = y(i, 1) - y(j, 1);
            z += 1.0 / (1.0 + dx * dx + dy * dy);
        }
    }
    z = std::max(2.0 * z, kNormalizerFloor);
    double kl = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if (!(p(i, j) > 0.0)) continue;
            const double dx = y(i, 0) - y(j, 0);
            const double dy = y(i, 1) - y(j, 1);
            const double q = (1.0 / (1.0 + dx * dx + dy * dy)) / z;
            // Both (i, j) and (j, i) carry the same term.
            kl += 2.0 * p(i, j) * std::log(p(i, j) / q);
        }
    }
    return kl;
}

ProjectionResult run_projection(const Matrix& embeddings, const ProjectionConfig& config, std::stop_token stop,
                                const ProgressCallback& progress) {
    const auto started = std::chrono::steady_clock::now();
    const Eigen::Index n = embeddings.rows();
    validate(config, static_cast<std::size_t>(n));

    const Affinities affinities = compute_affinities(embeddings, config.perplexity);
    const Matrix& p = affinities.p;

    Layout y = config.init == InitMethod::pca ? pca_init(embeddings, config) : random_init(n, config);
    Layout update = Layout::Zero(n, 2);

    ProjectionResult result;
    result.config = config;
    result.unconverged_rows = affinities.unconverged_rows;

    const auto sample_kl = [&](int iteration) {
        const double kl = kl_divergence(p, y);
        if (!std::isfinite(kl)) {
            fail(ProjectionErrorKind::non_finite_objective,
                 fmt::format("objective became non-finite at iteration {}", iteration), {{"iteration", iteration}});
        }
        return kl;
    };

    result.kl_trace.push_back(sample_kl(0));
    if (config.exaggeration_iters == 0) {
        result.kl_at_exaggeration_end = result.kl_trace.front();
    }

    for (int iter = 0; iter < config.num_iterations; ++iter) {
        if (stop.stop_requested()) {
            fail(ProjectionErrorKind::cancelled, fmt::format("projection cancelled at iteration {}", iter),
                 {{"iteration", iter}});
        }
        const double exaggeration = iter < config.exaggeration_iters ? config.early_exaggeration_factor : 1.0;
        const double momentum = iter < config.momentum_switch_iter ? config.momentum_initial : config.momentum_final;
        const Layout grad = gradient_impl(p, y, exaggeration);

        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index c = 0; c < 2; ++c) {
                update(i, c) = momentum * update(i, c) - config.learning_rate * grad(i, c);
                y(i, c) += update(i, c);
            }
        }
        y.rowwise() -= y.colwise().mean();

        const int completed = iter + 1;
        std::optional<double> kl;
        if (completed % kTraceInterval == 0) {
            kl = sample_kl(completed);
            result.kl_trace.push_back(*kl);
        }
        if (completed == config.exaggeration_iters) {
            result.kl_at_exaggeration_end = kl ? *kl : sample_kl(completed);
        }
        if (completed == config.num_iterations) {
            result.final_kl = kl ? *kl : sample_kl(completed);
        }
        if (progress) progress(completed, config.num_iterations);
    }

    if (!all_finite(y.data(), y.size())) {
        fail(ProjectionErrorKind::non_finite_objective, "layout became non-finite",
             {{"iteration", config.num_iterations}});
    }
    result.coordinates = std::move(y);
    result.elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return result;
}

void to_json(nlohmann::json& j, const ProjectionConfig& c) {
    j = nlohmann::json{{"perplexity", c.perplexity},
                       {"num_iterations", c.num_iterations},
                       {"early_exaggeration_factor", c.early_exaggeration_factor},
                       {"exaggeration_iters", c.exaggeration_iters},
                       {"learning_rate", c.learning_rate},
                       {"momentum_initial", c.momentum_initial},
                       {"momentum_final", c.momentum_final},
                       {"momentum_switch_iter", c.momentum_switch_iter},
                       {"seed", c.seed},
                       {"init", to_string(c.init)},
                       {"init_scale", c.init_scale}};
}

void from_json(const nlohmann::json& j, ProjectionConfig& c) {
    if (!j.is_object()) {
        fail(ProjectionErrorKind::invalid_config, "projection config must be a JSON object");
    }
    try {
        c.perplexity = j.value("perplexity", c.perplexity);
        c.num_iterations = j.value("num_iterations", c.num_iterations);
        c.early_exaggeration_factor = j.value("early_exaggeration_factor", c.early_exaggeration_factor);
        c.exaggeration_iters = j.value("exaggeration_iters", c.exaggeration_iters);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.momentum_initial = j.value("momentum_initial", c.momentum_initial);
        c.momentum_final = j.value("momentum_final", c.momentum_final);
        c.momentum_switch_iter = j.value("momentum_switch_iter", c.momentum_switch_iter);
        c.seed = j.value("seed", c.seed);
        c.init_scale = j.value("init_scale", c.init_scale);
        if (j.contains("init")) c.init = parse_init_method(j.at("init").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        fail(ProjectionErrorKind::invalid_config, fmt::format("malformed projection config: {}", e.what()));
    }
}

}  // namespace npcviz::tsne
