#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stop_token>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "npcviz/error.hpp"
#include "npcviz/geometry.hpp"

/// Exact O(n^2) t-SNE: perplexity calibration, symmetric affinities, the
/// Student-t KL gradient and a momentum gradient-descent driver. All math is
/// 64-bit and single-threaded, so a fixed seed reproduces results bit for bit.
namespace npcviz::tsne {

enum class InitMethod { random_gaussian, pca };

struct ProjectionConfig {
    double perplexity = 30.0;
    int num_iterations = 1000;
    double early_exaggeration_factor = 12.0;
    int exaggeration_iters = 250;
    double learning_rate = 200.0;
    double momentum_initial = 0.5;
    double momentum_final = 0.8;
    int momentum_switch_iter = 250;
    std::uint64_t seed = 42;
    InitMethod init = InitMethod::random_gaussian;
    /// Standard deviation of the initial layout.
    double init_scale = 1e-4;

    friend bool operator==(const ProjectionConfig&, const ProjectionConfig&) = default;
};

enum class ProjectionErrorKind {
    invalid_config,
    infeasible_perplexity,
    non_finite_input,
    non_finite_objective,
    shape_mismatch,
    cancelled,
};

class ProjectionError : public Error {
public:
    ProjectionError(ProjectionErrorKind kind, const std::string& message, nlohmann::json detail = nullptr)
        : Error(kind == ProjectionErrorKind::cancelled ? ErrorCode::conflict : ErrorCode::bad_request, message,
                std::move(detail)),
          kind_(kind) {}

    ProjectionErrorKind kind() const noexcept { return kind_; }

private:
    ProjectionErrorKind kind_;
};

/// Throws ProjectionError(invalid_config) unless the config is usable for n points.
void validate(const ProjectionConfig& config, std::size_t n);

inline constexpr double kPerplexityTolerance = 1e-4;  // |log2(achieved) - log2(target)|
inline constexpr int kMaxBisectionSteps = 200;
inline constexpr double kAffinityFloor = 1e-12;
inline constexpr double kNormalizerFloor = 1e-12;
inline constexpr int kTraceInterval = 10;

struct RowCalibration {
    double beta = 1.0;
    std::vector<double> probabilities;
    double achieved_perplexity = 0.0;
    int steps = 0;
    bool converged = false;
};

/// Finds the Gaussian precision beta whose conditional distribution
/// p_j ~ exp(-beta * d_j) over the given squared distances has the target
/// perplexity. Requires 1 <= target <= distances_sq.size().
RowCalibration calibrate_row(std::span<const double> distances_sq, double target_perplexity);

Matrix squared_distances(const Matrix& points);

struct Affinities {
    Matrix p;                    // symmetric, zero diagonal, sums to one
    std::vector<double> betas;   // per-row calibrated precision
    std::vector<bool> converged; // per-row bisection outcome
    std::size_t unconverged_rows = 0;
};

Affinities compute_affinities(const Matrix& embeddings, double perplexity);

/// d KL(P || Q) / d Y for the Student-t kernel.
Layout gradient(const Matrix& p, const Layout& y);

/// KL(P || Q) over off-diagonal pairs with P_ij > 0.
double kl_divergence(const Matrix& p, const Layout& y);

struct ProjectionResult {
    Layout coordinates;
    /// KL(P || Q) of the un-exaggerated P, sampled at iteration 0 and after
    /// every kTraceInterval iterations.
    std::vector<double> kl_trace;
    double kl_at_exaggeration_end = 0.0;
    double final_kl = 0.0;
    std::size_t unconverged_rows = 0;
    bool deterministic = true;
    double elapsed_ms = 0.0;
    ProjectionConfig config;
};

using ProgressCallback = std::function<void(int iteration, int total)>;

/// Runs the full optimisation. Checks `stop` between iterations and throws
/// ProjectionError(cancelled) when a stop is requested.
ProjectionResult run_projection(const Matrix& embeddings, const ProjectionConfig& config,
                                std::stop_token stop = {}, const ProgressCallback& progress = {});

std::string_view to_string(InitMethod method);
InitMethod parse_init_method(std::string_view text);

void to_json(nlohmann::json& j, const ProjectionConfig& config);
/// Missing fields keep their defaults.
void from_json(const nlohmann::json& j, ProjectionConfig& config);

}  // namespace npcviz::tsne
