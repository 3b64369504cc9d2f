#include <csignal>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "npcviz/dataset.hpp"
#include "npcviz/file_io.hpp"
#include "npcviz/server.hpp"
#include "npcviz/tsne.hpp"

namespace {

using namespace npcviz;

int class_ref(const std::string& text, const std::vector<std::string>& names) {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == text) return static_cast<int>(i);
    }
    try {
        std::size_t used = 0;
        const int index = std::stoi(text, &used);
        if (used == text.size()) return index;
    } catch (const std::exception&) {
    }
    throw BadRequestError(fmt::format("unknown class '{}'", text));
}

ConfusionSpec parse_confusion(const std::string& text, const std::vector<std::string>& names) {
    const auto first = text.find(':');
    const auto second = first == std::string::npos ? first : text.find(':', first + 1);
    if (second == std::string::npos) {
        throw BadRequestError(fmt::format("--confuse expects from:to:fraction, got '{}'", text));
    }
    ConfusionSpec spec;
    spec.from_class = class_ref(text.substr(0, first), names);
    spec.to_class = class_ref(text.substr(first + 1, second - first - 1), names);
    try {
        spec.overlap_fraction = std::stod(text.substr(second + 1));
    } catch (const std::exception&) {
        throw BadRequestError(fmt::format("bad fraction in '{}'", text));
    }
    return spec;
}

int run_ingest(const std::string& manifest, bool check) {
    const auto store = load_dataset(manifest);
    const auto& m = store.manifest();
    fmt::print("{}: {} instances, {} classes, D={}, overall accuracy {:.4f}\n", m.dataset_name, m.num_instances,
               m.num_classes, m.dimensionality, m.overall_accuracy);
    if (check) fmt::print("ok\n");
    return 0;
}

int run_project(const std::string& data, tsne::ProjectionConfig config, const std::string& out) {
    const auto store = load_dataset_dir(data);
    const auto result = tsne::run_projection(store.embedding_matrix(), config, {}, [](int it, int total) {
        if (it % 100 == 0) spdlog::info("iteration {}/{}", it, total);
    });
    const nlohmann::json doc = {{"points", projection_points(store, result.coordinates)},
                                {"kl_trace", result.kl_trace},
                                {"kl_at_exaggeration_end", result.kl_at_exaggeration_end},
                                {"final_kl", result.final_kl},
                                {"unconverged_rows", result.unconverged_rows},
                                {"elapsed_ms", result.elapsed_ms},
                                {"config", result.config}};
    atomic_write(out, doc.dump(2) + "\n");
    fmt::print("wrote {} points to {} (final KL {:.6f})\n", store.size(), out, result.final_kl);
    return 0;
}

int run_serve(ServerOptions options, int port) {
    // Signals are taken by a dedicated thread so stop() runs outside a handler.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    ApiServer server(std::move(options));
    const int bound = server.bind(port);
    std::jthread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        spdlog::info("signal {}, shutting down", sig);
        server.stop();
    });
    spdlog::info("serving on http://127.0.0.1:{}", bound);
    server.listen();
    pthread_kill(waiter.native_handle(), SIGTERM);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conversational t-SNE explorer for classifier embeddings"};
    app.require_subcommand(1);

    std::string manifest;
    bool check = false;
    auto* ingest = app.add_subcommand("ingest", "Validate a dataset manifest and its instance file");
    ingest->add_option("--manifest", manifest, "Manifest JSON")->required();
    ingest->add_flag("--check", check, "Only validate");

    SynthesisConfig synth_config;
    std::vector<std::string> confusions;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "Write a synthetic Gaussian dataset");
    synth->add_option("--classes", synth_config.num_classes, "Number of classes")->default_val(10);
    synth->add_option("--per-class", synth_config.per_class, "Instances per class")->default_val(50);
    synth->add_option("--dim", synth_config.dimensionality, "Embedding dimensionality")->default_val(64);
    synth->add_option("--confuse", confusions, "from:to:fraction (class names or indices)");
    synth->add_option("--seed", synth_config.seed, "Random seed")->default_val(0);
    synth->add_option("--out", synth_out, "Output directory")->required();

    std::string project_data;
    std::string project_out = "coords.json";
    tsne::ProjectionConfig projection;
    std::string init = "random_gaussian";
    auto* project = app.add_subcommand("project", "Compute a t-SNE layout");
    project->add_option("--data", project_data, "Dataset directory")->required();
    project->add_option("--perplexity", projection.perplexity)->default_val(projection.perplexity);
    project->add_option("--iters", projection.num_iterations)->default_val(projection.num_iterations);
    project->add_option("--learning-rate", projection.learning_rate)->default_val(projection.learning_rate);
    project->add_option("--seed", projection.seed)->default_val(projection.seed);
    project->add_option("--init", init, "random_gaussian or pca")->default_val(init);
    project->add_option("--out", project_out, "Output JSON")->default_val(project_out);

    ServerOptions server_options;
    std::string data_dir;
    std::string assets_dir;
    std::string provider;
    int port = 8080;
    auto* serve = app.add_subcommand("serve", "Run the HTTP API");
    serve->add_option("--data", data_dir, "Dataset directory (also holds sessions and notes)")->required();
    serve->add_option("--port", port)->default_val(port);
    serve->add_option("--host", server_options.host)->default_val(server_options.host);
    serve->add_option("--assets", assets_dir, "Static frontend directory");
    serve->add_option("--provider", provider, "stub or live (default: $PROVIDER, else stub)")
        ->check(CLI::IsMember({"stub", "live"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) return run_ingest(manifest, check);
        if (*synth) {
            const auto names = default_class_names(synth_config.num_classes);
            for (const auto& c : confusions) synth_config.confusions.push_back(parse_confusion(c, names));
            const auto store = synthesize_dataset(synth_config);
            write_dataset(store, synth_out);
            fmt::print("wrote {} instances to {} (overall accuracy {:.4f})\n", store.size(), synth_out,
                       store.manifest().overall_accuracy);
            return 0;
        }
        if (*project) {
            projection.init = tsne::parse_init_method(init);
            if (projection.momentum_switch_iter > projection.num_iterations) {
                projection.momentum_switch_iter = projection.num_iterations;
            }
            if (projection.exaggeration_iters > projection.num_iterations) {
                projection.exaggeration_iters = projection.num_iterations;
            }
            return run_project(project_data, projection, project_out);
        }
        if (*serve) {
            server_options.data_dir = data_dir;
            server_options.assets_dir = assets_dir;
            server_options.gateway = llm::gateway_config_from_env();
            if (!provider.empty()) server_options.gateway.provider = llm::parse_provider_kind(provider);
            return run_serve(std::move(server_options), port);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        if (!e.detail().is_null()) std::cerr << e.detail().dump() << '\n';
        return e.code() == ErrorCode::bad_request || e.code() == ErrorCode::not_found ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
