#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "npcviz/error.hpp"
#include "npcviz/geometry.hpp"

namespace npcviz {

using InstanceId = std::int64_t;

struct Instance {
    InstanceId id = 0;
    std::vector<double> embedding;
    int true_label = 0;
    int predicted_label = 0;
    std::optional<std::string> image_ref;

    bool correct() const noexcept { return true_label == predicted_label; }
};

struct DatasetManifest {
    std::string dataset_name;
    std::string model_name;
    int num_classes = 0;
    std::vector<std::string> class_names;
    std::vector<std::string> class_colors;
    int dimensionality = 0;
    std::size_t num_instances = 0;
    double overall_accuracy = 0.0;
    // nullopt marks a class with zero support; its accuracy is undefined.
    std::vector<std::optional<double>> per_class_accuracy;
    std::vector<std::size_t> class_distribution;
    // Instance file, relative to the manifest's directory.
    std::string instances_file = "instances.jsonl";
};

enum class DatasetErrorKind {
    missing_file,
    parse_error,
    dimension_mismatch,
    label_out_of_range,
    duplicate_id,
    statistic_mismatch,
    invalid_manifest,
    invalid_argument,
};

class DatasetError : public Error {
public:
    DatasetError(DatasetErrorKind kind, const std::string& message, nlohmann::json detail = nullptr)
        : Error(ErrorCode::bad_request, message, std::move(detail)), kind_(kind) {}

    DatasetErrorKind kind() const noexcept { return kind_; }

private:
    DatasetErrorKind kind_;
};

/// Immutable, validated collection of instances plus the manifest describing
/// them. Construction enforces every instance invariant and checks the
/// manifest's declared aggregate statistics against a recount.
class DatasetStore {
public:
    DatasetStore(DatasetManifest manifest, std::vector<Instance> instances);

    const DatasetManifest& manifest() const noexcept { return manifest_; }
    std::span<const Instance> instances() const noexcept { return instances_; }
    std::size_t size() const noexcept { return instances_.size(); }

    bool contains(InstanceId id) const { return index_.contains(id); }
    /// Row of `id` in instances() and in any Layout computed from this store.
    std::size_t index_of(InstanceId id) const;
    const Instance& get_instance(InstanceId id) const;
    std::vector<Instance> get_instances(std::span<const InstanceId> ids) const;

    const std::string& class_name(int label) const;

    /// n x D copy of all embeddings in storage order.
    Matrix embedding_matrix() const;

private:
    DatasetManifest manifest_;
    std::vector<Instance> instances_;
    std::unordered_map<InstanceId, std::size_t> index_;
};

/// Fills the aggregate fields (num_instances, accuracy, distribution) of
/// `manifest` from `instances`. Identity fields are left untouched.
void recompute_statistics(DatasetManifest& manifest, std::span<const Instance> instances);

DatasetStore load_dataset(const std::filesystem::path& manifest_path);
/// Loads `<dir>/manifest.json`.
DatasetStore load_dataset_dir(const std::filesystem::path& dir);
/// Writes `<dir>/manifest.json` and the instance JSONL file it references.
void write_dataset(const DatasetStore& store, const std::filesystem::path& dir);

struct ConfusionSpec {
    int from_class = 0;
    int to_class = 0;
    double overlap_fraction = 0.0;
};

struct SynthesisConfig {
    int num_classes = 10;
    int per_class = 50;
    int dimensionality = 64;
    std::vector<ConfusionSpec> confusions;
    std::uint64_t seed = 0;
    std::string dataset_name = "synthetic-gaussian";
    std::string model_name = "simulated-classifier";
};

/// Class-conditional Gaussian embeddings with a scripted confusion pattern:
/// for each ConfusionSpec exactly round(overlap_fraction * per_class) members
/// of `from_class` are drawn around the mean of `to_class` and predicted as it.
DatasetStore synthesize_dataset(const SynthesisConfig& config);

/// Default class names for synthesized data (CIFAR-10 style for <= 10 classes).
std::vector<std::string> default_class_names(int num_classes);
std::vector<std::string> default_class_colors(int num_classes);

void to_json(nlohmann::json& j, const Instance& instance);
void from_json(const nlohmann::json& j, Instance& instance);
void to_json(nlohmann::json& j, const DatasetManifest& manifest);
void from_json(const nlohmann::json& j, DatasetManifest& manifest);

}  // namespace npcviz
