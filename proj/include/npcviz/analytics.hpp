#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "npcviz/dataset.hpp"
#include "npcviz/geometry.hpp"

namespace npcviz {

struct ConfusionPair {
    int true_class = 0;
    int predicted_class = 0;
    std::size_t count = 0;

    friend bool operator==(const ConfusionPair&, const ConfusionPair&) = default;
};

struct SelectionStats {
    std::vector<InstanceId> instance_ids;
    std::size_t size = 0;
    std::size_t correct_count = 0;
    double accuracy = 0.0;
    std::vector<std::size_t> class_counts_true;
    std::vector<std::size_t> class_counts_predicted;
    // Only true != predicted; count desc, then (true, predicted) asc.
    std::vector<ConfusionPair> confusion_pairs;
    // Empty while no projection is available.
    std::optional<Point2> centroid;
};

/// Statistics over a brushed selection. `layout` may be null when the
/// projection has not been computed yet. Throws BadRequestError on an empty
/// or duplicated id list and NotFoundError on unknown ids.
SelectionStats selection_stats(const DatasetStore& store, std::span<const InstanceId> ids,
                               const Layout* layout = nullptr);

struct ClassReport {
    // confusion[t][p] counts instances with true class t predicted as p.
    std::vector<std::vector<std::size_t>> confusion;
    std::vector<std::size_t> support;
    // nullopt when support is zero.
    std::vector<std::optional<double>> accuracy;
    double overall_accuracy = 0.0;
};

ClassReport class_report(const DatasetStore& store);

enum class NeighborSpace { layout_2d, embedding_d };

struct Neighbor {
    InstanceId id = 0;
    double distance = 0.0;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Exact k nearest neighbours of `id` by Euclidean distance, ties broken by
/// ascending id. Requires 1 <= k < n.
std::vector<Neighbor> neighbors(const DatasetStore& store, InstanceId id, std::size_t k, NeighborSpace space,
                                const Layout* layout = nullptr);

NeighborSpace parse_neighbor_space(std::string_view text);

void to_json(nlohmann::json& j, const ConfusionPair& pair);
void to_json(nlohmann::json& j, const SelectionStats& stats);
void to_json(nlohmann::json& j, const ClassReport& report);
void to_json(nlohmann::json& j, const Neighbor& neighbor);

}  // namespace npcviz
