#include "npcviz/prompt.hpp"

#include <array>
#include <charconv>
#include <limits>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "npcviz/analytics.hpp"

namespace npcviz::dialogue {
namespace {

constexpr std::string_view kInterfaceGuide =
    "The screen is split into five views that are all visible at once.\n"
    "- Overview View: a summary of the dataset and the model, with overall accuracy, class distribution and the "
    "class color legend.\n"
    "- Data Point(s) View: details of every highlighted data point (image, ground truth label, predicted label, "
    "position).\n"
    "- Projection View (center): a t-SNE scatterplot where each circle is one image. Points that the model sees as "
    "similar sit close together. Buttons at its top left zoom in, zoom out and reset the view to its original "
    "position; the mouse wheel zooms and dragging pans. The brush toggle lets the user drag a rectangle to select "
    "many points at once and talk to them as one cluster. Clicking a single point starts a conversation with it.\n"
    "- Tasks & Notes View: the user's exploration tasks and the insights they collect.\n"
    "- Conversation History View: every earlier conversation, so the user can reopen and reread it.\n";

constexpr std::string_view kRoleDirective =
    "You are a data point (or a group of data points) living inside this visualization, acting as a friendly guide "
    "character in a game. Help the user understand the interface, the technical terms (model, dataset, embedding, "
    "t-SNE, accuracy, misclassification) and what the colors and positions mean. The user may have no technical "
    "background: explain plainly, keep answers short, and suggest a next step when it helps. Always stay in "
    "character.\n";

constexpr std::string_view kHonestyDirective =
    "Only state numbers and facts given in this prompt. If the user asks for something that is not provided here, "
    "say that you do not have that information instead of guessing or inventing numbers. When you speculate about "
    "causes, say clearly that it is a guess.\n";

struct NamedColor {
    std::string_view name;
    int r, g, b;
};

constexpr std::array<NamedColor, 13> kNamedColors = {{
    {"red", 214, 39, 40},     {"orange", 255, 127, 14}, {"yellow", 230, 220, 40}, {"olive", 188, 189, 34},
    {"green", 44, 160, 44},   {"cyan", 23, 190, 207},   {"blue", 31, 119, 180},   {"purple", 148, 103, 189},
    {"pink", 227, 119, 194},  {"brown", 140, 86, 75},   {"gray", 127, 127, 127},  {"black", 0, 0, 0},
    {"white", 255, 255, 255},
}};

std::string quoted(const std::string& name) { return fmt::format("\"{}\"", name); }

std::string position_text(const Layout* layout, std::size_t row) {
    if (layout == nullptr) return std::string(prompt::kProjectionPending);
    const auto r = static_cast<Eigen::Index>(row);
    return fmt::format("x={}, y={}", format_coordinate((*layout)(r, 0)), format_coordinate((*layout)(r, 1)));
}

void append_section(std::string& out, int number, std::string_view body) {
    out += prompt::section_header(number);
    out += '\n';
    out += body;
    if (!body.empty() && body.back() != '\n') out += '\n';
    out += '\n';
}

std::string persona_section(const Persona& persona) {
    return fmt::format("{}: {}\nPersonality: {}\nSpeak in this style in every answer.\n", prompt::kPersonaNameKey,
                       persona.name, persona.style_directive);
}

std::string identity_section(const DatasetStore& store) {
    const auto& m = store.manifest();
    return fmt::format(
        "Model: {}\nDataset: {}\nEmbedding size: {} numbers per image\nNumber of data points: {}\nNumber of classes: "
        "{}\nClasses: {}\n"
        "The positions come from a t-SNE projection of the model's embeddings down to two dimensions.\n",
        m.model_name, m.dataset_name, m.dimensionality, m.num_instances, m.num_classes, fmt::join(m.class_names, ", "));
}

std::string statistics_section(const DatasetStore& store) {
    const auto& m = store.manifest();
    const auto report = class_report(store);
    std::size_t correct = 0;
    for (std::size_t c = 0; c < report.confusion.size(); ++c) correct += report.confusion[c][c];

    std::string out = fmt::format("Overall accuracy: {}% ({} of {} predicted correctly)\n",
                                  format_percent(m.overall_accuracy), correct, m.num_instances);
    out += "Class distribution and per-class accuracy:\n";
    for (std::size_t c = 0; c < m.class_names.size(); ++c) {
        const auto& acc = report.accuracy[c];
        out += fmt::format("- {}: {} data points, accuracy {}, color {} ({})\n", m.class_names[c],
                           report.support[c], acc ? format_percent(*acc) + "%" : std::string("undefined (no data points)"),
                           m.class_colors[c], color_name(m.class_colors[c]));
    }
    out += "Color encoding: every data point is a circle. A solid circle in one class color was predicted correctly. "
           "A circle split in two shows the ground truth label on its left half and the model's prediction on its "
           "right half, so a two-colored circle was misclassified.\n";
    return out;
}

std::string single_target_section(const DatasetStore& store, const Layout* layout, InstanceId id) {
    const std::size_t row = store.index_of(id);
    const Instance& inst = store.instances()[row];
    return fmt::format(
        "{}: single data point\nYou are data point #{}.\nGround truth: {}\nPrediction: {}\nOutcome: {}\n"
        "Position in the projection: {}\n",
        prompt::kTargetKindKey, id, quoted(store.class_name(inst.true_label)),
        quoted(store.class_name(inst.predicted_label)),
        inst.correct() ? "predicted correctly" : "misclassified", position_text(layout, row));
}

std::string cluster_target_section(const DatasetStore& store, const Layout* layout, const ChatTarget& target,
                                   const PromptOptions& options) {
    const auto stats = selection_stats(store, target.instance_ids, layout);
    std::string out = fmt::format("{}: cluster\nYou speak for a cluster of {} selected data points.\n",
                                  prompt::kTargetKindKey, stats.size);
    out += fmt::format("Correct predictions: {} of {} ({}/{} = {}%)\n", stats.correct_count, stats.size,
                       stats.correct_count, stats.size, format_percent(stats.accuracy));
    out += fmt::format("Misclassified: {}\n", stats.size - stats.correct_count);
    if (stats.confusion_pairs.empty()) {
        out += "Top confusions: none, every member was predicted correctly\n";
    } else {
        out += "Top confusions (ground truth -> prediction):\n";
        const std::size_t shown = std::min(options.top_confusions, stats.confusion_pairs.size());
        for (std::size_t i = 0; i < shown; ++i) {
            const auto& pair = stats.confusion_pairs[i];
            out += fmt::format("- {} -> {}: {}\n", quoted(store.class_name(pair.true_class)),
                               quoted(store.class_name(pair.predicted_class)), pair.count);
        }
    }
    out += fmt::format("Centroid in the projection: {}\n",
                       stats.centroid ? fmt::format("x={}, y={}", format_coordinate(stats.centroid->x),
                                                    format_coordinate(stats.centroid->y))
                                      : std::string(prompt::kProjectionPending));
    const std::size_t listed = std::min(options.member_list_cap, stats.size);
    out += fmt::format("Members (showing {} of {}):\n", listed, stats.size);
    for (std::size_t i = 0; i < listed; ++i) {
        const InstanceId id = target.instance_ids[i];
        const std::size_t row = store.index_of(id);
        const Instance& inst = store.instances()[row];
        out += fmt::format("- #{}: ground truth {}, prediction {}, {}\n", id, quoted(store.class_name(inst.true_label)),
                           quoted(store.class_name(inst.predicted_label)), position_text(layout, row));
    }
    return out;
}

}  // namespace

std::string format_coordinate(double value) { return fmt::format("{:.4f}", value); }

std::string format_percent(double fraction) { return fmt::format("{:.2f}", fraction * 100.0); }

std::string_view color_name(std::string_view hex) {
    if (hex.size() != 7 || hex.front() != '#') return "unknown";
    int rgb[3];
    for (int i = 0; i < 3; ++i) {
        const char* first = hex.data() + 1 + 2 * i;
        const auto [ptr, ec] = std::from_chars(first, first + 2, rgb[i], 16);
        if (ec != std::errc{} || ptr != first + 2) return "unknown";
    }
    std::string_view best = "unknown";
    long best_dist = std::numeric_limits<long>::max();
    for (const auto& c : kNamedColors) {
        const long dr = rgb[0] - c.r, dg = rgb[1] - c.g, db = rgb[2] - c.b;
        const long dist = dr * dr + dg * dg + db * db;
        if (dist < best_dist) {
            best_dist = dist;
            best = c.name;
        }
    }
    return best;
}

std::string build_system_prompt(const DatasetStore& store, const Layout* layout, const ChatTarget& target,
                                const Persona& persona, const PromptOptions& options) {
    check_target(target, store);
    std::string out;
    append_section(out, 1, kInterfaceGuide);
    append_section(out, 2, kRoleDirective);
    append_section(out, 3, persona_section(persona));
    append_section(out, 4, identity_section(store));
    append_section(out, 5, statistics_section(store));
    append_section(out, 6,
                   target.kind == TargetKind::cluster ? cluster_target_section(store, layout, target, options)
                                                      : single_target_section(store, layout, target.instance_ids.front()));
    append_section(out, 7, kHonestyDirective);
    return out;
}

}  // namespace npcviz::dialogue
