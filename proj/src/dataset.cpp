#include "npcviz/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "npcviz/file_io.hpp"
#include "npcviz/random.hpp"

namespace npcviz {
namespace {

constexpr double kAccuracyTolerance = 1e-9;

void validate_manifest_shape(const DatasetManifest& m) {
    const auto fail = [](const std::string& what) {
        throw DatasetError(DatasetErrorKind::invalid_manifest, "invalid manifest: " + what);
    };
    if (m.num_classes <= 0) fail("num_classes must be positive");
    if (m.dimensionality <= 0) fail("dimensionality must be positive");
    const auto k = static_cast<std::size_t>(m.num_classes);
    if (m.class_names.size() != k) fail("class_names length differs from num_classes");
    if (m.class_colors.size() != k) fail("class_colors length differs from num_classes");
    if (m.per_class_accuracy.size() != k) fail("per_class_accuracy length differs from num_classes");
    if (m.class_distribution.size() != k) fail("class_distribution length differs from num_classes");
}

void validate_instances(const DatasetManifest& m, std::span<const Instance> instances) {
    if (instances.empty()) {
        throw DatasetError(DatasetErrorKind::invalid_manifest, "dataset has no instances");
    }
    const auto dim = static_cast<std::size_t>(m.dimensionality);
    for (const auto& inst : instances) {
        if (inst.id < 0) {
            throw DatasetError(DatasetErrorKind::invalid_argument,
                               fmt::format("instance id {} is negative", inst.id), {{"id", inst.id}});
        }
        if (inst.embedding.size() != dim) {
            throw DatasetError(DatasetErrorKind::dimension_mismatch,
                               fmt::format("instance {} has embedding length {}, expected {}", inst.id,
                                           inst.embedding.size(), dim),
                               {{"id", inst.id}, {"length", inst.embedding.size()}, {"expected", dim}});
        }
        for (int label : {inst.true_label, inst.predicted_label}) {
            if (label < 0 || label >= m.num_classes) {
                throw DatasetError(DatasetErrorKind::label_out_of_range,
                                   fmt::format("instance {} has label {} outside [0, {})", inst.id, label,
                                               m.num_classes),
                                   {{"id", inst.id}, {"label", label}});
            }
        }
        if (!std::all_of(inst.embedding.begin(), inst.embedding.end(),
                         [](double v) { return std::isfinite(v); })) {
            throw DatasetError(DatasetErrorKind::invalid_argument,
                               fmt::format("instance {} has a non-finite embedding value", inst.id),
                               {{"id", inst.id}});
        }
    }
}

void check_statistics(const DatasetManifest& declared, std::span<const Instance> instances) {
    DatasetManifest actual = declared;
    recompute_statistics(actual, instances);
    const auto mismatch = [](const std::string& field, const nlohmann::json& want, const nlohmann::json& got) {
        throw DatasetError(DatasetErrorKind::statistic_mismatch,
                           fmt::format("declared {} {} does not match recomputed {}", field, want.dump(), got.dump()),
                           {{"field", field}, {"declared", want}, {"recomputed", got}});
    };
    if (declared.num_instances != actual.num_instances) {
        mismatch("num_instances", declared.num_instances, actual.num_instances);
    }
    if (declared.class_distribution != actual.class_distribution) {
        mismatch("class_distribution", declared.class_distribution, actual.class_distribution);
    }
    if (std::abs(declared.overall_accuracy - actual.overall_accuracy) > kAccuracyTolerance) {
        mismatch("overall_accuracy", declared.overall_accuracy, actual.overall_accuracy);
    }
    for (std::size_t c = 0; c < actual.per_class_accuracy.size(); ++c) {
        const auto& want = declared.per_class_accuracy[c];
        const auto& got = actual.per_class_accuracy[c];
        const bool same = want.has_value() == got.has_value() &&
                          (!want || std::abs(*want - *got) <= kAccuracyTolerance);
        if (!same) {
            const auto as_json = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
            mismatch(fmt::format("per_class_accuracy[{}]", c), as_json(want), as_json(got));
        }
    }
}

}  // namespace

void recompute_statistics(DatasetManifest& manifest, std::span<const Instance> instances) {
    const auto k = static_cast<std::size_t>(std::max(manifest.num_classes, 0));
    std::vector<std::size_t> support(k, 0);
    std::vector<std::size_t> hits(k, 0);
    std::size_t correct = 0;
    for (const auto& inst : instances) {
        const auto t = static_cast<std::size_t>(inst.true_label);
        if (t >= k) continue;
        ++support[t];
        if (inst.correct()) {
            ++hits[t];
            ++correct;
        }
    }
    manifest.num_instances = instances.size();
    manifest.overall_accuracy =
        instances.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(instances.size());
    manifest.class_distribution = support;
    manifest.per_class_accuracy.assign(k, std::nullopt);
    for (std::size_t c = 0; c < k; ++c) {
        if (support[c] > 0) {
            manifest.per_class_accuracy[c] = static_cast<double>(hits[c]) / static_cast<double>(support[c]);
        }
    }
}

DatasetStore::DatasetStore(DatasetManifest manifest, std::vector<Instance> instances)
    : manifest_(std::move(manifest)), instances_(std::move(instances)) {
    validate_manifest_shape(manifest_);
    validate_instances(manifest_, instances_);
    index_.reserve(instances_.size());
    for (std::size_t i = 0; i < instances_.size(); ++i) {
        const auto [it, inserted] = index_.emplace(instances_[i].id, i);
        if (!inserted) {
            throw DatasetError(DatasetErrorKind::duplicate_id,
                               fmt::format("duplicate instance id {}", instances_[i].id),
                               {{"id", instances_[i].id}});
        }
    }
    check_statistics(manifest_, instances_);
}

std::size_t DatasetStore::index_of(InstanceId id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) {
        throw NotFoundError(fmt::format("unknown instance id {}", id), {{"id", id}});
    }
    return it->second;
}

const Instance& DatasetStore::get_instance(InstanceId id) const { return instances_[index_of(id)]; }

std::vector<Instance> DatasetStore::get_instances(std::span<const InstanceId> ids) const {
    std::vector<Instance> out;
    out.reserve(ids.size());
    for (InstanceId id : ids) {
        out.push_back(get_instance(id));
    }
    return out;
}

const std::string& DatasetStore::class_name(int label) const {
    return manifest_.class_names.at(static_cast<std::size_t>(label));
}

Matrix DatasetStore::embedding_matrix() const {
    const auto n = static_cast<Eigen::Index>(instances_.size());
    const auto d = static_cast<Eigen::Index>(manifest_.dimensionality);
    Matrix x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& e = instances_[static_cast<std::size_t>(i)].embedding;
        x.row(i) = Eigen::Map<const Eigen::RowVectorXd>(e.data(), d);
    }
    return x;
}

// ---------------------------------------------------------------------------
// JSON

void to_json(nlohmann::json& j, const Instance& instance) {
    j = nlohmann::json{{"id", instance.id},
                       {"embedding", instance.embedding},
                       {"true_label", instance.true_label},
                       {"predicted_label", instance.predicted_label}};
    if (instance.image_ref) {
        j["image_ref"] = *instance.image_ref;
    }
}

void from_json(const nlohmann::json& j, Instance& instance) {
    j.at("id").get_to(instance.id);
    j.at("embedding").get_to(instance.embedding);
    j.at("true_label").get_to(instance.true_label);
    j.at("predicted_label").get_to(instance.predicted_label);
    instance.image_ref.reset();
    if (const auto it = j.find("image_ref"); it != j.end() && !it->is_null()) {
        instance.image_ref = it->get<std::string>();
    }
}

void to_json(nlohmann::json& j, const DatasetManifest& m) {
    nlohmann::json per_class = nlohmann::json::array();
    for (const auto& acc : m.per_class_accuracy) {
        per_class.push_back(acc ? nlohmann::json(*acc) : nlohmann::json(nullptr));
    }
    j = nlohmann::json{{"dataset_name", m.dataset_name},
                       {"model_name", m.model_name},
                       {"num_classes", m.num_classes},
                       {"class_names", m.class_names},
                       {"class_colors", m.class_colors},
                       {"dimensionality", m.dimensionality},
                       {"num_instances", m.num_instances},
                       {"overall_accuracy", m.overall_accuracy},
                       {"per_class_accuracy", per_class},
                       {"class_distribution", m.class_distribution},
                       {"instances_file", m.instances_file}};
}

void from_json(const nlohmann::json& j, DatasetManifest& m) {
    j.at("dataset_name").get_to(m.dataset_name);
    j.at("model_name").get_to(m.model_name);
    j.at("num_classes").get_to(m.num_classes);
    j.at("class_names").get_to(m.class_names);
    j.at("class_colors").get_to(m.class_colors);
    j.at("dimensionality").get_to(m.dimensionality);
    j.at("num_instances").get_to(m.num_instances);
    j.at("overall_accuracy").get_to(m.overall_accuracy);
    m.per_class_accuracy.clear();
    for (const auto& v : j.at("per_class_accuracy")) {
        m.per_class_accuracy.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
    }
    j.at("class_distribution").get_to(m.class_distribution);
    m.instances_file = j.value("instances_file", std::string("instances.jsonl"));
}

// ---------------------------------------------------------------------------
// Files

DatasetStore load_dataset(const std::filesystem::path& manifest_path) {
    if (!std::filesystem::exists(manifest_path)) {
        throw DatasetError(DatasetErrorKind::missing_file, "manifest not found: " + manifest_path.string(),
                           {{"path", manifest_path.string()}});
    }
    DatasetManifest manifest;
    try {
        manifest = nlohmann::json::parse(read_file(manifest_path)).get<DatasetManifest>();
    } catch (const nlohmann::json::exception& e) {
        throw DatasetError(DatasetErrorKind::parse_error,
                           fmt::format("cannot parse manifest {}: {}", manifest_path.string(), e.what()));
    }

    const auto instances_path = manifest_path.parent_path() / manifest.instances_file;
    std::ifstream in(instances_path);
    if (!in) {
        throw DatasetError(DatasetErrorKind::missing_file, "instance file not found: " + instances_path.string(),
                           {{"path", instances_path.string()}});
    }
    std::vector<Instance> instances;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            instances.push_back(nlohmann::json::parse(line).get<Instance>());
        } catch (const nlohmann::json::exception& e) {
            throw DatasetError(DatasetErrorKind::parse_error,
                               fmt::format("{}:{}: {}", instances_path.string(), line_no, e.what()),
                               {{"line", line_no}});
        }
    }
    return DatasetStore(std::move(manifest), std::move(instances));
}

DatasetStore load_dataset_dir(const std::filesystem::path& dir) { return load_dataset(dir / "manifest.json"); }

void write_dataset(const DatasetStore& store, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ostringstream lines;
    for (const auto& inst : store.instances()) {
        lines << nlohmann::json(inst).dump() << '\n';
    }
    atomic_write(dir / store.manifest().instances_file, lines.str());
    atomic_write(dir / "manifest.json", nlohmann::json(store.manifest()).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Synthesis

std::vector<std::string> default_class_names(int num_classes) {
    static const std::vector<std::string> cifar = {"airplane", "automobile", "bird",  "cat",  "deer",
                                                   "dog",      "frog",       "horse", "ship", "truck"};
    std::vector<std::string> names;
    for (int c = 0; c < num_classes; ++c) {
        names.push_back(c < static_cast<int>(cifar.size()) ? cifar[static_cast<std::size_t>(c)]
                                                            : fmt::format("class_{}", c));
    }
    return names;
}

std::vector<std::string> default_class_colors(int num_classes) {
    // cat is green and dog is blue, like the classic demo scenario.
    static const std::vector<std::string> palette = {"#9467bd", "#ff7f0e", "#8c564b", "#2ca02c", "#e377c2",
                                                     "#1f77b4", "#7f7f7f", "#bcbd22", "#17becf", "#d62728"};
    std::vector<std::string> colors;
    for (int c = 0; c < num_classes; ++c) {
        if (c < static_cast<int>(palette.size())) {
            colors.push_back(palette[static_cast<std::size_t>(c)]);
            continue;
        }
        // Golden-angle hue walk at fixed saturation/lightness.
        const double hue = std::fmod(c * 137.508, 360.0);
        const double s = 0.55;
        const double l = 0.5;
        const double chroma = (1.0 - std::abs(2.0 * l - 1.0)) * s;
        const double hp = hue / 60.0;
        const double x = chroma * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
        double r = 0, g = 0, b = 0;
        switch (static_cast<int>(hp)) {
            case 0: r = chroma; g = x; break;
            case 1: r = x; g = chroma; break;
            case 2: g = chroma; b = x; break;
            case 3: g = x; b = chroma; break;
            case 4: r = x; b = chroma; break;
            default: r = chroma; b = x; break;
        }
        const double m = l - chroma / 2.0;
        const auto to_byte = [m](double v) { return static_cast<int>(std::lround((v + m) * 255.0)); };
        colors.push_back(fmt::format("#{:02x}{:02x}{:02x}", to_byte(r), to_byte(g), to_byte(b)));
    }
    return colors;
}

DatasetStore synthesize_dataset(const SynthesisConfig& config) {
    const auto invalid = [](const std::string& what, nlohmann::json detail = nullptr) {
        throw DatasetError(DatasetErrorKind::invalid_argument, what, std::move(detail));
    };
    if (config.num_classes < 2) invalid("num_classes must be at least 2");
    if (config.per_class < 1) invalid("per_class must be at least 1");
    if (config.dimensionality < 2) invalid("dimensionality must be at least 2");

    const auto k = static_cast<std::size_t>(config.num_classes);
    const auto per_class = static_cast<std::size_t>(config.per_class);
    const auto dim = static_cast<std::size_t>(config.dimensionality);

    // confused[a] lists (target class, count) in declaration order.
    std::vector<std::vector<std::pair<int, std::size_t>>> confused(k);
    std::vector<std::size_t> confused_total(k, 0);
    for (const auto& spec : config.confusions) {
        const nlohmann::json detail = {{"class_a", spec.from_class}, {"class_b", spec.to_class}};
        if (spec.from_class < 0 || spec.from_class >= config.num_classes || spec.to_class < 0 ||
            spec.to_class >= config.num_classes) {
            invalid(fmt::format("invalid confusion pair {}:{} (classes are 0..{})", spec.from_class, spec.to_class,
                                config.num_classes - 1),
                    detail);
        }
        if (spec.from_class == spec.to_class) {
            invalid(fmt::format("invalid confusion pair {}:{} (same class)", spec.from_class, spec.to_class), detail);
        }
        if (!(spec.overlap_fraction >= 0.0 && spec.overlap_fraction <= 1.0)) {
            invalid(fmt::format("overlap fraction {} outside [0, 1]", spec.overlap_fraction), detail);
        }
        const auto count = static_cast<std::size_t>(std::llround(spec.overlap_fraction * config.per_class));
        const auto a = static_cast<std::size_t>(spec.from_class);
        confused[a].emplace_back(spec.to_class, count);
        confused_total[a] += count;
        if (confused_total[a] > per_class) {
            invalid(fmt::format("confusions for class {} exceed its {} instances", spec.from_class, per_class), detail);
        }
    }

    PortableRng rng(config.seed);
    const double radius = std::max(8.0, 2.0 * std::sqrt(static_cast<double>(dim)));
    std::vector<std::vector<double>> means(k, std::vector<double>(dim, 0.0));
    for (std::size_t c = 0; c < k; ++c) {
        if (k <= dim) {
            means[c][c] = radius;
            continue;
        }
        double norm_sq = 0.0;
        for (auto& v : means[c]) {
            v = rng.normal();
            norm_sq += v * v;
        }
        const double scale = radius / std::sqrt(norm_sq);
        for (auto& v : means[c]) v *= scale;
    }

    std::vector<Instance> generated;
    generated.reserve(k * per_class);
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t member = 0;
        const auto emit = [&](int predicted) {
            Instance inst;
            inst.true_label = static_cast<int>(c);
            inst.predicted_label = predicted;
            inst.embedding.resize(dim);
            const auto& mean = means[static_cast<std::size_t>(predicted)];
            for (std::size_t d = 0; d < dim; ++d) {
                inst.embedding[d] = mean[d] + rng.normal();
            }
            generated.push_back(std::move(inst));
            ++member;
        };
        for (const auto& [target, count] : confused[c]) {
            for (std::size_t i = 0; i < count; ++i) emit(target);
        }
        while (member < per_class) emit(static_cast<int>(c));
    }

    // Interleave classes so ids do not reveal labels.
    for (std::size_t i = generated.size(); i > 1; --i) {
        std::swap(generated[i - 1], generated[rng.below(i)]);
    }
    for (std::size_t i = 0; i < generated.size(); ++i) {
        generated[i].id = static_cast<InstanceId>(i);
    }

    DatasetManifest manifest;
    manifest.dataset_name = config.dataset_name;
    manifest.model_name = config.model_name;
    manifest.num_classes = config.num_classes;
    manifest.class_names = default_class_names(config.num_classes);
    manifest.class_colors = default_class_colors(config.num_classes);
    manifest.dimensionality = config.dimensionality;
    recompute_statistics(manifest, generated);
    return DatasetStore(std::move(manifest), std::move(generated));
}

}  // namespace npcviz
