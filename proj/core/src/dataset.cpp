#include "xrf/dataset.h"

#include <fstream>

#include "xrf/error.h"
#include "xrf/rng.h"

namespace xrf {

std::string_view split_name(Split split) {
    switch (split) {
        case Split::train:
            return "train";
        case Split::val:
            return "val";
        case Split::test:
            return "test";
    }
    return "?";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw DataError("unknown split '" + std::string(name) + "'");
}

Split split_for(std::string_view image_id, double val_fraction, double test_fraction) {
    const double u = static_cast<double>(splitmix64(fnv1a64(image_id)) >> 11) * 0x1.0p-53;
    if (u >= 1.0 - test_fraction) return Split::test;
    if (u >= 1.0 - test_fraction - val_fraction) return Split::val;
    return Split::train;
}

SplitManifest read_split_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open split manifest " + path.string());
    SplitManifest manifest;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw DataError(path.string() + ": line " + std::to_string(row) + " lacks a TAB separator");
        }
        manifest[line.substr(0, tab)] = parse_split(line.substr(tab + 1));
    }
    return manifest;
}

void write_split_manifest(const std::filesystem::path& path, const std::vector<std::pair<std::string, Split>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write split manifest " + path.string());
    for (const auto& [id, split] : rows) out << id << '\t' << split_name(split) << '\n';
}

Dataset Dataset::from_samples(std::vector<LabeledSample> samples) {
    Dataset ds;
    ds.entries_.reserve(samples.size());
    for (auto& s : samples) {
        Entry e;
        e.image_id = std::move(s.image_id);
        e.labels = s.labels;
        e.image = std::make_shared<const Image>(std::move(s.image));
        ds.entries_.push_back(std::move(e));
    }
    return ds;
}

Dataset Dataset::from_directory(const std::filesystem::path& dir, const std::string& labels_csv,
                                const std::string& images_dir) {
    Dataset ds;
    for (auto& rec : parse_label_csv(dir / labels_csv)) {
        Entry e;
        e.path = dir / images_dir / rec.image_id;
        if (!std::filesystem::exists(e.path)) throw DataError("image listed in labels is missing: " + e.path.string());
        e.image_id = std::move(rec.image_id);
        e.labels = rec.labels;
        ds.entries_.push_back(std::move(e));
    }
    return ds;
}

LabeledSample Dataset::load(std::size_t i, std::int64_t height, std::int64_t width) const {
    const Entry& e = entries_.at(i);
    LabeledSample s;
    s.image_id = e.image_id;
    s.labels = e.labels;
    s.image = e.image ? resize_bilinear(to_rgb(*e.image), height, width) : load_image(e.path, height, width);
    return s;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
    Dataset ds;
    ds.entries_.reserve(indices.size());
    for (auto i : indices) ds.entries_.push_back(entries_.at(i));
    return ds;
}

Dataset Dataset::split(Split which, double val_fraction, double test_fraction, const SplitManifest* manifest) const {
    Dataset ds;
    for (const auto& e : entries_) {
        Split s;
        if (manifest) {
            auto it = manifest->find(e.image_id);
            s = it != manifest->end() ? it->second : split_for(e.image_id, val_fraction, test_fraction);
        } else {
            s = split_for(e.image_id, val_fraction, test_fraction);
        }
        if (s == which) ds.entries_.push_back(e);
    }
    return ds;
}

Tensor stack_images(const std::vector<LabeledSample>& samples) {
    if (samples.empty()) throw DataError("cannot stack an empty batch");
    const auto& first = samples.front().image;
    std::vector<double> values;
    values.reserve(samples.size() * first.pixels.size());
    for (const auto& s : samples) {
        if (s.image.channels != first.channels || s.image.height != first.height || s.image.width != first.width) {
            throw DimensionError("batch images differ in size");
        }
        values.insert(values.end(), s.image.pixels.begin(), s.image.pixels.end());
    }
    return Tensor::from({static_cast<std::int64_t>(samples.size()), first.channels, first.height, first.width},
                        std::move(values));
}

Tensor stack_labels(const std::vector<LabeledSample>& samples) {
    if (samples.empty()) throw DataError("cannot stack an empty batch");
    std::vector<double> values;
    values.reserve(samples.size() * kNumClasses);
    for (const auto& s : samples) values.insert(values.end(), s.labels.begin(), s.labels.end());
    return Tensor::from({static_cast<std::int64_t>(samples.size()), static_cast<std::int64_t>(kNumClasses)},
                        std::move(values));
}

}  // namespace xrf
