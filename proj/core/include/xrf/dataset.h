#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "xrf/image.h"
#include "xrf/labels.h"
#include "xrf/tensor.h"

namespace xrf {

struct LabeledSample {
    std::string image_id;
    Image image;  // [3,H,W] in [0,1]
    LabelVector labels{};
};

enum class Split { train, val, test };

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

/// Deterministic split from a hash of the image id: the top `test_fraction`
/// of the hash range goes to test, the next `val_fraction` to val.
Split split_for(std::string_view image_id, double val_fraction, double test_fraction);

using SplitManifest = std::map<std::string, Split>;

/// `image_id<TAB>{train|val|test}` per line.
SplitManifest read_split_manifest(const std::filesystem::path& path);
void write_split_manifest(const std::filesystem::path& path, const std::vector<std::pair<std::string, Split>>& rows);

/// Labelled images either held in memory or loaded lazily from disk.
class Dataset {
 public:
    struct Entry {
        std::string image_id;
        LabelVector labels{};
        std::filesystem::path path;           // used when `image` is null
        std::shared_ptr<const Image> image;  // in-memory pixels
    };

    Dataset() = default;
    static Dataset from_samples(std::vector<LabeledSample> samples);
    /// `<dir>/<labels_csv>` plus images under `<dir>/<images_dir>/<image_id>`.
    /// Rows whose image file is missing raise DataError.
    static Dataset from_directory(const std::filesystem::path& dir, const std::string& labels_csv = "Data_Entry_2017.csv",
                                  const std::string& images_dir = "images");

    void add(Entry entry) { entries_.push_back(std::move(entry)); }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const Entry& entry(std::size_t i) const { return entries_.at(i); }

    /// Pixels at the requested size (bilinear resize when needed).
    LabeledSample load(std::size_t i, std::int64_t height, std::int64_t width) const;

    Dataset subset(const std::vector<std::size_t>& indices) const;
    /// Entries whose split (manifest if given and containing the id, hash
    /// otherwise) equals `which`.
    Dataset split(Split which, double val_fraction, double test_fraction, const SplitManifest* manifest = nullptr) const;

 private:
    std::vector<Entry> entries_;
};

/// Stacks samples into [N,3,H,W].
Tensor stack_images(const std::vector<LabeledSample>& samples);
/// Stacks label vectors into [N,15].
Tensor stack_labels(const std::vector<LabeledSample>& samples);

}  // namespace xrf
