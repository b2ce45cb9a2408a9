#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace xrf {

inline constexpr std::size_t kNumClasses = 15;
inline constexpr std::size_t kNumDiseases = 14;

/// Fixed class order. Index 14 is "No Finding".
inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "Atelectasis", "Cardiomegaly", "Consolidation", "Edema",  "Effusion",           "Emphysema", "Fibrosis",
    "Hernia",      "Infiltration", "Mass",          "Nodule", "Pleural_Thickening", "Pneumonia", "Pneumothorax",
    "No Finding"};

inline constexpr std::size_t kNoFindingIndex = 14;

using LabelVector = std::array<double, kNumClasses>;

std::optional<std::size_t> find_class(std::string_view name);

/// Encodes a pipe-separated `Finding Labels` cell ("Cardiomegaly|Emphysema").
/// Throws DataError on unknown tokens or when "No Finding" is combined with a
/// disease.
LabelVector encode_labels(std::string_view finding_labels);
/// Inverse of encode_labels, in class-index order.
std::vector<std::string> decode_labels(const LabelVector& labels);
std::string format_labels(const LabelVector& labels);

/// True when labels are 0/1 and "No Finding" excludes every disease.
bool labels_valid(const LabelVector& labels);

struct LabelRecord {
    std::string image_id;
    LabelVector labels{};
};

/// Parses NIH `Data_Entry` style CSV text: a header containing `Image Index`
/// and `Finding Labels` columns, other columns ignored, row order preserved.
std::vector<LabelRecord> parse_label_csv_text(const std::string& text, const std::string& origin = "<csv>");
std::vector<LabelRecord> parse_label_csv(const std::filesystem::path& path);

/// Writes the two-column subset of the NIH layout.
void write_label_csv(const std::filesystem::path& path, const std::vector<LabelRecord>& records);

/// Splits one CSV line, honouring double-quoted fields.
std::vector<std::string> split_csv_line(std::string_view line);

/// Class name usable in file names ("No Finding" -> "No_Finding").
std::string class_file_stem(std::size_t index);

}  // namespace xrf
