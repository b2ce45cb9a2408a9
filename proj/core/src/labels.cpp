#include "xrf/labels.h"

#include <fstream>
#include <sstream>

#include "xrf/error.h"

namespace xrf {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::optional<std::size_t> find_class(std::string_view name) {
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        if (kClassNames[i] == name) return i;
    }
    return std::nullopt;
}

LabelVector encode_labels(std::string_view finding_labels) {
    LabelVector out{};
    std::size_t start = 0;
    while (start <= finding_labels.size()) {
        auto end = finding_labels.find('|', start);
        if (end == std::string_view::npos) end = finding_labels.size();
        const auto token = trim(finding_labels.substr(start, end - start));
        const auto index = find_class(token);
        if (!index) throw DataError("unknown finding label '" + std::string(token) + "'");
        out[*index] = 1.0;
        start = end + 1;
    }
    if (out[kNoFindingIndex] == 1.0) {
        for (std::size_t i = 0; i < kNumDiseases; ++i) {
            if (out[i] != 0.0) {
                throw DataError("'No Finding' combined with '" + std::string(kClassNames[i]) + "'");
            }
        }
    }
    return out;
}

std::vector<std::string> decode_labels(const LabelVector& labels) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        if (labels[i] != 0.0) out.emplace_back(kClassNames[i]);
    }
    return out;
}

std::string format_labels(const LabelVector& labels) {
    std::string out;
    for (const auto& name : decode_labels(labels)) {
        if (!out.empty()) out += '|';
        out += name;
    }
    return out;
}

bool labels_valid(const LabelVector& labels) {
    for (double v : labels) {
        if (v != 0.0 && v != 1.0) return false;
    }
    if (labels[kNoFindingIndex] == 1.0) {
        for (std::size_t i = 0; i < kNumDiseases; ++i) {
            if (labels[i] != 0.0) return false;
        }
    }
    return true;
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    fields.push_back(std::move(field));
    return fields;
}

std::vector<LabelRecord> parse_label_csv_text(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw DataError(origin + ": empty label CSV");
    const auto header = split_csv_line(line);
    std::optional<std::size_t> id_col, label_col;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const auto name = trim(header[i]);
        if (name == "Image Index") id_col = i;
        if (name == "Finding Labels") label_col = i;
    }
    if (!id_col || !label_col) {
        throw DataError(origin + ": header must contain 'Image Index' and 'Finding Labels' columns");
    }
    std::vector<LabelRecord> records;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() <= std::max(*id_col, *label_col)) {
            throw DataError(origin + ": row " + std::to_string(row) + " has too few columns");
        }
        LabelRecord rec;
        rec.image_id = std::string(trim(fields[*id_col]));
        try {
            rec.labels = encode_labels(fields[*label_col]);
        } catch (const DataError& e) {
            throw DataError(origin + ": row " + std::to_string(row) + ": " + e.what());
        }
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<LabelRecord> parse_label_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open label CSV " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_label_csv_text(ss.str(), path.string());
}

void write_label_csv(const std::filesystem::path& path, const std::vector<LabelRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "Image Index,Finding Labels\n";
    for (const auto& r : records) out << r.image_id << ',' << format_labels(r.labels) << '\n';
}

std::string class_file_stem(std::size_t index) {
    std::string s(kClassNames.at(index));
    for (auto& c : s) {
        if (c == ' ') c = '_';
    }
    return s;
}

}  // namespace xrf
