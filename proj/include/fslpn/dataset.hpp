#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fslpn/errors.hpp"

namespace fslpn {

// Input schemas. Column counts follow the published table layouts: 49 feature
// columns + attack_cat + label, and 41 feature columns + label + difficulty
// (difficulty ignored). Both files carry a header row.
enum class Schema { unsw_nb15, nsl_kdd };

Schema schema_from_string(const std::string& s);
const char* schema_name(Schema s);
std::size_t schema_feature_count(Schema s);   // 49 / 41
std::size_t schema_default_keep(Schema s);    // 13 / 15 selected features

// One parsed CSV column. Categorical columns (any cell that does not parse as
// a number) keep their strings for encoding; numeric columns hold doubles.
struct RawColumn {
    bool categorical = false;
    std::vector<double> num;
    std::vector<std::string> str;
};

struct RawDataset {
    Schema schema = Schema::unsw_nb15;
    std::vector<std::string> feature_names;
    std::vector<RawColumn> cols;
    std::vector<int> labels;              // 0 normal, 1 abnormal
    std::vector<std::string> categories;  // attack category metadata
    std::size_t rows = 0;
};

RawDataset load_dataset(const std::string& path, Schema schema);

// Frequency-ranked integer encoding for categorical columns, built from the
// training split only. Codes are 1..K by descending frequency (ties broken
// lexicographically); 0 is reserved for unseen values.
struct EncodingMap {
    std::map<std::size_t, std::map<std::string, int>> columns;  // feature index -> value -> code

    std::string serialize() const;
    static EncodingMap parse(const std::string& text);
};

EncodingMap build_encoding_map(const RawDataset& raw);

// Fully numeric dataset. Stored as double so feature selection statistics are
// not float-truncated; training casts rows into float tensors per episode.
struct Dataset {
    std::vector<std::string> feature_names;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;  // row-major
    std::vector<int> labels;
    std::vector<std::string> categories;
    std::vector<std::uint64_t> row_ids;  // stable sample identity
    bool normalized = false;

    std::size_t unseen_category_count = 0;  // encode() warnings
    std::size_t zero_row_count = 0;         // l2 normalization warnings

    double* row(std::size_t r) { return values.data() + r * cols; }
    const double* row(std::size_t r) const { return values.data() + r * cols; }

    // Row indices per binary class: [0] normal, [1] abnormal.
    std::vector<std::vector<std::size_t>> class_index() const;
};

Dataset encode(const RawDataset& raw, const EncodingMap& map);
void apply_selection(Dataset& ds, const std::vector<std::size_t>& kept_indices);
void l2_normalize_dataset(Dataset& ds);

// encode -> optional column subset -> row-wise L2 normalization.
Dataset preprocess(const RawDataset& raw, const EncodingMap& map,
                   const std::vector<std::size_t>* kept_indices = nullptr);

// Binary cache: "FSLP" magic, version, row/column counts, row-major f32 LE
// feature table; labels, category table and row ids follow as trailing blocks.
void save_dataset_cache(const Dataset& ds, const std::string& path);
Dataset load_dataset_cache(const std::string& path);

}  // namespace fslpn
