#include "fslpn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fslpn/kernels.hpp"

namespace fslpn {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == ',' && !quoted) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

bool parse_number(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* begin = s.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    return end == begin + s.size() && std::isfinite(out);
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

struct SchemaLayout {
    std::size_t features;
    std::size_t total_cols;
};

SchemaLayout layout(Schema s) {
    switch (s) {
        case Schema::unsw_nb15: return {49, 51};  // features + attack_cat + label
        case Schema::nsl_kdd: return {41, 43};    // features + label + difficulty
    }
    return {0, 0};
}

}  // namespace

Schema schema_from_string(const std::string& s) {
    const std::string v = lower(s);
    if (v == "unsw_nb15" || v == "unsw-nb15" || v == "unsw") return Schema::unsw_nb15;
    if (v == "nsl_kdd" || v == "nsl-kdd" || v == "nsl") return Schema::nsl_kdd;
    throw_parse("unknown schema '" + s + "' (expected unsw_nb15 or nsl_kdd)");
}

const char* schema_name(Schema s) {
    return s == Schema::unsw_nb15 ? "unsw_nb15" : "nsl_kdd";
}

std::size_t schema_feature_count(Schema s) { return layout(s).features; }

std::size_t schema_default_keep(Schema s) { return s == Schema::unsw_nb15 ? 13 : 15; }

RawDataset load_dataset(const std::string& path, Schema schema) {
    std::ifstream in(path);
    if (!in) throw_data("cannot open dataset file: " + path);
    const SchemaLayout lay = layout(schema);

    std::string line;
    if (!std::getline(in, line))
        throw_data("empty dataset file (zero records, no header): " + path);
    const auto header = split_csv_line(line);
    if (header.size() != lay.total_cols)
        throw_data("header of " + path + " has " + std::to_string(header.size()) +
                   " columns, schema " + schema_name(schema) + " expects " +
                   std::to_string(lay.total_cols));
    if (schema == Schema::unsw_nb15) {
        if (lower(header[lay.features]) != "attack_cat" || lower(header[lay.features + 1]) != "label")
            throw_data("unsw_nb15 header must end with attack_cat,label (got " +
                       header[lay.features] + "," + header[lay.features + 1] + ")");
    }

    RawDataset raw;
    raw.schema = schema;
    raw.feature_names.assign(header.begin(), header.begin() + lay.features);
    raw.cols.resize(lay.features);

    // Pass 1: column counts and categorical detection.
    std::size_t line_no = 1;
    std::size_t rows = 0;
    std::vector<bool> categorical(lay.features, false);
    {
        double tmp;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            const auto cells = split_csv_line(line);
            if (cells.size() != lay.total_cols)
                throw_data("malformed row at line " + std::to_string(line_no) + " of " + path +
                           ": " + std::to_string(cells.size()) + " columns, expected " +
                           std::to_string(lay.total_cols));
            for (std::size_t c = 0; c < lay.features; ++c)
                if (!categorical[c] && !parse_number(cells[c], tmp)) categorical[c] = true;
            ++rows;
        }
    }
    if (rows == 0) throw_data("empty dataset file (zero records): " + path);

    for (std::size_t c = 0; c < lay.features; ++c) {
        raw.cols[c].categorical = categorical[c];
        if (categorical[c])
            raw.cols[c].str.reserve(rows);
        else
            raw.cols[c].num.reserve(rows);
    }
    raw.labels.reserve(rows);
    raw.categories.reserve(rows);

    // Pass 2: fill.
    in.clear();
    in.seekg(0);
    std::getline(in, line);  // header
    line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line);
        for (std::size_t c = 0; c < lay.features; ++c) {
            if (categorical[c]) {
                raw.cols[c].str.push_back(cells[c]);
            } else {
                double v;
                parse_number(cells[c], v);
                raw.cols[c].num.push_back(v);
            }
        }
        if (schema == Schema::unsw_nb15) {
            const std::string& lab = cells[lay.features + 1];
            if (lab == "0") {
                raw.labels.push_back(0);
            } else if (lab == "1") {
                raw.labels.push_back(1);
            } else {
                throw_data("unknown label '" + lab + "' at line " + std::to_string(line_no) +
                           " (unsw_nb15 expects 0 or 1)");
            }
            const std::string& cat = cells[lay.features];
            raw.categories.push_back(!cat.empty() ? cat
                                                  : (raw.labels.back() == 0 ? "Normal" : "Attack"));
        } else {
            std::string lab = lower(cells[lay.features]);
            if (!lab.empty() && lab.back() == '.') lab.pop_back();
            if (lab.empty())
                throw_data("unknown empty label at line " + std::to_string(line_no));
            raw.labels.push_back(lab == "normal" ? 0 : 1);
            raw.categories.push_back(lab);
        }
    }
    raw.rows = rows;
    return raw;
}

EncodingMap build_encoding_map(const RawDataset& raw) {
    EncodingMap map;
    for (std::size_t c = 0; c < raw.cols.size(); ++c) {
        if (!raw.cols[c].categorical) continue;
        std::map<std::string, std::size_t> counts;
        for (const auto& v : raw.cols[c].str) ++counts[v];
        std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        auto& codes = map.columns[c];
        int code = 1;
        for (const auto& [value, count] : ranked) codes[value] = code++;
    }
    return map;
}

std::string EncodingMap::serialize() const {
    std::ostringstream os;
    for (const auto& [col, codes] : columns) {
        os << "column " << col << "\n";
        for (const auto& [value, code] : codes) os << "  " << code << " " << value << "\n";
    }
    return os.str();
}

EncodingMap EncodingMap::parse(const std::string& text) {
    EncodingMap map;
    std::istringstream is(text);
    std::string line;
    std::size_t col = 0;
    bool have_col = false;
    while (std::getline(is, line)) {
        if (trim(line).empty()) continue;
        if (line.rfind("column ", 0) == 0) {
            col = std::stoul(line.substr(7));
            have_col = true;
            map.columns[col];
        } else {
            if (!have_col) throw_data("encoding map text: value line before any column header");
            std::istringstream ls(line);
            int code;
            ls >> code;
            std::string value;
            std::getline(ls, value);
            map.columns[col][trim(value)] = code;
        }
    }
    return map;
}

Dataset encode(const RawDataset& raw, const EncodingMap& map) {
    for (std::size_t c = 0; c < raw.cols.size(); ++c)
        if (raw.cols[c].categorical && map.columns.find(c) == map.columns.end())
            throw_contract("encoding map does not cover categorical column " +
                           raw.feature_names[c]);

    Dataset ds;
    ds.feature_names = raw.feature_names;
    ds.rows = raw.rows;
    ds.cols = raw.cols.size();
    ds.labels = raw.labels;
    ds.categories = raw.categories;
    ds.values.resize(ds.rows * ds.cols);
    ds.row_ids.resize(ds.rows);
    for (std::size_t r = 0; r < ds.rows; ++r) ds.row_ids[r] = r;

    for (std::size_t c = 0; c < ds.cols; ++c) {
        if (raw.cols[c].categorical) {
            const auto& codes = map.columns.at(c);
            for (std::size_t r = 0; r < ds.rows; ++r) {
                auto it = codes.find(raw.cols[c].str[r]);
                if (it == codes.end()) {
                    ds.values[r * ds.cols + c] = 0.0;  // reserved unseen code
                    ++ds.unseen_category_count;
                } else {
                    ds.values[r * ds.cols + c] = static_cast<double>(it->second);
                }
            }
        } else {
            for (std::size_t r = 0; r < ds.rows; ++r)
                ds.values[r * ds.cols + c] = raw.cols[c].num[r];
        }
    }
    return ds;
}

void apply_selection(Dataset& ds, const std::vector<std::size_t>& kept_indices) {
    for (std::size_t idx : kept_indices)
        if (idx >= ds.cols)
            throw_contract("selection index " + std::to_string(idx) + " out of range");
    std::vector<double> values(ds.rows * kept_indices.size());
    std::vector<std::string> names(kept_indices.size());
    for (std::size_t k = 0; k < kept_indices.size(); ++k) names[k] = ds.feature_names[kept_indices[k]];
    for (std::size_t r = 0; r < ds.rows; ++r)
        for (std::size_t k = 0; k < kept_indices.size(); ++k)
            values[r * kept_indices.size() + k] = ds.values[r * ds.cols + kept_indices[k]];
    ds.values = std::move(values);
    ds.feature_names = std::move(names);
    ds.cols = kept_indices.size();
}

void l2_normalize_dataset(Dataset& ds) {
    ds.zero_row_count = 0;
    for (std::size_t r = 0; r < ds.rows; ++r) {
        double* row = ds.row(r);
        const double norm = std::sqrt(kern::sumsq(row, ds.cols));
        if (norm == 0.0) {
            ++ds.zero_row_count;  // zero rows pass through unchanged
            continue;
        }
        kern::scale(1.0 / norm, row, ds.cols);
    }
    ds.normalized = true;
}

Dataset preprocess(const RawDataset& raw, const EncodingMap& map,
                   const std::vector<std::size_t>* kept_indices) {
    Dataset ds = encode(raw, map);
    if (kept_indices != nullptr) apply_selection(ds, *kept_indices);
    l2_normalize_dataset(ds);
    return ds;
}

std::vector<std::vector<std::size_t>> Dataset::class_index() const {
    std::vector<std::vector<std::size_t>> idx(2);
    for (std::size_t r = 0; r < rows; ++r) {
        const int y = labels[r];
        if (y < 0 || y > 1) throw_contract("non-binary label " + std::to_string(y));
        idx[static_cast<std::size_t>(y)].push_back(r);
    }
    return idx;
}

// ---------------------------------------------------------------------------
// FSLP binary cache
// ---------------------------------------------------------------------------

namespace {

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

std::uint32_t get_u32(std::istream& is, const char* what) {
    std::uint32_t v;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) throw_data(std::string("truncated cache: ") + what);
    return v;
}
std::uint64_t get_u64(std::istream& is, const char* what) {
    std::uint64_t v;
    if (!is.read(reinterpret_cast<char*>(&v), 8)) throw_data(std::string("truncated cache: ") + what);
    return v;
}

constexpr std::uint32_t kCacheVersion = 1;

}  // namespace

void save_dataset_cache(const Dataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw_data("cannot write cache file: " + path);
    os.write("FSLP", 4);
    put_u32(os, kCacheVersion);
    put_u32(os, static_cast<std::uint32_t>(ds.rows));
    put_u32(os, static_cast<std::uint32_t>(ds.cols));
    std::vector<float> f32(ds.values.begin(), ds.values.end());
    os.write(reinterpret_cast<const char*>(f32.data()),
             static_cast<std::streamsize>(f32.size() * sizeof(float)));

    // Trailing blocks: labels, category table, row ids, flags, names.
    for (int y : ds.labels) put_u32(os, static_cast<std::uint32_t>(y));
    std::map<std::string, std::uint32_t> cat_ids;
    std::vector<std::string> cat_names;
    for (const auto& c : ds.categories)
        if (cat_ids.emplace(c, static_cast<std::uint32_t>(cat_names.size())).second)
            cat_names.push_back(c);
    put_u32(os, static_cast<std::uint32_t>(cat_names.size()));
    for (const auto& name : cat_names) {
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
    }
    for (const auto& c : ds.categories) put_u32(os, cat_ids[c]);
    for (auto id : ds.row_ids) put_u64(os, id);
    put_u32(os, ds.normalized ? 1u : 0u);
    for (const auto& name : ds.feature_names) {
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
    }
    if (!os) throw_data("short write while saving cache: " + path);
}

Dataset load_dataset_cache(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw_data("cannot open cache file: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "FSLP", 4) != 0)
        throw_data("bad cache magic in " + path + " (expected FSLP)");
    const std::uint32_t version = get_u32(is, "version");
    if (version != kCacheVersion)
        throw_data("unsupported cache version " + std::to_string(version));
    Dataset ds;
    ds.rows = get_u32(is, "row count");
    ds.cols = get_u32(is, "column count");
    std::vector<float> f32(ds.rows * ds.cols);
    if (!is.read(reinterpret_cast<char*>(f32.data()),
                 static_cast<std::streamsize>(f32.size() * sizeof(float))))
        throw_data("truncated cache: feature table");
    ds.values.assign(f32.begin(), f32.end());

    ds.labels.resize(ds.rows);
    for (std::size_t r = 0; r < ds.rows; ++r) ds.labels[r] = static_cast<int>(get_u32(is, "labels"));
    const std::uint32_t ncat = get_u32(is, "category table");
    std::vector<std::string> cat_names(ncat);
    for (auto& name : cat_names) {
        const std::uint32_t len = get_u32(is, "category name length");
        name.resize(len);
        if (!is.read(name.data(), len)) throw_data("truncated cache: category name");
    }
    ds.categories.resize(ds.rows);
    for (std::size_t r = 0; r < ds.rows; ++r) {
        const std::uint32_t id = get_u32(is, "category ids");
        if (id >= ncat) throw_data("cache category id out of range");
        ds.categories[r] = cat_names[id];
    }
    ds.row_ids.resize(ds.rows);
    for (std::size_t r = 0; r < ds.rows; ++r) ds.row_ids[r] = get_u64(is, "row ids");
    ds.normalized = get_u32(is, "flags") != 0;
    ds.feature_names.resize(ds.cols);
    for (auto& name : ds.feature_names) {
        const std::uint32_t len = get_u32(is, "feature name length");
        name.resize(len);
        if (!is.read(name.data(), len)) throw_data("truncated cache: feature name");
    }
    return ds;
}

}  // namespace fslpn
