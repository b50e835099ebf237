#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "fslpn/dataset.hpp"
#include "fslpn/episode.hpp"
#include "fslpn/rng.hpp"
#include "fslpn/select.hpp"
#include "fslpn/synth.hpp"

using namespace fslpn;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "fslpn_test_data";
        fs::remove_all(d);  // fixtures must not leak across binary versions
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string synth_file(Schema schema, std::size_t rows, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.schema = schema;
    cfg.rows = rows;
    cfg.seed = seed;
    const std::string path =
        (work_dir() / (std::string(schema_name(schema)) + "_" + std::to_string(rows) + "_" +
                       std::to_string(seed) + ".csv"))
            .string();
    if (!fs::exists(path)) write_synthetic_csv(path, cfg);
    return path;
}

// Hand-built schema-true CSV: header + given rows, for malformed/edge cases.
std::string write_csv(const std::string& name, const std::vector<std::string>& lines) {
    const std::string path = (work_dir() / name).string();
    std::ofstream os(path);
    for (const auto& line : lines) os << line << "\n";
    return path;
}

std::string unsw_header() {
    std::ostringstream os;
    for (int i = 0; i < 49; ++i) os << "f" << i << ",";
    os << "attack_cat,label";
    return os.str();
}

// one data row with 49 numeric features = v, given cat/label
std::string unsw_row(double v, const std::string& cat, const std::string& label) {
    std::ostringstream os;
    for (int i = 0; i < 49; ++i) os << v + i << ",";
    os << cat << "," << label;
    return os.str();
}

Dataset tiny_dataset(std::vector<double> values, std::size_t cols, std::vector<int> labels) {
    Dataset ds;
    ds.cols = cols;
    ds.rows = values.size() / cols;
    ds.values = std::move(values);
    ds.labels = std::move(labels);
    ds.categories.assign(ds.rows, "x");
    ds.row_ids.resize(ds.rows);
    for (std::size_t r = 0; r < ds.rows; ++r) ds.row_ids[r] = r;
    for (std::size_t c = 0; c < cols; ++c) ds.feature_names.push_back("f" + std::to_string(c));
    return ds;
}

}  // namespace

// ---------------------------------------------------------------------------
// loading
// ---------------------------------------------------------------------------

TEST_CASE("loader reports the exact record count for both schemas") {
    const auto unsw = load_dataset(synth_file(Schema::unsw_nb15, 300, 1), Schema::unsw_nb15);
    CHECK(unsw.rows == 300);
    CHECK(unsw.feature_names.size() == 49);
    const auto nsl = load_dataset(synth_file(Schema::nsl_kdd, 250, 1), Schema::nsl_kdd);
    CHECK(nsl.rows == 250);
    CHECK(nsl.feature_names.size() == 41);

    // real dataset counts run only when the files are provided
    if (const char* real = std::getenv("FSLPN_UNSW_TRAIN")) {
        const auto full = load_dataset(real, Schema::unsw_nb15);
        CHECK(full.rows == 175341);
    }
    if (const char* real = std::getenv("FSLPN_NSLKDD_TEST")) {
        const auto full = load_dataset(real, Schema::nsl_kdd);
        CHECK(full.rows == 22544);
    }
}

TEST_CASE("loader maps labels to binary and keeps attack categories as metadata") {
    const auto raw = load_dataset(synth_file(Schema::unsw_nb15, 400, 2), Schema::unsw_nb15);
    std::set<std::string> cats;
    for (std::size_t r = 0; r < raw.rows; ++r) {
        CHECK((raw.labels[r] == 0 || raw.labels[r] == 1));
        if (raw.labels[r] == 0) CHECK(raw.categories[r] == "Normal");
        cats.insert(raw.categories[r]);
    }
    CHECK(cats.size() > 2);  // several attack categories survive as metadata
}

TEST_CASE("empty file is rejected with a zero-record diagnostic") {
    const auto path = write_csv("empty.csv", {});
    CHECK_THROWS_WITH_AS(load_dataset(path, Schema::unsw_nb15), doctest::Contains("zero records"),
                         Error);
    const auto header_only = write_csv("header_only.csv", {unsw_header()});
    CHECK_THROWS_WITH_AS(load_dataset(header_only, Schema::unsw_nb15),
                         doctest::Contains("zero records"), Error);
}

TEST_CASE("malformed row fails with its line number") {
    const auto path =
        write_csv("malformed.csv", {unsw_header(), unsw_row(1, "Normal", "0"), "1,2,3"});
    CHECK_THROWS_WITH_AS(load_dataset(path, Schema::unsw_nb15), doctest::Contains("line 3"), Error);
}

TEST_CASE("unknown label value is a schema error") {
    const auto path = write_csv("badlabel.csv", {unsw_header(), unsw_row(1, "Normal", "2")});
    CHECK_THROWS_WITH_AS(load_dataset(path, Schema::unsw_nb15),
                         doctest::Contains("unknown label"), Error);
}

TEST_CASE("column count mismatch against the schema is rejected") {
    const auto path = write_csv("narrow.csv", {"a,b,c", "1,2,3"});
    CHECK_THROWS_AS(load_dataset(path, Schema::unsw_nb15), Error);
}

// ---------------------------------------------------------------------------
// encoding + preprocessing
// ---------------------------------------------------------------------------

TEST_CASE("categorical columns are detected and frequency-ranked") {
    const auto raw = load_dataset(synth_file(Schema::unsw_nb15, 500, 3), Schema::unsw_nb15);
    // proto/service/state are the string columns in the generator
    std::size_t categorical = 0;
    for (const auto& col : raw.cols) categorical += col.categorical ? 1 : 0;
    CHECK(categorical == 3);

    const auto map = build_encoding_map(raw);
    CHECK(map.columns.size() == 3);
    for (const auto& [col, codes] : map.columns) {
        // codes are 1..K, dense
        std::set<int> seen;
        for (const auto& [value, code] : codes) {
            CHECK(code >= 1);
            seen.insert(code);
        }
        CHECK(seen.size() == codes.size());
        // most frequent value holds code 1
        std::map<std::string, int> counts;
        for (const auto& v : raw.cols[col].str) ++counts[v];
        std::string top;
        int best = -1;
        for (const auto& [v, c] : counts)
            if (c > best) {
                best = c;
                top = v;
            }
        CHECK(codes.at(top) == 1);
    }
}

TEST_CASE("encoding map round-trips through its text form") {
    const auto raw = load_dataset(synth_file(Schema::unsw_nb15, 200, 4), Schema::unsw_nb15);
    const auto map = build_encoding_map(raw);
    const auto back = EncodingMap::parse(map.serialize());
    CHECK(back.columns == map.columns);
}

TEST_CASE("unseen categorical values fall back to the reserved index with a warning") {
    const auto train = load_dataset(synth_file(Schema::unsw_nb15, 200, 5), Schema::unsw_nb15);
    const auto map = build_encoding_map(train);
    // craft a file with an unseen protocol value
    std::ostringstream row;
    for (int i = 0; i < 49; ++i) {
        if (i == 1)
            row << "zzz_proto,";  // column 1 is proto in the generator layout
        else
            row << i << ",";
    }
    row << "Normal,0";
    std::ostringstream row2;
    for (int i = 0; i < 49; ++i) {
        if (i == 1)
            row2 << "tcp,";
        else
            row2 << i << ",";
    }
    row2 << "Exploits,1";
    const auto path = write_csv("unseen.csv", {unsw_header(), row.str(), row2.str()});
    const auto raw = load_dataset(path, Schema::unsw_nb15);
    const auto ds = encode(raw, map);
    CHECK(ds.unseen_category_count >= 1);
    CHECK(ds.values[1] == 0.0);  // reserved unseen code
}

TEST_CASE("preprocess normalizes rows to unit norm (worked example and idempotence)") {
    auto ds = tiny_dataset({3, 4, 1, 0}, 2, {0, 1});
    l2_normalize_dataset(ds);
    CHECK(ds.values[0] == doctest::Approx(0.6));
    CHECK(ds.values[1] == doctest::Approx(0.8));
    CHECK(ds.values[2] == doctest::Approx(1.0));

    auto again = ds;
    l2_normalize_dataset(again);
    for (std::size_t i = 0; i < ds.values.size(); ++i)
        CHECK(std::fabs(again.values[i] - ds.values[i]) < 1e-9);
}

TEST_CASE("zero rows pass normalization unchanged and are counted") {
    auto ds = tiny_dataset({0, 0, 1, 1}, 2, {0, 1});
    l2_normalize_dataset(ds);
    CHECK(ds.zero_row_count == 1);
    CHECK(ds.values[0] == 0.0);
    CHECK(ds.values[1] == 0.0);
}

TEST_CASE("full preprocess on a schema file yields unit-norm selected rows") {
    const auto raw = load_dataset(synth_file(Schema::unsw_nb15, 300, 6), Schema::unsw_nb15);
    const auto map = build_encoding_map(raw);
    auto encoded = encode(raw, map);
    SelectConfig sc;
    sc.target_count = 13;
    const auto report = sulov_select(encoded, sc);
    const auto kept = report.kept_indices();
    const Dataset ds = preprocess(raw, map, &kept);
    CHECK(ds.cols == 13);
    for (std::size_t r = 0; r < ds.rows; ++r) {
        double norm = 0;
        for (std::size_t c = 0; c < ds.cols; ++c) norm += ds.row(r)[c] * ds.row(r)[c];
        if (norm > 0) CHECK(std::fabs(std::sqrt(norm) - 1.0) < 1e-9);
    }
}

// ---------------------------------------------------------------------------
// feature selection
// ---------------------------------------------------------------------------

TEST_CASE("selection keeps exactly the schema default counts") {
    for (auto [schema, want] :
         {std::pair{Schema::unsw_nb15, std::size_t{13}}, std::pair{Schema::nsl_kdd, std::size_t{15}}}) {
        const auto raw = load_dataset(synth_file(schema, 600, 7), schema);
        const auto map = build_encoding_map(raw);
        const auto ds = encode(raw, map);
        SelectConfig sc;
        sc.target_count = schema_default_keep(schema);
        const auto report = sulov_select(ds, sc);
        CHECK(report.kept_indices().size() == want);
    }
}

TEST_CASE("constant features score zero information and are dropped first") {
    const auto raw = load_dataset(synth_file(Schema::unsw_nb15, 300, 8), Schema::unsw_nb15);
    const auto map = build_encoding_map(raw);
    const auto ds = encode(raw, map);
    SelectConfig sc;
    sc.target_count = 13;
    const auto report = sulov_select(ds, sc);
    bool found_constant = false;
    for (const auto& d : report.decisions) {
        if (d.name == "is_ftp_login") {  // the generator's constant column
            found_constant = true;
            CHECK(!d.kept);
            CHECK(d.mis == 0.0);
            CHECK(d.reason.find("zero information") != std::string::npos);
        }
    }
    CHECK(found_constant);
}

TEST_CASE("no kept pair violates the correlation constraint (checked from the report itself)") {
    const auto raw = load_dataset(synth_file(Schema::unsw_nb15, 800, 9), Schema::unsw_nb15);
    const auto map = build_encoding_map(raw);
    const auto ds = encode(raw, map);
    SelectConfig sc;
    sc.target_count = 13;
    const auto report = sulov_select(ds, sc);
    const auto kept = report.kept_indices();
    CHECK(kept.size() == 13);
    for (std::size_t a = 0; a < kept.size(); ++a)
        for (std::size_t b = a + 1; b < kept.size(); ++b)
            CHECK(std::fabs(report.corr(kept[a], kept[b])) <= sc.correlation_threshold);
}

TEST_CASE("duplicated feature: the lower-MIS copy is dropped, the higher kept") {
    Rng rng(30);
    const std::size_t rows = 400;
    std::vector<double> values(rows * 4);
    std::vector<int> labels(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        labels[r] = static_cast<int>(rng.below(2));
        const double signal = labels[r] == 0 ? -1.0 : 1.0;
        const double a = signal + rng.gaussian() * 0.4;       // feature A: clean signal
        const double b = a + rng.gaussian() * 0.35;           // feature B: same signal, noisier
        values[r * 4 + 0] = a;
        values[r * 4 + 1] = b;
        values[r * 4 + 2] = signal * 0.3 + rng.gaussian();    // weak independent signal
        values[r * 4 + 3] = rng.gaussian();                   // noise
    }
    auto ds = tiny_dataset(std::move(values), 4, std::move(labels));
    SelectConfig sc;
    sc.target_count = 3;
    const auto report = sulov_select(ds, sc);
    CHECK(std::fabs(report.corr(0, 1)) > sc.correlation_threshold);
    CHECK(report.decisions[0].mis > report.decisions[1].mis);
    CHECK(report.decisions[0].kept);
    CHECK(!report.decisions[1].kept);
    CHECK(report.decisions[1].reason.find("correlated with f0") != std::string::npos);
}

TEST_CASE("selection is invariant to feature column order") {
    const auto raw = load_dataset(synth_file(Schema::unsw_nb15, 500, 10), Schema::unsw_nb15);
    const auto map = build_encoding_map(raw);
    const auto ds = encode(raw, map);
    SelectConfig sc;
    sc.target_count = 13;
    const auto base = sulov_select(ds, sc);
    std::set<std::string> base_kept;
    for (const auto& d : base.decisions)
        if (d.kept) base_kept.insert(d.name);

    // rotate the columns
    Dataset rotated = ds;
    const std::size_t F = ds.cols;
    for (std::size_t c = 0; c < F; ++c) {
        const std::size_t src = (c + 17) % F;
        rotated.feature_names[c] = ds.feature_names[src];
        for (std::size_t r = 0; r < ds.rows; ++r)
            rotated.values[r * F + c] = ds.values[r * F + src];
    }
    const auto permuted = sulov_select(rotated, sc);
    std::set<std::string> permuted_kept;
    for (const auto& d : permuted.decisions)
        if (d.kept) permuted_kept.insert(d.name);
    CHECK(base_kept == permuted_kept);
}

TEST_CASE("uncorrelated features below threshold are all kept when the target allows") {
    Rng rng(31);
    const std::size_t rows = 300;
    std::vector<double> values(rows * 3);
    std::vector<int> labels(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        labels[r] = static_cast<int>(rng.below(2));
        for (std::size_t c = 0; c < 3; ++c)
            values[r * 3 + c] = rng.gaussian() + (c == 0 ? labels[r] : 0.0);
    }
    auto ds = tiny_dataset(std::move(values), 3, std::move(labels));
    SelectConfig sc;
    sc.target_count = 3;
    const auto report = sulov_select(ds, sc);
    CHECK(report.kept_indices().size() == 3);
}

TEST_CASE("selection report text lists one record per feature") {
    const auto raw = load_dataset(synth_file(Schema::unsw_nb15, 200, 11), Schema::unsw_nb15);
    const auto map = build_encoding_map(raw);
    const auto ds = encode(raw, map);
    SelectConfig sc;
    sc.target_count = 13;
    const auto report = sulov_select(ds, sc);
    const std::string text = report.to_text();
    for (const auto& name : ds.feature_names) CHECK(text.find(name) != std::string::npos);
    CHECK(text.find("kept") != std::string::npos);
    CHECK(text.find("dropped") != std::string::npos);
}

// ---------------------------------------------------------------------------
// episodes
// ---------------------------------------------------------------------------

namespace {

Dataset episode_dataset(std::size_t per_class) {
    Rng rng(32);
    std::vector<double> values;
    std::vector<int> labels;
    for (std::size_t i = 0; i < 2 * per_class; ++i) {
        values.push_back(rng.gaussian());
        values.push_back(rng.gaussian());
        labels.push_back(i < per_class ? 0 : 1);
    }
    return tiny_dataset(std::move(values), 2, std::move(labels));
}

}  // namespace

TEST_CASE("episode shape: 2-way 2-shot with 15 queries, support and query disjoint") {
    const auto ds = episode_dataset(40);
    const auto ep = sample_episode(ds, 2, 2, 15, 99);
    CHECK(ep.support_rows.size() == 4);
    CHECK(ep.query_rows.size() == 30);
    std::set<std::size_t> support(ep.support_rows.begin(), ep.support_rows.end());
    for (auto q : ep.query_rows) CHECK(support.count(q) == 0);
    CHECK(ep.classes == std::vector<int>{0, 1});
    for (int label : ep.query_labels)
        CHECK((label == ep.classes[0] || label == ep.classes[1]));
}

TEST_CASE("same seed reproduces the episode bit-exactly") {
    const auto ds = episode_dataset(40);
    const auto a = sample_episode(ds, 2, 3, 10, 1234);
    const auto b = sample_episode(ds, 2, 3, 10, 1234);
    CHECK(a.support_rows == b.support_rows);
    CHECK(a.query_rows == b.query_rows);
    const auto c = sample_episode(ds, 2, 3, 10, 1235);
    CHECK(a.support_rows != c.support_rows);  // different seed, different draw
}

TEST_CASE("support/query disjointness holds over 1000 seeds") {
    const auto ds = episode_dataset(25);
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto ep = sample_episode(ds, 2, 2, 5, seed);
        std::set<std::size_t> seen(ep.support_rows.begin(), ep.support_rows.end());
        for (auto q : ep.query_rows) {
            CHECK(seen.count(q) == 0);
            seen.insert(q);
        }
        CHECK(seen.size() == ep.support_rows.size() + ep.query_rows.size());
    }
}

TEST_CASE("N+Q equal to the class size uses every sample exactly once") {
    const auto ds = episode_dataset(8);
    const auto ep = sample_episode(ds, 2, 3, 5, 7);  // 3+5 = 8 per class
    std::set<std::size_t> used(ep.support_rows.begin(), ep.support_rows.end());
    used.insert(ep.query_rows.begin(), ep.query_rows.end());
    CHECK(used.size() == 16);  // both classes fully consumed, no repeats
}

TEST_CASE("insufficient class population names the class in the error") {
    auto ds = episode_dataset(30);
    ds.labels.assign(ds.rows, 0);
    ds.labels[0] = 1;  // class 1 has a single sample
    CHECK_THROWS_WITH_AS(sample_episode(ds, 2, 2, 5, 1), doctest::Contains("class 1"), Error);
}

// ---------------------------------------------------------------------------
// binary cache
// ---------------------------------------------------------------------------

TEST_CASE("FSLP cache round-trips the dataset bit-exactly at storage precision") {
    const auto raw = load_dataset(synth_file(Schema::unsw_nb15, 150, 12), Schema::unsw_nb15);
    const auto map = build_encoding_map(raw);
    auto ds = encode(raw, map);
    l2_normalize_dataset(ds);
    const std::string path = (work_dir() / "cache.fslp").string();
    save_dataset_cache(ds, path);
    const Dataset back = load_dataset_cache(path);

    CHECK(back.rows == ds.rows);
    CHECK(back.cols == ds.cols);
    CHECK(back.labels == ds.labels);
    CHECK(back.categories == ds.categories);
    CHECK(back.row_ids == ds.row_ids);
    CHECK(back.normalized == ds.normalized);
    CHECK(back.feature_names == ds.feature_names);
    for (std::size_t i = 0; i < ds.values.size(); ++i)
        CHECK(static_cast<float>(back.values[i]) == static_cast<float>(ds.values[i]));

    // saving the loaded copy reproduces the file byte-for-byte
    const std::string path2 = (work_dir() / "cache2.fslp").string();
    save_dataset_cache(back, path2);
    std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
    std::string bytes_a((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string bytes_b((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(bytes_a == bytes_b);
}

TEST_CASE("cache loader rejects bad magic and truncation") {
    const std::string bad = (work_dir() / "bad.fslp").string();
    {
        std::ofstream os(bad, std::ios::binary);
        os << "NOPE1234567890";
    }
    CHECK_THROWS_WITH_AS(load_dataset_cache(bad), doctest::Contains("magic"), Error);

    // valid file, then truncate it
    auto ds = tiny_dataset({1, 2, 3, 4}, 2, {0, 1});
    const std::string full = (work_dir() / "full.fslp").string();
    save_dataset_cache(ds, full);
    std::ifstream in(full, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string cut = (work_dir() / "cut.fslp").string();
    {
        std::ofstream os(cut, std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_WITH_AS(load_dataset_cache(cut), doctest::Contains("truncated"), Error);
}

TEST_CASE("synthetic generator is deterministic per seed and differs across seeds") {
    const std::string a = synth_file(Schema::unsw_nb15, 100, 77);
    SynthConfig cfg;
    cfg.schema = Schema::unsw_nb15;
    cfg.rows = 100;
    cfg.seed = 77;
    const std::string b = (work_dir() / "repeat.csv").string();
    write_synthetic_csv(b, cfg);
    std::ifstream fa(a), fb(b);
    std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(ca == cb);
}
