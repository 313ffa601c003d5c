#pragma once

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace arcprobit {

using Index = std::uint32_t;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr const char* kInterceptName = "(Intercept)";

// Cell indices grouped by cluster: group g owns cells[offsets[g] .. offsets[g+1]).
struct GroupedView {
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> cells;

    std::size_t n_groups() const noexcept { return offsets.empty() ? 0 : offsets.size() - 1; }
    std::size_t size(std::size_t g) const noexcept { return offsets[g + 1] - offsets[g]; }
    std::span<const std::size_t> group(std::size_t g) const noexcept {
        return {cells.data() + offsets[g], size(g)};
    }
};

// Observed cells of a sparse R x C binary response array with covariates.
// Immutable after make_dataset(); safe to share across threads.
struct SparseBinaryDataset {
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<Index> row;
    std::vector<Index> col;
    std::vector<std::uint8_t> y;
    RowMatrix x;  // N x p
    std::vector<std::string> feature_names;
    std::vector<std::string> row_labels;  // optional; empty when ids are dense already
    std::vector<std::string> col_labels;
    std::size_t duplicates_dropped = 0;

    GroupedView row_view;
    GroupedView col_view;

    std::size_t n_obs() const noexcept { return y.size(); }
    std::size_t n_features() const noexcept { return static_cast<std::size_t>(x.cols()); }
};

struct DatasetStats {
    std::size_t n_obs = 0;
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    double max_row_share = 0.0;  // eps_R
    double max_col_share = 0.0;  // eps_C
    std::size_t n_singleton_rows = 0;
    std::size_t n_singleton_cols = 0;
    std::size_t n_empty_rows = 0;
    std::size_t n_empty_cols = 0;
};

namespace detail {

// Stable counting sort of `order` by key[order[k]] in [0, n_keys).
inline std::vector<std::size_t> counting_sort(const std::vector<std::size_t>& order,
                                              const std::vector<Index>& key, std::size_t n_keys,
                                              std::vector<std::size_t>* offsets_out) {
    std::vector<std::size_t> counts(n_keys + 1, 0);
    for (std::size_t c : order) ++counts[key[c] + 1];
    for (std::size_t g = 0; g < n_keys; ++g) counts[g + 1] += counts[g];
    if (offsets_out) *offsets_out = counts;
    std::vector<std::size_t> out(order.size());
    for (std::size_t c : order) out[counts[key[c]]++] = c;
    return out;
}

inline GroupedView group_by(const std::vector<Index>& primary, std::size_t n_primary,
                            const std::vector<Index>& secondary, std::size_t n_secondary) {
    std::vector<std::size_t> identity(primary.size());
    for (std::size_t c = 0; c < identity.size(); ++c) identity[c] = c;
    // LSD radix: secondary key first, then stable pass on the primary key.
    auto by_secondary = counting_sort(identity, secondary, n_secondary, nullptr);
    GroupedView view;
    view.cells = counting_sort(by_secondary, primary, n_primary, &view.offsets);
    return view;
}

} // namespace detail

// Groups cells by row (ascending i, then j) and by column (ascending j,
// then i) in O(N + R + C).
inline void build_views(SparseBinaryDataset& d) {
    d.row_view = detail::group_by(d.row, d.n_rows, d.col, d.n_cols);
    d.col_view = detail::group_by(d.col, d.n_cols, d.row, d.n_rows);
}

inline void validate(const SparseBinaryDataset& d) {
    const std::size_t n = d.y.size();
    if (d.row.size() != n || d.col.size() != n || static_cast<std::size_t>(d.x.rows()) != n) {
        throw SchemaError("dataset arrays have inconsistent lengths");
    }
    if (!d.feature_names.empty() && d.feature_names.size() != d.n_features()) {
        throw SchemaError("feature name count does not match the feature matrix");
    }
    std::unordered_map<std::uint64_t, std::size_t> seen;
    seen.reserve(n * 2);
    for (std::size_t c = 0; c < n; ++c) {
        if (d.row[c] >= d.n_rows || d.col[c] >= d.n_cols) {
            throw SchemaError("cell " + std::to_string(c) + " has an out-of-range row/column index");
        }
        if (d.y[c] > 1) throw SchemaError("cell " + std::to_string(c) + " has a non-binary response");
        if (!d.x.row(static_cast<Eigen::Index>(c)).allFinite()) {
            throw SchemaError("cell " + std::to_string(c) + " has a non-finite feature");
        }
        const std::uint64_t key = (std::uint64_t{d.row[c]} << 32) | d.col[c];
        if (!seen.emplace(key, c).second) {
            throw SchemaError("duplicate (row, col) pair at cell " + std::to_string(c));
        }
    }
}

// Validates the cells and builds both grouped views.
inline SparseBinaryDataset make_dataset(std::size_t n_rows, std::size_t n_cols, std::vector<Index> row,
                                        std::vector<Index> col, std::vector<std::uint8_t> y, RowMatrix x,
                                        std::vector<std::string> feature_names = {}) {
    SparseBinaryDataset d;
    d.n_rows = n_rows;
    d.n_cols = n_cols;
    d.row = std::move(row);
    d.col = std::move(col);
    d.y = std::move(y);
    d.x = std::move(x);
    d.feature_names = std::move(feature_names);
    if (d.feature_names.empty()) {
        for (std::size_t k = 0; k < d.n_features(); ++k) d.feature_names.push_back("x" + std::to_string(k));
    }
    validate(d);
    build_views(d);
    return d;
}

// Same data with the roles of rows and columns exchanged.
inline SparseBinaryDataset transpose(const SparseBinaryDataset& d) {
    SparseBinaryDataset t = d;
    std::swap(t.n_rows, t.n_cols);
    std::swap(t.row, t.col);
    std::swap(t.row_labels, t.col_labels);
    std::swap(t.row_view, t.col_view);
    return t;
}

inline DatasetStats compute_stats(const SparseBinaryDataset& d) {
    DatasetStats s;
    s.n_obs = d.n_obs();
    s.n_rows = d.n_rows;
    s.n_cols = d.n_cols;
    const double n = static_cast<double>(std::max<std::size_t>(1, s.n_obs));
    std::size_t max_row = 0, max_col = 0;
    for (std::size_t g = 0; g < d.row_view.n_groups(); ++g) {
        const std::size_t k = d.row_view.size(g);
        max_row = std::max(max_row, k);
        s.n_singleton_rows += (k == 1);
        s.n_empty_rows += (k == 0);
    }
    for (std::size_t g = 0; g < d.col_view.n_groups(); ++g) {
        const std::size_t k = d.col_view.size(g);
        max_col = std::max(max_col, k);
        s.n_singleton_cols += (k == 1);
        s.n_empty_cols += (k == 0);
    }
    s.max_row_share = static_cast<double>(max_row) / n;
    s.max_col_share = static_cast<double>(max_col) / n;
    return s;
}

// ---------------------------------------------------------------------------
// CSV input/output

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> records;
    std::vector<std::size_t> line_numbers;  // 1-based file line of each record

    std::optional<std::size_t> column(std::string_view name) const {
        for (std::size_t k = 0; k < header.size(); ++k) {
            if (header[k] == name) return k;
        }
        return std::nullopt;
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char ch = line[k];
        if (quoted) {
            if (ch == '"') {
                if (k + 1 < line.size() && line[k + 1] == '"') {
                    cur.push_back('"');
                    ++k;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

// Reads a whole file; gzip input is decompressed transparently.
inline std::string read_all(const std::string& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw SchemaError("cannot open " + path);
    std::string out;
    char buf[1 << 16];
    int got;
    while ((got = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(got));
    const bool failed = got < 0;
    gzclose(f);
    if (failed) throw SchemaError("read error in " + path);
    return out;
}

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return std::string(s.substr(b, e - b));
}

inline std::optional<double> parse_double(std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

} // namespace detail

inline CsvTable parse_csv_text(std::string_view text) {
    CsvTable t;
    std::size_t pos = 0, line_no = 0;
    bool have_header = false;
    if (text.starts_with("\xEF\xBB\xBF")) pos = 3;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
        auto fields = detail::split_csv_line(line);
        for (auto& f : fields) f = detail::trim(f);
        if (!have_header) {
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw ParseError("expected " + std::to_string(t.header.size()) + " fields, found " +
                                 std::to_string(fields.size()),
                             line_no);
        }
        t.records.push_back(std::move(fields));
        t.line_numbers.push_back(line_no);
    }
    if (!have_header) throw SchemaError("missing header line");
    return t;
}

inline CsvTable read_csv_table(const std::string& path) { return parse_csv_text(detail::read_all(path)); }

struct CsvSchema {
    std::string response;
    std::string row;
    std::string col;
    std::vector<std::string> features;
    bool intercept = true;
};

// Builds a dataset from a parsed table. String ids are mapped to dense
// indices in order of first appearance; for duplicate (row, col) pairs the
// last record wins.
inline SparseBinaryDataset dataset_from_table(const CsvTable& t, const CsvSchema& schema) {
    auto need = [&](const std::string& name, const char* role) {
        if (name.empty()) throw SchemaError(std::string("no ") + role + " column given");
        auto k = t.column(name);
        if (!k) throw SchemaError(std::string(role) + " column '" + name + "' not found in header");
        return *k;
    };
    const std::size_t y_col = need(schema.response, "response");
    const std::size_t r_col = need(schema.row, "row-id");
    const std::size_t c_col = need(schema.col, "col-id");
    std::vector<std::size_t> f_cols;
    for (const auto& f : schema.features) f_cols.push_back(need(f, "feature"));
    if (t.records.empty()) throw SchemaError("no observations");

    const std::size_t p = f_cols.size() + (schema.intercept ? 1 : 0);
    if (p == 0) throw SchemaError("no features and no intercept");

    std::unordered_map<std::string, Index> row_ids, col_ids;
    std::vector<std::string> row_labels, col_labels;
    std::unordered_map<std::uint64_t, std::size_t> cell_of;
    std::vector<Index> rows, cols;
    std::vector<std::uint8_t> ys;
    std::vector<double> xs;
    std::size_t dups = 0;

    auto intern = [](std::unordered_map<std::string, Index>& ids, std::vector<std::string>& labels,
                     const std::string& key) {
        auto [it, inserted] = ids.emplace(key, static_cast<Index>(labels.size()));
        if (inserted) labels.push_back(key);
        return it->second;
    };

    std::vector<double> feat(p);
    for (std::size_t r = 0; r < t.records.size(); ++r) {
        const auto& rec = t.records[r];
        const std::size_t line = t.line_numbers[r];
        const auto yv = detail::parse_double(rec[y_col]);
        if (!yv || (*yv != 0.0 && *yv != 1.0)) {
            throw ParseError("response '" + rec[y_col] + "' is not 0 or 1", line);
        }
        std::size_t k = 0;
        if (schema.intercept) feat[k++] = 1.0;
        for (std::size_t f = 0; f < f_cols.size(); ++f) {
            const auto v = detail::parse_double(rec[f_cols[f]]);
            if (!v || !std::isfinite(*v)) {
                throw ParseError("feature '" + schema.features[f] + "' value '" + rec[f_cols[f]] +
                                     "' is not a finite number",
                                 line);
            }
            feat[k++] = *v;
        }
        const Index i = intern(row_ids, row_labels, rec[r_col]);
        const Index j = intern(col_ids, col_labels, rec[c_col]);
        const std::uint64_t key = (std::uint64_t{i} << 32) | j;
        auto [it, inserted] = cell_of.emplace(key, ys.size());
        if (inserted) {
            rows.push_back(i);
            cols.push_back(j);
            ys.push_back(static_cast<std::uint8_t>(*yv));
            xs.insert(xs.end(), feat.begin(), feat.end());
        } else {
            ++dups;
            const std::size_t c = it->second;
            ys[c] = static_cast<std::uint8_t>(*yv);
            std::copy(feat.begin(), feat.end(), xs.begin() + static_cast<std::ptrdiff_t>(c * p));
        }
    }

    RowMatrix x = Eigen::Map<RowMatrix>(xs.data(), static_cast<Eigen::Index>(ys.size()),
                                        static_cast<Eigen::Index>(p));
    std::vector<std::string> names;
    if (schema.intercept) names.push_back(kInterceptName);
    names.insert(names.end(), schema.features.begin(), schema.features.end());
    auto d = make_dataset(row_labels.size(), col_labels.size(), std::move(rows), std::move(cols), std::move(ys),
                          std::move(x), std::move(names));
    d.row_labels = std::move(row_labels);
    d.col_labels = std::move(col_labels);
    d.duplicates_dropped = dups;
    return d;
}

inline SparseBinaryDataset load_csv(const std::string& path, const CsvSchema& schema) {
    return dataset_from_table(read_csv_table(path), schema);
}

// Writes `row,col,y,<features>` (the intercept column is omitted); the
// output round-trips through load_csv with CsvSchema{"y","row","col",...}.
inline void write_csv(const SparseBinaryDataset& d, std::ostream& out) {
    std::vector<std::size_t> keep;
    out << "row,col,y";
    for (std::size_t k = 0; k < d.n_features(); ++k) {
        if (d.feature_names[k] == kInterceptName) continue;
        keep.push_back(k);
        out << ',' << d.feature_names[k];
    }
    out << '\n';
    std::string line;
    for (std::size_t c = 0; c < d.n_obs(); ++c) {
        line.clear();
        line += d.row_labels.empty() ? std::to_string(d.row[c]) : d.row_labels[d.row[c]];
        line += ',';
        line += d.col_labels.empty() ? std::to_string(d.col[c]) : d.col_labels[d.col[c]];
        line += ',';
        line += d.y[c] ? '1' : '0';
        for (std::size_t k : keep) {
            line += ',';
            line += detail::format_double(d.x(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k)));
        }
        line += '\n';
        out << line;
    }
}

inline void write_csv(const SparseBinaryDataset& d, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SchemaError("cannot write " + path);
    write_csv(d, out);
}

// ---------------------------------------------------------------------------
// Binary cache: "ARCPDSET" magic, u32 version, then little-endian arrays.

inline constexpr char kCacheMagic[8] = {'A', 'R', 'C', 'P', 'D', 'S', 'E', 'T'};
inline constexpr std::uint32_t kCacheVersion = 1;

namespace detail {

template <class T>
void put_le(std::ostream& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw SchemaError("truncated binary cache");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T v;
    std::memcpy(&v, bytes, sizeof(T));
    return v;
}

inline void put_string(std::ostream& out, const std::string& s) {
    put_le<std::uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
    const auto n = get_le<std::uint64_t>(in);
    if (n > (1u << 20)) throw SchemaError("corrupt string length in binary cache");
    std::string s(n, '\0');
    if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw SchemaError("truncated binary cache");
    return s;
}

} // namespace detail

inline void save_binary(const SparseBinaryDataset& d, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SchemaError("cannot write " + path);
    out.write(kCacheMagic, sizeof kCacheMagic);
    detail::put_le<std::uint32_t>(out, kCacheVersion);
    detail::put_le<std::uint64_t>(out, d.n_rows);
    detail::put_le<std::uint64_t>(out, d.n_cols);
    detail::put_le<std::uint64_t>(out, d.n_obs());
    detail::put_le<std::uint64_t>(out, d.n_features());
    for (const auto& name : d.feature_names) detail::put_string(out, name);
    for (Index i : d.row) detail::put_le<std::uint32_t>(out, i);
    for (Index j : d.col) detail::put_le<std::uint32_t>(out, j);
    for (auto v : d.y) detail::put_le<std::uint8_t>(out, v);
    for (Eigen::Index c = 0; c < d.x.rows(); ++c) {
        for (Eigen::Index k = 0; k < d.x.cols(); ++k) detail::put_le<double>(out, d.x(c, k));
    }
}

inline SparseBinaryDataset load_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot open " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kCacheMagic, 8) != 0) {
        throw SchemaError(path + " is not a dataset cache");
    }
    const auto version = detail::get_le<std::uint32_t>(in);
    if (version != kCacheVersion) throw SchemaError("unsupported cache version " + std::to_string(version));
    const auto n_rows = detail::get_le<std::uint64_t>(in);
    const auto n_cols = detail::get_le<std::uint64_t>(in);
    const auto n = detail::get_le<std::uint64_t>(in);
    const auto p = detail::get_le<std::uint64_t>(in);
    std::vector<std::string> names(p);
    for (auto& name : names) name = detail::get_string(in);
    std::vector<Index> rows(n), cols(n);
    std::vector<std::uint8_t> ys(n);
    for (auto& i : rows) i = detail::get_le<std::uint32_t>(in);
    for (auto& j : cols) j = detail::get_le<std::uint32_t>(in);
    for (auto& v : ys) v = detail::get_le<std::uint8_t>(in);
    RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (Eigen::Index c = 0; c < x.rows(); ++c) {
        for (Eigen::Index k = 0; k < x.cols(); ++k) x(c, k) = detail::get_le<double>(in);
    }
    return make_dataset(n_rows, n_cols, std::move(rows), std::move(cols), std::move(ys), std::move(x),
                        std::move(names));
}

} // namespace arcprobit
