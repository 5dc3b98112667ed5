#include "vqclust/expression.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "vqclust/format.hpp"
#include "vqclust/parallel.hpp"

namespace vqclust {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

char delimiter_for(const std::string& path) {
    auto dot = path.find_last_of('.');
    if (dot != std::string::npos && path.substr(dot) == ".csv") return ',';
    return '\t';
}

std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, delim)) out.push_back(field);
    if (!line.empty() && line.back() == delim) out.push_back("");
    return out;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

double parse_cell(const std::string& field, const std::string& path, std::size_t line_no) {
    if (field.empty() || field == "NA" || field == "NaN" || field == "nan") return kNaN;
    try {
        std::size_t pos = 0;
        double v = std::stod(field, &pos);
        if (pos != field.size()) throw std::invalid_argument(field);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": cannot parse numeric field '" + field + "'");
    }
}

void check_unique(const std::vector<std::string>& ids, const std::string& what) {
    std::set<std::string> seen;
    for (const auto& id : ids) {
        if (!seen.insert(id).second)
            throw std::runtime_error("duplicate " + what + " id '" + id + "'");
    }
}

std::string format_value(double v) {
    if (std::isnan(v)) return "NA";
    return format_double(v);
}

}  // namespace

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::raw: return "raw";
        case Stage::fpkm: return "fpkm";
        case Stage::log: return "log";
        case Stage::zscored: return "zscored";
    }
    return "?";
}

ExpressionMatrix load_matrix(const std::string& path, Orientation orientation) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    const char delim = delimiter_for(path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    line = strip_cr(line);
    auto header = split_line(line, delim);
    if (header.size() < 2) throw std::runtime_error(path + ":1: header needs an id column and at least one data column");
    std::vector<std::string> col_ids(header.begin() + 1, header.end());

    std::vector<std::string> row_ids;
    std::vector<double> cells;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        auto fields = split_line(line, delim);
        if (fields.size() != header.size())
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected " +
                                     std::to_string(header.size()) + " fields, got " +
                                     std::to_string(fields.size()));
        row_ids.push_back(fields[0]);
        for (std::size_t j = 1; j < fields.size(); ++j)
            cells.push_back(parse_cell(fields[j], path, line_no));
    }
    if (row_ids.empty()) throw std::runtime_error(path + ": no data rows");

    Matrix values(row_ids.size(), col_ids.size());
    values.data = std::move(cells);

    ExpressionMatrix m;
    if (orientation == Orientation::samples_rows) {
        m.values = std::move(values);
        m.sample_ids = std::move(row_ids);
        m.feature_ids = std::move(col_ids);
    } else {
        m.values = values.transposed();
        m.sample_ids = std::move(col_ids);
        m.feature_ids = std::move(row_ids);
    }
    check_unique(m.sample_ids, "sample");
    check_unique(m.feature_ids, "feature");
    m.stage = Stage::raw;
    return m;
}

void save_matrix(const ExpressionMatrix& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    const char delim = delimiter_for(path);
    out << "sample_id";
    for (const auto& f : m.feature_ids) out << delim << f;
    out << "\n";
    for (std::size_t i = 0; i < m.n_samples(); ++i) {
        out << m.sample_ids[i];
        for (std::size_t j = 0; j < m.n_features(); ++j)
            out << delim << format_value(m.values.at(i, j));
        out << "\n";
    }
}

std::vector<SampleMeta> load_sample_meta(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    const char delim = delimiter_for(path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    auto header = split_line(strip_cr(line), delim);
    auto col = [&](const std::string& name) -> std::ptrdiff_t {
        auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : it - header.begin();
    };
    std::ptrdiff_t c_id = col("sample_id"), c_label = col("label"),
                   c_time = col("survival_time"), c_event = col("event");
    if (c_id < 0) throw std::runtime_error(path + ": missing sample_id column");

    std::vector<SampleMeta> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        auto fields = split_line(line, delim);
        auto get = [&](std::ptrdiff_t c) -> std::string {
            return (c >= 0 && static_cast<std::size_t>(c) < fields.size()) ? fields[c] : "";
        };
        SampleMeta meta;
        meta.sample_id = get(c_id);
        if (meta.sample_id.empty())
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": empty sample_id");
        std::string label = get(c_label);
        if (!label.empty() && label != "NA") meta.label = label;
        std::string time_s = get(c_time), event_s = get(c_event);
        bool has_time = !time_s.empty() && time_s != "NA";
        bool has_event = !event_s.empty() && event_s != "NA";
        if (has_time != has_event)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": survival_time and event must be present together");
        if (has_time) {
            double t = parse_cell(time_s, path, line_no);
            if (!(t >= 0.0))
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": survival_time must be nonnegative");
            if (event_s != "0" && event_s != "1")
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": event must be 0 or 1");
            meta.survival_time = t;
            meta.event = event_s == "1";
        }
        out.push_back(std::move(meta));
    }
    std::vector<std::string> ids;
    for (const auto& s : out) ids.push_back(s.sample_id);
    check_unique(ids, "sample");
    return out;
}

ExpressionMatrix rsem_to_fpkm(const ExpressionMatrix& counts,
                              const std::vector<double>& feature_lengths,
                              const std::vector<double>& library_sizes) {
    if (feature_lengths.size() != counts.n_features())
        throw std::invalid_argument("rsem_to_fpkm: feature_lengths size mismatch");
    if (library_sizes.size() != counts.n_samples())
        throw std::invalid_argument("rsem_to_fpkm: library_sizes size mismatch");
    for (double l : feature_lengths)
        if (!(l > 0.0)) throw std::invalid_argument("rsem_to_fpkm: feature lengths must be positive");
    for (double s : library_sizes)
        if (!(s > 0.0)) throw std::invalid_argument("rsem_to_fpkm: library sizes must be positive");

    ExpressionMatrix out = counts;
    for (std::size_t i = 0; i < out.n_samples(); ++i)
        for (std::size_t j = 0; j < out.n_features(); ++j)
            out.values.at(i, j) = counts.values.at(i, j) * 1e9 / (library_sizes[i] * feature_lengths[j]);
    out.stage = Stage::fpkm;
    return out;
}

ExpressionMatrix log_transform(const ExpressionMatrix& m) {
    ExpressionMatrix out = m;
    for (auto& v : out.values.data) {
        if (std::isnan(v)) continue;
        if (v < 0.0) throw std::runtime_error("log_transform: negative input value");
        v = std::log2(v + 1.0);
    }
    out.stage = Stage::log;
    return out;
}

FilterResult filter_features(const ExpressionMatrix& m, double zero_fraction_threshold,
                             double na_fraction_threshold) {
    if (!(zero_fraction_threshold > 0.0 && zero_fraction_threshold <= 1.0))
        throw std::invalid_argument("filter_features: zero threshold must be in (0,1]");
    if (!(na_fraction_threshold > 0.0 && na_fraction_threshold <= 1.0))
        throw std::invalid_argument("filter_features: na threshold must be in (0,1]");

    const std::size_t n = m.n_samples();
    std::vector<bool> keep(m.n_features(), true);
    FilterResult res;
    for (std::size_t j = 0; j < m.n_features(); ++j) {
        std::size_t zeros = 0, missing = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double v = m.values.at(i, j);
            if (std::isnan(v))
                ++missing;
            else if (v == 0.0)
                ++zeros;
        }
        double zf = static_cast<double>(zeros) / static_cast<double>(n);
        double nf = static_cast<double>(missing) / static_cast<double>(n);
        // strictly-greater rule: a feature at exactly the threshold is kept
        if (zf > zero_fraction_threshold || nf > na_fraction_threshold) {
            keep[j] = false;
            res.removed_feature_ids.push_back(m.feature_ids[j]);
        }
    }

    std::size_t kept = 0;
    for (bool k : keep) kept += k ? 1 : 0;
    if (kept == 0) throw std::runtime_error("filter_features: all features removed");

    ExpressionMatrix out;
    out.sample_ids = m.sample_ids;
    out.stage = m.stage;
    out.values = Matrix(n, kept);
    for (std::size_t j = 0, jj = 0; j < m.n_features(); ++j) {
        if (!keep[j]) continue;
        out.feature_ids.push_back(m.feature_ids[j]);
        for (std::size_t i = 0; i < n; ++i) out.values.at(i, jj) = m.values.at(i, j);
        ++jj;
    }
    res.matrix = std::move(out);
    return res;
}

namespace {

// Mean squared difference over mutually observed features; infinity when the
// two samples share no observed feature.
double masked_distance(const Matrix& v, std::size_t a, std::size_t b) {
    double s = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < v.cols; ++j) {
        double x = v.at(a, j), y = v.at(b, j);
        if (std::isnan(x) || std::isnan(y)) continue;
        double d = x - y;
        s += d * d;
        ++count;
    }
    if (count == 0) return std::numeric_limits<double>::infinity();
    return s / static_cast<double>(count);
}

}  // namespace

ExpressionMatrix impute_missing(const ExpressionMatrix& m, std::size_t k) {
    const std::size_t n = m.n_samples();
    if (k == 0 || k >= n) throw std::invalid_argument("impute_missing: need 0 < k < n_samples");

    for (std::size_t j = 0; j < m.n_features(); ++j) {
        bool any = false;
        for (std::size_t i = 0; i < n && !any; ++i) any = !std::isnan(m.values.at(i, j));
        if (!any)
            throw std::runtime_error("impute_missing: feature '" + m.feature_ids[j] +
                                     "' has no observed values");
    }

    ExpressionMatrix out = m;
    std::vector<std::vector<double>> fill(n);
    parallel_for(n, [&](std::size_t i) {
        std::vector<std::pair<double, std::size_t>> dist;  // (distance, sample)
        bool has_missing = false;
        for (std::size_t j = 0; j < m.n_features(); ++j)
            if (std::isnan(m.values.at(i, j))) { has_missing = true; break; }
        if (!has_missing) return;
        for (std::size_t o = 0; o < n; ++o) {
            if (o == i) continue;
            dist.emplace_back(masked_distance(m.values, i, o), o);
        }
        std::stable_sort(dist.begin(), dist.end());
        std::vector<double> row;
        for (std::size_t j = 0; j < m.n_features(); ++j) {
            if (!std::isnan(m.values.at(i, j))) continue;
            double sum = 0.0;
            std::size_t used = 0;
            for (const auto& [d, o] : dist) {
                double v = m.values.at(o, j);
                if (std::isnan(v)) continue;  // neighbor misses this feature too
                sum += v;
                if (++used == k) break;
            }
            // at least one observed value exists by the precondition check
            row.push_back(sum / static_cast<double>(used));
        }
        fill[i] = std::move(row);
    });
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t next = 0;
        for (std::size_t j = 0; j < m.n_features(); ++j)
            if (std::isnan(out.values.at(i, j))) out.values.at(i, j) = fill[i][next++];
    }
    return out;
}

ExpressionMatrix zscore(const ExpressionMatrix& m) {
    for (double v : m.values.data)
        if (std::isnan(v)) throw std::runtime_error("zscore: matrix has missing values");
    ExpressionMatrix out = m;
    auto means = column_means(m.values);
    auto sds = column_sds(m.values, means);
    for (std::size_t j = 0; j < m.n_features(); ++j) {
        for (std::size_t i = 0; i < m.n_samples(); ++i) {
            double& v = out.values.at(i, j);
            v = sds[j] > 0.0 ? (v - means[j]) / sds[j] : 0.0;
        }
    }
    out.stage = Stage::zscored;
    return out;
}

}  // namespace vqclust
