#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "date.hpp"
#include "error.hpp"

namespace statarb {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
using BoolVector = Eigen::Array<bool, Eigen::Dynamic, 1>;

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kTradingDaysPerYear = 252.0;

// Dense T x N daily panel. Missing (date, ticker) cells hold NaN in every
// value matrix and true in `missing`.
struct ReturnsPanel {
    std::vector<Date> dates;
    std::vector<std::string> tickers;
    Matrix returns;
    Matrix close;
    Matrix mktcap;
    Matrix dollar_volume;
    BoolMatrix missing;

    Index days() const { return static_cast<Index>(dates.size()); }
    Index stocks() const { return static_cast<Index>(tickers.size()); }

    bool present(Index t, Index i) const { return !missing(t, i); }

    // No missing observation for stock i on rows [first, last].
    bool complete(Index i, Index first, Index last) const {
        if (first < 0 || last >= days() || first > last) return false;
        return !missing.col(i).segment(first, last - first + 1).any();
    }

    std::vector<Index> all_stocks() const {
        std::vector<Index> out(static_cast<std::size_t>(stocks()));
        std::iota(out.begin(), out.end(), Index{0});
        return out;
    }

    Index row_of(const Date& d) const {
        auto it = std::lower_bound(dates.begin(), dates.end(), d);
        if (it == dates.end() || *it != d) return -1;
        return static_cast<Index>(it - dates.begin());
    }

    // Throws on a violated shape/ordering/return-domain invariant.
    void validate() const {
        const Index T = days(), N = stocks();
        for (const Matrix* m : {&returns, &close, &mktcap, &dollar_volume}) {
            if (m->rows() != T || m->cols() != N) throw DimensionError("panel matrices disagree in shape");
        }
        if (missing.rows() != T || missing.cols() != N) throw DimensionError("panel missing-mask has wrong shape");
        for (std::size_t k = 1; k < dates.size(); ++k) {
            if (!(dates[k - 1] < dates[k])) throw Error("panel dates not strictly increasing at " + dates[k].str());
        }
        for (Index t = 0; t < T; ++t) {
            for (Index i = 0; i < N; ++i) {
                if (!missing(t, i) && !(returns(t, i) > -1.0)) {
                    throw Error("return <= -1 for " + tickers[static_cast<std::size_t>(i)] + " on " +
                                dates[static_cast<std::size_t>(t)].str());
                }
            }
        }
    }
};

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline double parse_double(std::string_view field, const char* column, std::size_t line) {
    field = trim(field);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(v)) {
        throw ParseError("cannot parse " + std::string(column) + " value '" + std::string(field) + "'", line);
    }
    return v;
}

inline Date parse_date(std::string_view field, std::size_t line) {
    auto d = Date::parse(trim(field));
    if (!d) throw ParseError("bad date '" + std::string(field) + "'", line);
    return *d;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return in;
}

inline double median(std::vector<double> v) {
    const std::size_t n = v.size();
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2), v.end());
    double hi = v[n / 2];
    if (n % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2));
    return 0.5 * (lo + hi);
}

} // namespace detail

// Reads `date,ticker,return,close,mktcap,dollar_volume` (one row per pair).
// Dates and tickers come out sorted; absent pairs are flagged missing.
inline ReturnsPanel load_returns_panel(std::istream& in) {
    struct Row {
        Date date;
        std::string ticker;
        double ret, close, mktcap, dvol;
        std::size_t line;
    };
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError("empty file", 1);
    ++line_no;
    if (detail::trim(line) != "date,ticker,return,close,mktcap,dollar_volume") {
        throw ParseError("expected header 'date,ticker,return,close,mktcap,dollar_volume'", line_no);
    }

    std::vector<Row> rows;
    std::set<Date> date_set;
    std::set<std::string> ticker_set;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto f = detail::split_csv(line);
        if (f.size() != 6) throw ParseError("expected 6 fields, got " + std::to_string(f.size()), line_no);
        Row r{detail::parse_date(f[0], line_no), std::string(detail::trim(f[1])),
              detail::parse_double(f[2], "return", line_no), detail::parse_double(f[3], "close", line_no),
              detail::parse_double(f[4], "mktcap", line_no), detail::parse_double(f[5], "dollar_volume", line_no), line_no};
        if (r.ticker.empty()) throw ParseError("empty ticker", line_no);
        if (!(r.ret > -1.0)) throw ParseError("return must exceed -1", line_no);
        date_set.insert(r.date);
        ticker_set.insert(r.ticker);
        rows.push_back(std::move(r));
    }

    ReturnsPanel p;
    p.dates.assign(date_set.begin(), date_set.end());
    p.tickers.assign(ticker_set.begin(), ticker_set.end());
    const Index T = p.days(), N = p.stocks();
    p.returns = Matrix::Constant(T, N, kNaN);
    p.close = Matrix::Constant(T, N, kNaN);
    p.mktcap = Matrix::Constant(T, N, kNaN);
    p.dollar_volume = Matrix::Constant(T, N, kNaN);
    p.missing = BoolMatrix::Constant(T, N, true);

    std::map<std::string, Index> col;
    for (Index i = 0; i < N; ++i) col[p.tickers[static_cast<std::size_t>(i)]] = i;
    for (const auto& r : rows) {
        Index t = p.row_of(r.date);
        Index i = col[r.ticker];
        if (!p.missing(t, i)) {
            throw ParseError("duplicate row for (" + r.date.str() + ", " + r.ticker + ")", r.line);
        }
        p.missing(t, i) = false;
        p.returns(t, i) = r.ret;
        p.close(t, i) = r.close;
        p.mktcap(t, i) = r.mktcap;
        p.dollar_volume(t, i) = r.dvol;
    }
    return p;
}

inline ReturnsPanel load_returns_panel(const std::string& path) {
    auto in = detail::open_input(path);
    return load_returns_panel(in);
}

inline void write_returns_panel(std::ostream& out, const ReturnsPanel& p) {
    out << "date,ticker,return,close,mktcap,dollar_volume\n";
    out.precision(17);
    for (Index t = 0; t < p.days(); ++t) {
        for (Index i = 0; i < p.stocks(); ++i) {
            if (p.missing(t, i)) continue;
            out << p.dates[static_cast<std::size_t>(t)].str() << ',' << p.tickers[static_cast<std::size_t>(i)] << ','
                << p.returns(t, i) << ',' << p.close(t, i) << ',' << p.mktcap(t, i) << ',' << p.dollar_volume(t, i)
                << '\n';
        }
    }
}

// Exogenous factor returns, `date,factor_1,...,factor_k,rf`.
struct FactorReturns {
    std::vector<Date> dates;
    std::vector<std::string> names;
    Matrix values; // dates x k
    Vector rf;

    Index factors() const { return values.cols(); }
};

inline FactorReturns load_factor_returns(std::istream& in) {
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw ParseError("empty factor file", 1);
    auto header = detail::split_csv(line);
    if (header.size() < 3 || detail::trim(header.front()) != "date" || detail::trim(header.back()) != "rf") {
        throw ParseError("factor header must be 'date,<factors...>,rf'", 1);
    }
    FactorReturns fr;
    for (std::size_t c = 1; c + 1 < header.size(); ++c) fr.names.emplace_back(detail::trim(header[c]));
    const std::size_t k = fr.names.size();
    std::vector<std::vector<double>> rows;
    std::vector<double> rf;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto f = detail::split_csv(line);
        if (f.size() != k + 2) throw ParseError("expected " + std::to_string(k + 2) + " fields", line_no);
        Date d = detail::parse_date(f[0], line_no);
        if (!fr.dates.empty() && !(fr.dates.back() < d)) throw ParseError("factor dates must increase", line_no);
        fr.dates.push_back(d);
        std::vector<double> v(k);
        for (std::size_t c = 0; c < k; ++c) v[c] = detail::parse_double(f[c + 1], fr.names[c].c_str(), line_no);
        rows.push_back(std::move(v));
        rf.push_back(detail::parse_double(f[k + 1], "rf", line_no));
    }
    fr.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(k));
    fr.rf.resize(static_cast<Index>(rows.size()));
    for (std::size_t t = 0; t < rows.size(); ++t) {
        for (std::size_t c = 0; c < k; ++c) fr.values(static_cast<Index>(t), static_cast<Index>(c)) = rows[t][c];
        fr.rf(static_cast<Index>(t)) = rf[t];
    }
    return fr;
}

inline FactorReturns load_factor_returns(const std::string& path) {
    auto in = detail::open_input(path);
    return load_factor_returns(in);
}

inline void write_factor_returns(std::ostream& out, const FactorReturns& fr) {
    out << "date";
    for (const auto& n : fr.names) out << ',' << n;
    out << ",rf\n";
    out.precision(17);
    for (Index t = 0; t < fr.values.rows(); ++t) {
        out << fr.dates[static_cast<std::size_t>(t)].str();
        for (Index c = 0; c < fr.values.cols(); ++c) out << ',' << fr.values(t, c);
        out << ',' << fr.rf(t) << '\n';
    }
}

// Factor rows reordered to the panel's calendar; every panel date must be present.
inline Matrix align_factors(const FactorReturns& fr, const ReturnsPanel& panel, Index columns = -1) {
    if (columns < 0) columns = fr.factors();
    if (columns < 1 || columns > fr.factors()) throw ConfigError("requested factor count outside file range");
    Matrix out(panel.days(), columns);
    std::size_t j = 0;
    for (Index t = 0; t < panel.days(); ++t) {
        const Date& d = panel.dates[static_cast<std::size_t>(t)];
        while (j < fr.dates.size() && fr.dates[j] < d) ++j;
        if (j == fr.dates.size() || fr.dates[j] != d) throw Error("factor returns missing panel date " + d.str());
        out.row(t) = fr.values.row(static_cast<Index>(j)).head(columns);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Universe

struct UniverseRules {
    double min_close = 5.0;
    double min_mktcap = 1e9;
    double min_dollar_volume = 1e6;
    Index median_window = 20;
};

struct UniverseMask {
    std::vector<Index> rebalance_rows; // last trading day of each calendar month
    std::vector<BoolVector> eligible;  // one per rebalance row
    Index stocks = 0;

    // Mask in force on `row`: the latest rebalance at or before it (all false before the first).
    BoolVector eligible_at(Index row) const {
        auto it = std::upper_bound(rebalance_rows.begin(), rebalance_rows.end(), row);
        if (it == rebalance_rows.begin()) return BoolVector::Constant(stocks, false);
        return eligible[static_cast<std::size_t>(it - rebalance_rows.begin() - 1)];
    }
};

inline std::vector<Index> month_end_rows(const ReturnsPanel& panel) {
    std::vector<Index> out;
    for (Index t = 0; t < panel.days(); ++t) {
        bool last = t + 1 == panel.days() ||
                    panel.dates[static_cast<std::size_t>(t + 1)].month_key() !=
                        panel.dates[static_cast<std::size_t>(t)].month_key();
        if (last) out.push_back(t);
    }
    return out;
}

inline UniverseMask build_universe(const ReturnsPanel& panel, const UniverseRules& rules = {}) {
    UniverseMask mask;
    mask.stocks = panel.stocks();
    mask.rebalance_rows = month_end_rows(panel);
    const Index W = rules.median_window;
    for (Index d : mask.rebalance_rows) {
        BoolVector ok = BoolVector::Constant(panel.stocks(), false);
        if (d + 1 >= W) {
            for (Index i = 0; i < panel.stocks(); ++i) {
                if (!panel.complete(i, d - W + 1, d)) continue;
                if (!(panel.close(d, i) >= rules.min_close)) continue;
                std::vector<double> cap(static_cast<std::size_t>(W)), vol(static_cast<std::size_t>(W));
                for (Index k = 0; k < W; ++k) {
                    cap[static_cast<std::size_t>(k)] = panel.mktcap(d - W + 1 + k, i);
                    vol[static_cast<std::size_t>(k)] = panel.dollar_volume(d - W + 1 + k, i);
                }
                ok(i) = detail::median(cap) >= rules.min_mktcap && detail::median(vol) >= rules.min_dollar_volume;
            }
        }
        mask.eligible.push_back(std::move(ok));
    }
    return mask;
}

// Eligible stocks (per the mask in force on `row`) with no missing value on [first, last].
inline std::vector<Index> modelable_stocks(const ReturnsPanel& panel, const UniverseMask& universe, Index row,
                                           Index first, Index last) {
    std::vector<Index> out;
    if (first < 0) return out;
    BoolVector elig = universe.eligible_at(row);
    for (Index i = 0; i < panel.stocks(); ++i) {
        if (elig(i) && panel.complete(i, first, last)) out.push_back(i);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Window transforms

struct StandardizedWindow {
    std::vector<Index> stocks; // panel columns retained
    Index first_row = 0;
    Index last_row = 0;
    Matrix values; // rows = days in window, cols = retained stocks
    Vector mean;
    Vector sd;
};

inline double sample_sd(const Eigen::Ref<const Vector>& x, double mean) {
    return std::sqrt((x.array() - mean).square().sum() / static_cast<double>(x.size() - 1));
}

// Z = (r - mean) / sd over rows [t-length+1, t], sd with divisor length-1.
// Stocks with any missing value in the window are dropped. Entries are
// clipped to [-cap, cap] when cap is finite.
inline StandardizedWindow standardize_window(const ReturnsPanel& panel, Index t, Index length,
                                             std::span<const Index> candidates,
                                             double cap = std::numeric_limits<double>::infinity()) {
    if (length < 2) throw InsufficientDataError("standardization window needs at least 2 days");
    const Index first = t - length + 1;
    if (first < 0 || t >= panel.days()) throw InsufficientDataError("standardization window outside panel");
    StandardizedWindow w;
    w.first_row = first;
    w.last_row = t;
    for (Index i : candidates) {
        if (panel.complete(i, first, t)) w.stocks.push_back(i);
    }
    const Index n = static_cast<Index>(w.stocks.size());
    w.values.resize(length, n);
    w.mean.resize(n);
    w.sd.resize(n);
    for (Index c = 0; c < n; ++c) {
        const Index i = w.stocks[static_cast<std::size_t>(c)];
        Vector r = panel.returns.col(i).segment(first, length);
        const double mu = r.mean();
        const double sd = sample_sd(r, mu);
        if (!(sd > 1e-12 * std::abs(mu))) {
            throw DegenerateError("zero variance return series for " + panel.tickers[static_cast<std::size_t>(i)]);
        }
        w.mean(c) = mu;
        w.sd(c) = sd;
        w.values.col(c) = ((r.array() - mu) / sd).matrix();
    }
    if (std::isfinite(cap)) w.values = w.values.cwiseMax(-cap).cwiseMin(cap);
    return w;
}

inline StandardizedWindow standardize_window(const ReturnsPanel& panel, Index t, Index length,
                                             double cap = std::numeric_limits<double>::infinity()) {
    auto all = panel.all_stocks();
    return standardize_window(panel, t, length, all, cap);
}

struct ScaledWindow {
    std::vector<Index> stocks;
    Index first_row = 0;
    Index last_row = 0;
    Matrix values;      // S = r / trailing sd
    Matrix trailing_sd; // sd of the vol_lookback days before each observation
};

// S_{i,tau} = r_{i,tau} / sd(r_{i,tau-lookback .. tau-1}); no centering, no clipping.
inline ScaledWindow volatility_scale_window(const ReturnsPanel& panel, Index t, Index length,
                                            std::span<const Index> candidates, Index vol_lookback = 252) {
    const Index first = t - length + 1;
    if (length < 1 || first - vol_lookback < 0 || t >= panel.days()) {
        throw InsufficientDataError("volatility scaling needs " + std::to_string(vol_lookback) +
                                    " days before the window");
    }
    ScaledWindow w;
    w.first_row = first;
    w.last_row = t;
    for (Index i : candidates) {
        if (panel.complete(i, first - vol_lookback, t)) w.stocks.push_back(i);
    }
    const Index n = static_cast<Index>(w.stocks.size());
    w.values.resize(length, n);
    w.trailing_sd.resize(length, n);
    for (Index c = 0; c < n; ++c) {
        const Index i = w.stocks[static_cast<std::size_t>(c)];
        for (Index k = 0; k < length; ++k) {
            const Index row = first + k;
            Vector past = panel.returns.col(i).segment(row - vol_lookback, vol_lookback);
            const double pm = past.mean();
            const double sd = sample_sd(past, pm);
            if (!(sd > 1e-12 * std::abs(pm))) {
                throw DegenerateError("zero trailing volatility for " + panel.tickers[static_cast<std::size_t>(i)]);
            }
            w.trailing_sd(k, c) = sd;
            w.values(k, c) = panel.returns(row, i) / sd;
        }
    }
    return w;
}

inline ScaledWindow volatility_scale_window(const ReturnsPanel& panel, Index t, Index length,
                                            Index vol_lookback = 252) {
    auto all = panel.all_stocks();
    return volatility_scale_window(panel, t, length, all, vol_lookback);
}

} // namespace statarb
