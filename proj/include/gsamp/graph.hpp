#pragma once

#include "gsamp/error.hpp"

#include <Eigen/Core>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace gsamp {

using Index = Eigen::Index;

/// Square symmetric operator acting on node signals.
template <class Op>
concept SymmetricOperator = requires(const Op& op, const Eigen::VectorXd& x) {
    { op.size() } -> std::convertible_to<Index>;
    { op.apply(x) } -> std::convertible_to<Eigen::VectorXd>;
};

struct Edge {
    Index i;
    Index j;
    double w;
};

/// Undirected weighted graph in compressed sparse row layout. Both directions
/// of every edge are stored; weights are strictly positive and there are no
/// self-loops.
class SparseGraph {
public:
    SparseGraph() = default;

    /// Builds from undirected edges (0-based). Repeated pairs are summed;
    /// self-loops and zero weights are dropped.
    SparseGraph(Index n, const std::vector<Edge>& edges) : n_(n)
    {
        std::map<std::pair<Index, Index>, double> acc;
        for (const auto& e : edges) {
            check_edge(e);
            if (e.i == e.j || e.w == 0.0) {
                continue;
            }
            acc[std::minmax(e.i, e.j)] += e.w;
        }
        build(acc);
    }

    /// Builds from a possibly asymmetric set of directed weights, symmetrized
    /// as W <- (W + W^T) / 2 (a missing reverse entry counts as zero).
    static SparseGraph from_directed(Index n, const std::vector<Edge>& directed)
    {
        std::map<std::pair<Index, Index>, double> acc;
        for (const auto& e : directed) {
            check_edge(e, n);
            if (e.i == e.j || e.w == 0.0) {
                continue;
            }
            acc[std::minmax(e.i, e.j)] += 0.5 * e.w;
        }
        SparseGraph g;
        g.n_ = n;
        g.build(acc);
        return g;
    }

    Index size() const noexcept { return n_; }
    Index edge_count() const noexcept { return static_cast<Index>(cols_.size()) / 2; }

    const std::vector<Index>& row_ptr() const noexcept { return rows_; }
    const std::vector<Index>& col_index() const noexcept { return cols_; }
    const std::vector<double>& weights() const noexcept { return vals_; }
    const Eigen::VectorXd& degree() const noexcept { return degree_; }

    double weight(Index i, Index j) const
    {
        auto first = cols_.begin() + rows_[i];
        auto last = cols_.begin() + rows_[i + 1];
        auto it = std::lower_bound(first, last, j);
        if (it == last || *it != j) {
            return 0.0;
        }
        return vals_[static_cast<std::size_t>(it - cols_.begin())];
    }

    /// Undirected edge list with i < j.
    std::vector<Edge> edges() const
    {
        std::vector<Edge> out;
        out.reserve(cols_.size() / 2);
        for (Index i = 0; i < n_; ++i) {
            for (Index p = rows_[i]; p < rows_[i + 1]; ++p) {
                if (cols_[p] > i) {
                    out.push_back({i, cols_[p], vals_[p]});
                }
            }
        }
        return out;
    }

    Eigen::SparseMatrix<double> adjacency() const
    {
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(cols_.size());
        for (Index i = 0; i < n_; ++i) {
            for (Index p = rows_[i]; p < rows_[i + 1]; ++p) {
                t.emplace_back(i, cols_[p], vals_[p]);
            }
        }
        Eigen::SparseMatrix<double> w(n_, n_);
        w.setFromTriplets(t.begin(), t.end());
        return w;
    }

private:
    static void check_edge(const Edge& e, Index n = -1)
    {
        if (!(e.w >= 0.0) || !std::isfinite(e.w)) {
            throw ValidationError("edge (" + std::to_string(e.i) + ", " + std::to_string(e.j) +
                                  ") has negative or non-finite weight");
        }
        if (e.i < 0 || e.j < 0 || (n >= 0 && (e.i >= n || e.j >= n))) {
            throw IndexError("edge endpoint out of range");
        }
    }

    void build(const std::map<std::pair<Index, Index>, double>& acc)
    {
        std::vector<std::vector<std::pair<Index, double>>> adj(static_cast<std::size_t>(n_));
        for (const auto& [key, w] : acc) {
            if (key.first < 0 || key.second >= n_) {
                throw IndexError("edge endpoint out of range");
            }
            if (w <= 0.0) {
                continue;
            }
            adj[key.first].emplace_back(key.second, w);
            adj[key.second].emplace_back(key.first, w);
        }
        rows_.assign(static_cast<std::size_t>(n_) + 1, 0);
        cols_.clear();
        vals_.clear();
        degree_ = Eigen::VectorXd::Zero(n_);
        for (Index i = 0; i < n_; ++i) {
            auto& row = adj[i];
            std::sort(row.begin(), row.end());
            double d = 0.0;
            for (const auto& [j, w] : row) {
                cols_.push_back(j);
                vals_.push_back(w);
                d += w;
            }
            degree_[i] = d;
            rows_[i + 1] = static_cast<Index>(cols_.size());
        }
    }

    Index n_ = 0;
    std::vector<Index> rows_{0};
    std::vector<Index> cols_;
    std::vector<double> vals_;
    Eigen::VectorXd degree_;
};

enum class LaplacianVariant { combinatorial, normalized };

inline std::string to_string(LaplacianVariant v)
{
    return v == LaplacianVariant::combinatorial ? "combinatorial" : "normalized";
}

/// Matrix-free graph Laplacian, L = D - W or L = I - D^{-1/2} W D^{-1/2}.
class Laplacian {
public:
    Laplacian(std::shared_ptr<const SparseGraph> graph, LaplacianVariant variant)
        : graph_(std::move(graph)), variant_(variant)
    {
        const auto& d = graph_->degree();
        if (variant_ == LaplacianVariant::normalized) {
            inv_sqrt_deg_.resize(d.size());
            for (Index i = 0; i < d.size(); ++i) {
                if (!(d[i] > 0.0)) {
                    throw ValidationError("normalized Laplacian: node " + std::to_string(i + 1) +
                                          " has zero degree");
                }
                inv_sqrt_deg_[i] = 1.0 / std::sqrt(d[i]);
            }
        }
    }

    Index size() const noexcept { return graph_->size(); }
    LaplacianVariant variant() const noexcept { return variant_; }
    const SparseGraph& graph() const noexcept { return *graph_; }
    std::shared_ptr<const SparseGraph> graph_ptr() const noexcept { return graph_; }

    /// Diagonal entries: degrees, or ones for the normalized variant.
    Eigen::VectorXd diagonal() const
    {
        if (variant_ == LaplacianVariant::combinatorial) {
            return graph_->degree();
        }
        return Eigen::VectorXd::Ones(size());
    }

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const
    {
        if (x.size() != size()) {
            throw ShapeError("Laplacian::apply: signal length mismatch");
        }
        Eigen::VectorXd y(size());
        apply_into(x, y);
        return y;
    }

    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const
    {
        if (x.rows() != size()) {
            throw ShapeError("Laplacian::apply: signal length mismatch");
        }
        Eigen::MatrixXd y(x.rows(), x.cols());
        for (Index c = 0; c < x.cols(); ++c) {
            Eigen::VectorXd col = x.col(c);
            Eigen::VectorXd out(size());
            apply_into(col, out);
            y.col(c) = out;
        }
        return y;
    }

    Eigen::MatrixXd to_dense() const
    {
        const Index n = size();
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
        const auto& rp = graph_->row_ptr();
        const auto& ci = graph_->col_index();
        const auto& w = graph_->weights();
        for (Index i = 0; i < n; ++i) {
            for (Index p = rp[i]; p < rp[i + 1]; ++p) {
                const Index j = ci[p];
                m(i, j) = variant_ == LaplacianVariant::combinatorial
                              ? -w[p]
                              : -w[p] * inv_sqrt_deg_[i] * inv_sqrt_deg_[j];
            }
            m(i, i) = variant_ == LaplacianVariant::combinatorial ? graph_->degree()[i] : 1.0;
        }
        return m;
    }

private:
    void apply_into(const Eigen::VectorXd& x, Eigen::VectorXd& y) const
    {
        const auto& rp = graph_->row_ptr();
        const auto& ci = graph_->col_index();
        const auto& w = graph_->weights();
        const auto& d = graph_->degree();
        const Index n = size();
        if (variant_ == LaplacianVariant::combinatorial) {
            for (Index i = 0; i < n; ++i) {
                double acc = d[i] * x[i];
                for (Index p = rp[i]; p < rp[i + 1]; ++p) {
                    acc -= w[p] * x[ci[p]];
                }
                y[i] = acc;
            }
        } else {
            for (Index i = 0; i < n; ++i) {
                double acc = 0.0;
                for (Index p = rp[i]; p < rp[i + 1]; ++p) {
                    acc += w[p] * inv_sqrt_deg_[ci[p]] * x[ci[p]];
                }
                y[i] = x[i] - inv_sqrt_deg_[i] * acc;
            }
        }
    }

    std::shared_ptr<const SparseGraph> graph_;
    LaplacianVariant variant_;
    Eigen::VectorXd inv_sqrt_deg_;
};

inline Laplacian build_laplacian(const SparseGraph& g, LaplacianVariant variant)
{
    return Laplacian(std::make_shared<const SparseGraph>(g), variant);
}

inline Laplacian build_laplacian(std::shared_ptr<const SparseGraph> g, LaplacianVariant variant)
{
    return Laplacian(std::move(g), variant);
}

enum class GraphFormat { edge_list, matrix_market, automatic };

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

// Undirected edge list where a pair given in both directions with different
// weights is averaged, and a pair given once is taken as-is.
inline SparseGraph graph_from_pairs(Index n, const std::map<std::pair<Index, Index>, double>& directed)
{
    std::vector<Edge> edges;
    for (const auto& [key, w] : directed) {
        const auto [i, j] = key;
        if (i == j) {
            continue;
        }
        auto rev = directed.find({j, i});
        if (rev != directed.end()) {
            if (i < j) {
                edges.push_back({i, j, 0.5 * (w + rev->second)});
            }
        } else {
            edges.push_back({i, j, w});
        }
    }
    return SparseGraph(n, edges);
}

inline SparseGraph read_edge_list(std::istream& in)
{
    Index n = -1;
    Index max_index = 0;
    std::map<std::pair<Index, Index>, double> directed;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty()) {
            continue;
        }
        if (t[0] == '#' || t[0] == '%') {
            const auto pos = t.find("n=");
            if (pos != std::string::npos) {
                try {
                    n = std::stol(t.substr(pos + 2));
                } catch (const std::exception&) {
                    throw ParseError("bad node-count header", lineno);
                }
            }
            continue;
        }
        std::istringstream ls(t);
        long long i = 0, j = 0;
        double w = 1.0;
        if (!(ls >> i >> j)) {
            throw ParseError("expected 'i j [w]'", lineno);
        }
        if (!(ls >> w)) {
            if (!ls.eof()) {
                throw ParseError("bad weight", lineno);
            }
            w = 1.0;
        }
        std::string extra;
        if (ls >> extra) {
            throw ParseError("trailing token '" + extra + "'", lineno);
        }
        if (i < 1 || j < 1) {
            throw ParseError("node indices are 1-based", lineno);
        }
        if (w < 0.0 || !std::isfinite(w)) {
            throw ValidationError("negative or non-finite weight at line " + std::to_string(lineno));
        }
        directed[{static_cast<Index>(i - 1), static_cast<Index>(j - 1)}] += w;
        max_index = std::max<Index>(max_index, static_cast<Index>(std::max(i, j)));
    }
    if (n < 0) {
        n = max_index;
    } else if (max_index > n) {
        throw ParseError("edge index exceeds declared n=" + std::to_string(n));
    }
    return graph_from_pairs(n, directed);
}

inline SparseGraph read_matrix_market(std::istream& in)
{
    std::string line;
    long lineno = 0;
    bool symmetric = false;
    bool pattern = false;
    if (!std::getline(in, line)) {
        throw ParseError("empty matrix-market file", 1);
    }
    ++lineno;
    const std::string banner = lower(line);
    if (banner.rfind("%%matrixmarket", 0) != 0 || banner.find("coordinate") == std::string::npos) {
        throw ParseError("expected '%%MatrixMarket matrix coordinate' banner", lineno);
    }
    symmetric = banner.find("symmetric") != std::string::npos;
    pattern = banner.find("pattern") != std::string::npos;

    long long rows = -1, cols = -1, nnz = -1;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '%') {
            continue;
        }
        std::istringstream ls(t);
        if (!(ls >> rows >> cols >> nnz)) {
            throw ParseError("bad size line", lineno);
        }
        break;
    }
    if (rows < 0 || rows != cols) {
        throw ParseError("matrix must be square", lineno);
    }
    std::map<std::pair<Index, Index>, double> directed;
    long long seen = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '%') {
            continue;
        }
        std::istringstream ls(t);
        long long i = 0, j = 0;
        double w = 1.0;
        if (!(ls >> i >> j) || (!pattern && !(ls >> w))) {
            throw ParseError("bad entry", lineno);
        }
        if (i < 1 || j < 1 || i > rows || j > rows) {
            throw ParseError("entry index out of range", lineno);
        }
        if (w < 0.0 || !std::isfinite(w)) {
            throw ValidationError("negative or non-finite weight at line " + std::to_string(lineno));
        }
        directed[{static_cast<Index>(i - 1), static_cast<Index>(j - 1)}] += w;
        if (symmetric && i != j) {
            directed[{static_cast<Index>(j - 1), static_cast<Index>(i - 1)}] += w;
        }
        ++seen;
    }
    if (seen != nnz) {
        throw ParseError("expected " + std::to_string(nnz) + " entries, found " + std::to_string(seen));
    }
    std::vector<Edge> d;
    for (const auto& [key, w] : directed) {
        d.push_back({key.first, key.second, w});
    }
    return SparseGraph::from_directed(static_cast<Index>(rows), d);
}

} // namespace detail

/// Reads a graph from an "i j w" edge list (1-based, optional "# n=<int>"
/// header) or a matrix-market coordinate file. Matrix-market "general"
/// matrices are symmetrized by averaging with their transpose.
inline SparseGraph load_graph(std::istream& in, GraphFormat format = GraphFormat::edge_list)
{
    if (format == GraphFormat::matrix_market) {
        return detail::read_matrix_market(in);
    }
    if (format == GraphFormat::automatic) {
        std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::istringstream s(all);
        if (detail::lower(all.substr(0, 14)) == "%%matrixmarket") {
            return detail::read_matrix_market(s);
        }
        return detail::read_edge_list(s);
    }
    return detail::read_edge_list(in);
}

inline SparseGraph load_graph(const std::string& path, GraphFormat format = GraphFormat::automatic)
{
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open graph file '" + path + "'");
    }
    return load_graph(in, format);
}

inline void save_edge_list(std::ostream& out, const SparseGraph& g)
{
    out << "# n=" << g.size() << "\n";
    out.precision(17);
    for (const auto& e : g.edges()) {
        out << e.i + 1 << ' ' << e.j + 1 << ' ' << e.w << "\n";
    }
}

} // namespace gsamp
