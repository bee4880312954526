#include "gsamp/gsamp.hpp"
#include "gsamp/session.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace gsamp;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_validation = 2;
constexpr int exit_numerical = 3;

/// Option values that name input files; relative paths read from a config
/// file resolve against the directory of that file.
const std::set<std::string> path_keys = {"graph", "coords", "partition", "image", "truth", "superpixel-map", "labels"};

/// Keys left out of the config hash: they change where or how fast results
/// are produced, never what they are.
const std::set<std::string> unhashed_keys = {"config", "out", "threads"};

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

/// Reads "key = value" lines ('#' and ';' start comments, [section] lines
/// are ignored) and turns them into "--key=value" tokens.
std::vector<std::string> config_tokens(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open config file '" + path + "'");
    }
    const fs::path base = fs::path(path).parent_path();
    std::vector<std::string> tokens;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';' || t[0] == '[') {
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ParseError(path + ": expected 'key = value'", lineno);
        }
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
            value = value.substr(1, value.size() - 2);
        }
        std::replace(key.begin(), key.end(), '_', '-');
        if (key.empty() || key == "config") {
            throw ParseError(path + ": bad key '" + key + "'", lineno);
        }
        if (value.empty()) {
            continue; // an empty value leaves the option at its default
        }
        if (path_keys.count(key) && fs::path(value).is_relative()) {
            value = (base / value).string();
        }
        tokens.push_back("--" + key + "=" + value);
    }
    return tokens;
}

/// Splices the tokens of any --config file in right after the subcommand
/// name, so flags given on the command line take precedence.
std::vector<std::string> expand_config(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    std::optional<std::string> cfg;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            cfg = args[i + 1];
        } else if (args[i].rfind("--config=", 0) == 0) {
            cfg = args[i].substr(9);
        }
    }
    if (!cfg || args.empty() || args[0].rfind("-", 0) == 0) {
        return args;
    }
    const auto tokens = config_tokens(*cfg);
    args.insert(args.begin() + 1, tokens.begin(), tokens.end());
    return args;
}

/// Resolved configuration of a subcommand and its FNV-1a hash.
struct ResolvedConfig {
    std::map<std::string, std::string> values;
    std::string hash;

    std::string dump() const
    {
        std::ostringstream out;
        for (const auto& [k, v] : values) {
            out << k << " = " << v << "\n";
        }
        return out.str();
    }
};

ResolvedConfig resolve(const CLI::App& sub)
{
    ResolvedConfig rc;
    for (const CLI::Option* opt : sub.get_options()) {
        if (opt->get_lnames().empty()) {
            continue;
        }
        const std::string key = opt->get_lnames().front();
        if (key == "help" || unhashed_keys.count(key)) {
            continue;
        }
        std::string value;
        if (opt->get_expected_min() == 0) {
            value = opt->count() > 0 && opt->as<bool>() ? "true" : "false";
        } else if (opt->count() > 0) {
            const auto res = opt->reduced_results();
            value = res.empty() ? "" : res.back();
        } else {
            value = opt->get_default_str();
        }
        rc.values[key] = value;
    }
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : rc.dump()) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    std::ostringstream hex;
    hex << std::hex << std::setw(16) << std::setfill('0') << h;
    rc.hash = hex.str();
    return rc;
}

/// Writes text outputs, each prefixed with the config-hash line.
class OutputDir {
public:
    OutputDir(const std::string& dir, std::string hash) : dir_(dir), hash_(std::move(hash))
    {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec || !fs::is_directory(dir_)) {
            throw ValidationError("cannot create output directory '" + dir + "'");
        }
    }

    void text(const std::string& name, const std::string& body) const
    {
        const auto path = dir_ / name;
        std::ofstream out(path, std::ios::binary);
        if (!out) {
            throw ValidationError("cannot write '" + path.string() + "'");
        }
        out << "# config-hash: " << hash_ << "\n" << body;
        announce(path);
    }

    void png(const std::string& name, const Raster& r) const
    {
        const auto path = dir_ / name;
        detail::write_bytes(path.string(), encode_png(r, {{"config-hash", hash_}}));
        announce(path);
    }

private:
    static void announce(const fs::path& p) { std::cout << "wrote " << p.string() << "\n"; }

    fs::path dir_;
    std::string hash_;
};

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, sep)) {
        tok = trim(tok);
        if (!tok.empty()) {
            out.push_back(tok);
        }
    }
    return out;
}

Index parse_index(const std::string& s, const std::string& what)
{
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || s.empty()) {
        throw ValidationError(what + ": '" + s + "' is not an integer");
    }
    return static_cast<Index>(v);
}

/// "AxB" -> (A, B).
std::pair<Index, Index> parse_dims(const std::string& s, const std::string& what)
{
    const auto x = s.find_first_of("xX");
    if (x == std::string::npos) {
        throw ValidationError(what + ": expected AxB, got '" + s + "'");
    }
    const Index a = parse_index(s.substr(0, x), what);
    const Index b = parse_index(s.substr(x + 1), what);
    if (a < 1 || b < 1) {
        throw ValidationError(what + ": dimensions must be positive");
    }
    return {a, b};
}

/// "a:b:step" (inclusive) or a comma-separated list.
std::vector<Index> parse_s_grid(const std::string& s)
{
    std::vector<Index> grid;
    const auto parts = split(s, ':');
    if (s.find(':') != std::string::npos) {
        if (parts.size() != 3) {
            throw ValidationError("s-grid: expected start:stop:step");
        }
        const Index a = parse_index(parts[0], "s-grid");
        const Index b = parse_index(parts[1], "s-grid");
        const Index step = parse_index(parts[2], "s-grid");
        if (step < 1 || a > b) {
            throw ValidationError("s-grid: need start <= stop and a positive step");
        }
        for (Index v = a; v <= b; v += step) {
            grid.push_back(v);
        }
    } else {
        for (const auto& t : split(s, ',')) {
            grid.push_back(parse_index(t, "s-grid"));
        }
    }
    if (grid.empty()) {
        throw ValidationError("s-grid is empty");
    }
    for (Index v : grid) {
        if (v < 1) {
            throw ValidationError("s-grid values must be positive");
        }
    }
    return grid;
}

PointSet load_coords(const std::string& path, Index n)
{
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open coordinate file '" + path + "'");
    }
    std::vector<double> xy;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') {
            continue;
        }
        std::istringstream ss(t);
        double x = 0.0, y = 0.0;
        if (!(ss >> x >> y)) {
            throw ParseError(path + ": expected two coordinates", lineno);
        }
        xy.push_back(x);
        xy.push_back(y);
    }
    if (static_cast<Index>(xy.size() / 2) != n) {
        throw ValidationError("coordinate file '" + path + "' has " + std::to_string(xy.size() / 2) +
                              " rows for a graph of " + std::to_string(n) + " nodes");
    }
    PointSet p(n, 2);
    for (Index i = 0; i < n; ++i) {
        p(i, 0) = xy[static_cast<std::size_t>(2 * i)];
        p(i, 1) = xy[static_cast<std::size_t>(2 * i + 1)];
    }
    return p;
}

/// Graph and partition options shared by coherence and ripcurve.
struct GraphOptions {
    std::string graph;
    std::string graph_format = "auto";
    std::string coords;
    std::string recipe;
    Index rows = 10;
    Index cols = 10;
    Index nodes = 500;
    Index sensor_knn = 6;
    double dense_fraction = 0.85;
    std::string sizes = "30,30,30";
    double p_in = 0.3;
    double p_out = 0.02;
    std::uint64_t graph_seed = 1;
    std::string laplacian = "combinatorial";
    std::string partition;
    std::string cells;
    bool blocks = false;

    void add_to(CLI::App& app)
    {
        app.add_option("--graph", graph, "Graph file (edge list or matrix market)")->check(CLI::ExistingFile);
        app.add_option("--graph-format", graph_format, "auto | edge-list | matrix-market")
            ->check(CLI::IsMember({"auto", "edge-list", "matrix-market"}));
        app.add_option("--coords", coords, "Node coordinates (n rows of 'x y') for a graph file")
            ->check(CLI::ExistingFile);
        app.add_option("--recipe", recipe, "Synthetic graph: grid | random-sensor | clustered-sensor | community")
            ->check(CLI::IsMember({"grid", "random-sensor", "clustered-sensor", "community"}));
        app.add_option("--rows", rows, "grid: rows")->check(CLI::PositiveNumber);
        app.add_option("--cols", cols, "grid: columns")->check(CLI::PositiveNumber);
        app.add_option("--nodes", nodes, "sensor recipes: node count")->check(CLI::PositiveNumber);
        app.add_option("--sensor-knn", sensor_knn, "sensor recipes: neighbors per node")->check(CLI::PositiveNumber);
        app.add_option("--dense-fraction", dense_fraction, "clustered-sensor: share of nodes in the dense square")
            ->check(CLI::Range(0.0, 1.0));
        app.add_option("--sizes", sizes, "community: comma-separated block sizes");
        app.add_option("--p-in", p_in, "community: edge probability inside a block")->check(CLI::Range(0.0, 1.0));
        app.add_option("--p-out", p_out, "community: edge probability across blocks")->check(CLI::Range(0.0, 1.0));
        app.add_option("--graph-seed", graph_seed, "Seed of the synthetic graph");
        app.add_option("--laplacian", laplacian, "combinatorial | normalized")
            ->check(CLI::IsMember({"combinatorial", "normalized"}));
        app.add_option("--partition", partition, "Partition file (one line of group ids per node)")
            ->check(CLI::ExistingFile);
        app.add_option("--cells", cells, "Spatial-grid partition AxB over the node coordinates");
        app.add_flag("--blocks", blocks, "community: one group per planted block");
    }
};

struct Problem {
    std::shared_ptr<const SparseGraph> graph;
    std::optional<Laplacian> laplacian;
    GroupPartition partition;
};

Problem build_problem(const GraphOptions& o)
{
    if (o.graph.empty() == o.recipe.empty()) {
        throw ValidationError("give exactly one of --graph or --recipe");
    }
    const int sources = int(!o.partition.empty()) + int(!o.cells.empty()) + int(o.blocks);
    if (sources != 1) {
        throw ValidationError("give exactly one partition source: --partition, --cells or --blocks");
    }
    std::optional<PointSet> coords;
    std::vector<Index> block_of;
    SparseGraph g;
    if (!o.graph.empty()) {
        const auto fmt = o.graph_format == "edge-list"       ? GraphFormat::edge_list
                         : o.graph_format == "matrix-market" ? GraphFormat::matrix_market
                                                             : GraphFormat::automatic;
        g = load_graph(o.graph, fmt);
        if (!o.coords.empty()) {
            coords = load_coords(o.coords, g.size());
        }
    } else if (o.recipe == "grid") {
        auto sg = grid_graph(o.rows, o.cols);
        g = std::move(sg.graph);
        coords = std::move(sg.coords);
    } else if (o.recipe == "random-sensor" || o.recipe == "clustered-sensor") {
        auto sg = o.recipe == "random-sensor"
                      ? random_sensor_graph(o.nodes, o.graph_seed, o.sensor_knn)
                      : clustered_sensor_graph(o.nodes, o.graph_seed, o.dense_fraction, o.sensor_knn);
        g = std::move(sg.graph);
        coords = std::move(sg.coords);
    } else {
        std::vector<Index> sizes;
        for (const auto& t : split(o.sizes, ',')) {
            sizes.push_back(parse_index(t, "sizes"));
            if (sizes.back() < 1) {
                throw ValidationError("sizes: block sizes must be positive");
            }
        }
        if (sizes.empty()) {
            throw ValidationError("sizes: at least one block is required");
        }
        g = community_graph(sizes, o.p_in, o.p_out, o.graph_seed, &block_of);
    }
    Problem p;
    if (!o.partition.empty()) {
        p.partition = load_partition(o.partition);
    } else if (!o.cells.empty()) {
        if (!coords) {
            throw ValidationError("--cells needs node coordinates (a grid or sensor recipe, or --coords)");
        }
        const auto [cx, cy] = parse_dims(o.cells, "cells");
        p.partition = spatial_grid_partition(*coords, cx, cy);
    } else {
        if (block_of.empty()) {
            throw ValidationError("--blocks needs the community recipe");
        }
        p.partition = GroupPartition::from_labels(block_of);
    }
    if (p.partition.node_count() != g.size()) {
        throw ValidationError("partition covers " + std::to_string(p.partition.node_count()) +
                              " nodes but the graph has " + std::to_string(g.size()));
    }
    p.graph = std::make_shared<const SparseGraph>(std::move(g));
    p.laplacian.emplace(p.graph, o.laplacian == "normalized" ? LaplacianVariant::normalized
                                                             : LaplacianVariant::combinatorial);
    return p;
}

struct Common {
    std::string config;
    std::string out = ".";
    unsigned threads = 0;
    std::uint64_t seed = 0;

    void add_to(CLI::App& app)
    {
        app.add_option("--config", config, "Key-value config file; command-line flags override it")
            ->check(CLI::ExistingFile);
        app.add_option("--out", out, "Output directory");
        app.add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");
        app.add_option("--seed", seed, "Seed for all randomness of the command");
    }
};

void check_k(Index k, Index n)
{
    if (k < 1 || k > n) {
        throw ValidationError("k must lie in [1, " + std::to_string(n) + "], got " + std::to_string(k));
    }
}

std::string fmt17(double v)
{
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

std::string fmt_ms(double v)
{
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << v;
    return s.str();
}

// ---------------------------------------------------------------- coherence

struct CoherenceCmd {
    Common common;
    GraphOptions graph;
    Index k = 0;
    bool exact = false;
    std::string estimate = "both";
    int order = 50;
    int probes = 0;
    CLI::App* app = nullptr;

    void add_to(CLI::App& parent)
    {
        app = parent.add_subcommand("coherence", "Local coherence profiles and sampling distributions");
        common.add_to(*app);
        graph.add_to(*app);
        app->add_option("--k", k, "Bandlimit")->required();
        app->add_flag("--exact", exact, "Exact profiles from the dense spectrum");
        app->add_option("--estimate", estimate, "p_bar | q_bar | both")->check(CLI::IsMember({"p_bar", "q_bar", "both"}));
        app->add_option("--order", order, "Chebyshev filter order")->check(CLI::PositiveNumber);
        app->add_option("--probes", probes, "Random probes (0 = 2 ceil(log2 n))")->check(CLI::NonNegativeNumber);
    }

    int run(const ResolvedConfig& rc) const
    {
        const auto p = build_problem(graph);
        const auto& lap = *p.laplacian;
        check_k(k, lap.size());
        const OutputDir out(common.out, rc.hash);
        std::ostringstream summary;
        summary << std::setprecision(17) << "nodes " << lap.size() << "\ngroups " << p.partition.group_count()
                << "\nk " << k << "\n";
        const auto uniform = SamplingDistribution::uniform(p.partition.group_count());
        if (exact) {
            const auto basis = dense_spectrum(lap, k);
            const auto spec = local_coherence_exact(basis, p.partition, CoherenceFlavor::spectral);
            const auto frob = local_coherence_exact(basis, p.partition, CoherenceFlavor::frobenius);
            const auto ps = optimal_distribution(spec);
            const auto qs = optimal_distribution(frob);
            out.text("profile_spectral.csv", profile_to_csv(spec));
            out.text("profile_frobenius.csv", profile_to_csv(frob));
            out.text("p_star.csv", distribution_to_csv(ps));
            out.text("q_star.csv", distribution_to_csv(qs));
            summary << "lambda_k " << basis.lambdas[k - 1] << "\nnu2_p_star " << coherence(ps, spec)
                    << "\nnu2_q_star " << coherence(qs, spec) << "\nnu2_uniform " << coherence(uniform, spec) << "\n";
        } else {
            EstimatorOptions eo;
            eo.order = order;
            eo.probes = probes;
            eo.threads = common.threads;
            eo.lambda_max = estimate_lambda_max(lap);
            const int r = probes > 0 ? probes : default_probe_count(lap.size());
            eo.lambda_k = estimate_lambda_k(lap, k, order, r, eo.max_bisect, derive_seed(common.seed, {0x1a4b}),
                                            eo.lambda_max)
                              .value;
            summary << "lambda_max_estimate " << eo.lambda_max << "\nlambda_k_estimate " << eo.lambda_k
                    << "\norder " << order << "\nprobes " << r << "\n";
            if (estimate != "q_bar") {
                const auto pb = estimate_p_bar(lap, p.partition, k, common.seed, eo);
                out.text("p_bar.csv", distribution_to_csv(pb));
                summary << "p_bar_unconverged_groups " << pb.unconverged_groups << "\n";
            }
            if (estimate != "p_bar") {
                out.text("q_bar.csv", distribution_to_csv(estimate_q_bar(lap, p.partition, k, common.seed, eo)));
            }
        }
        out.text("summary.txt", summary.str());
        out.text("resolved.cfg", rc.dump());
        return exit_ok;
    }
};

// ---------------------------------------------------------------- ripcurve

struct RipcurveCmd {
    Common common;
    GraphOptions graph;
    Index k = 0;
    std::string distributions = "uniform,p_star,q_star";
    std::string s_grid = "10:100:10";
    int trials = 100;
    double threshold = 0.995;
    int order = 50;
    int probes = 0;
    CLI::App* app = nullptr;

    void add_to(CLI::App& parent)
    {
        app = parent.add_subcommand("ripcurve", "Probability that the lower RIP constant is below a threshold");
        common.add_to(*app);
        graph.add_to(*app);
        app->add_option("--k", k, "Bandlimit")->required();
        app->add_option("--distributions", distributions, "Comma list of uniform, p_star, q_star, p_bar, q_bar");
        app->add_option("--s-grid", s_grid, "start:stop:step or a comma list of sample sizes");
        app->add_option("--trials", trials, "Draws per sample size")->check(CLI::PositiveNumber);
        app->add_option("--threshold", threshold, "Lower RIP constant threshold")->check(CLI::PositiveNumber);
        app->add_option("--order", order, "Chebyshev order for p_bar / q_bar")->check(CLI::PositiveNumber);
        app->add_option("--probes", probes, "Random probes for p_bar / q_bar")->check(CLI::NonNegativeNumber);
    }

    int run(const ResolvedConfig& rc) const
    {
        const auto grid = parse_s_grid(s_grid);
        std::vector<Provenance> provs;
        for (const auto& name : split(distributions, ',')) {
            const auto pv = provenance_from_string(name);
            if (pv == Provenance::custom) {
                throw ValidationError("ripcurve: distribution 'custom' is not supported here");
            }
            provs.push_back(pv);
        }
        if (provs.empty()) {
            throw ValidationError("ripcurve: no distributions given");
        }
        const auto p = build_problem(graph);
        const auto& lap = *p.laplacian;
        check_k(k, lap.size());
        const OutputDir out(common.out, rc.hash);
        const auto basis = dense_spectrum(lap, k);
        const auto spec = local_coherence_exact(basis, p.partition, CoherenceFlavor::spectral);
        EstimatorOptions eo;
        eo.order = order;
        eo.probes = probes;
        eo.threads = common.threads;
        std::vector<RipCurve> curves;
        std::ostringstream summary;
        summary << std::setprecision(17) << "nodes " << lap.size() << "\ngroups " << p.partition.group_count()
                << "\nk " << k << "\n";
        for (const auto pv : provs) {
            RipCurve c;
            if (pv == Provenance::p_bar || pv == Provenance::q_bar) {
                // only the provenance of this placeholder is read: the
                // distribution is re-estimated for every trial
                const SamplingDistribution placeholder(SamplingDistribution::uniform(p.partition.group_count()).probs(),
                                                       pv);
                c = rip_curve(lap, p.partition, placeholder, k, grid, trials, threshold, common.seed, eo,
                              common.threads);
            } else {
                const auto dist = pv == Provenance::uniform ? SamplingDistribution::uniform(p.partition.group_count())
                                  : pv == Provenance::p_star
                                      ? optimal_distribution(spec)
                                      : optimal_distribution(local_coherence_exact(basis, p.partition,
                                                                                   CoherenceFlavor::frobenius));
                c = rip_curve(basis, p.partition, dist, grid, trials, threshold, common.seed, common.threads);
                summary << "nu2_" << to_string(pv) << " " << coherence(dist, spec) << "\n";
            }
            const auto reach = c.first_reaching(0.9);
            summary << "first_s_at_0.9_" << to_string(pv) << " " << (reach ? std::to_string(*reach) : "none")
                    << "\n";
            out.text("ripcurve_" + to_string(pv) + ".csv", rip_curve_csv(c));
            curves.push_back(std::move(c));
        }
        std::ostringstream dat;
        dat << "# s";
        for (const auto pv : provs) {
            dat << ' ' << to_string(pv);
        }
        dat << "\n" << std::setprecision(17);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            dat << grid[i];
            for (const auto& c : curves) {
                dat << ' ' << c.probs[i];
            }
            dat << "\n";
        }
        out.text("ripcurve.dat", dat.str());
        out.text("summary.txt", summary.str());
        out.text("resolved.cfg", rc.dump());
        return exit_ok;
    }
};

// ---------------------------------------------------------------- segment

std::map<Index, int> load_label_file(const std::string& path, Index n_groups)
{
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open label file '" + path + "'");
    }
    std::map<Index, int> labels;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#' || t.rfind("group_id", 0) == 0) {
            continue;
        }
        const auto f = split(t, ',');
        if (f.size() != 2) {
            throw ParseError(path + ": expected 'group_id,label'", lineno);
        }
        const Index g = parse_index(f[0], path);
        const Index v = parse_index(f[1], path);
        if (g < 1 || g > n_groups || (v != 0 && v != 1)) {
            throw ValidationError(path + ": line " + std::to_string(lineno) + ": group id must lie in [1, " +
                                  std::to_string(n_groups) + "] and the label must be 0 or 1");
        }
        labels[g - 1] = static_cast<int>(v);
    }
    if (labels.empty()) {
        throw ValidationError("label file '" + path + "' holds no labels");
    }
    return labels;
}

struct SegmentCmd {
    Common common;
    std::string image;
    std::string synthetic;
    std::uint64_t scene_seed = 1;
    double noise = 0.03;
    std::string truth;
    std::string labels;
    Index superpixels = 60;
    std::string superpixel_map;
    double compactness = 10.0;
    int slic_iterations = 10;
    Index k0 = 5;
    int order = 50;
    int probes = 0;
    std::string distribution = "q_bar";
    Index s = 0;
    double s_fraction = 0.25;
    int repeats = 1;
    std::string decoder = "full";
    std::string init = "fast";
    double gamma = 0.0;
    CLI::App* app = nullptr;

    void add_to(CLI::App& parent)
    {
        app = parent.add_subcommand("segment", "Superpixel sampling and mask reconstruction on one image");
        common.add_to(*app);
        app->add_option("--image", image, "RGB or gray PNG / PPM / PGM image")->check(CLI::ExistingFile);
        app->add_option("--synthetic", synthetic, "Synthetic two-region image HxW (ground truth included)");
        app->add_option("--scene-seed", scene_seed, "Seed of the synthetic image noise");
        app->add_option("--noise", noise, "Noise level of the synthetic image")->check(CLI::NonNegativeNumber);
        app->add_option("--truth", truth, "Binary ground-truth mask image")->check(CLI::ExistingFile);
        app->add_option("--labels", labels, "Group labels 'group_id,label' used instead of emulated ones")
            ->check(CLI::ExistingFile);
        app->add_option("--superpixels", superpixels, "Target superpixel count")->check(CLI::PositiveNumber);
        app->add_option("--superpixel-map", superpixel_map, "16-bit label image (1..N) replacing SLIC")
            ->check(CLI::ExistingFile);
        app->add_option("--compactness", compactness, "SLIC compactness")->check(CLI::PositiveNumber);
        app->add_option("--slic-iterations", slic_iterations, "SLIC iterations")->check(CLI::NonNegativeNumber);
        app->add_option("--k0", k0, "Bandlimit used for the sampling distribution")->check(CLI::PositiveNumber);
        app->add_option("--order", order, "Chebyshev filter order")->check(CLI::PositiveNumber);
        app->add_option("--probes", probes, "Random probes (0 = 2 ceil(log2 n))")->check(CLI::NonNegativeNumber);
        app->add_option("--distribution", distribution, "uniform | q_bar | p_bar")
            ->check(CLI::IsMember({"uniform", "q_bar", "p_bar"}));
        app->add_option("--s", s, "Number of sampled superpixels (0 = s-fraction of N)")
            ->check(CLI::NonNegativeNumber);
        app->add_option("--s-fraction", s_fraction, "Sampled fraction of superpixels when s = 0")
            ->check(CLI::Range(0.0, 1.0));
        app->add_option("--repeats", repeats, "Independent draws (seeded from --seed)")->check(CLI::PositiveNumber);
        app->add_option("--decoder", decoder, "fast | full")->check(CLI::IsMember({"fast", "full"}));
        app->add_option("--init", init, "Start of the full decoder: fast | zero")
            ->check(CLI::IsMember({"fast", "zero"}));
        app->add_option("--gamma", gamma, "Regularization weight; 0 solves the constrained limit")
            ->check(CLI::NonNegativeNumber);
    }

    int run(const ResolvedConfig& rc) const
    {
        if (image.empty() == synthetic.empty()) {
            throw ValidationError("give exactly one of --image or --synthetic");
        }
        ImageTensor img;
        std::optional<Eigen::VectorXd> truth_vec;
        if (!synthetic.empty()) {
            const auto [h, w] = parse_dims(synthetic, "synthetic");
            auto scene = synthetic_two_region(h, w, scene_seed, noise);
            img = std::move(scene.image);
            truth_vec = std::move(scene.truth);
        } else {
            img = load_image(image);
        }
        if (!truth.empty()) {
            const auto r = load_raster(truth);
            if (r.height != img.height || r.width != img.width) {
                throw ValidationError("ground truth '" + truth + "' does not match the image size");
            }
            const auto m = raster_to_mask(r);
            truth_vec = Eigen::VectorXd(static_cast<Index>(m.size()));
            for (std::size_t i = 0; i < m.size(); ++i) {
                (*truth_vec)[static_cast<Index>(i)] = m[i];
            }
        }
        if (!truth_vec && labels.empty()) {
            throw ValidationError("segment needs ground truth (--truth or --synthetic) or a --labels file");
        }
        SegmentationModelOptions mo;
        mo.superpixels = superpixels;
        mo.slic.compactness = compactness;
        mo.slic.iterations = slic_iterations;
        mo.threads = common.threads;
        std::optional<SuperpixelMap> given;
        if (!superpixel_map.empty()) {
            given = superpixels_from_raster(load_raster(superpixel_map));
        }
        const auto model = build_segmentation_model(img, mo, given ? &*given : nullptr);
        const Index n_groups = model.partition->group_count();
        const Index k = std::min(k0, model.partition->node_count());
        SamplingDistribution dist = SamplingDistribution::uniform(n_groups);
        if (distribution != "uniform") {
            EstimatorOptions eo;
            eo.order = order;
            eo.probes = probes;
            eo.threads = common.threads;
            eo.lambda_max = model.lambda_max;
            dist = distribution == "q_bar" ? estimate_q_bar(*model.laplacian, *model.partition, k, common.seed, eo)
                                           : estimate_p_bar(*model.laplacian, *model.partition, k, common.seed, eo);
        }
        SegmentationDecodeOptions dopt;
        dopt.gamma = gamma;
        dopt.decoder = decoder == "fast"  ? SegmentationDecoder::fast
                       : init == "fast"   ? SegmentationDecoder::fast_then_full
                                          : SegmentationDecoder::full;
        const Index s_draw = s > 0 ? s
                                   : std::max<Index>(1, static_cast<Index>(std::ceil(
                                                            s_fraction * static_cast<double>(n_groups))));
        const OutputDir out(common.out, rc.hash);
        std::ostringstream csv;
        csv << "repeat,draw_seed,distribution,s,groups,decoder,snr_db,fast_snr_db,fast_ms,full_ms\n";
        double snr_total = 0.0;
        const int runs = labels.empty() ? repeats : 1;
        for (int r = 0; r < runs; ++r) {
            SampleDraw draw;
            std::vector<int> vals;
            std::uint64_t draw_seed = 0;
            if (!labels.empty()) {
                std::tie(draw, vals) = draw_from_labels(load_label_file(labels, n_groups), dist);
            } else {
                draw_seed = derive_seed(common.seed, {0xd7a3, static_cast<std::uint64_t>(r)});
                draw = draw_groups(dist, s_draw, draw_seed);
                vals = emulate_labels(*truth_vec, *model.partition, draw).labels;
            }
            const auto dec = decode_labels(model, draw, vals, dopt);
            std::string snr, fast_snr;
            if (truth_vec) {
                const double v = snr_db(*truth_vec, dec.estimate());
                snr_total += v;
                snr = fmt17(v);
                if (dec.fast) {
                    fast_snr = fmt17(snr_db(*truth_vec, dec.fast->estimate));
                }
            }
            csv << r << ',' << draw_seed << ',' << to_string(dist.provenance()) << ',' << draw.s() << ','
                << n_groups << ',' << (dec.full ? (dec.fast ? "full_from_fast" : "full") : "fast") << ',' << snr
                << ',' << fast_snr << ',' << (dec.fast ? fmt_ms(dec.fast->millis) : "") << ','
                << (dec.full ? fmt_ms(dec.full->millis) : "") << '\n';
            if (r == 0) {
                out.png("mask.png", mask_to_raster(threshold_mask(dec.estimate()), img.height, img.width));
            }
        }
        out.text("segment.csv", csv.str());
        out.text("distribution.csv", distribution_to_csv(dist));
        out.png("superpixels.png", superpixels_to_raster(model.superpixels));
        std::ostringstream summary;
        summary << std::setprecision(17) << "pixels " << model.partition->node_count() << "\ngroups " << n_groups
                << "\nk " << k << "\ngraph_ms " << model.graph_ms << "\nreduced_laplacian_ms " << model.reduced_ms
                << "\n";
        if (truth_vec) {
            summary << "mean_snr_db " << snr_total / runs << "\n";
        }
        out.text("summary.txt", summary.str());
        out.text("resolved.cfg", rc.dump());
        return exit_ok;
    }
};

// ---------------------------------------------------------------- serve

httplib::Server* running_server = nullptr;

extern "C" void stop_server(int)
{
    if (running_server) {
        running_server->stop();
    }
}

struct ServeCmd {
    std::string config;
    std::string host = "127.0.0.1";
    int port = 8080;
    CLI::App* app = nullptr;

    void add_to(CLI::App& parent)
    {
        app = parent.add_subcommand("serve", "HTTP/JSON session service under /v1");
        app->add_option("--config", config, "Key-value config file")->check(CLI::ExistingFile);
        app->add_option("--host", host, "Bind address");
        app->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
    }

    int run() const
    {
        httplib::Server server;
        SessionService service;
        service.mount(server);
        const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
        if (bound < 0) {
            throw ValidationError("cannot bind " + host + ":" + std::to_string(port));
        }
        running_server = &server;
        std::signal(SIGINT, stop_server);
        std::signal(SIGTERM, stop_server);
        std::cout << "listening on http://" << host << ":" << bound << "/v1" << std::endl;
        server.listen_after_bind();
        running_server = nullptr;
        return exit_ok;
    }
};

int run_main(int argc, char** argv)
{
    CLI::App app("Graph sampling with group structure: coherence, RIP curves, segmentation and the session service",
                 "gsamp");
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    CoherenceCmd coherence;
    RipcurveCmd ripcurve;
    SegmentCmd segment;
    ServeCmd serve;
    coherence.add_to(app);
    ripcurve.add_to(app);
    segment.add_to(app);
    serve.add_to(app);
    auto args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_validation;
    }
    if (coherence.app->parsed()) {
        return coherence.run(resolve(*coherence.app));
    }
    if (ripcurve.app->parsed()) {
        return ripcurve.run(resolve(*ripcurve.app));
    }
    if (segment.app->parsed()) {
        return segment.run(resolve(*segment.app));
    }
    return serve.run();
}

} // namespace

int main(int argc, char** argv)
{
    try {
        return run_main(argc, argv);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return exit_numerical;
    } catch (const InfeasibleError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return exit_numerical;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_validation;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}
