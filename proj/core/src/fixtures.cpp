#include "sce/fixtures.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

#include "sce/errors.hpp"

namespace sce {

namespace {

const std::map<std::string, std::string>& builtins() {
    static const std::map<std::string, std::string> table{
        {"torus1",
         "manifold torus1\ndim 1\nchart T\n  box 0 1\n  nodes 128\n  periodic 1\n  metric flat\nend\n"},
        {"torus2",
         "manifold torus2\ndim 2\nchart T\n  box 0 1 0 1\n  nodes 128 128\n  periodic 1 1\n  metric flat\nend\n"},
        {"torus2pi",
         "manifold torus2pi\ndim 2\nchart T\n  box 0 2pi 0 2pi\n  nodes 128 128\n  periodic 1 1\n  metric flat\nend\n"},
        {"sphere",
         "manifold sphere\ndim 2\n"
         "chart north\n  box 0.3 2.841592653589793 0 2pi\n  nodes 128 128\n  periodic 0 1\n"
         "  metric sphere-polar\n  axis 0 0 1\nend\n"
         "chart east\n  box 0.3 2.841592653589793 0 2pi\n  nodes 128 128\n  periodic 0 1\n"
         "  metric sphere-polar\n  axis 1 0 0\nend\n"},
        {"sphere-uv",
         "manifold sphere-uv\ndim 2\nunit_volume 1\n"
         "chart north\n  box 0.3 2.841592653589793 0 2pi\n  nodes 128 128\n  periodic 0 1\n"
         "  metric sphere-polar\n  axis 0 0 1\nend\n"
         "chart east\n  box 0.3 2.841592653589793 0 2pi\n  nodes 128 128\n  periodic 0 1\n"
         "  metric sphere-polar\n  axis 1 0 0\nend\n"},
        {"expwarp",
         "manifold expwarp\ndim 1\nchart W\n  box 0 1\n  nodes 128\n  periodic 0\n  metric exp-warped-1d\nend\n"},
        {"interval",
         "manifold interval\ndim 1\nchart I\n  box -1 1\n  nodes 401\n  periodic 0\n  metric flat\nend\n"},
    };
    return table;
}

struct ChartSpec {
    std::string id;
    int line = 0;
    std::vector<double> box;
    std::vector<int> nodes;
    std::vector<int> periodic;
    std::string metric;
    double metric_scale = 1.0;
    std::optional<Vec3> axis;
    int order = 4;
    std::optional<std::filesystem::path> override_file;
};

[[noreturn]] void fail(int line, const std::string& what) {
    throw FixtureParseError("fixture line " + std::to_string(line) + ": " + what);
}

double parse_number(const std::string& tok, int line) {
    std::string t = tok;
    double mult = 1.0;
    if (t.size() >= 2 && t.compare(t.size() - 2, 2, "pi") == 0) {
        mult = std::numbers::pi;
        t.resize(t.size() - 2);
        if (t.empty() || t == "+") return mult;
        if (t == "-") return -mult;
    }
    try {
        std::size_t used = 0;
        const double v = std::stod(t, &used);
        if (used != t.size()) fail(line, "bad number '" + tok + "'");
        return v * mult;
    } catch (const std::logic_error&) {
        fail(line, "bad number '" + tok + "'");
    }
}

int parse_int(const std::string& tok, int line) {
    const double v = parse_number(tok, line);
    if (v != std::floor(v)) fail(line, "expected an integer, got '" + tok + "'");
    return static_cast<int>(v);
}

}  // namespace

std::vector<double> read_f64_le(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw FixtureParseError("cannot open override file " + file.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() % 8 != 0) throw FixtureParseError("override file size is not a multiple of 8: " + file.string());
    std::vector<double> out(bytes.size() / 8);
    for (std::size_t k = 0; k < out.size(); ++k) {
        std::uint64_t u = 0;
        for (int b = 7; b >= 0; --b) u = (u << 8) | static_cast<unsigned char>(bytes[8 * k + static_cast<std::size_t>(b)]);
        out[k] = std::bit_cast<double>(u);
    }
    return out;
}

void write_f64_le(const std::filesystem::path& file, const std::vector<double>& values) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    for (double v : values) {
        std::uint64_t u = std::bit_cast<std::uint64_t>(v);
        char bytes[8];
        for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((u >> (8 * b)) & 0xffu);
        out.write(bytes, 8);
    }
}

Atlas parse_fixture(const std::string& text, const std::filesystem::path& base_dir) {
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    std::string name;
    int dim = 0;
    bool unit_volume = false;
    std::vector<ChartSpec> charts;
    ChartSpec* open = nullptr;

    while (std::getline(in, raw)) {
        ++line;
        if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
        std::istringstream ls(raw);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.empty()) continue;
        const std::string& key = tok[0];
        auto need = [&](std::size_t lo, std::size_t hi) {
            if (tok.size() < lo + 1 || tok.size() > hi + 1) fail(line, "wrong number of arguments for '" + key + "'");
        };
        if (open) {
            if (key == "end") {
                need(0, 0);
                open = nullptr;
            } else if (key == "box") {
                need(2, 4);
                open->box.clear();
                for (std::size_t k = 1; k < tok.size(); ++k) open->box.push_back(parse_number(tok[k], line));
            } else if (key == "nodes") {
                need(1, 2);
                open->nodes.clear();
                for (std::size_t k = 1; k < tok.size(); ++k) open->nodes.push_back(parse_int(tok[k], line));
            } else if (key == "periodic") {
                need(1, 2);
                open->periodic.clear();
                for (std::size_t k = 1; k < tok.size(); ++k) open->periodic.push_back(parse_int(tok[k], line));
            } else if (key == "metric") {
                need(1, 2);
                open->metric = tok[1];
                if (tok[1] == "scaled-flat") {
                    if (tok.size() != 3) fail(line, "scaled-flat needs a scale factor");
                    open->metric_scale = parse_number(tok[2], line);
                } else if (tok.size() != 2) {
                    fail(line, "metric '" + tok[1] + "' takes no parameters");
                }
            } else if (key == "axis") {
                need(3, 3);
                open->axis = Vec3{parse_number(tok[1], line), parse_number(tok[2], line), parse_number(tok[3], line)};
            } else if (key == "order") {
                need(1, 1);
                open->order = parse_int(tok[1], line);
            } else {
                fail(line, "unknown chart directive '" + key + "'");
            }
            continue;
        }
        if (key == "manifold") {
            need(1, 1);
            name = tok[1];
        } else if (key == "dim") {
            need(1, 1);
            dim = parse_int(tok[1], line);
            if (dim != 1 && dim != 2) fail(line, "dim must be 1 or 2");
        } else if (key == "unit_volume") {
            need(1, 1);
            unit_volume = parse_int(tok[1], line) != 0;
        } else if (key == "chart") {
            need(1, 1);
            charts.push_back({});
            charts.back().id = tok[1];
            charts.back().line = line;
            open = &charts.back();
        } else if (key == "override") {
            need(2, 2);
            bool found = false;
            for (auto& c : charts)
                if (c.id == tok[1]) {
                    c.override_file = base_dir / tok[2];
                    found = true;
                }
            if (!found) fail(line, "override for unknown chart '" + tok[1] + "'");
        } else {
            fail(line, "unknown directive '" + key + "'");
        }
    }
    if (open) fail(line, "chart '" + open->id + "' is missing 'end'");
    if (dim == 0) fail(line, "missing 'dim'");
    if (charts.empty()) fail(line, "no charts");

    Atlas atlas;
    atlas.name = name.empty() ? "unnamed" : name;
    atlas.dim = dim;
    for (const auto& c : charts) {
        const std::size_t d = static_cast<std::size_t>(dim);
        if (c.box.size() != 2 * d) fail(c.line, "chart '" + c.id + "' box needs " + std::to_string(2 * d) + " numbers");
        if (c.nodes.size() != d) fail(c.line, "chart '" + c.id + "' nodes needs " + std::to_string(d) + " counts");
        std::vector<int> per = c.periodic.empty() ? std::vector<int>(d, 0) : c.periodic;
        if (per.size() != d) fail(c.line, "chart '" + c.id + "' periodic needs " + std::to_string(d) + " flags");
        if (c.metric.empty()) fail(c.line, "chart '" + c.id + "' has no metric");
        Grid g;
        try {
            g = dim == 1 ? Grid::line(c.nodes[0], c.box[0], c.box[1], per[0] != 0, c.order)
                         : Grid::plane({c.nodes[0], c.nodes[1]}, {c.box[0], c.box[2]}, {c.box[1], c.box[3]},
                                       {per[0] != 0, per[1] != 0}, c.order);
        } catch (const std::invalid_argument& e) {
            fail(c.line, e.what());
        }
        std::shared_ptr<const MetricModel> model;
        try {
            model = c.metric == "scaled-flat" ? scaled_flat_metric(dim, c.metric_scale) : metric_preset(c.metric, dim);
        } catch (const std::invalid_argument& e) {
            fail(c.line, e.what());
        }
        std::shared_ptr<const ChartMap> map;
        if (c.axis) {
            if (dim != 2) fail(c.line, "embedding axis needs a 2-d chart");
            map = polar_chart_map(*c.axis);
        }
        if (c.override_file) {
            const auto raw = read_f64_le(*c.override_file);
            const std::size_t N = g.size();
            const std::size_t blocks = dim == 1 ? 1 : 3;
            if (raw.size() != blocks * N)
                throw FixtureParseError("override for chart '" + c.id + "' has " + std::to_string(raw.size()) +
                                        " values, expected " + std::to_string(blocks * N));
            std::array<Samples, 3> h;
            for (std::size_t b = 0; b < blocks; ++b) h[b].assign(raw.begin() + static_cast<long>(b * N), raw.begin() + static_cast<long>((b + 1) * N));
            atlas.charts.push_back(make_sampled_chart(c.id, g, std::move(h), map));
        } else {
            atlas.charts.push_back(make_chart(c.id, g, model, map));
        }
    }
    if (atlas.charts.size() > 1)
        for (const auto& c : atlas.charts)
            if (!c->map) throw FixtureParseError("multi-chart fixture needs an 'axis' for chart '" + c->id + "'");
    if (unit_volume) return build_unit_volume_atlas(atlas);
    bool all = true;
    for (const auto& c : atlas.charts) all = all && c->unit_volume;
    atlas.unit_volume = all;
    return atlas;
}

std::vector<std::string> builtin_fixture_names() {
    std::vector<std::string> names;
    for (const auto& [k, v] : builtins()) names.push_back(k);
    return names;
}

std::string builtin_fixture_text(const std::string& name) {
    auto it = builtins().find(name);
    if (it == builtins().end()) throw FixtureParseError("unknown built-in fixture '" + name + "'");
    return it->second;
}

Atlas load_fixture(const std::string& name_or_path) {
    if (builtins().count(name_or_path)) return parse_fixture(builtins().at(name_or_path));
    const std::filesystem::path p(name_or_path);
    std::ifstream in(p);
    if (!in) throw FixtureParseError("no built-in fixture or readable file named '" + name_or_path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_fixture(ss.str(), p.parent_path());
}

}  // namespace sce
