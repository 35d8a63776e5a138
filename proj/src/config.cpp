#include "softguide/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "softguide/errors.hpp"

namespace softguide {

namespace {

// Object reader that records visited keys, so leftovers can be reported as unknown fields.
class Node {
public:
    Node(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail("expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }
    std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    double number(const std::string& key, double def) {
        seen_.insert(key);
        if (!j_.contains(key)) return def;
        const Json& v = j_.at(key);
        if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw ConfigError(where(key) + ": must be finite");
        return x;
    }
    double positive(const std::string& key, double def) {
        const double x = number(key, def);
        if (!(x > 0.0)) throw ConfigError(where(key) + ": must be positive");
        return x;
    }
    double nonnegative(const std::string& key, double def) {
        const double x = number(key, def);
        if (!(x >= 0.0)) throw ConfigError(where(key) + ": must be non-negative");
        return x;
    }
    int integer(const std::string& key, int def, int min) {
        seen_.insert(key);
        if (!j_.contains(key)) return def;
        const Json& v = j_.at(key);
        if (!v.is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
        const long long x = v.get<long long>();
        if (x < min || x > 1000000000LL) throw ConfigError(where(key) + ": must be at least " + std::to_string(min));
        return static_cast<int>(x);
    }
    bool boolean(const std::string& key, bool def) {
        seen_.insert(key);
        if (!j_.contains(key)) return def;
        if (!j_.at(key).is_boolean()) throw ConfigError(where(key) + ": expected true or false");
        return j_.at(key).get<bool>();
    }
    std::string string(const std::string& key, const std::string& def, std::initializer_list<const char*> allowed = {}) {
        seen_.insert(key);
        std::string s = def;
        if (j_.contains(key)) {
            if (!j_.at(key).is_string()) throw ConfigError(where(key) + ": expected a string");
            s = j_.at(key).get<std::string>();
        }
        if (allowed.size() > 0) {
            bool ok = false;
            std::string list;
            for (const char* a : allowed) {
                ok = ok || s == a;
                list += (list.empty() ? "" : ", ") + std::string(a);
            }
            if (!ok) throw ConfigError(where(key) + ": '" + s + "' is not one of " + list);
        }
        return s;
    }
    std::vector<double> numbers(const std::string& key, const std::vector<double>& def) {
        seen_.insert(key);
        if (!j_.contains(key)) return def;
        const Json& v = j_.at(key);
        if (!v.is_array()) throw ConfigError(where(key) + ": expected an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) throw ConfigError(where(key) + "[" + std::to_string(i) + "]: expected a number");
            out.push_back(v[i].get<double>());
        }
        return out;
    }
    Node child(const std::string& key) {
        seen_.insert(key);
        static const Json empty = Json::object();
        return Node(j_.contains(key) ? j_.at(key) : empty, where(key));
    }
    const Json& raw(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }
    void ignore(const std::string& key) { seen_.insert(key); }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(where(it.key()) + ": unknown field");
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw ConfigError((path_.empty() ? std::string("config") : path_) + ": " + what);
    }
    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void parse_curve(Node n, CurveConfig& c, Json& out) {
    c.kind = n.string("kind", c.kind, {"straight", "bump_bend", "circle_arc", "helix", "tabulated"});
    out["kind"] = c.kind;
    for (const char* k : {"bump_bend", "circle_arc", "helix", "tabulated"}) {
        Node b = n.child(k);
        if (c.kind != k) continue;
        Json o = Json::object();
        if (c.kind == "bump_bend") {
            c.height = b.nonnegative("height", c.height);
            c.width = b.positive("width", c.width);
            o = {{"height", c.height}, {"width", c.width}};
        } else if (c.kind == "circle_arc") {
            c.radius = b.positive("R", c.radius);
            c.angle = b.positive("angle", c.angle);
            o = {{"R", c.radius}, {"angle", c.angle}};
        } else if (c.kind == "helix") {
            c.gamma = b.nonnegative("gamma", c.gamma);
            c.tau = b.number("tau", c.tau);
            c.length = b.nonnegative("length", c.length);
            o = {{"gamma", c.gamma}, {"tau", c.tau}, {"length", c.length}};
        } else {
            c.path = b.string("path", "");
            if (c.path.empty()) throw ConfigError(n.where("tabulated.path") + ": required for a tabulated curve");
            o = {{"path", c.path}};
        }
        b.finish();
        out[k] = o;
    }
    if (n.has("s_range") && !n.raw("s_range").is_string()) {
        const auto r = n.numbers("s_range", {});
        if (r.size() != 2 || !(r[0] < 0.0) || !(r[1] > 0.0))
            throw ConfigError(n.where("s_range") + ": expected [s_min, s_max] with s_min < 0 < s_max, or \"auto\"");
        c.s_min = r[0];
        c.s_max = r[1];
        out["s_range"] = r;
    } else {
        if (n.has("s_range") && n.raw("s_range").get<std::string>() != "auto")
            throw ConfigError(n.where("s_range") + ": expected [s_min, s_max] or \"auto\"");
        n.ignore("s_range");
        out["s_range"] = "auto";
    }
    c.step = n.positive("step", c.step);
    out["step"] = c.step;
    n.finish();
}

void parse_potential(Node n, PotentialConfig& p, Json& out) {
    p.kind = n.string("kind", p.kind, {"flat_disc", "flat_annulus", "flat_ellipse", "radial"});
    out["kind"] = p.kind;
    for (const char* k : {"flat_disc", "flat_annulus", "flat_ellipse", "radial"}) {
        Node b = n.child(k);
        if (p.kind != k) continue;
        Json o;
        if (p.kind == "flat_disc") {
            p.depth = b.positive("depth", p.depth);
            p.radius = b.positive("radius", p.radius);
            o = {{"depth", p.depth}, {"radius", p.radius}};
        } else if (p.kind == "flat_annulus") {
            p.depth = b.positive("depth", p.depth);
            p.r_in = b.nonnegative("r_in", 0.1);
            p.r_out = b.positive("r_out", 0.3);
            if (!(p.r_out > p.r_in)) throw ConfigError(b.where("r_out") + ": must exceed r_in");
            o = {{"depth", p.depth}, {"r_in", p.r_in}, {"r_out", p.r_out}};
        } else if (p.kind == "flat_ellipse") {
            p.depth = b.positive("depth", p.depth);
            p.ax = b.positive("ax", 0.3);
            p.ay = b.positive("ay", 0.2);
            o = {{"depth", p.depth}, {"ax", p.ax}, {"ay", p.ay}};
        } else {
            p.r = b.numbers("r", {});
            p.v = b.numbers("v", {});
            if (p.r.size() < 2 || p.r.size() != p.v.size())
                throw ConfigError(b.where("r") + ": need at least two radii and as many values in v");
            o = {{"r", p.r}, {"v", p.v}};
        }
        b.finish();
        out[k] = o;
    }
    n.finish();
}

}  // namespace

RunConfig parse_config(const Json& j) {
    RunConfig c;
    Node root(j, "");
    Json& R = c.resolved;
    R = Json::object();

    parse_curve(root.child("curve"), c.curve, R["curve"]);
    parse_potential(root.child("potential"), c.potential, R["potential"]);

    {
        Node n = root.child("transverse");
        auto& t = c.transverse;
        t.tol = n.positive("tol", t.tol);
        t.route = n.string("route", t.route, {"auto", "fd", "fiber"});
        t.cells_per_radius = n.integer("cells_per_radius", t.cells_per_radius, 2);
        t.max_levels = n.integer("max_levels", t.max_levels, 1);
        t.offsets = n.integer("offsets", t.offsets, 1);
        t.subsamples = n.integer("subsamples", t.subsamples, 1);
        t.max_unknowns = static_cast<long>(n.positive("max_unknowns", static_cast<double>(t.max_unknowns)));
        t.L = n.nonnegative("L", t.L);
        n.finish();
        R["transverse"] = {{"tol", t.tol},           {"route", t.route},       {"cells_per_radius", t.cells_per_radius},
                           {"max_levels", t.max_levels}, {"offsets", t.offsets}, {"subsamples", t.subsamples},
                           {"max_unknowns", t.max_unknowns}, {"L", t.L}};
    }
    {
        Node n = root.child("criterion");
        auto& k = c.criterion;
        k.S = n.nonnegative("S", k.S);
        k.tail_fraction = n.positive("tail_fraction", k.tail_fraction);
        k.max_decay_lengths = n.positive("max_decay_lengths", k.max_decay_lengths);
        k.support_eps = n.positive("support_eps", k.support_eps);
        k.panel_length = n.positive("panel_length", k.panel_length);
        k.order = n.integer("order", k.order, 2);
        k.delta = n.nonnegative("delta", k.delta);
        k.levels = n.integer("levels", k.levels, 1);
        n.finish();
        R["criterion"] = {{"S", k.S},
                          {"tail_fraction", k.tail_fraction},
                          {"max_decay_lengths", k.max_decay_lengths},
                          {"support_eps", k.support_eps},
                          {"panel_length", k.panel_length},
                          {"order", k.order},
                          {"delta", k.delta},
                          {"levels", k.levels}};
    }
    {
        Node n = root.child("binding");
        auto& b = c.binding;
        b.ds = n.positive("ds", b.ds);
        b.S = n.nonnegative("S", b.S);
        b.modes = n.integer("modes", b.modes, 1);
        b.decay_lengths = n.positive("decay_lengths", b.decay_lengths);
        b.probe = n.positive("probe", b.probe);
        b.kappa_tol = n.positive("kappa_tol", b.kappa_tol);
        c.kappa_max = n.nonnegative("kappa_max", c.kappa_max);
        n.finish();
        R["binding"] = {{"ds", b.ds},       {"S", b.S},         {"modes", b.modes},         {"decay_lengths", b.decay_lengths},
                        {"probe", b.probe}, {"kappa_tol", b.kappa_tol}, {"kappa_max", c.kappa_max}};
    }
    {
        Node n = root.child("direct");
        auto& d = c.direct;
        c.direct_mode = n.string("mode", c.direct_mode, {"binding", "hardwall"});
        d.grid.h = n.positive("h", d.grid.h);
        d.grid.subsamples = n.integer("subsamples", d.grid.subsamples, 0);
        d.leg_length = n.positive("leg_length", d.leg_length);
        d.margin = n.nonnegative("margin", d.margin);
        d.coarse_factor = n.nonnegative("coarse_factor", d.coarse_factor);
        d.count = n.integer("count", d.count, 1);
        d.offsets = n.integer("offsets", d.offsets, 1);
        d.symmetry = n.boolean("symmetry", d.symmetry);
        d.solver.tol = n.positive("tol", d.solver.tol);
        d.solver.max_iter = n.integer("max_iter", d.solver.max_iter, 1);
        Node hw = n.child("hardwall");
        auto& h = c.hardwall;
        h.eps = hw.numbers("eps", h.eps);
        if (h.eps.empty()) throw ConfigError(hw.where("eps") + ": must not be empty");
        for (std::size_t i = 0; i < h.eps.size(); ++i)
            if (!(h.eps[i] > 0.0) || (i > 0 && !(h.eps[i] > h.eps[i - 1])))
                throw ConfigError(hw.where("eps") + ": must be positive and increasing");
        h.options.grid.h = hw.positive("h", h.options.grid.h);
        h.options.grid.subsamples = d.grid.subsamples;
        h.options.leg_length = hw.positive("leg_length", h.options.leg_length);
        h.options.margin = hw.positive("margin", h.options.margin);
        h.options.offsets = hw.integer("offsets", h.options.offsets, 1);
        h.options.solver = d.solver;
        hw.finish();
        n.finish();
        R["direct"] = {{"mode", c.direct_mode},
                       {"h", d.grid.h},
                       {"subsamples", d.grid.subsamples},
                       {"leg_length", d.leg_length},
                       {"margin", d.margin},
                       {"coarse_factor", d.coarse_factor},
                       {"count", d.count},
                       {"offsets", d.offsets},
                       {"symmetry", d.symmetry},
                       {"tol", d.solver.tol},
                       {"max_iter", d.solver.max_iter},
                       {"hardwall",
                        {{"eps", h.eps},
                         {"h", h.options.grid.h},
                         {"leg_length", h.options.leg_length},
                         {"margin", h.options.margin},
                         {"offsets", h.options.offsets}}}};
    }
    {
        Node n = root.child("frames");
        c.roundtrip_samples = n.integer("roundtrip_samples", c.roundtrip_samples, 0);
        n.finish();
        R["frames"] = {{"roundtrip_samples", c.roundtrip_samples}};
    }
    {
        Node n = root.child("output");
        c.out_dir = n.string("dir", c.out_dir);
        if (c.out_dir.empty()) throw ConfigError("output.dir: must not be empty");
        n.finish();
        R["output"] = {{"dir", c.out_dir}};
    }
    c.seed = static_cast<unsigned long long>(root.integer("seed", 12345, 0));
    R["seed"] = c.seed;
    root.finish();
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    Json j;
    try {
        j = Json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_config(j);
}

RunConfig with_parameter(const RunConfig& cfg, const std::string& path, double value) {
    Json j = cfg.resolved;
    Json* node = &j;
    std::stringstream ss(path);
    std::string key;
    while (std::getline(ss, key, '.')) {
        if (!node->is_object() || !node->contains(key))
            throw ConfigError("parameter '" + path + "' does not name an active numeric field");
        node = &(*node)[key];
    }
    if (!node->is_number()) throw ConfigError("parameter '" + path + "' is not numeric");
    if (node->is_number_integer()) {
        if (value != std::round(value)) throw ConfigError("parameter '" + path + "' takes integer values");
        *node = static_cast<long long>(std::llround(value));
    } else {
        *node = value;
    }
    return parse_config(j);
}

CurveSpec make_curve(const CurveConfig& c) {
    if (c.kind == "straight") return straight_curve();
    if (c.kind == "bump_bend") return bump_bend(c.height, c.width);
    if (c.kind == "circle_arc") return circle_arc(c.radius, c.angle);
    if (c.kind == "helix") return helix(c.gamma, c.tau, c.length > 0.0 ? std::optional<double>(c.length) : std::nullopt);
    return load_tabulated_curve(c.path);
}

ProfilePotential make_potential(const PotentialConfig& p) {
    if (p.kind == "flat_disc") return ProfilePotential::flat_disc(p.depth, p.radius);
    if (p.kind == "flat_annulus") return ProfilePotential::flat_annulus(p.depth, p.r_in, p.r_out);
    if (p.kind == "flat_ellipse") return ProfilePotential::flat_ellipse(p.depth, p.ax, p.ay);
    return ProfilePotential::radial(p.r, p.v);
}

FramedCurve make_frames(const CurveConfig& c, const CurveSpec& spec) {
    double lo = c.s_min, hi = c.s_max;
    if (!(lo < hi)) {
        const double s0 = spec.effective_support(1e-14);
        const double S = (std::isfinite(s0) ? s0 : 0.0) + 40.0;
        lo = -S;
        hi = S;
    }
    return build_frames(spec, lo, hi, c.step);
}

}  // namespace softguide
