#include "fedsim/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "fedsim/consensus.hpp"
#include "fedsim/objective.hpp"
#include "fedsim/scheduler.hpp"

namespace fedsim {

using Json = nlohmann::ordered_json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

// ---------------------------------------------------------------------------
// Reading JSON with field paths

class Node {
 public:
  Node(const Json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  const Json& json() const { return j_; }

  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(path_, msg); }

  void require_object() const {
    if (!j_.is_object()) fail("expected an object");
  }

  /// Rejects keys outside `allowed` so typos do not pass silently.
  void only_keys(std::initializer_list<std::string_view> allowed) const {
    require_object();
    for (const auto& [key, value] : j_.items()) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        throw ConfigError(child_path(key), "unknown key");
      }
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  Node at(const std::string& key) const { return Node(j_.at(key), child_path(key)); }
  Node at(std::size_t i) const { return Node(j_.at(i), path_ + "[" + std::to_string(i) + "]"); }

  double as_double() const {
    if (!j_.is_number()) fail("expected a number");
    const double v = j_.get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
  }
  std::uint64_t as_u64() const {
    if (!j_.is_number_unsigned()) {
      if (j_.is_number_integer()) fail("expected a non-negative integer");
      fail("expected an integer");
    }
    return j_.get<std::uint64_t>();
  }
  std::size_t as_size() const { return static_cast<std::size_t>(as_u64()); }
  bool as_bool() const {
    if (!j_.is_boolean()) fail("expected true or false");
    return j_.get<bool>();
  }
  std::string as_string() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }
  std::vector<double> as_doubles() const {
    if (!j_.is_array()) fail("expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < j_.size(); ++i) out.push_back(at(i).as_double());
    return out;
  }
  std::size_t size() const {
    if (!j_.is_array()) fail("expected an array");
    return j_.size();
  }

  template <typename T>
  void read(const std::string& key, T& out) const {
    if (!has(key)) return;
    const Node n = at(key);
    if constexpr (std::is_same_v<T, double>) out = n.as_double();
    else if constexpr (std::is_same_v<T, bool>) out = n.as_bool();
    else if constexpr (std::is_same_v<T, std::uint64_t>) out = n.as_u64();
    else if constexpr (std::is_same_v<T, std::size_t>) out = n.as_size();
    else if constexpr (std::is_same_v<T, std::string>) out = n.as_string();
    else if constexpr (std::is_same_v<T, std::vector<double>>) out = n.as_doubles();
  }

 private:
  std::string child_path(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  const Json& j_;
  std::string path_;
};

Json parse_json(std::string_view text) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    // e.byte is the 1-based offset of the offending character.
    const std::size_t offset = e.byte == 0 ? 0 : std::min<std::size_t>(e.byte - 1, text.size());
    std::size_t line = 1;
    std::size_t column = 1;
    for (std::size_t i = 0; i < offset; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    std::string msg = e.what();
    const auto pos = msg.find("syntax error");
    if (pos != std::string::npos) msg = msg.substr(pos);
    throw ConfigSyntaxError(line, column, msg);
  }
}

template <typename Enum, std::size_t N>
Enum enum_from(const Node& n, const std::array<Enum, N>& options) {
  const std::string name = n.as_string();
  std::string accepted;
  for (Enum e : options) {
    if (name == to_string(e)) return e;
    if (!accepted.empty()) accepted += ", ";
    accepted += to_string(e);
  }
  n.fail("unknown value \"" + name + "\" (expected one of: " + accepted + ")");
}

constexpr std::array kMethods{Method::kPeriodicAvg, Method::kDecay, Method::kConsensus};
constexpr std::array kObjectiveKinds{ObjectiveKind::kQuadratic, ObjectiveKind::kSumOfSigmoids,
                                     ObjectiveKind::kPolicyGradientMdp};
constexpr std::array kTimingKinds{TimingKind::kDeterministic, TimingKind::kUniform,
                                  TimingKind::kShiftedExponential};
constexpr std::array kTopologyKinds{TopologyKind::kNone, TopologyKind::kEdges, TopologyKind::kPath,
                                    TopologyKind::kRing, TopologyKind::kComplete,
                                    TopologyKind::kRandom};
constexpr std::array kTheorems{Theorem::kT1, Theorem::kT2, Theorem::kT4, Theorem::kT5};

MdpSpec read_mdp(const Node& n) {
  n.only_keys({"n_states", "n_actions", "transitions", "rewards", "initial", "horizon"});
  MdpSpec m;
  n.read("n_states", m.n_states);
  n.read("n_actions", m.n_actions);
  n.read("transitions", m.transitions);
  n.read("rewards", m.rewards);
  n.read("initial", m.initial);
  n.read("horizon", m.horizon);
  return m;
}

ObjectiveSpec read_objective(const Node& n) {
  n.only_keys({"kind", "dim", "matrix", "diag", "offset", "components", "mdp", "noise", "theta0"});
  ObjectiveSpec o;
  if (n.has("kind")) o.kind = enum_from(n.at("kind"), kObjectiveKinds);
  std::optional<std::size_t> dim;
  if (n.has("dim")) dim = n.at("dim").as_size();
  auto settle_dim = [&](std::size_t d, const Node& where) {
    if (dim && *dim != d) {
      where.fail("implies dimension " + std::to_string(d) + " but dim is " + std::to_string(*dim));
    }
    dim = d;
  };
  // An empty theta0 (as written by the canonical form) means the default start.
  auto read_theta0 = [&] {
    if (!n.has("theta0")) return;
    o.theta0 = n.at("theta0").as_doubles();
    if (!o.theta0.empty()) settle_dim(o.theta0.size(), n.at("theta0"));
  };

  if (n.has("noise")) {
    const Node noise = n.at("noise");
    noise.only_keys({"beta", "sigma_sq"});
    noise.read("beta", o.noise.beta);
    noise.read("sigma_sq", o.noise.sigma_sq);
    if (o.noise.beta < 0.0) noise.at("beta").fail("must be >= 0");
    if (o.noise.sigma_sq < 0.0) noise.at("sigma_sq").fail("must be >= 0");
  }

  switch (o.kind) {
    case ObjectiveKind::kQuadratic: {
      if (n.has("matrix") && n.has("diag")) n.fail("give either matrix or diag, not both");
      if (n.has("matrix")) {
        const Node rows = n.at("matrix");
        const std::size_t d = rows.size();
        settle_dim(d, rows);
        for (std::size_t r = 0; r < d; ++r) {
          const auto row = rows.at(r).as_doubles();
          if (row.size() != d) rows.at(r).fail("matrix must be square");
          o.matrix.insert(o.matrix.end(), row.begin(), row.end());
        }
      } else if (n.has("diag")) {
        const auto diag = n.at("diag").as_doubles();
        settle_dim(diag.size(), n.at("diag"));
        o.matrix.assign(diag.size() * diag.size(), 0.0);
        for (std::size_t i = 0; i < diag.size(); ++i) o.matrix[i * diag.size() + i] = diag[i];
      }
      if (n.has("offset")) {
        o.offset = n.at("offset").as_doubles();
        settle_dim(o.offset.size(), n.at("offset"));
      }
      read_theta0();
      o.dim = dim.value_or(1);
      if (o.matrix.empty()) {
        o.matrix.assign(o.dim * o.dim, 0.0);
        for (std::size_t i = 0; i < o.dim; ++i) o.matrix[i * o.dim + i] = 1.0;
      }
      if (o.offset.empty()) o.offset.assign(o.dim, 0.0);
      break;
    }
    case ObjectiveKind::kSumOfSigmoids: {
      if (!n.has("components")) n.fail("sum_of_sigmoids needs components");
      const Node comps = n.at("components");
      for (std::size_t i = 0; i < comps.size(); ++i) {
        const Node c = comps.at(i);
        c.only_keys({"direction", "center", "weight"});
        SigmoidComponent sc;
        if (!c.has("direction")) c.fail("missing direction");
        sc.direction = c.at("direction").as_doubles();
        settle_dim(sc.direction.size(), c.at("direction"));
        sc.center.assign(sc.direction.size(), 0.0);
        if (c.has("center")) {
          sc.center = c.at("center").as_doubles();
          if (sc.center.size() != sc.direction.size()) c.at("center").fail("length must match direction");
        }
        c.read("weight", sc.weight);
        o.components.push_back(std::move(sc));
      }
      read_theta0();
      o.dim = dim.value_or(1);
      break;
    }
    case ObjectiveKind::kPolicyGradientMdp: {
      if (!n.has("mdp")) n.fail("mdp objective needs an mdp section");
      o.mdp = read_mdp(n.at("mdp"));
      settle_dim(o.mdp.n_states * o.mdp.n_actions, n.at("mdp"));
      read_theta0();
      o.dim = *dim;
      break;
    }
  }
  return o;
}

RunConfig read_run(const Node& n) {
  n.only_keys({"n_agents", "participants", "tau", "eta", "epochs", "epoch_len", "batch_len", "method",
               "decay_lambda", "consensus_eps", "consensus_rounds", "seed", "freeze_timing",
               "objective", "timing", "topology"});
  RunConfig c;
  n.read("n_agents", c.n_agents);
  c.participants = c.n_agents;
  n.read("participants", c.participants);
  n.read("tau", c.tau);
  n.read("eta", c.eta);
  n.read("epochs", c.epochs);
  n.read("epoch_len", c.epoch_len);
  n.read("batch_len", c.batch_len);
  if (n.has("method")) c.method = enum_from(n.at("method"), kMethods);
  n.read("decay_lambda", c.decay_lambda);
  n.read("consensus_eps", c.consensus_eps);
  n.read("consensus_rounds", c.consensus_rounds);
  n.read("seed", c.seed);
  n.read("freeze_timing", c.freeze_timing);
  if (n.has("objective")) c.objective = read_objective(n.at("objective"));
  else c.objective = read_objective(Node(Json::object(), n.path() + ".objective"));
  if (n.has("timing")) {
    const Node t = n.at("timing");
    t.only_keys({"kind", "means", "spread"});
    if (t.has("kind")) c.timing.kind = enum_from(t.at("kind"), kTimingKinds);
    t.read("means", c.timing.means);
    t.read("spread", c.timing.spread);
  }
  if (n.has("topology")) {
    const Node t = n.at("topology");
    t.only_keys({"kind", "edges", "k_lo", "k_hi", "seed"});
    if (t.has("kind")) c.topology.kind = enum_from(t.at("kind"), kTopologyKinds);
    if (t.has("edges")) {
      const Node edges = t.at("edges");
      for (std::size_t i = 0; i < edges.size(); ++i) {
        const Node e = edges.at(i);
        if (e.size() != 2) e.fail("an edge is a pair [i, j]");
        c.topology.edges.emplace_back(e.at(std::size_t{0}).as_size(), e.at(std::size_t{1}).as_size());
      }
      if (!t.has("kind")) c.topology.kind = TopologyKind::kEdges;
    }
    t.read("k_lo", c.topology.k_lo);
    t.read("k_hi", c.topology.k_hi);
    t.read("seed", c.topology.seed);
  }
  validate_config(c);
  return c;
}

Json doubles_json(const std::vector<double>& v) { return Json(v); }

Json run_to_json(const RunConfig& c) {
  Json j;
  j["n_agents"] = c.n_agents;
  j["participants"] = c.participants;
  j["tau"] = c.tau;
  j["eta"] = c.eta;
  j["epochs"] = c.epochs;
  j["epoch_len"] = c.epoch_len;
  j["batch_len"] = c.batch_len;
  j["method"] = to_string(c.method);
  j["decay_lambda"] = c.decay_lambda;
  j["consensus_eps"] = c.consensus_eps;
  j["consensus_rounds"] = c.consensus_rounds;
  j["seed"] = c.seed;
  j["freeze_timing"] = c.freeze_timing;

  const ObjectiveSpec& o = c.objective;
  Json obj;
  obj["kind"] = to_string(o.kind);
  obj["dim"] = o.dim;
  switch (o.kind) {
    case ObjectiveKind::kQuadratic: {
      Json rows = Json::array();
      for (std::size_t r = 0; r < o.dim; ++r) {
        rows.push_back(std::vector<double>(o.matrix.begin() + static_cast<std::ptrdiff_t>(r * o.dim),
                                           o.matrix.begin() + static_cast<std::ptrdiff_t>((r + 1) * o.dim)));
      }
      obj["matrix"] = rows;
      obj["offset"] = doubles_json(o.offset);
      break;
    }
    case ObjectiveKind::kSumOfSigmoids: {
      Json comps = Json::array();
      for (const auto& sc : o.components) {
        comps.push_back(Json{{"direction", sc.direction}, {"center", sc.center}, {"weight", sc.weight}});
      }
      obj["components"] = comps;
      break;
    }
    case ObjectiveKind::kPolicyGradientMdp:
      obj["mdp"] = Json{{"n_states", o.mdp.n_states},   {"n_actions", o.mdp.n_actions},
                        {"transitions", o.mdp.transitions}, {"rewards", o.mdp.rewards},
                        {"initial", o.mdp.initial},     {"horizon", o.mdp.horizon}};
      break;
  }
  obj["noise"] = Json{{"beta", o.noise.beta}, {"sigma_sq", o.noise.sigma_sq}};
  obj["theta0"] = doubles_json(o.theta0);
  j["objective"] = obj;

  j["timing"] = Json{{"kind", to_string(c.timing.kind)},
                     {"means", c.timing.means},
                     {"spread", c.timing.spread}};
  Json edges = Json::array();
  for (const auto& [a, b] : c.topology.edges) edges.push_back(Json::array({a, b}));
  j["topology"] = Json{{"kind", to_string(c.topology.kind)},
                       {"edges", edges},
                       {"k_lo", c.topology.k_lo},
                       {"k_hi", c.topology.k_hi},
                       {"seed", c.topology.seed}};
  return j;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError(path, "empty component in sweep path");
    parts.push_back(part);
  }
  return parts;
}

// Sets a "run.a.b" path inside the run document.
void assign_path(Json& run_doc, const std::string& path, const std::string& value) {
  auto parts = split_path(path);
  if (parts.size() < 2 || parts.front() != "run") {
    throw ConfigError(path, "sweep paths must start with \"run.\"");
  }
  Json* cur = &run_doc;
  for (std::size_t i = 1; i + 1 < parts.size(); ++i) {
    if (!cur->is_object()) throw ConfigError(path, "path does not name a config field");
    cur = &(*cur)[parts[i]];
  }
  (*cur)[parts.back()] = Json::parse(value);
}

std::vector<SweepAxis> read_axes(const Node& n) {
  std::vector<SweepAxis> axes;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const Node a = n.at(i);
    a.only_keys({"path", "values"});
    if (!a.has("path") || !a.has("values")) a.fail("a sweep axis needs path and values");
    SweepAxis axis;
    axis.path = a.at("path").as_string();
    const Node values = a.at("values");
    if (values.size() == 0) values.fail("needs at least one value");
    for (const auto& v : values.json()) axis.values.push_back(v.dump());
    axes.push_back(std::move(axis));
  }
  return axes;
}

// Cartesian index -> value index per axis, first axis slowest.
std::vector<std::size_t> grid_coords(const std::vector<SweepAxis>& axes, std::size_t point) {
  std::vector<std::size_t> coords(axes.size());
  for (std::size_t a = axes.size(); a-- > 0;) {
    coords[a] = point % axes[a].values.size();
    point /= axes[a].values.size();
  }
  return coords;
}

std::size_t grid_size(const std::vector<SweepAxis>& axes) {
  std::size_t n = 1;
  for (const auto& a : axes) n *= a.values.size();
  return n;
}

std::pair<RunConfig, std::string> config_at(const ExperimentSpec& spec, std::size_t point,
                                            std::vector<std::pair<std::string, std::string>>* assignment) {
  Json doc = Json::parse(spec.base_json);
  const auto coords = grid_coords(spec.sweep, point);
  for (std::size_t a = 0; a < spec.sweep.size(); ++a) {
    const std::string& value = spec.sweep[a].values[coords[a]];
    assign_path(doc, spec.sweep[a].path, value);
    if (assignment) assignment->emplace_back(spec.sweep[a].path, value);
  }
  RunConfig cfg = read_run(Node(doc, "run"));
  return {cfg, run_to_json(cfg).dump()};
}

void validate_grid(const ExperimentSpec& spec) {
  for (std::size_t p = 0; p < spec.grid_points(); ++p) config_at(spec, p, nullptr);
}

// TheoryParams fields addressable from a bounds config.
void set_theory_field(TheoryParams& p, const Node& n, const std::string& key) {
  if (key == "L") p.L = n.as_double();
  else if (key == "beta") p.beta = n.as_double();
  else if (key == "sigma_sq") p.sigma_sq = n.as_double();
  else if (key == "m") p.m = n.as_size();
  else if (key == "tau") p.tau = n.as_size();
  else if (key == "eta") p.eta = n.as_double();
  else if (key == "nu") p.nu = n.as_double();
  else if (key == "omega_sq") p.omega_sq = n.as_double();
  else if (key == "delta_F") p.F0_minus_Finf = n.as_double();
  else if (key == "K") p.K = n.as_size();
  else if (key == "mu2") p.mu2 = n.as_double();
  else if (key == "mu_max") p.mu_max = n.as_double();
  else if (key == "eps") p.eps = n.as_double();
  else if (key == "rounds") p.rounds = n.as_size();
  else if (key == "decay_lambda") p.decay_lambda = n.as_double();
  else n.fail("unknown theory parameter");
}

BoundsSpec read_bounds(const Node& n) {
  n.only_keys({"theorems", "params", "sweep"});
  BoundsSpec b;
  b.present = true;
  if (n.has("theorems")) {
    b.theorems.clear();
    const Node list = n.at("theorems");
    for (std::size_t i = 0; i < list.size(); ++i) b.theorems.push_back(enum_from(list.at(i), kTheorems));
  }
  if (n.has("params")) {
    const Node params = n.at("params");
    params.require_object();
    for (const auto& [key, value] : params.json().items()) {
      set_theory_field(b.base, params.at(key), key);
    }
  }
  if (n.has("sweep")) {
    b.axes = read_axes(n.at("sweep"));
    for (std::size_t i = 0; i < b.axes.size(); ++i) {
      TheoryParams probe = b.base;
      for (const auto& v : b.axes[i].values) {
        const Json j = Json::parse(v);
        set_theory_field(probe, Node(j, n.path() + ".sweep[" + std::to_string(i) + "]." + b.axes[i].path),
                         b.axes[i].path);
      }
    }
  }
  return b;
}

}  // namespace

std::size_t ExperimentSpec::grid_points() const { return grid_size(sweep); }

std::string run_config_to_json(const RunConfig& config) { return run_to_json(config).dump(); }

RunConfig run_config_from_json(std::string_view text, const std::string& prefix) {
  const Json j = parse_json(text);
  return read_run(Node(j, prefix));
}

ExperimentSpec parse_config(std::string_view text) {
  const Json doc = parse_json(text);
  const Node root(doc, "");
  root.only_keys({"version", "run", "sweep", "seeds", "output", "costs", "bounds"});
  if (root.has("version") && root.at("version").as_u64() != 1) {
    root.at("version").fail("unsupported config version (expected 1)");
  }
  ExperimentSpec spec;
  spec.base = root.has("run") ? read_run(root.at("run")) : read_run(Node(Json::object(), "run"));
  spec.base_json = run_to_json(spec.base).dump();
  if (root.has("sweep")) spec.sweep = read_axes(root.at("sweep"));
  if (root.has("seeds")) {
    const Node seeds = root.at("seeds");
    spec.seeds.clear();
    for (std::size_t i = 0; i < seeds.size(); ++i) spec.seeds.push_back(seeds.at(i).as_u64());
    if (spec.seeds.empty()) seeds.fail("needs at least one seed");
  } else {
    spec.seeds = {spec.base.seed};
  }
  if (root.has("output")) {
    const Node out = root.at("output");
    out.only_keys({"dir", "formats"});
    out.read("dir", spec.output.dir);
    if (out.has("formats")) {
      spec.output.csv = false;
      spec.output.jsonl = false;
      const Node formats = out.at("formats");
      for (std::size_t i = 0; i < formats.size(); ++i) {
        const std::string f = formats.at(i).as_string();
        if (f == "csv") spec.output.csv = true;
        else if (f == "jsonl") spec.output.jsonl = true;
        else formats.at(i).fail("unknown format (expected csv or jsonl)");
      }
    }
  }
  if (root.has("costs")) {
    const Node c = root.at("costs");
    c.only_keys({"C1", "C2", "W1", "W2", "alpha"});
    c.read("C1", spec.costs.C1);
    c.read("C2", spec.costs.C2);
    c.read("W1", spec.costs.W1);
    c.read("W2", spec.costs.W2);
    c.read("alpha", spec.costs.alpha);
    try {
      validate_costs(spec.costs);
    } catch (const Error& e) {
      throw ConfigError("costs", e.what());
    }
  }
  if (root.has("bounds")) spec.bounds = read_bounds(root.at("bounds"));
  validate_grid(spec);
  return spec;
}

ExperimentSpec load_config(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("", "cannot read config file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void override_method(ExperimentSpec& spec, Method method) {
  spec.base.method = method;
  validate_config(spec.base);
  spec.base_json = run_to_json(spec.base).dump();
  validate_grid(spec);
}

void override_seeds(ExperimentSpec& spec, std::vector<std::uint64_t> seeds) {
  if (seeds.empty()) throw ConfigError("seeds", "needs at least one seed");
  spec.seeds = std::move(seeds);
}

std::vector<PlannedRun> plan_runs(const ExperimentSpec& spec) {
  std::vector<PlannedRun> runs;
  runs.reserve(spec.planned_runs());
  for (std::size_t p = 0; p < spec.grid_points(); ++p) {
    std::vector<std::pair<std::string, std::string>> assignment;
    auto [cfg, json] = config_at(spec, p, &assignment);
    for (std::uint64_t seed : spec.seeds) {
      PlannedRun r;
      r.index = runs.size();
      r.grid_point = p;
      r.seed = seed;
      r.assignment = assignment;
      r.config = cfg;
      r.config.seed = seed;
      r.config_json = run_to_json(r.config).dump();
      runs.push_back(std::move(r));
    }
  }
  return runs;
}

std::optional<TheoryParams> theory_params_for(const RunConfig& config, const Objective& obj,
                                              const RunRecord& record) {
  if (!obj.smoothness() || !obj.lower_bound()) return std::nullopt;
  TheoryParams p;
  p.L = *obj.smoothness();
  p.beta = obj.noise().beta;
  p.sigma_sq = obj.noise().sigma_sq;
  p.m = config.participants;
  p.tau = config.tau;
  p.eta = config.eta;
  p.nu = std::clamp(record.nu_hat, 1.0, static_cast<double>(config.tau));
  p.omega_sq = record.omega_sq_hat;
  p.F0_minus_Finf = std::max(0.0, obj.value(initial_theta(config.objective)) - *obj.lower_bound());
  p.K = std::max(record.iterations, config.tau);
  p.decay_lambda = config.decay_lambda;
  p.eps = config.consensus_eps;
  p.rounds = config.consensus_rounds;
  if (config.method == Method::kConsensus) {
    const auto spectrum = build_laplacian(make_topology(config.topology, config.participants));
    p.mu2 = spectrum.mu2;
    p.mu_max = spectrum.mu_max();
  }
  return p;
}

RunSummary execute_run(const PlannedRun& run, const CostParams& costs, RunRecord* record_out) {
  RunSummary s;
  s.index = run.index;
  s.grid_point = run.grid_point;
  s.seed = run.seed;
  s.assignment = run.assignment;
  s.config_json = run.config_json;
  try {
    const RunConfig& cfg = run.config;
    const Objective obj = make_objective(cfg.objective);
    std::optional<Topology> topo;
    if (cfg.method == Method::kConsensus) topo = make_topology(cfg.topology, cfg.participants);
    RunRecord record = fedsim::run(cfg, obj, topo ? &*topo : nullptr);

    s.metric = expected_gradient_metric(record);
    s.final_grad_norm_sq = record.rows.back().grad_norm_sq;
    s.iterations = record.iterations;
    s.periods = record.periods;
    s.skipped_periods = record.skipped_periods;
    s.nu_hat = record.nu_hat;
    s.omega_sq_hat = record.omega_sq_hat;
    s.cost_counted = cost_counted(record, costs);
    const TimingModel timing = TimingModel::from_spec(cfg.timing, cfg.n_agents);
    std::vector<std::size_t> taus(cfg.participants, cfg.tau);
    if (timing.kind() == TimingKind::kDeterministic) {
      const auto budgets = compute_tau(cfg.tau, timing.means());
      for (std::size_t i = 0; i < cfg.participants; ++i) taus[i] = i < budgets.size() ? budgets[i] : 0;
    }
    s.cost_analytic = cost_analytic(cfg, taus, costs, topo ? topo->total_degree() : 0);
    const ParamVector theta0 = initial_theta(cfg.objective);
    s.psi2 = psi2_estimate(obj, theta0);
    if (s.cost_counted.total > 0.0) {
      s.utility_empirical = utility(s.cost_counted.total, s.metric, s.psi2, costs.alpha);
    }

    if (const auto params = theory_params_for(cfg, obj, record)) {
      std::vector<Theorem> theorems{Theorem::kT1, Theorem::kT2};
      Theorem own = Theorem::kT2;
      if (cfg.method == Method::kDecay && cfg.decay_lambda < 1.0) {
        theorems.push_back(Theorem::kT4);
        own = Theorem::kT4;
      }
      if (cfg.method == Method::kConsensus) {
        theorems.push_back(Theorem::kT5);
        own = Theorem::kT5;
      }
      for (Theorem t : theorems) {
        BoundEntry e;
        e.theorem = t;
        try {
          e.report = evaluate_bound(t, *params);
          e.ok = true;
        } catch (const InfeasibleStepError& err) {
          e.error = err.what();
          e.report.lhs = err.lhs();
        } catch (const Error& err) {
          e.error = err.what();
        }
        if (t == own && e.ok && s.cost_counted.total > 0.0) {
          s.analytic_theorem = t;
          s.utility_analytic = utility(s.cost_counted.total, e.report.total, s.psi2, costs.alpha);
        }
        s.bounds.push_back(std::move(e));
      }
    }
    s.ok = true;
    if (record_out) *record_out = std::move(record);
  } catch (const DivergenceError& e) {
    s.ok = false;
    s.error = e.what();
    s.last_finite_k = e.last_finite_k();
  } catch (const Error& e) {
    s.ok = false;
    s.error = e.what();
  }
  return s;
}

// ---------------------------------------------------------------------------
// Summary records

namespace {

Json cost_json(const CostReport& c) {
  return Json{{"comm", c.comm},
              {"comp", c.comp},
              {"inter_comm", c.inter_comm},
              {"inter_comp", c.inter_comp},
              {"total", c.total}};
}

CostReport cost_from(const Json& j) {
  CostReport c;
  c.comm = j.at("comm").get<double>();
  c.comp = j.at("comp").get<double>();
  c.inter_comm = j.at("inter_comm").get<double>();
  c.inter_comp = j.at("inter_comp").get<double>();
  c.total = j.at("total").get<double>();
  return c;
}

Theorem theorem_from(const std::string& name) {
  for (Theorem t : kTheorems)
    if (name == to_string(t)) return t;
  throw Error(ErrorCode::kInvalidArgument, "unknown theorem " + name);
}

}  // namespace

std::string summary_to_json(const RunSummary& s) {
  Json j;
  j["index"] = s.index;
  j["grid_point"] = s.grid_point;
  j["seed"] = s.seed;
  Json assignment = Json::object();
  for (const auto& [path, value] : s.assignment) assignment[path] = Json::parse(value);
  j["assignment"] = assignment;
  j["status"] = s.ok ? "ok" : "error";
  if (!s.ok) {
    j["error"] = s.error;
    if (s.last_finite_k) j["last_finite_k"] = *s.last_finite_k;
  } else {
    j["metric"] = s.metric;
    j["final_grad_norm_sq"] = s.final_grad_norm_sq;
    j["iterations"] = s.iterations;
    j["periods"] = s.periods;
    j["skipped_periods"] = s.skipped_periods;
    j["nu_hat"] = s.nu_hat;
    j["omega_sq_hat"] = s.omega_sq_hat;
    j["cost_counted"] = cost_json(s.cost_counted);
    j["cost_analytic"] = cost_json(s.cost_analytic);
    j["psi2"] = s.psi2;
    j["utility_empirical"] = s.utility_empirical;
    if (s.analytic_theorem) {
      j["analytic_theorem"] = to_string(*s.analytic_theorem);
      j["utility_analytic"] = *s.utility_analytic;
    }
    Json bounds = Json::object();
    for (const auto& b : s.bounds) {
      Json e;
      if (b.ok) {
        e = Json{{"term_init", b.report.term_init},   {"term_noise", b.report.term_noise},
                 {"term_local", b.report.term_local}, {"total", b.report.total},
                 {"feasible", b.report.feasible},     {"lhs", b.report.lhs},
                 {"K_used", b.report.K_used}};
      } else {
        e = Json{{"error", b.error}, {"lhs", b.report.lhs}};
      }
      bounds[to_string(b.theorem)] = e;
    }
    j["bounds"] = bounds;
  }
  j["config"] = Json::parse(s.config_json);
  return j.dump();
}

RunSummary summary_from_json(std::string_view line) {
  const Json j = Json::parse(line.begin(), line.end());
  RunSummary s;
  s.index = j.at("index").get<std::size_t>();
  s.grid_point = j.at("grid_point").get<std::size_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& [path, value] : j.at("assignment").items()) s.assignment.emplace_back(path, value.dump());
  s.ok = j.at("status").get<std::string>() == "ok";
  if (!s.ok) {
    s.error = j.at("error").get<std::string>();
    if (j.contains("last_finite_k")) s.last_finite_k = j.at("last_finite_k").get<std::size_t>();
  } else {
    s.metric = j.at("metric").get<double>();
    s.final_grad_norm_sq = j.at("final_grad_norm_sq").get<double>();
    s.iterations = j.at("iterations").get<std::size_t>();
    s.periods = j.at("periods").get<std::size_t>();
    s.skipped_periods = j.at("skipped_periods").get<std::size_t>();
    s.nu_hat = j.at("nu_hat").get<double>();
    s.omega_sq_hat = j.at("omega_sq_hat").get<double>();
    s.cost_counted = cost_from(j.at("cost_counted"));
    s.cost_analytic = cost_from(j.at("cost_analytic"));
    s.psi2 = j.at("psi2").get<double>();
    s.utility_empirical = j.at("utility_empirical").get<double>();
    if (j.contains("analytic_theorem")) {
      s.analytic_theorem = theorem_from(j.at("analytic_theorem").get<std::string>());
      s.utility_analytic = j.at("utility_analytic").get<double>();
    }
    for (const auto& [name, e] : j.at("bounds").items()) {
      BoundEntry b;
      b.theorem = theorem_from(name);
      b.report.lhs = e.at("lhs").get<double>();
      if (e.contains("error")) {
        b.error = e.at("error").get<std::string>();
      } else {
        b.ok = true;
        b.report.term_init = e.at("term_init").get<double>();
        b.report.term_noise = e.at("term_noise").get<double>();
        b.report.term_local = e.at("term_local").get<double>();
        b.report.total = e.at("total").get<double>();
        b.report.feasible = e.at("feasible").get<bool>();
        b.report.K_used = e.at("K_used").get<std::size_t>();
      }
      s.bounds.push_back(std::move(b));
    }
  }
  s.config_json = j.at("config").dump();
  return s;
}

std::string record_to_csv(const RunRecord& record) {
  std::string out(kRunCsvHeader);
  out += '\n';
  for (const auto& r : record.rows) {
    out += std::to_string(r.k) + ',' + format_double(r.grad_norm_sq) + ',' +
           std::to_string(r.participants) + ',' + std::to_string(r.cum_comm) + ',' +
           std::to_string(r.cum_comp) + ',' + std::to_string(r.cum_inter_comm) + ',' +
           std::to_string(r.cum_inter_comp) + '\n';
  }
  return out;
}

namespace {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe r;
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  }
  return r;
}

std::string csv_cell(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

std::string run_file_name(std::size_t index) {
  std::ostringstream ss;
  ss << "run_" << std::setw(4) << std::setfill('0') << index << ".csv";
  return ss.str();
}

}  // namespace

std::string aggregate_csv(const ExperimentSpec& spec, const std::vector<RunSummary>& summaries) {
  std::string out(kAggregateCsvPrefix);
  for (const auto& axis : spec.sweep) out += ',' + csv_cell(axis.path);
  out += ",runs,failed,metric_mean,metric_stderr,final_grad_norm_sq_mean,final_grad_norm_sq_stderr,"
         "cost_total_mean,utility_empirical_mean\n";
  std::map<std::size_t, std::vector<const RunSummary*>> by_point;
  for (const auto& s : summaries) by_point[s.grid_point].push_back(&s);
  for (const auto& [point, runs] : by_point) {
    std::vector<double> metric, final_norm, cost, util;
    std::size_t failed = 0;
    for (const RunSummary* s : runs) {
      if (!s->ok) {
        ++failed;
        continue;
      }
      metric.push_back(s->metric);
      final_norm.push_back(s->final_grad_norm_sq);
      cost.push_back(s->cost_counted.total);
      util.push_back(s->utility_empirical);
    }
    out += std::to_string(point);
    for (const auto& [path, value] : runs.front()->assignment) out += ',' + csv_cell(value);
    const auto m = mean_se(metric);
    const auto f = mean_se(final_norm);
    out += ',' + std::to_string(runs.size()) + ',' + std::to_string(failed) + ',' +
           format_double(m.mean) + ',' + format_double(m.se) + ',' + format_double(f.mean) + ',' +
           format_double(f.se) + ',' + format_double(mean_se(cost).mean) + ',' +
           format_double(mean_se(util).mean) + '\n';
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const ExperimentOptions& options) {
  const auto runs = plan_runs(spec);
  const std::filesystem::path dir(spec.output.dir);
  std::filesystem::create_directories(dir / "runs");

  ExperimentResult result;
  result.summaries.resize(runs.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::string> io_errors(runs.size());

  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < runs.size(); i = next.fetch_add(1)) {
      RunRecord record;
      result.summaries[i] = execute_run(runs[i], spec.costs, &record);
      if (spec.output.csv && result.summaries[i].ok) {
        try {
          write_file(dir / "runs" / run_file_name(i), record_to_csv(record));
        } catch (const Error& e) {
          io_errors[i] = e.what();
        }
      }
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, std::max<std::size_t>(runs.size(), 1));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (!io_errors[i].empty() && result.summaries[i].ok) {
      result.summaries[i].ok = false;
      result.summaries[i].error = io_errors[i];
    }
    if (!result.summaries[i].ok) ++result.failures;
  }
  if (spec.output.jsonl) {
    std::string lines;
    for (const auto& s : result.summaries) lines += summary_to_json(s) + '\n';
    write_file(dir / "summary.jsonl", lines);
  }
  if (spec.output.csv) write_file(dir / "aggregate.csv", aggregate_csv(spec, result.summaries));
  return result;
}

std::string bounds_grid_csv(const BoundsSpec& bounds) {
  std::string out =
      "theorem,L,beta,sigma_sq,m,tau,eta,nu,omega_sq,delta_F,K,mu2,eps,rounds,decay_lambda,"
      "term_init,term_noise,term_local,total,feasible,note\n";
  const std::size_t points = grid_size(bounds.axes);
  for (Theorem t : bounds.theorems) {
    for (std::size_t p = 0; p < points; ++p) {
      TheoryParams params = bounds.base;
      const auto coords = grid_coords(bounds.axes, p);
      for (std::size_t a = 0; a < bounds.axes.size(); ++a) {
        const Json j = Json::parse(bounds.axes[a].values[coords[a]]);
        set_theory_field(params, Node(j, bounds.axes[a].path), bounds.axes[a].path);
      }
      out += std::string(to_string(t)) + ',' + format_double(params.L) + ',' +
             format_double(params.beta) + ',' + format_double(params.sigma_sq) + ',' +
             std::to_string(params.m) + ',' + std::to_string(params.tau) + ',' +
             format_double(params.eta) + ',' + format_double(params.nu) + ',' +
             format_double(params.omega_sq) + ',' + format_double(params.F0_minus_Finf) + ',' +
             std::to_string(params.K) + ',' + format_double(params.mu2) + ',' +
             format_double(params.eps) + ',' + std::to_string(params.rounds) + ',' +
             format_double(params.decay_lambda) + ',';
      try {
        const BoundReport r = evaluate_bound(t, params, false);
        std::string note;
        for (const auto& w : r.warnings) note += (note.empty() ? "" : "; ") + w;
        out += format_double(r.term_init) + ',' + format_double(r.term_noise) + ',' +
               format_double(r.term_local) + ',' + format_double(r.total) + ',' +
               (r.feasible ? "1" : "0") + ',' + csv_cell(note) + '\n';
      } catch (const Error& e) {
        out += ",,,,0," + csv_cell(e.what()) + '\n';
      }
    }
  }
  return out;
}

std::vector<ValidationCheck> run_validators(const ExperimentSpec& spec, std::size_t draws) {
  std::vector<ValidationCheck> checks;
  const RunConfig& cfg = spec.base;
  const Objective obj = make_objective(cfg.objective);
  const ParamVector theta = initial_theta(cfg.objective);
  RngStream rng(cfg.seed, streams::kValidation);

  if (obj.kind() != ObjectiveKind::kPolicyGradientMdp) {
    const auto v = validate_averaged_variance(obj, theta, cfg.participants, draws, rng);
    checks.push_back({"averaged_variance", v.mean, v.bound, v.mean <= v.bound + 4.0 * v.std_error});
    const auto s = validate_averaged_second_moment(obj, theta, cfg.participants, draws, rng);
    checks.push_back({"averaged_second_moment", s.mean, s.bound, s.mean <= s.bound + 4.0 * s.std_error});
  }

  if (cfg.method == Method::kConsensus) {
    const Topology topo = make_topology(cfg.topology, cfg.participants);
    const auto spectrum = build_laplacian(topo);
    double rho = 0.0;
    for (std::size_t i = 1; i < spectrum.eigenvalues.size(); ++i) {
      rho = std::max(rho, std::abs(1.0 - cfg.consensus_eps * spectrum.eigenvalues[i]));
    }
    double worst_mean = 0.0;
    double worst_ratio = 0.0;
    RngStream grng = rng.substream(1);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<ParamVector> grads(cfg.participants, ParamVector(obj.dim()));
      for (auto& g : grads)
        for (std::size_t c = 0; c < g.size(); ++c) g[c] = grng.normal();
      auto mean_of = [&](const std::vector<ParamVector>& gs) {
        ParamVector m(obj.dim());
        for (const auto& g : gs) m.axpy_inplace(1.0 / static_cast<double>(gs.size()), g);
        return m;
      };
      auto deviation = [&](const std::vector<ParamVector>& gs, const ParamVector& m) {
        double d = 0.0;
        for (const auto& g : gs)
          for (std::size_t c = 0; c < g.size(); ++c) d += (g[c] - m[c]) * (g[c] - m[c]);
        return std::sqrt(d);
      };
      const ParamVector before = mean_of(grads);
      const auto after_grads = gossip_step(grads, topo, cfg.consensus_eps);
      const ParamVector after = mean_of(after_grads);
      double diff = 0.0;
      for (std::size_t c = 0; c < before.size(); ++c) diff = std::max(diff, std::abs(after[c] - before[c]));
      worst_mean = std::max(worst_mean, diff / std::max(1.0, std::sqrt(vec_norm_sq(before))));
      const double d0 = deviation(grads, before);
      if (d0 > 0.0) worst_ratio = std::max(worst_ratio, deviation(after_grads, after) / d0);
    }
    checks.push_back({"gossip_mean_preservation", worst_mean, 1e-12, worst_mean <= 1e-12});
    checks.push_back({"gossip_contraction", worst_ratio, rho, worst_ratio <= rho + 1e-9});
    checks.push_back({"gossip_mu2", spectrum.mu2, 1.0 / cfg.consensus_eps,
                      spectrum.mu2 > 0.0 && cfg.consensus_eps * spectrum.mu2 < 1.0});
  }
  return checks;
}

}  // namespace fedsim
