#include "evnet/scenario.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <variant>

#include <fmt/format.h>
#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include "evnet/error.hpp"

namespace evnet {

std::set<int> Scenario::origins() const {
  std::set<int> out;
  for (const VehicleClass& c : classes) out.insert(c.origin);
  return out;
}

double Scenario::total_demand() const {
  double t = 0.0;
  for (const VehicleClass& c : classes) t += c.demand_rate;
  return t;
}

namespace {

// ---- parameter table -------------------------------------------------------------------

using ParamRef = std::variant<double Parameters::*, int Parameters::*, std::uint64_t Parameters::*>;

const std::vector<std::pair<std::string, ParamRef>>& parameter_table() {
  static const std::vector<std::pair<std::string, ParamRef>> table = {
      {"gamma", &Parameters::gamma},
      {"assignment_tolerance", &Parameters::assignment_tolerance},
      {"assignment_max_iterations", &Parameters::assignment_max_iterations},
      {"dispatch_tolerance", &Parameters::dispatch_tolerance},
      {"social_optimum_tolerance", &Parameters::social_optimum_tolerance},
      {"max_paths", &Parameters::max_paths},
      {"greedy_initial_price", &Parameters::greedy_initial_price},
      {"greedy_max_iterations", &Parameters::greedy_max_iterations},
      {"dd_gamma0", &Parameters::dd_gamma0},
      {"dd_mu0", &Parameters::dd_mu0},
      {"alpha", &Parameters::alpha},
      {"step_scale_mwh", &Parameters::step_scale_mwh},
      {"dd_max_iterations", &Parameters::dd_max_iterations},
      {"dd_tolerance", &Parameters::dd_tolerance},
      {"dd_divergence_norm", &Parameters::dd_divergence_norm},
      {"reserve_price", &Parameters::reserve_price},
      {"cone_samples", &Parameters::cone_samples},
      {"uncertainty_samples", &Parameters::uncertainty_samples},
      {"adequacy_samples", &Parameters::adequacy_samples},
      {"dual_bound_samples", &Parameters::dual_bound_samples},
      {"dual_bound_safety", &Parameters::dual_bound_safety},
      {"feasibility_samples", &Parameters::feasibility_samples},
      {"seed", &Parameters::seed},
  };
  return table;
}

const ParamRef* find_param(const std::string& key) {
  for (const auto& [name, ref] : parameter_table()) {
    if (name == key) return &ref;
  }
  return nullptr;
}

std::string where(const YAML::Node& n) {
  const YAML::Mark m = n.Mark();
  if (m.is_null()) return "";
  return fmt::format(" (line {}, column {})", m.line + 1, m.column + 1);
}

[[noreturn]] void fail(const YAML::Node& n, const std::string& msg) {
  throw ValidationError(msg + where(n));
}

template <typename T>
T read(const YAML::Node& n, const std::string& what) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    fail(n, "invalid value for '" + what + "'");
  }
}

const YAML::Node require(const YAML::Node& parent, const char* key, const std::string& ctx) {
  const YAML::Node n = parent[key];
  if (!n) fail(parent, ctx + ": missing '" + key + "'");
  return n;
}

template <typename T>
T get(const YAML::Node& parent, const char* key, T fallback) {
  const YAML::Node n = parent[key];
  if (!n) return fallback;
  return read<T>(n, key);
}

void set_param(Parameters& p, const std::string& key, const std::string& value,
               const YAML::Node* node) {
  const ParamRef* ref = find_param(key);
  auto bad = [&](const std::string& msg) {
    if (node != nullptr) fail(*node, msg);
    throw ValidationError(msg);
  };
  if (ref == nullptr) bad("unknown parameter '" + key + "'");
  try {
    std::size_t used = 0;
    std::visit(
        [&](auto member) {
          using T = std::remove_reference_t<decltype(p.*member)>;
          if constexpr (std::is_same_v<T, double>) {
            p.*member = std::stod(value, &used);
          } else if constexpr (std::is_same_v<T, int>) {
            p.*member = std::stoi(value, &used);
          } else {
            if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
            p.*member = static_cast<T>(std::stoull(value, &used));
          }
        },
        *ref);
    if (used != value.size()) throw std::invalid_argument("trailing");
  } catch (const std::logic_error&) {
    bad("invalid value '" + value + "' for parameter '" + key + "'");
  }
}

void validate_parameters(const Parameters& p) {
  auto need = [](bool ok, const char* msg) {
    if (!ok) throw ValidationError(std::string("parameter ") + msg);
  };
  need(p.gamma >= 0.0, "gamma must be >= 0");
  need(p.assignment_tolerance > 0.0, "assignment_tolerance must be > 0");
  need(p.assignment_max_iterations > 0, "assignment_max_iterations must be > 0");
  need(p.dispatch_tolerance > 0.0, "dispatch_tolerance must be > 0");
  need(p.social_optimum_tolerance > 0.0, "social_optimum_tolerance must be > 0");
  need(p.max_paths > 0, "max_paths must be > 0");
  need(p.greedy_max_iterations > 0, "greedy_max_iterations must be > 0");
  need(p.dd_mu0 >= 0.0, "dd_mu0 must be >= 0");
  need(p.alpha > 0.0, "alpha must be > 0");
  need(p.step_scale_mwh > 0.0, "step_scale_mwh must be > 0");
  need(p.dd_max_iterations > 0, "dd_max_iterations must be > 0");
  need(p.dd_tolerance >= 0.0, "dd_tolerance must be >= 0");
  need(p.dd_divergence_norm > 0.0, "dd_divergence_norm must be > 0");
  need(p.reserve_price >= 0.0, "reserve_price must be >= 0");
  need(p.cone_samples > 0 && p.uncertainty_samples > 0 && p.adequacy_samples > 0,
       "sample counts must be > 0");
  need(p.dual_bound_samples >= 0 && p.feasibility_samples >= 0, "sweep sizes must be >= 0");
  need(p.dual_bound_safety >= 1.0, "dual_bound_safety must be >= 1");
}

// ---- units -------------------------------------------------------------------------------

struct Units {
  double minutes_per_time = 1.0;
  double miles_per_distance = 1.0;
  double kwh_per_energy = 1.0;
  double mwh_per_grid_energy = 1.0;
  double dollars_per_mwh_per_price = 1.0;
};

Units read_units(const YAML::Node& root) {
  Units u;
  const YAML::Node n = root["units"];
  if (!n) return u;
  auto pick = [&](const char* key, const std::map<std::string, double>& table, double& out) {
    const YAML::Node v = n[key];
    if (!v) return;
    const std::string s = read<std::string>(v, key);
    auto it = table.find(s);
    if (it == table.end()) fail(v, std::string("unsupported unit '") + s + "' for " + key);
    out = it->second;
  };
  pick("time", {{"min", 1.0}, {"h", 60.0}, {"s", 1.0 / 60.0}}, u.minutes_per_time);
  pick("distance", {{"mi", 1.0}, {"km", 1.0 / 1.609344}}, u.miles_per_distance);
  pick("energy", {{"kWh", 1.0}, {"Wh", 1e-3}}, u.kwh_per_energy);
  pick("grid_energy", {{"MWh", 1.0}, {"kWh", 1e-3}}, u.mwh_per_grid_energy);
  pick("price", {{"$/MWh", 1.0}}, u.dollars_per_mwh_per_price);
  for (auto it = n.begin(); it != n.end(); ++it) {
    const std::string k = it->first.as<std::string>();
    if (k != "time" && k != "distance" && k != "energy" && k != "grid_energy" && k != "price" &&
        k != "money") {
      fail(it->first, "unknown unit key '" + k + "'");
    }
    if (k == "money" && it->second.as<std::string>() != "$") fail(it->second, "money must be '$'");
  }
  return u;
}

int lookup(const std::map<std::string, int>& index, const YAML::Node& n, const std::string& what) {
  const std::string name = read<std::string>(n, what);
  auto it = index.find(name);
  if (it == index.end()) fail(n, what + " references unknown name '" + name + "'");
  return it->second;
}

std::vector<double> read_bus_vector(const YAML::Node& n, const std::map<std::string, int>& buses,
                                    int count, double scale, const std::string& what) {
  std::vector<double> out(static_cast<std::size_t>(count), 0.0);
  if (n.IsSequence()) {
    if (static_cast<int>(n.size()) != count) fail(n, what + ": need one value per bus");
    for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = scale * read<double>(n[i], what);
  } else if (n.IsMap()) {
    for (auto it = n.begin(); it != n.end(); ++it) {
      const int b = lookup(buses, it->first, what);
      out[static_cast<std::size_t>(b)] = scale * read<double>(it->second, what);
    }
  } else {
    fail(n, what + ": expected a list or a bus->value map");
  }
  return out;
}

Scenario parse_root(const YAML::Node& root) {
  if (!root.IsMap()) fail(root, "scenario must be a mapping");
  Scenario s;
  s.format_version = read<int>(require(root, "format_version", "scenario"), "format_version");
  if (s.format_version != kScenarioFormatVersion) {
    fail(root["format_version"], "unsupported format_version " + std::to_string(s.format_version));
  }
  s.name = get<std::string>(root, "name", "");
  const Units u = read_units(root);

  // transport
  const YAML::Node tr = require(root, "transport", "scenario");
  s.kwh_per_mile = get<double>(tr, "kwh_per_mile", 1.0 / 25.0) * u.kwh_per_energy;
  if (!(s.kwh_per_mile > 0.0)) fail(tr, "transport: kwh_per_mile must be > 0");
  std::map<std::string, int> nodes;
  for (const YAML::Node& n : require(tr, "nodes", "transport")) {
    const std::string name = read<std::string>(n, "node");
    if (!nodes.emplace(name, s.road.node_count()).second) fail(n, "duplicate node '" + name + "'");
    s.road.node_names.push_back(name);
  }
  for (const YAML::Node& a : require(tr, "arcs", "transport")) {
    RoadArc arc;
    arc.tail = lookup(nodes, require(a, "from", "arc"), "arc.from");
    arc.head = lookup(nodes, require(a, "to", "arc"), "arc.to");
    arc.free_flow_time = u.minutes_per_time * read<double>(require(a, "free_flow_time", "arc"), "free_flow_time");
    arc.latency_slope = u.minutes_per_time * get<double>(a, "latency_slope", 0.0);
    arc.toll = get<double>(a, "toll", 0.0);
    const bool has_energy = static_cast<bool>(a["energy"]);
    const bool has_distance = static_cast<bool>(a["distance"]);
    if (has_energy == has_distance) fail(a, "arc: give exactly one of 'energy' or 'distance'");
    if (has_energy) {
      arc.energy = u.kwh_per_energy * read<double>(a["energy"], "energy");
    } else {
      arc.energy = s.kwh_per_mile * u.miles_per_distance * read<double>(a["distance"], "distance");
    }
    if (arc.tail == arc.head) fail(a, "arc: tail equals head");
    if (arc.free_flow_time < 0.0 || arc.latency_slope < 0.0 || arc.energy < 0.0 || arc.toll < 0.0) {
      fail(a, "arc: time, slope, energy and toll must be >= 0");
    }
    s.road.arcs.push_back(arc);
  }

  // power (read before stations so station buses resolve)
  const YAML::Node pw = require(root, "power", "scenario");
  std::map<std::string, int> buses;
  for (const YAML::Node& b : require(pw, "buses", "power")) {
    const std::string name = read<std::string>(require(b, "name", "bus"), "bus.name");
    if (!buses.emplace(name, s.power.bus_count()).second) fail(b, "duplicate bus '" + name + "'");
    s.power.bus_names.push_back(name);
    Generator g;
    // Cost coefficients are per file energy unit: a*g^2 + b*g dollars.
    const double m = u.mwh_per_grid_energy;
    g.g_min = u.mwh_per_grid_energy * get<double>(b, "g_min", 0.0);
    g.g_max = u.mwh_per_grid_energy * get<double>(b, "g_max", 0.0);
    // Cost is irrelevant for a bus with fixed output; a = 1, b = 0 unless given.
    const bool fixed = g.g_max == g.g_min;
    g.a = (fixed ? get<double>(b, "a", 1.0) : read<double>(require(b, "a", "bus"), "a")) / (m * m);
    g.b = (fixed ? get<double>(b, "b", 0.0) : read<double>(require(b, "b", "bus"), "b")) / m;
    if (!(g.a > 0.0)) fail(b, "bus: quadratic cost 'a' must be > 0");
    if (g.g_min > g.g_max) fail(b, "bus: g_min exceeds g_max");
    s.power.generators.push_back(g);
    const double load = u.mwh_per_grid_energy * get<double>(b, "baseload", 0.0);
    if (load < 0.0) fail(b, "bus: baseload must be >= 0");
    s.power.baseload.push_back(load);
  }
  for (const YAML::Node& l : require(pw, "lines", "power")) {
    Line line;
    line.from = lookup(buses, require(l, "from", "line"), "line.from");
    line.to = lookup(buses, require(l, "to", "line"), "line.to");
    line.susceptance = read<double>(require(l, "susceptance", "line"), "susceptance");
    if (l["limit"]) {
      line.limit_forward = line.limit_backward = u.mwh_per_grid_energy * read<double>(l["limit"], "limit");
    } else {
      line.limit_forward = u.mwh_per_grid_energy * read<double>(require(l, "limit_forward", "line"), "limit_forward");
      line.limit_backward = u.mwh_per_grid_energy * read<double>(require(l, "limit_backward", "line"), "limit_backward");
    }
    s.power.lines.push_back(line);
  }
  if (pw["slack"]) {
    s.power.slack = lookup(buses, pw["slack"], "power.slack");
  } else {
    s.power.slack = 0;
    for (int v = 0; v < s.power.bus_count(); ++v) {
      if (s.power.generators[static_cast<std::size_t>(v)].g_max > 0.0) {
        s.power.slack = v;
        break;
      }
    }
  }
  validate_network(s.power);

  for (const YAML::Node& st : tr["stations"]) {
    ChargingStation cs;
    cs.node = lookup(nodes, require(st, "node", "station"), "station.node");
    cs.bus = lookup(buses, require(st, "bus", "station"), "station.bus");
    cs.is_trip_origin_facility = get<bool>(st, "origin_facility", false);
    cs.rate = u.kwh_per_energy / u.minutes_per_time * get<double>(st, "rate", 1.0);
    cs.entrance_free_flow_wait = u.minutes_per_time * get<double>(st, "entrance_free_flow_wait", 0.0);
    cs.entrance_wait_slope = u.minutes_per_time * get<double>(st, "entrance_wait_slope", 0.0);
    cs.plug_in_fee = get<double>(st, "plug_in_fee", 0.0);
    for (const YAML::Node& o : require(st, "options", "station")) {
      cs.options.push_back(u.kwh_per_energy * read<double>(o, "option"));
    }
    double prev = -1.0;
    for (double e : cs.options) {
      if (e < 0.0 || !(e > prev)) fail(st, "station: options must be >= 0 and strictly increasing");
      prev = e;
    }
    if (!(cs.rate > 0.0)) fail(st, "station: rate must be > 0");
    for (const ChargingStation& other : s.stations) {
      if (other.node == cs.node) fail(st, "duplicate station at node '" + s.road.node_names[static_cast<std::size_t>(cs.node)] + "'");
    }
    s.stations.push_back(cs);
  }

  // classes
  const YAML::Node cl = require(root, "classes", "scenario");
  const YAML::Node total_node = root["total_vehicles"];
  const double total = total_node ? read<double>(total_node, "total_vehicles") : -1.0;
  for (const YAML::Node& c : cl) {
    VehicleClass vc;
    vc.name = read<std::string>(require(c, "name", "class"), "class.name");
    vc.origin = lookup(nodes, require(c, "origin", "class"), "class.origin");
    vc.destination = lookup(nodes, require(c, "destination", "class"), "class.destination");
    const bool has_share = static_cast<bool>(c["share"]);
    const bool has_demand = static_cast<bool>(c["demand"]);
    if (has_share == has_demand) fail(c, "class: give exactly one of 'share' or 'demand'");
    if (has_share) {
      if (total < 0.0) fail(c, "class: 'share' needs a top-level total_vehicles");
      vc.demand_rate = total * read<double>(c["share"], "share");
    } else {
      vc.demand_rate = read<double>(c["demand"], "demand");
    }
    const std::string kind = get<std::string>(c, "kind", "ev");
    if (kind == "ev") {
      vc.kind = VehicleKind::kEv;
    } else if (kind == "icev") {
      vc.kind = VehicleKind::kIcev;
    } else {
      fail(c["kind"], "class: kind must be 'ev' or 'icev'");
    }
    vc.initial_charge = u.kwh_per_energy * get<double>(c, "initial_charge", 0.0);
    vc.battery_capacity = u.kwh_per_energy * get<double>(c, "battery_capacity", 0.0);
    if (vc.demand_rate < 0.0) fail(c, "class: demand must be >= 0");
    if (vc.origin == vc.destination) fail(c, "class: origin equals destination");
    if (vc.kind == VehicleKind::kEv &&
        (vc.initial_charge < 0.0 || vc.initial_charge > vc.battery_capacity)) {
      fail(c, "class: initial_charge must lie in [0, battery_capacity]");
    }
    s.classes.push_back(vc);
  }
  if (s.classes.empty()) fail(cl, "scenario has no vehicle classes");

  // demand box
  const int nb = s.power.bus_count();
  if (const YAML::Node box = pw["demand_box"]) {
    s.demand_min = read_bus_vector(require(box, "min", "demand_box"), buses, nb, u.mwh_per_grid_energy, "demand_box.min");
    s.demand_max = read_bus_vector(require(box, "max", "demand_box"), buses, nb, u.mwh_per_grid_energy, "demand_box.max");
  } else {
    // Every vehicle taking the largest option at every station on a bus.
    s.demand_min.assign(static_cast<std::size_t>(nb), 0.0);
    s.demand_max.assign(static_cast<std::size_t>(nb), 0.0);
    for (const ChargingStation& cs : s.stations) {
      const double top = cs.options.empty() ? 0.0 : cs.options.back();
      s.demand_max[static_cast<std::size_t>(cs.bus)] += s.total_demand() * top / 1000.0;
    }
  }
  for (int v = 0; v < nb; ++v) {
    const auto i = static_cast<std::size_t>(v);
    if (s.demand_min[i] < 0.0 || s.demand_min[i] > s.demand_max[i]) {
      fail(pw["demand_box"], "demand_box: need 0 <= min <= max at bus '" + s.power.bus_names[i] + "'");
    }
  }

  if (const YAML::Node params = root["parameters"]) {
    for (auto it = params.begin(); it != params.end(); ++it) {
      const std::string key = it->first.as<std::string>();
      set_param(s.params, key, read<std::string>(it->second, key), &it->second);
    }
  }
  validate_parameters(s.params);
  return s;
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

}  // namespace

Scenario parse_scenario(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ValidationError(fmt::format("parse error at line {}, column {}: {}", e.mark.line + 1,
                                      e.mark.column + 1, e.msg));
  }
  try {
    return parse_root(root);
  } catch (const YAML::Exception& e) {
    throw ValidationError(fmt::format("scenario error at line {}, column {}: {}", e.mark.line + 1,
                                      e.mark.column + 1, e.msg));
  }
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open scenario file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

std::string serialize_scenario(const Scenario& s) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  const auto& nodes = s.road.node_names;
  const auto& buses = s.power.bus_names;
  out << YAML::BeginMap;
  out << YAML::Key << "format_version" << YAML::Value << s.format_version;
  out << YAML::Key << "name" << YAML::Value << s.name;
  out << YAML::Key << "units" << YAML::Value << YAML::Flow << YAML::BeginMap
      << YAML::Key << "time" << YAML::Value << "min" << YAML::Key << "distance" << YAML::Value << "mi"
      << YAML::Key << "energy" << YAML::Value << "kWh" << YAML::Key << "grid_energy" << YAML::Value
      << "MWh" << YAML::Key << "price" << YAML::Value << "$/MWh" << YAML::Key << "money"
      << YAML::Value << "$" << YAML::EndMap;

  out << YAML::Key << "transport" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kwh_per_mile" << YAML::Value << num(s.kwh_per_mile);
  out << YAML::Key << "nodes" << YAML::Value << YAML::Flow << nodes;
  out << YAML::Key << "arcs" << YAML::Value << YAML::BeginSeq;
  for (const RoadArc& a : s.road.arcs) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "from" << YAML::Value
        << nodes[static_cast<std::size_t>(a.tail)] << YAML::Key << "to" << YAML::Value
        << nodes[static_cast<std::size_t>(a.head)] << YAML::Key << "free_flow_time" << YAML::Value
        << num(a.free_flow_time) << YAML::Key << "latency_slope" << YAML::Value
        << num(a.latency_slope) << YAML::Key << "energy" << YAML::Value << num(a.energy)
        << YAML::Key << "toll" << YAML::Value << num(a.toll) << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "stations" << YAML::Value << YAML::BeginSeq;
  for (const ChargingStation& st : s.stations) {
    std::vector<std::string> opts;
    for (double e : st.options) opts.push_back(num(e));
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "node" << YAML::Value
        << nodes[static_cast<std::size_t>(st.node)] << YAML::Key << "bus" << YAML::Value
        << buses[static_cast<std::size_t>(st.bus)] << YAML::Key << "origin_facility"
        << YAML::Value << st.is_trip_origin_facility << YAML::Key << "rate" << YAML::Value
        << num(st.rate) << YAML::Key << "options" << YAML::Value << YAML::Flow << opts
        << YAML::Key << "entrance_free_flow_wait" << YAML::Value
        << num(st.entrance_free_flow_wait) << YAML::Key << "entrance_wait_slope" << YAML::Value
        << num(st.entrance_wait_slope) << YAML::Key << "plug_in_fee" << YAML::Value
        << num(st.plug_in_fee) << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;

  out << YAML::Key << "power" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "slack" << YAML::Value << buses[static_cast<std::size_t>(s.power.slack)];
  out << YAML::Key << "buses" << YAML::Value << YAML::BeginSeq;
  for (int v = 0; v < s.power.bus_count(); ++v) {
    const Generator& g = s.power.generators[static_cast<std::size_t>(v)];
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "name" << YAML::Value
        << buses[static_cast<std::size_t>(v)] << YAML::Key << "a" << YAML::Value << num(g.a)
        << YAML::Key << "b" << YAML::Value << num(g.b) << YAML::Key << "g_min" << YAML::Value
        << num(g.g_min) << YAML::Key << "g_max" << YAML::Value << num(g.g_max) << YAML::Key
        << "baseload" << YAML::Value << num(s.power.baseload[static_cast<std::size_t>(v)])
        << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "lines" << YAML::Value << YAML::BeginSeq;
  for (const Line& l : s.power.lines) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "from" << YAML::Value
        << buses[static_cast<std::size_t>(l.from)] << YAML::Key << "to" << YAML::Value
        << buses[static_cast<std::size_t>(l.to)] << YAML::Key << "susceptance" << YAML::Value
        << num(l.susceptance) << YAML::Key << "limit_forward" << YAML::Value
        << num(l.limit_forward) << YAML::Key << "limit_backward" << YAML::Value
        << num(l.limit_backward) << YAML::EndMap;
  }
  out << YAML::EndSeq;
  std::vector<std::string> dmin, dmax;
  for (double v : s.demand_min) dmin.push_back(num(v));
  for (double v : s.demand_max) dmax.push_back(num(v));
  out << YAML::Key << "demand_box" << YAML::Value << YAML::BeginMap << YAML::Key << "min"
      << YAML::Value << YAML::Flow << dmin << YAML::Key << "max" << YAML::Value << YAML::Flow
      << dmax << YAML::EndMap;
  out << YAML::EndMap;

  out << YAML::Key << "classes" << YAML::Value << YAML::BeginSeq;
  for (const VehicleClass& c : s.classes) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "name" << YAML::Value << c.name
        << YAML::Key << "origin" << YAML::Value << nodes[static_cast<std::size_t>(c.origin)]
        << YAML::Key << "destination" << YAML::Value
        << nodes[static_cast<std::size_t>(c.destination)] << YAML::Key << "demand" << YAML::Value
        << num(c.demand_rate) << YAML::Key << "kind" << YAML::Value
        << (c.kind == VehicleKind::kEv ? "ev" : "icev") << YAML::Key << "initial_charge"
        << YAML::Value << num(c.initial_charge) << YAML::Key << "battery_capacity" << YAML::Value
        << num(c.battery_capacity) << YAML::EndMap;
  }
  out << YAML::EndSeq;

  out << YAML::Key << "parameters" << YAML::Value << YAML::BeginMap;
  for (const auto& [name, ref] : parameter_table()) {
    out << YAML::Key << name << YAML::Value;
    std::visit(
        [&](auto member) {
          using T = std::remove_cvref_t<decltype(s.params.*member)>;
          if constexpr (std::is_same_v<T, double>) {
            out << num(s.params.*member);
          } else {
            out << std::to_string(s.params.*member);
          }
        },
        ref);
  }
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

void apply_override(Scenario& s, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ValidationError("override must look like key=value: '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  if (key == "total_vehicles" || key == "classes.scale") {
    double x = 0.0;
    try {
      std::size_t used = 0;
      x = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw ValidationError("invalid value for " + key + ": '" + value + "'");
    }
    if (x < 0.0) throw ValidationError(key + " must be >= 0");
    const double total = s.total_demand();
    const double factor = key == "classes.scale" ? x : (total > 0.0 ? x / total : 0.0);
    for (VehicleClass& c : s.classes) c.demand_rate *= factor;
    return;
  }
  set_param(s.params, key, value, nullptr);
  validate_parameters(s.params);
}

std::string scenario_hash(const Scenario& s) {
  const std::string text = serialize_scenario(s);
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

Model build_model(const Scenario& s, bool check_box_feasibility) {
  validate_parameters(s.params);
  validate_network(s.power);
  Model m{s, ExtendedGraph::build(s.road, s.stations, s.origins()), {}, compute_ptdf(s.power), {}};
  m.demand_map = build_demand_map(m.graph, s.power.bus_count());
  EnumerationOptions opts;
  opts.max_paths = s.params.max_paths;
  for (std::size_t q = 0; q < s.classes.size(); ++q) {
    m.paths.push_back(enumerate_feasible_paths(m.graph, s.classes[q], static_cast<int>(q), opts));
    if (m.paths.back().empty()) {
      throw ValidationError("class '" + s.classes[q].name + "' has no feasible path");
    }
  }
  if (static_cast<int>(s.demand_min.size()) != s.power.bus_count() ||
      static_cast<int>(s.demand_max.size()) != s.power.bus_count()) {
    throw ValidationError("demand box must have one entry per bus");
  }
  if (check_box_feasibility) {
    const FeasibilityReport rep = validate_feasibility(s.power, m.ptdf, s.demand_min, s.demand_max,
                                                       s.params.feasibility_samples, s.params.seed);
    if (!rep.feasible) {
      throw ValidationError("demand box is not dispatch-feasible at " + rep.failing_label +
                            fmt::format(" (max violation {:.6g} MWh)", rep.max_violation));
    }
  }
  return m;
}

}  // namespace evnet
