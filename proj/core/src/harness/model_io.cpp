#include "gdp/harness/model_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gdp/error.hpp"

namespace gdp::harness {
namespace {

using nlohmann::json;
constexpr std::array<char, 8> kMagic{'G', 'D', 'P', 'W', 'G', 'T', '0', '1'};

std::vector<Tensor*> layer_tensors(LayerSpec& L) {
  switch (L.kind) {
    case LayerKind::Conv:
    case LayerKind::DepthwiseConv:
    case LayerKind::Dense:
      if (L.has_bias) return {&L.weight, &L.bias};
      return {&L.weight};
    case LayerKind::BatchNorm: return {&L.weight, &L.bias, &L.running_mean, &L.running_var};
    case LayerKind::Add:
      if (L.has_bias) return {&L.bias};
      return {};
    case LayerKind::Constant: return {&L.weight};
    default: return {};
  }
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw Error(ErrorCode::Io, "weights file is truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return v;
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

int layer_index(const std::map<std::string, int>& names, const std::string& name, const std::string& where) {
  if (name == "input") return kNetworkInput;
  const auto it = names.find(name);
  if (it == names.end()) throw Error(ErrorCode::Config, where + " refers to unknown layer '" + name + "'");
  return it->second;
}

template <typename T>
T field(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string("bad value for '") + key + "': " + e.what());
  }
}

void read_weights(NetworkGraph& g, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read weights '" + path.string() + "'");
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), 8) || magic != kMagic) {
    throw Error(ErrorCode::Io, "'" + path.string() + "' is not a weights file");
  }
  std::vector<Tensor*> targets;
  for (auto& L : g.layers)
    for (auto* t : layer_tensors(L)) targets.push_back(t);
  struct GateSlot {
    GateVector* gv;
    int part;  // 0 epsilon, 1 alpha, 2 per-gate epsilon
  };
  std::vector<GateSlot> gate_slots;
  for (auto& gv : g.gates) {
    gate_slots.push_back({&gv, 0});
    gate_slots.push_back({&gv, 1});
    if (gv.mode != GateMode::IntroducedParam) gate_slots.push_back({&gv, 2});
  }
  const std::uint64_t count = get_u64(in);
  if (count != targets.size() + gate_slots.size()) {
    throw Error(ErrorCode::Io, "weights file has " + std::to_string(count) + " tensors, model needs " +
                                   std::to_string(targets.size() + gate_slots.size()));
  }
  std::vector<std::uint64_t> sizes(count);
  for (auto& s : sizes) s = get_u64(in);
  std::size_t k = 0;
  for (auto* t : targets) {
    if (sizes[k] != t->size()) {
      throw Error(ErrorCode::Io, "weights tensor " + std::to_string(k) + " has " + std::to_string(sizes[k]) +
                                     " elements, expected " + std::to_string(t->size()));
    }
    for (auto& v : t->data()) v = static_cast<Scalar>(get_f64(in));
    ++k;
  }
  for (const auto& slot : gate_slots) {
    const std::size_t expect = slot.part == 0 ? 1 : slot.gv->size();
    if (sizes[k] != expect) throw Error(ErrorCode::Io, "gate tensor " + std::to_string(k) + " has the wrong size");
    if (slot.part == 0) {
      slot.gv->epsilon = static_cast<Scalar>(get_f64(in));
    } else if (slot.part == 1) {
      for (auto& v : slot.gv->alpha.data()) v = static_cast<Scalar>(get_f64(in));
    } else {
      slot.gv->gate_epsilon.resize(expect);
      for (auto& v : slot.gv->gate_epsilon) v = static_cast<Scalar>(get_f64(in));
    }
    ++k;
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error(ErrorCode::Io, "weights file has trailing bytes");
}

}  // namespace

LoadedModel parse_model(const std::string& json_text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string("model file is not valid JSON: ") + e.what());
  }
  for (const auto& [key, _] : j.items()) {
    if (key != "input" && key != "layers" && key != "share_groups" && key != "gates" && key != "weights") {
      throw Error(ErrorCode::Config, "unknown key '" + key + "' in model file");
    }
  }
  LoadedModel m;
  auto& g = m.graph;
  g.input_shape = field<Shape>(j, "input", {});
  if (!j.contains("layers") || !j["layers"].is_array()) throw Error(ErrorCode::Config, "model needs a 'layers' array");
  std::map<std::string, int> names;
  static const std::set<std::string> known{"name",   "kind",    "inputs", "out_channels", "kernel",   "stride",
                                           "padding", "window", "bias",   "eps",          "momentum", "shape"};
  for (const auto& lj : j["layers"]) {
    for (const auto& [key, _] : lj.items())
      if (!known.count(key)) throw Error(ErrorCode::Config, "unknown key '" + key + "' in layer");
    LayerSpec L;
    L.name = field<std::string>(lj, "name", "");
    if (L.name.empty() || L.name == "input") throw Error(ErrorCode::Config, "every layer needs a name other than 'input'");
    if (names.count(L.name)) throw Error(ErrorCode::Config, "duplicate layer name '" + L.name + "'");
    L.kind = parse_layer_kind(field<std::string>(lj, "kind", ""));
    const std::string where = "layer '" + L.name + "'";
    if (lj.contains("inputs")) {
      for (const auto& in : field<std::vector<std::string>>(lj, "inputs", {})) L.inputs.push_back(layer_index(names, in, where));
    } else if (L.kind != LayerKind::Constant) {
      L.inputs = {static_cast<int>(g.layers.size()) - 1};
    }
    L.out_channels = field<std::size_t>(lj, "out_channels", 0);
    L.kernel = field<std::size_t>(lj, "kernel", 1);
    L.stride = field<std::size_t>(lj, "stride", 1);
    L.padding = field<std::size_t>(lj, "padding", 0);
    L.window = field<std::size_t>(lj, "window", 2);
    L.has_bias = field<bool>(lj, "bias", L.kind == LayerKind::Conv || L.kind == LayerKind::Dense);
    L.bn_eps = field<Scalar>(lj, "eps", Scalar{1e-5});
    L.bn_momentum = field<Scalar>(lj, "momentum", Scalar{0.1});
    if (L.kind == LayerKind::Constant) L.weight = Tensor(field<Shape>(lj, "shape", {}));
    names[L.name] = static_cast<int>(g.layers.size());
    g.layers.push_back(std::move(L));
  }
  const auto site_lists = [&](const json& groups, const std::string& where) {
    std::vector<std::vector<std::size_t>> out;
    for (const auto& grp : groups) {
      std::vector<std::size_t> sites;
      for (const auto& name : grp.get<std::vector<std::string>>()) {
        const int i = layer_index(names, name, where);
        if (i < 0) throw Error(ErrorCode::Config, where + " cannot name the network input");
        sites.push_back(static_cast<std::size_t>(i));
      }
      out.push_back(std::move(sites));
    }
    return out;
  };
  if (j.contains("share_groups")) g.share_groups = site_lists(j["share_groups"], "share_groups");
  allocate_parameters(g);
  validate(g);

  if (j.contains("gates")) {
    const auto& gj = j["gates"];
    GateInit init;
    init.mode = parse_gate_mode(field<std::string>(gj, "mode", "param"));
    if (gj.contains("groups")) g.share_groups = site_lists(gj["groups"], "gates.groups");
    g = attach_gates(std::move(g), init);
  }
  if (j.contains("weights")) {
    auto path = std::filesystem::path(field<std::string>(j, "weights", ""));
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    read_weights(g, path);
    m.has_weights = true;
    validate(g);
  }
  return m;
}

LoadedModel load_model(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw Error(ErrorCode::Io, "cannot read model '" + json_path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str(), json_path.parent_path());
}

void save_model(const NetworkGraph& graph, const std::filesystem::path& json_path) {
  validate(graph);
  NetworkGraph g = graph;
  json j;
  j["input"] = g.input_shape;
  json layers = json::array();
  const auto name_of = [&](int in) { return in == kNetworkInput ? std::string("input") : g.layers[in].name; };
  for (const auto& L : g.layers) {
    json lj;
    lj["name"] = L.name;
    lj["kind"] = std::string(to_string(L.kind));
    if (L.kind != LayerKind::Constant) {
      json ins = json::array();
      for (int in : L.inputs) ins.push_back(name_of(in));
      lj["inputs"] = ins;
    }
    switch (L.kind) {
      case LayerKind::Conv:
        lj["out_channels"] = L.out_channels;
        [[fallthrough]];
      case LayerKind::DepthwiseConv:
        lj["kernel"] = L.kernel;
        lj["stride"] = L.stride;
        lj["padding"] = L.padding;
        lj["bias"] = L.has_bias;
        break;
      case LayerKind::Dense:
        lj["out_channels"] = L.out_channels;
        lj["bias"] = L.has_bias;
        break;
      case LayerKind::AvgPool: lj["window"] = L.window; break;
      case LayerKind::BatchNorm:
        lj["eps"] = L.bn_eps;
        lj["momentum"] = L.bn_momentum;
        break;
      case LayerKind::Add: lj["bias"] = L.has_bias; break;
      case LayerKind::Constant: lj["shape"] = L.weight.shape(); break;
      default: break;
    }
    layers.push_back(lj);
  }
  j["layers"] = layers;
  if (g.gated()) {
    json groups = json::array();
    for (const auto& grp : g.groups) {
      json sites = json::array();
      for (auto s : grp.sites) sites.push_back(g.layers[s].name);
      groups.push_back(sites);
    }
    j["gates"] = {{"mode", std::string(to_string(g.mode()))}, {"groups", groups}};
  }
  auto bin_path = json_path;
  bin_path.replace_extension(".bin");
  j["weights"] = bin_path.filename().string();

  if (!json_path.parent_path().empty()) std::filesystem::create_directories(json_path.parent_path());
  {
    std::ofstream out(json_path);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + json_path.string() + "'");
    out << j.dump(2) << '\n';
  }
  std::vector<std::vector<Scalar>> tensors;
  for (auto& L : g.layers)
    for (auto* t : layer_tensors(L)) tensors.emplace_back(t->data().begin(), t->data().end());
  for (const auto& gv : g.gates) {
    tensors.push_back({gv.epsilon});
    tensors.emplace_back(gv.alpha.data().begin(), gv.alpha.data().end());
    if (gv.mode != GateMode::IntroducedParam) tensors.push_back(gv.gate_epsilon);
  }
  std::ofstream out(bin_path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + bin_path.string() + "'");
  out.write(kMagic.data(), 8);
  put_u64(out, tensors.size());
  for (const auto& t : tensors) put_u64(out, t.size());
  for (const auto& t : tensors)
    for (auto v : t) put_f64(out, static_cast<double>(v));
  if (!out) throw Error(ErrorCode::Io, "failed writing '" + bin_path.string() + "'");
}

}  // namespace gdp::harness
