#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "synthmr/gen_config.hpp"

namespace synthmr {

using nlohmann::json;

namespace {

void check_range(const char* name, const Range& r) {
  if (!(r.lo <= r.hi))
    throw ConfigError(ConfigError::Kind::invariant, std::string("inverted range for ") + name + ": [" +
                                                        std::to_string(r.lo) + ", " + std::to_string(r.hi) + "]");
}

void check_nonneg(const char* name, double v) {
  if (!(v >= 0)) throw ConfigError(ConfigError::Kind::invariant, std::string(name) + " must be >= 0");
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys{
      "a_rot",   "b_rot",   "a_sc",       "b_sc",    "a_sh",    "b_sh",   "a_tr",
      "b_tr",    "sigma_svf", "a_mu",     "b_mu",    "a_sigma", "b_sigma", "sigma_blur",
      "sigma_b", "a_gamma", "b_gamma",    "c_v",     "c_b",     "p_strip", "extracerebral_labels",
      "crop_dims", "seed",  "mode",       "contrasts"};
  return keys;
}

double get_number(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number())
    throw ConfigError(ConfigError::Kind::parse, std::string("config key '") + key + "' must be a number");
  return j[key].get<double>();
}

int get_int(const json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer())
    throw ConfigError(ConfigError::Kind::parse, std::string("config key '") + key + "' must be an integer");
  return j[key].get<int>();
}

Label to_label(const json& v) {
  if (!v.is_number_integer() || v.get<long long>() < 0 || v.get<long long>() > 65535)
    throw ConfigError(ConfigError::Kind::parse, "labels must be integers in [0, 65535]");
  return static_cast<Label>(v.get<int>());
}

Label parse_label_key(const std::string& s) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size() || v < 0 || v > 65535) throw std::out_of_range("label");
    return static_cast<Label>(v);
  } catch (const std::exception&) {
    throw ConfigError(ConfigError::Kind::parse, "contrast label key '" + s + "' is not a label id");
  }
}

}  // namespace

void validate(const GenConfig& c) {
  check_range("rotation", c.rotation);
  check_range("scaling", c.scaling);
  check_range("shearing", c.shearing);
  check_range("translation", c.translation);
  check_range("mu", c.mu);
  check_range("sigma", c.sigma);
  check_range("gamma", c.gamma);
  if (!(c.scaling.lo > 0)) throw ConfigError(ConfigError::Kind::invariant, "scalings must be strictly positive");
  check_nonneg("sigma_svf", c.sigma_svf);
  check_nonneg("a_sigma", c.sigma.lo);
  check_nonneg("sigma_blur", c.sigma_blur);
  check_nonneg("sigma_b", c.sigma_bias);
  if (c.svf_grid < 2) throw ConfigError(ConfigError::Kind::invariant, "c_v must be >= 2");
  if (c.bias_grid < 2) throw ConfigError(ConfigError::Kind::invariant, "c_b must be >= 2");
  if (!(c.p_strip >= 0 && c.p_strip <= 1))
    throw ConfigError(ConfigError::Kind::invariant, "p_strip must lie in [0, 1]");
  if (c.crop && !c.crop->valid()) throw ConfigError(ConfigError::Kind::invariant, "crop_dims must be positive");
  if (c.mode == IntensityMode::rule && c.contrasts.empty())
    throw ConfigError(ConfigError::Kind::invariant, "rule mode needs at least one contrast hyperprior");
  for (const auto& contrast : c.contrasts)
    for (const auto& [label, h] : contrast.labels)
      if (!(h.std_mu >= 0 && h.std_sigma >= 0))
        throw ConfigError(ConfigError::Kind::invariant,
                          "hyperprior std for label " + std::to_string(label) + " in contrast '" + contrast.name +
                              "' must be >= 0");
}

GenConfig parse_config(const std::string& text) {
  json j = json::object();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    GenConfig c;
    validate(c);
    return c;
  }
  try {
    j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(ConfigError::Kind::parse, std::string("config parse error: ") + e.what());
  }
  if (j.is_null()) j = json::object();
  if (!j.is_object()) throw ConfigError(ConfigError::Kind::parse, "config must be a JSON object");

  const auto& keys = known_keys();
  for (const auto& [key, _] : j.items())
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw ConfigError(ConfigError::Kind::unknown_key, "unknown config key '" + key + "'");

  GenConfig c;
  c.rotation = {get_number(j, "a_rot", c.rotation.lo), get_number(j, "b_rot", c.rotation.hi)};
  c.scaling = {get_number(j, "a_sc", c.scaling.lo), get_number(j, "b_sc", c.scaling.hi)};
  c.shearing = {get_number(j, "a_sh", c.shearing.lo), get_number(j, "b_sh", c.shearing.hi)};
  c.translation = {get_number(j, "a_tr", c.translation.lo), get_number(j, "b_tr", c.translation.hi)};
  c.sigma_svf = get_number(j, "sigma_svf", c.sigma_svf);
  c.mu = {get_number(j, "a_mu", c.mu.lo), get_number(j, "b_mu", c.mu.hi)};
  c.sigma = {get_number(j, "a_sigma", c.sigma.lo), get_number(j, "b_sigma", c.sigma.hi)};
  c.sigma_blur = get_number(j, "sigma_blur", c.sigma_blur);
  c.sigma_bias = get_number(j, "sigma_b", c.sigma_bias);
  c.gamma = {get_number(j, "a_gamma", c.gamma.lo), get_number(j, "b_gamma", c.gamma.hi)};
  c.svf_grid = get_int(j, "c_v", c.svf_grid);
  c.bias_grid = get_int(j, "c_b", c.bias_grid);
  c.p_strip = get_number(j, "p_strip", c.p_strip);

  if (j.contains("extracerebral_labels")) {
    if (!j["extracerebral_labels"].is_array())
      throw ConfigError(ConfigError::Kind::parse, "extracerebral_labels must be an array");
    for (const auto& v : j["extracerebral_labels"]) c.extracerebral.push_back(to_label(v));
  }
  if (j.contains("crop_dims")) {
    const auto& d = j["crop_dims"];
    if (!d.is_array() || d.size() != 3 || !d[0].is_number_integer() || !d[1].is_number_integer() ||
        !d[2].is_number_integer())
      throw ConfigError(ConfigError::Kind::parse, "crop_dims must be an array of three integers");
    c.crop = Dims{d[0].get<int>(), d[1].get<int>(), d[2].get<int>()};
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError(ConfigError::Kind::parse, "seed must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("mode")) {
    const auto m = j["mode"].is_string() ? j["mode"].get<std::string>() : std::string();
    if (m == "agnostic")
      c.mode = IntensityMode::agnostic;
    else if (m == "rule")
      c.mode = IntensityMode::rule;
    else
      throw ConfigError(ConfigError::Kind::parse, "mode must be \"agnostic\" or \"rule\"");
  }
  if (j.contains("contrasts")) {
    const auto& cs = j["contrasts"];
    if (!cs.is_object()) throw ConfigError(ConfigError::Kind::parse, "contrasts must be an object of name -> table");
    for (const auto& [name, table] : cs.items()) {
      if (!table.is_object())
        throw ConfigError(ConfigError::Kind::parse, "contrast '" + name + "' must map label ids to arrays");
      ContrastHyperprior h{name, {}};
      for (const auto& [key, v] : table.items()) {
        if (!v.is_array() || v.size() != 4 || !std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number(); }))
          throw ConfigError(ConfigError::Kind::parse,
                            "contrast '" + name + "' label " + key + ": expected [mean_mu, std_mu, mean_sigma, std_sigma]");
        h.labels[parse_label_key(key)] = {v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
      }
      c.contrasts.push_back(std::move(h));
    }
  }
  validate(c);
  return c;
}

GenConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(ConfigError::Kind::parse, "cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const GenConfig& c) {
  json j;
  j["a_rot"] = c.rotation.lo;
  j["b_rot"] = c.rotation.hi;
  j["a_sc"] = c.scaling.lo;
  j["b_sc"] = c.scaling.hi;
  j["a_sh"] = c.shearing.lo;
  j["b_sh"] = c.shearing.hi;
  j["a_tr"] = c.translation.lo;
  j["b_tr"] = c.translation.hi;
  j["sigma_svf"] = c.sigma_svf;
  j["a_mu"] = c.mu.lo;
  j["b_mu"] = c.mu.hi;
  j["a_sigma"] = c.sigma.lo;
  j["b_sigma"] = c.sigma.hi;
  j["sigma_blur"] = c.sigma_blur;
  j["sigma_b"] = c.sigma_bias;
  j["a_gamma"] = c.gamma.lo;
  j["b_gamma"] = c.gamma.hi;
  j["c_v"] = c.svf_grid;
  j["c_b"] = c.bias_grid;
  j["p_strip"] = c.p_strip;
  j["extracerebral_labels"] = c.extracerebral;
  if (c.crop) j["crop_dims"] = {c.crop->nx, c.crop->ny, c.crop->nz};
  j["seed"] = c.seed;
  j["mode"] = c.mode == IntensityMode::rule ? "rule" : "agnostic";
  json cs = json::object();
  for (const auto& h : c.contrasts) {
    json t = json::object();
    for (const auto& [label, p] : h.labels)
      t[std::to_string(label)] = {p.mean_mu, p.std_mu, p.mean_sigma, p.std_sigma};
    cs[h.name] = t;
  }
  j["contrasts"] = cs;
  return j.dump(2);
}

}  // namespace synthmr
