#include "fedsl/config.hpp"

#include "fedsl/errors.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace fedsl {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

// Ordered key -> raw value map; insertion order is irrelevant, later
// assignments win.
std::map<std::string, std::string> parse_pairs(const std::string& text) {
  std::map<std::string, std::string> pairs;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InputError("config line " + std::to_string(line_no) +
                       ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw InputError("config line " + std::to_string(line_no) + ": empty key");
    }
    pairs[key] = value;
  }
  return pairs;
}

double to_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double x = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return x;
  } catch (const std::exception&) {
    throw InputError(key + ": expected a real number, got '" + value + "'");
  }
}

long long to_int(const std::string& key, const std::string& value) {
  long long x = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), x);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw InputError(key + ": expected an integer, got '" + value + "'");
  }
  return x;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  std::uint64_t x = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), x);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw InputError(key + ": expected a nonnegative integer, got '" + value + "'");
  }
  return x;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> parts;
  std::string current;
  for (char c : value) {
    if (c == ',') {
      parts.push_back(trim(current));
      current.clear();
    } else {
      current += c;
    }
  }
  parts.push_back(trim(current));
  return parts;
}

std::vector<double> to_real_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  for (const std::string& part : split_list(value)) out.push_back(to_real(key, part));
  return out;
}

std::vector<Index> to_index_list(const std::string& key, const std::string& value) {
  std::vector<Index> out;
  for (const std::string& part : split_list(value)) {
    out.push_back(static_cast<Index>(to_int(key, part)));
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  const auto pairs = parse_pairs(text);
  ExperimentConfig config;
  ExperimentSetup& setup = config.setup;
  bool l_given = false;
  long long l_value = 0;

  for (const auto& [key, value] : pairs) {
    if (key == "K") {
      setup.clients = static_cast<int>(to_int(key, value));
    } else if (key == "T") {
      setup.rounds = static_cast<int>(to_int(key, value));
    } else if (key == "I") {
      setup.agg_interval = static_cast<int>(to_int(key, value));
    } else if (key == "L") {
      l_given = true;
      l_value = to_int(key, value);
    } else if (key == "L_c") {
      setup.model.split_layer = static_cast<int>(to_int(key, value));
    } else if (key == "layer_dims") {
      setup.model.layer_dims = to_index_list(key, value);
    } else if (key == "rho_f") {
      setup.rho_f = to_real(key, value);
    } else if (key == "q") {
      setup.quant_bits = static_cast<int>(to_int(key, value));
    } else if (key == "p") {
      setup.dropout_p = to_real(key, value);
    } else if (key == "eta") {
      setup.eta = to_real(key, value);
    } else if (key == "batch") {
      setup.batch = static_cast<Index>(to_int(key, value));
    } else if (key == "seed") {
      setup.seed = to_u64(key, value);
      config.seed_set = true;
    } else if (key == "d_meters") {
      setup.distances_km.clear();
      for (double meters : to_real_list(key, value)) {
        if (!(meters > 0.0)) throw InputError("d_meters: distances must be > 0");
        setup.distances_km.push_back(meters / 1000.0);
      }
    } else if (key == "bandwidth_hz") {
      setup.bandwidth_hz = to_real(key, value);
    } else if (key == "tx_power_client_dbm") {
      setup.tx_client_dbm = to_real(key, value);
    } else if (key == "tx_power_server_dbm") {
      setup.tx_server_dbm = to_real(key, value);
    } else if (key == "noise_dbm_per_hz") {
      setup.noise_dbm_per_hz = to_real(key, value);
    } else if (key == "classes") {
      setup.classes = static_cast<int>(to_int(key, value));
    } else if (key == "train_samples") {
      setup.train_samples = static_cast<Index>(to_int(key, value));
    } else if (key == "eval_samples") {
      setup.eval_samples = static_cast<Index>(to_int(key, value));
    } else if (key == "blob_sigma") {
      setup.blob_sigma = to_real(key, value);
    } else if (key == "latency_composition") {
      if (value == "max") {
        setup.latency_comp = LatencyComposition::kMaxOverClients;
      } else if (value == "sum") {
        setup.latency_comp = LatencyComposition::kSumOverClients;
      } else {
        throw InputError("latency_composition: expected 'max' or 'sum', got '" + value + "'");
      }
    } else if (key == "artifacts_dir") {
      setup.artifacts_dir = value;
    } else if (key == "snapshot_every") {
      setup.snapshot_every = static_cast<int>(to_int(key, value));
    } else {
      throw InputError("unknown config key '" + key + "'");
    }
  }

  if (setup.model.layer_dims.empty()) {
    throw InputError("layer_dims: required (input width, then each layer width)");
  }
  if (l_given && l_value != setup.model.layer_count()) {
    throw InputError("L: must equal the layer count implied by layer_dims (" +
                     std::to_string(setup.model.layer_count()) + ")");
  }
  setup.validate();
  return config;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read config file " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

BoundConfig parse_bound_text(const std::string& text) {
  const auto pairs = parse_pairs(text);
  BoundConfig config;
  BoundParams& params = config.params;

  for (const auto& [key, value] : pairs) {
    if (key == "beta") {
      params.beta = to_real(key, value);
    } else if (key == "eta") {
      params.eta = to_real(key, value);
    } else if (key == "K") {
      params.clients = static_cast<int>(to_int(key, value));
    } else if (key == "I") {
      params.agg_interval = static_cast<int>(to_int(key, value));
    } else if (key == "T") {
      params.rounds = static_cast<int>(to_int(key, value));
    } else if (key == "L_c") {
      params.split_layer = static_cast<int>(to_int(key, value));
    } else if (key == "rho_f") {
      params.rho_f = to_real(key, value);
    } else if (key == "theta") {
      params.theta = to_real(key, value);
    } else if (key == "sigma_sq") {
      params.sigma_sq = to_real_list(key, value);
    } else if (key == "G_sq") {
      params.g_sq = to_real_list(key, value);
    } else if (key == "W_sq") {
      params.w_sq = to_real_list(key, value);
    } else if (key == "J_sq") {
      params.j_sq = to_real_list(key, value);
    } else if (key == "q") {
      config.q = static_cast<int>(to_int(key, value));
      config.has_quantizer = true;
    } else if (key == "g_min") {
      config.g_min = to_real_list(key, value);
    } else if (key == "g_max") {
      config.g_max = to_real_list(key, value);
    } else if (key == "M") {
      config.dims = to_index_list(key, value);
    } else {
      throw InputError("unknown bound-params key '" + key + "'");
    }
  }

  if (config.has_quantizer) {
    const auto layers = static_cast<std::size_t>(params.split_layer);
    if (config.g_min.size() != layers || config.g_max.size() != layers ||
        config.dims.size() != layers) {
      throw InputError("g_min/g_max/M: need one entry per client-side layer");
    }
    params.j_sq.clear();
    for (std::size_t l = 0; l < layers; ++l) {
      params.j_sq.push_back(
          quantizer_J(config.q, config.g_min[l], config.g_max[l], config.dims[l]));
    }
  }
  params.validate();
  return config;
}

BoundConfig parse_bound_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read bound params file " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_bound_text(buffer.str());
}

}  // namespace fedsl
