#include "granlab/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace granlab {

using nlohmann::json;

double TrainingOptions::resolved_tau(int d) const {
  return tau < 0.0 ? 0.1 * std::log(static_cast<double>(d)) : tau;
}

bool ValidationReport::ok() const { return error_count() == 0; }

std::size_t ValidationReport::error_count() const {
  std::size_t n = 0;
  for (const auto& i : issues) n += i.severity == Severity::Error;
  return n;
}

std::size_t ValidationReport::warning_count() const {
  return issues.size() - error_count();
}

bool ValidationReport::has(Severity severity, std::string_view needle) const {
  for (const auto& i : issues) {
    if (i.severity == severity && i.message.find(needle) != std::string::npos) return true;
  }
  return false;
}

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  for (const auto& i : issues) {
    os << (i.severity == Severity::Error ? "error" : "warning") << " [" << i.field
       << "]: " << i.message << '\n';
  }
  return os.str();
}

ValidationReport validate_config(const ExperimentConfig& cfg) {
  ValidationReport rep;
  auto error = [&](std::string field, std::string msg) {
    rep.issues.push_back({Severity::Error, std::move(field), std::move(msg)});
  };
  auto warn = [&](std::string field, std::string msg) {
    rep.issues.push_back({Severity::Warning, std::move(field), std::move(msg)});
  };

  if (cfg.d <= 0) error("d", "d must be positive");
  if (cfg.P <= 0) error("P", "P must be positive");
  if (cfg.k_plus <= 0 || cfg.k_minus <= 0) error("k_plus", "subclass counts must be positive");
  if (cfg.k_plus != cfg.k_minus) error("k_minus", "k_plus must equal k_minus");
  if (cfg.s_star <= 0) error("s_star", "s_star must be positive");
  if (cfg.s_dagger <= 0) error("s_dagger", "s_dagger must be positive");
  if (cfg.N <= 0) error("N", "N must be positive");
  if (cfg.m <= 0) error("m", "m must be positive");
  if (cfg.m_sub <= 0) error("m_sub", "m_sub must be positive");
  if (cfg.k_plus > 0 && cfg.N > 0 && cfg.N % (2 * cfg.k_plus) != 0) {
    error("N", "N not divisible by 2k (N=" + std::to_string(cfg.N) +
                   ", 2k=" + std::to_string(2 * cfg.k_plus) + ")");
  }
  const int roles = 2 + cfg.k_plus + cfg.k_minus;
  if (cfg.d < roles) {
    error("d", "d < 2+k+ +k- (d=" + std::to_string(cfg.d) + ", need " + std::to_string(roles) + ")");
  }
  if (cfg.s_star > cfg.P) error("s_star", "s_star exceeds P");
  if (cfg.s_dagger > cfg.P) error("s_dagger", "s_dagger exceeds P");
  if (cfg.iota < 0.0 || cfg.iota > 1.0) error("iota", "iota must lie in [0, 1]");
  if (cfg.iota_dag_lower < 0.0) error("iota_dag_lower", "iota_dag_lower must be nonnegative");
  if (cfg.iota_dag_lower > cfg.iota_dag_upper) {
    error("iota_dag_upper", "iota_dag_lower exceeds iota_dag_upper");
  }
  if (!(cfg.sigma_zeta > 0.0)) error("sigma_zeta", "sigma_zeta must be strictly positive");
  if (!(cfg.sigma_zeta_star > 0.0)) error("sigma_zeta_star", "sigma_zeta_star must be strictly positive");
  if (!(cfg.sigma_0 > 0.0)) error("sigma_0", "sigma_0 must be strictly positive");
  if (!(cfg.eta > 0.0)) error("eta", "eta must be strictly positive");
  if (!(cfg.bias_decay_divisor > 0.0)) {
    error("bias_decay_divisor", "bias_decay_divisor must be strictly positive");
  }
  if (!(cfg.c_0 > 0.0)) error("c_0", "c_0 must be strictly positive");
  if (!(cfg.c_b_coarse > 0.0)) error("c_b_coarse", "c_b_coarse must be strictly positive");
  if (!(cfg.c_b_fine > 0.0)) error("c_b_fine", "c_b_fine must be strictly positive");
  if (!rep.ok()) return rep;

  // Regime conditions. These hold only for very large d.
  const double d = cfg.d;
  const double logd = std::log(d);
  const double k_cap = std::pow(d, 0.4);
  if (cfg.k_plus > k_cap) {
    std::ostringstream os;
    os << "k > d^0.4 (" << cfg.k_plus << " > " << k_cap << ")";
    warn("k_plus", os.str());
  }
  if (cfg.s_star * std::pow(logd, 5) > cfg.k_plus) {
    warn("s_star", "s* log^5(d) > k: subclass count below the asymptotic lower bound");
  }
  if (cfg.c_0 >= 0.1) warn("c_0", "c_0 outside (0, 0.1)");
  if (cfg.sigma_zeta_star <= cfg.sigma_zeta) {
    warn("sigma_zeta_star", "sigma_zeta_star should dominate sigma_zeta");
  }
  if (cfg.s_dagger * cfg.iota_dag_upper > 1.0 / logd) {
    warn("iota_dag_upper", "s_dagger * iota_dag_upper exceeds 1/log(d)");
  }
  if (cfg.P * cfg.sigma_zeta < logd) {
    warn("P", "P * sigma_zeta below polylog(d)");
  }
  return rep;
}

namespace {

const std::set<std::string>& experiment_keys() {
  static const std::set<std::string> keys = {
      "d", "P", "k_plus", "k_minus", "s_star", "s_dagger", "iota", "iota_dag_lower",
      "iota_dag_upper", "sigma_zeta", "sigma_zeta_star", "sigma_0", "c_0", "c_b_coarse",
      "c_b_fine", "eta", "N", "m", "m_sub", "bias_decay_divisor", "seed"};
  return keys;
}

template <typename T>
T get_field(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("missing key: ") + key);
  const auto& v = j.at(key);
  if constexpr (std::is_same_v<T, double>) {
    if (!v.is_number()) throw ConfigError(std::string("key must be a number: ") + key);
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError(std::string("key must be an integer: ") + key);
  }
  return v.get<T>();
}

std::string stop_kind_name(StopKind k) {
  switch (k) {
    case StopKind::MaxSteps: return "max_steps";
    case StopKind::AtT0: return "at_t0";
    case StopKind::AtT11PlusBudget: return "at_t11_plus_budget";
  }
  return "max_steps";
}

StopKind stop_kind_from(const std::string& s) {
  if (s == "max_steps") return StopKind::MaxSteps;
  if (s == "at_t0") return StopKind::AtT0;
  if (s == "at_t11_plus_budget") return StopKind::AtT11PlusBudget;
  throw ConfigError("unknown stop rule: " + s);
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  return json{{"d", c.d},
              {"P", c.P},
              {"k_plus", c.k_plus},
              {"k_minus", c.k_minus},
              {"s_star", c.s_star},
              {"s_dagger", c.s_dagger},
              {"iota", c.iota},
              {"iota_dag_lower", c.iota_dag_lower},
              {"iota_dag_upper", c.iota_dag_upper},
              {"sigma_zeta", c.sigma_zeta},
              {"sigma_zeta_star", c.sigma_zeta_star},
              {"sigma_0", c.sigma_0},
              {"c_0", c.c_0},
              {"c_b_coarse", c.c_b_coarse},
              {"c_b_fine", c.c_b_fine},
              {"eta", c.eta},
              {"N", c.N},
              {"m", c.m},
              {"m_sub", c.m_sub},
              {"bias_decay_divisor", c.bias_decay_divisor},
              {"seed", c.seed}};
}

json to_json(const TrainingOptions& t) {
  return json{{"granularity", to_string(t.granularity)},
              {"stop_rule",
               {{"kind", stop_kind_name(t.stop.kind)},
                {"max_steps", t.stop.max_steps},
                {"budget", t.stop.budget}}},
              {"probe_every", t.probe_every},
              {"eps_loss", t.eps_loss},
              {"B", t.t0_threshold_fine},
              {"tau", t.tau},
              {"dictionary",
               t.dictionary == DictionaryMode::StandardBasis ? "standard_basis" : "random_orthonormal"},
              {"screen_all_directions", t.screen_all_directions},
              {"eval_easy", t.eval_easy},
              {"eval_hard", t.eval_hard}};
}

json to_json(const LabConfig& cfg) {
  json j = to_json(cfg.experiment);
  j["training"] = to_json(cfg.training);
  return j;
}

ExperimentConfig experiment_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!experiment_keys().contains(key)) throw ConfigError("unknown key: " + key);
  }
  ExperimentConfig c;
  c.d = get_field<int>(j, "d");
  c.P = get_field<int>(j, "P");
  c.k_plus = get_field<int>(j, "k_plus");
  c.k_minus = get_field<int>(j, "k_minus");
  c.s_star = get_field<int>(j, "s_star");
  c.s_dagger = get_field<int>(j, "s_dagger");
  c.iota = get_field<double>(j, "iota");
  c.iota_dag_lower = get_field<double>(j, "iota_dag_lower");
  c.iota_dag_upper = get_field<double>(j, "iota_dag_upper");
  c.sigma_zeta = get_field<double>(j, "sigma_zeta");
  c.sigma_zeta_star = get_field<double>(j, "sigma_zeta_star");
  c.sigma_0 = get_field<double>(j, "sigma_0");
  c.c_0 = get_field<double>(j, "c_0");
  c.c_b_coarse = get_field<double>(j, "c_b_coarse");
  c.c_b_fine = get_field<double>(j, "c_b_fine");
  c.eta = get_field<double>(j, "eta");
  c.N = get_field<int>(j, "N");
  c.m = get_field<int>(j, "m");
  c.m_sub = get_field<int>(j, "m_sub");
  c.bias_decay_divisor = get_field<double>(j, "bias_decay_divisor");
  c.seed = get_field<std::uint64_t>(j, "seed");
  return c;
}

TrainingOptions training_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("training must be a JSON object");
  static const std::set<std::string> keys = {
      "granularity", "stop_rule", "probe_every", "eps_loss", "B", "tau",
      "dictionary", "screen_all_directions", "eval_easy", "eval_hard"};
  for (const auto& [key, _] : j.items()) {
    if (!keys.contains(key)) throw ConfigError("unknown key: training." + key);
  }
  TrainingOptions t;
  if (j.contains("granularity")) {
    try {
      t.granularity = granularity_from_string(j.at("granularity").get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (j.contains("stop_rule")) {
    const auto& s = j.at("stop_rule");
    for (const auto& [key, _] : s.items()) {
      if (key != "kind" && key != "max_steps" && key != "budget") {
        throw ConfigError("unknown key: training.stop_rule." + key);
      }
    }
    if (s.contains("kind")) t.stop.kind = stop_kind_from(s.at("kind").get<std::string>());
    if (s.contains("max_steps")) t.stop.max_steps = get_field<long>(s, "max_steps");
    if (s.contains("budget")) t.stop.budget = get_field<long>(s, "budget");
  }
  if (j.contains("probe_every")) t.probe_every = get_field<long>(j, "probe_every");
  if (j.contains("eps_loss")) t.eps_loss = get_field<double>(j, "eps_loss");
  if (j.contains("B")) t.t0_threshold_fine = get_field<double>(j, "B");
  if (j.contains("tau")) t.tau = get_field<double>(j, "tau");
  if (j.contains("dictionary")) {
    const auto mode = j.at("dictionary").get<std::string>();
    if (mode == "standard_basis") {
      t.dictionary = DictionaryMode::StandardBasis;
    } else if (mode == "random_orthonormal") {
      t.dictionary = DictionaryMode::RandomOrthonormal;
    } else {
      throw ConfigError("unknown dictionary mode: " + mode);
    }
  }
  if (j.contains("screen_all_directions")) {
    t.screen_all_directions = j.at("screen_all_directions").get<bool>();
  }
  if (j.contains("eval_easy")) t.eval_easy = get_field<long>(j, "eval_easy");
  if (j.contains("eval_hard")) t.eval_hard = get_field<long>(j, "eval_hard");
  if (t.probe_every <= 0) throw ConfigError("training.probe_every must be positive");
  if (t.stop.max_steps < 0 || t.stop.budget < 0) throw ConfigError("stop rule steps must be >= 0");
  return t;
}

LabConfig lab_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  LabConfig cfg;
  json flat = j;
  if (flat.contains("training")) {
    cfg.training = training_from_json(flat.at("training"));
    flat.erase("training");
  }
  cfg.experiment = experiment_from_json(flat);
  return cfg;
}

LabConfig load_lab_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse config file " + path + ": " + e.what());
  }
  try {
    return lab_config_from_json(j);
  } catch (const json::exception& e) {
    throw ConfigError("malformed config file " + path + ": " + e.what());
  }
}

void save_lab_config(const LabConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write config file: " + path);
  out << to_json(cfg).dump(2) << '\n';
}

LabConfig desk_preset() {
  LabConfig cfg;
  auto& e = cfg.experiment;
  e.d = 128;
  e.P = 64;
  e.k_plus = e.k_minus = 8;
  e.s_star = 4;
  e.s_dagger = 2;
  e.iota = 0.05;
  e.iota_dag_lower = 0.4;
  e.iota_dag_upper = 0.8;
  e.sigma_zeta = 0.02;
  e.sigma_zeta_star = 0.3;
  e.sigma_0 = 0.01;
  e.c_0 = 0.05;
  // At m = 1024 the asymptotic sqrt(4 + 2 c_0) leaves no lucky neurons. 1.1
  // gives a few per feature, each clear of the other features; 1.2 gives about
  // one per subclass net without crossing B at initialization.
  e.c_b_coarse = 1.1;
  e.c_b_fine = 1.2;
  e.eta = 0.5;
  e.N = 320;
  e.m = 1024;
  e.m_sub = 256;
  e.bias_decay_divisor = 20.0;
  e.seed = 1;

  auto& t = cfg.training;
  t.granularity = Granularity::Coarse;
  t.stop = StopRule::steps(3000);
  t.probe_every = 10;
  t.eps_loss = 0.05;
  t.t0_threshold_fine = 0.4;
  t.tau = -1.0;
  t.eval_easy = 4000;
  t.eval_hard = 4000;
  return cfg;
}

LabConfig paper_asymptotic_preset(int d) {
  LabConfig cfg = desk_preset();
  auto& e = cfg.experiment;
  const double dd = d;
  const double logd = std::log(dd);
  e.d = d;
  e.k_plus = e.k_minus = std::max(1, static_cast<int>(std::floor(std::pow(dd, 0.4))));
  e.s_star = std::max(1, static_cast<int>(std::ceil(logd)));
  e.s_dagger = 1;
  e.iota = 1.0 / logd;
  e.iota_dag_lower = 1.0 / std::pow(logd, 4);
  e.iota_dag_upper = std::max(e.iota_dag_lower, 1.0 / (e.s_dagger * logd));
  e.sigma_zeta = 1.0 / (std::pow(logd, 10) * std::sqrt(dd));
  e.sigma_zeta_star = 1.0 / logd;
  e.c_0 = 0.05;
  e.c_b_coarse = std::sqrt(4.0 + 2.0 * e.c_0);
  e.c_b_fine = std::sqrt(2.0 + 2.0 * e.c_0);
  e.sigma_0 = 1.0 / (dd * dd * dd * e.s_star * logd);
  e.eta = e.sigma_0;
  e.P = std::max(e.s_star * 4, static_cast<int>(std::ceil(std::pow(logd, 2) / e.sigma_zeta)));
  e.m = static_cast<int>(std::ceil(std::pow(dd, 2.0 + 2.0 * e.c_0)));
  e.m_sub = static_cast<int>(std::ceil(std::pow(dd, 1.0 + 2.0 * e.c_0)));
  const int two_k = 2 * e.k_plus;
  const auto n_min = static_cast<int>(std::ceil(logd * e.k_plus * dd));
  e.N = ((n_min + two_k - 1) / two_k) * two_k;
  e.bias_decay_divisor = std::pow(logd, 5);
  cfg.training.eps_loss = 1.0 / std::pow(logd, 5);
  cfg.training.tau = 1.0 / std::pow(logd, 5);
  return cfg;
}

LabConfig preset(std::string_view name) {
  if (name == "desk") return desk_preset();
  if (name == "paper-asymptotic") return paper_asymptotic_preset();
  throw ConfigError("unknown preset: " + std::string(name));
}

std::uint64_t config_hash(const LabConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string to_string(Granularity g) { return g == Granularity::Coarse ? "coarse" : "fine"; }

Granularity granularity_from_string(std::string_view s) {
  if (s == "coarse") return Granularity::Coarse;
  if (s == "fine") return Granularity::Fine;
  throw std::invalid_argument("unknown granularity: " + std::string(s));
}

}  // namespace granlab
