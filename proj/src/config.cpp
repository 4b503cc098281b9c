#include "thermotwin/config.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <set>

namespace twin {

using nlohmann::json;

void PodConfig::validate() const {
  require(rank >= 1, Errc::BadConfig, "pod rank must be >= 1");
  require(sensors >= rank, Errc::BadConfig, "pod sensors must be >= rank");
}

RpcaParams RpcaConfig::params() const {
  RpcaParams p = profile == "camera" ? RpcaParams::camera() : RpcaParams::automatic();
  if (lambda) p.lambda = lambda;
  if (mu) p.mu = mu;
  p.tol = tol;
  p.max_iter = max_iter;
  return p;
}

void RpcaConfig::validate() const {
  require(profile == "auto" || profile == "camera", Errc::BadConfig,
          "rpca profile must be 'auto' or 'camera'");
  require(window >= 2, Errc::BadConfig, "rpca window must be >= 2");
  params().validate();
}

const PredictionProfile& PredictionConfig::profile(const std::string& name) const {
  for (const PredictionProfile& p : profiles) {
    if (p.name == name) return p;
  }
  throw Error(Errc::BadConfig, "unknown prediction profile '" + name + "'");
}

Index PredictionConfig::state_capacity() const {
  Index cap = 1;
  for (const PredictionProfile& p : profiles) cap = std::max(cap, p.state_frames());
  return cap;
}

Index PredictionConfig::anomaly_capacity() const {
  Index cap = 1;
  for (const PredictionProfile& p : profiles) cap = std::max(cap, p.anomaly_frames());
  return cap;
}

void PredictionConfig::validate() const {
  require(!profiles.empty(), Errc::BadConfig, "at least one prediction profile is required");
  std::set<std::string> names;
  for (const PredictionProfile& p : profiles) {
    p.validate();
    require(names.insert(p.name).second, Errc::BadConfig, "duplicate profile '" + p.name + "'");
  }
  profile(default_profile);
  require(anomaly_max_pixels >= 1, Errc::BadConfig, "anomaly_max_pixels must be >= 1");
}

std::pair<std::string, int> ServiceConfig::host_port() const {
  const auto colon = addr.rfind(':');
  require(colon != std::string::npos && colon > 0 && colon + 1 < addr.size(), Errc::BadConfig,
          "address '" + addr + "' must look like host:port");
  const std::string port_text = addr.substr(colon + 1);
  char* end = nullptr;
  const long port = std::strtol(port_text.c_str(), &end, 10);
  require(end && *end == '\0' && port >= 0 && port <= 65535, Errc::BadConfig,
          "address '" + addr + "' has an invalid port");
  return {addr.substr(0, colon), static_cast<int>(port)};
}

void ServiceConfig::validate() const {
  host_port();
  require(frame_period >= 0.0 && speed > 0.0, Errc::BadConfig,
          "frame_period must be >= 0 and speed > 0");
  require(client_buffer >= 1, Errc::BadConfig, "client_buffer must be >= 1");
  require(heatmap_max_width >= 1 && heatmap_max_height >= 1, Errc::BadConfig,
          "heatmap size must be positive");
  require(max_frames >= 0, Errc::BadConfig, "max_frames must be >= 0");
}

void TwinConfig::validate() const {
  simulator.validate();
  detector.validate();
  prediction.validate();
  rpca.validate();
  service.validate();
  pod.validate();
  require(svr.c > 0.0 && svr.epsilon >= 0.0 && svr.k_sigma > 0.0 && svr.tol > 0.0,
          Errc::BadConfig, "svr needs c > 0, epsilon >= 0, k_sigma > 0, tol > 0");
  require(!svr.gamma || *svr.gamma > 0.0, Errc::BadConfig, "svr gamma must be > 0");
  require(svr.max_train >= 2, Errc::BadConfig, "svr max_train must be >= 2");
  require(std::abs(detector.dt - simulator.dt) < 1e-12, Errc::BadConfig,
          "detector dt must equal the simulator frame interval");
}

namespace {

/// Reads known keys from one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    require(j_.is_object(), Errc::BadConfig, "config section '" + name_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      if constexpr (std::is_same_v<T, std::filesystem::path>) {
        out = j_.at(key).get<std::string>();
      } else {
        out = j_.at(key).get<T>();
      }
    } catch (const json::exception& e) {
      throw Error(Errc::BadConfig, name_ + "." + key + ": " + e.what());
    }
  }

  void get_optional(const char* key, std::optional<double>& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    double v = 0.0;
    get(key, v);
    out = v;
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      require(seen_.contains(item.key()), Errc::BadConfig,
              "unknown config key '" + name_ + "." + item.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json to_json(const PredictionProfile& p) {
  return {{"name", p.name},           {"w", p.w},
          {"l", p.l},                 {"anomaly_w", p.anomaly_w},
          {"state_rank", p.state_rank}, {"anomaly_rank", p.anomaly_rank}};
}

PredictionProfile profile_from_json(const json& j) {
  PredictionProfile p;
  Section s(j, "prediction.profiles[]");
  s.get("name", p.name);
  s.get("w", p.w);
  s.get("l", p.l);
  s.get("anomaly_w", p.anomaly_w);
  s.get("state_rank", p.state_rank);
  s.get("anomaly_rank", p.anomaly_rank);
  s.finish();
  p.validate();
  return p;
}

json to_json(const DetectorConfig& c) {
  return {{"m", c.m},   {"gamma1", c.gamma1}, {"gamma2", c.gamma2},
          {"N", c.N},   {"dt", c.dt},         {"gradient_warmup", c.gradient_warmup}};
}

DetectorConfig detector_config_from_json(const json& j) {
  DetectorConfig c;
  Section s(j, "detector");
  s.get("m", c.m);
  s.get("gamma1", c.gamma1);
  s.get("gamma2", c.gamma2);
  s.get("N", c.N);
  s.get("dt", c.dt);
  s.get("gradient_warmup", c.gradient_warmup);
  s.finish();
  c.validate();
  return c;
}

TwinConfig config_from_json(const json& j) {
  TwinConfig cfg;
  Section root(j, "config");

  if (const json* sj = root.child("simulator")) {
    SimulatorConfig& c = cfg.simulator;
    Section s(*sj, "simulator");
    s.get("width", c.width);
    s.get("height", c.height);
    s.get("alpha", c.alpha);
    s.get("h_loss", c.h_loss);
    s.get("t_env", c.t_env);
    s.get("resistance", c.resistance);
    s.get("heat_capacity", c.heat_capacity);
    s.get("noise_sigma", c.noise_sigma);
    s.get("dt", c.dt);
    s.get("coil_turns", c.coil_turns);
    s.get("coil_margin", c.coil_margin);
    s.get("coil_spread", c.coil_spread);
    s.get("coil_floor", c.coil_floor);
    s.get("emissivity_strips", c.emissivity_strips);
    s.get("strip_emissivity", c.strip_emissivity);
    s.get("voltages", c.voltages);
    s.get("settle_tol", c.settle_tol);
    s.get("cool_tol", c.cool_tol);
    s.get("min_frames", c.min_frames);
    s.get("max_frames", c.max_frames);
    s.get("seed", c.seed);
    s.finish();
  }
  if (const json* dj = root.child("detector")) cfg.detector = detector_config_from_json(*dj);
  if (const json* pj = root.child("prediction")) {
    PredictionConfig& c = cfg.prediction;
    Section s(*pj, "prediction");
    if (const json* profiles = s.child("profiles")) {
      require(profiles->is_array(), Errc::BadConfig, "prediction.profiles must be an array");
      c.profiles.clear();
      for (const json& p : *profiles) c.profiles.push_back(profile_from_json(p));
    }
    s.get("default_profile", c.default_profile);
    s.get("sliding_refit", c.sliding_refit);
    s.get("anomaly_max_pixels", c.anomaly_max_pixels);
    s.finish();
  }
  if (const json* rj = root.child("rpca")) {
    RpcaConfig& c = cfg.rpca;
    Section s(*rj, "rpca");
    s.get("profile", c.profile);
    s.get_optional("lambda", c.lambda);
    s.get_optional("mu", c.mu);
    s.get("tol", c.tol);
    s.get("max_iter", c.max_iter);
    s.get("window", c.window);
    s.get("preclean", c.preclean);
    s.finish();
  }
  if (const json* sj = root.child("service")) {
    ServiceConfig& c = cfg.service;
    Section s(*sj, "service");
    s.get("addr", c.addr);
    s.get("runs_dir", c.runs_dir);
    s.get("model", c.model);
    s.get("frame_period", c.frame_period);
    s.get("speed", c.speed);
    s.get("client_buffer", c.client_buffer);
    s.get("heatmap_max_width", c.heatmap_max_width);
    s.get("heatmap_max_height", c.heatmap_max_height);
    s.get("max_frames", c.max_frames);
    s.finish();
  }
  if (const json* vj = root.child("svr")) {
    ImputerConfig& c = cfg.svr;
    Section s(*vj, "svr");
    s.get("c", c.c);
    s.get("epsilon", c.epsilon);
    std::string kernel = to_string(c.kernel);
    s.get("kernel", kernel);
    require(kernel == "gaussian" || kernel == "linear", Errc::BadConfig,
            "svr.kernel must be 'gaussian' or 'linear'");
    c.kernel = kernel == "linear" ? Kernel::Type::Linear : Kernel::Type::Gaussian;
    s.get_optional("gamma", c.gamma);
    s.get("k_sigma", c.k_sigma);
    s.get("max_train", c.max_train);
    s.get("tol", c.tol);
    s.finish();
  }
  if (const json* oj = root.child("pod")) {
    PodConfig& c = cfg.pod;
    Section s(*oj, "pod");
    s.get("rank", c.rank);
    s.get("sensors", c.sensors);
    s.get("center", c.center);
    s.finish();
  }
  root.finish();
  cfg.validate();
  return cfg;
}

json to_json(const TwinConfig& cfg) {
  const SimulatorConfig& sim = cfg.simulator;
  json profiles = json::array();
  for (const PredictionProfile& p : cfg.prediction.profiles) profiles.push_back(to_json(p));
  return {
      {"simulator",
       {{"width", sim.width},
        {"height", sim.height},
        {"alpha", sim.alpha},
        {"h_loss", sim.h_loss},
        {"t_env", sim.t_env},
        {"resistance", sim.resistance},
        {"heat_capacity", sim.heat_capacity},
        {"noise_sigma", sim.noise_sigma},
        {"dt", sim.dt},
        {"coil_turns", sim.coil_turns},
        {"coil_margin", sim.coil_margin},
        {"coil_spread", sim.coil_spread},
        {"coil_floor", sim.coil_floor},
        {"emissivity_strips", sim.emissivity_strips},
        {"strip_emissivity", sim.strip_emissivity},
        {"voltages", sim.voltages},
        {"settle_tol", sim.settle_tol},
        {"cool_tol", sim.cool_tol},
        {"min_frames", sim.min_frames},
        {"max_frames", sim.max_frames},
        {"seed", sim.seed}}},
      {"detector", to_json(cfg.detector)},
      {"prediction",
       {{"profiles", profiles},
        {"default_profile", cfg.prediction.default_profile},
        {"sliding_refit", cfg.prediction.sliding_refit},
        {"anomaly_max_pixels", cfg.prediction.anomaly_max_pixels}}},
      {"rpca",
       {{"profile", cfg.rpca.profile},
        {"lambda", optional_json(cfg.rpca.lambda)},
        {"mu", optional_json(cfg.rpca.mu)},
        {"tol", cfg.rpca.tol},
        {"max_iter", cfg.rpca.max_iter},
        {"window", cfg.rpca.window},
        {"preclean", cfg.rpca.preclean}}},
      {"service",
       {{"addr", cfg.service.addr},
        {"runs_dir", cfg.service.runs_dir.string()},
        {"model", cfg.service.model.string()},
        {"frame_period", cfg.service.frame_period},
        {"speed", cfg.service.speed},
        {"client_buffer", cfg.service.client_buffer},
        {"heatmap_max_width", cfg.service.heatmap_max_width},
        {"heatmap_max_height", cfg.service.heatmap_max_height},
        {"max_frames", cfg.service.max_frames}}},
      {"svr",
       {{"c", cfg.svr.c},
        {"epsilon", cfg.svr.epsilon},
        {"kernel", to_string(cfg.svr.kernel)},
        {"gamma", optional_json(cfg.svr.gamma)},
        {"k_sigma", cfg.svr.k_sigma},
        {"max_train", cfg.svr.max_train},
        {"tol", cfg.svr.tol}}},
      {"pod", {{"rank", cfg.pod.rank}, {"sensors", cfg.pod.sensors}, {"center", cfg.pod.center}}},
  };
}

TwinConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::Io, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::BadConfig, path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const TwinConfig& cfg) {
  std::ofstream out(path);
  require(static_cast<bool>(out), Errc::Io, "cannot write config " + path.string());
  out << to_json(cfg).dump(2) << '\n';
  require(static_cast<bool>(out), Errc::DiskFull, "failed writing " + path.string());
}

TwinConfig config_from_environment() {
  TwinConfig cfg;
  if (const char* path = std::getenv("TWIN_CONFIG"); path && *path) cfg = load_config(path);
  if (const char* addr = std::getenv("TWIN_ADDR"); addr && *addr) cfg.service.addr = addr;
  cfg.validate();
  return cfg;
}

}  // namespace twin
