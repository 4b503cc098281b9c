#include "thermotwin/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace twin {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kMaxVolts = 240.0;
constexpr std::size_t kMaxTickets = 64;

json error_body(Errc code, const std::string& what) {
  return {{"error", std::string(to_string(code))}, {"message", what}};
}

bool number_field(const json& j, const char* key, double& out) {
  if (!j.contains(key)) return false;
  if (!j.at(key).is_number()) return false;
  out = j.at(key).get<double>();
  return std::isfinite(out);
}

}  // namespace

// -- heatmap and events ---------------------------------------------------------

Heatmap make_heatmap(const Frame& frame, std::uint32_t max_width, std::uint32_t max_height) {
  require(max_width >= 1 && max_height >= 1, Errc::BadConfig, "heatmap size must be positive");
  require(frame.size() == Index{frame.width} * frame.height && frame.size() > 0,
          Errc::DimensionMismatch, "frame size does not match its dimensions");
  // Smallest integer block that fits both limits keeps the aspect ratio.
  const std::uint32_t block =
      std::max({1u, (frame.width + max_width - 1) / max_width,
                (frame.height + max_height - 1) / max_height});
  Heatmap h;
  h.width = (frame.width + block - 1) / block;
  h.height = (frame.height + block - 1) / block;
  std::vector<float> avg(static_cast<std::size_t>(h.width) * h.height);
  for (std::uint32_t bi = 0; bi < h.height; ++bi) {
    for (std::uint32_t bj = 0; bj < h.width; ++bj) {
      double sum = 0.0;
      int n = 0;
      for (std::uint32_t i = bi * block; i < std::min(frame.height, (bi + 1) * block); ++i) {
        for (std::uint32_t j = bj * block; j < std::min(frame.width, (bj + 1) * block); ++j) {
          sum += frame.values(Index{i} * frame.width + j);
          ++n;
        }
      }
      avg[static_cast<std::size_t>(bi) * h.width + bj] = static_cast<float>(sum / n);
    }
  }
  const auto [lo, hi] = std::minmax_element(avg.begin(), avg.end());
  h.min = *lo;
  h.max = *hi;
  const float span = h.max - h.min;
  h.pixels.resize(avg.size());
  for (std::size_t k = 0; k < avg.size(); ++k) {
    const float u = span > 0.0f ? (avg[k] - h.min) / span : 0.0f;
    h.pixels[k] = static_cast<std::uint8_t>(std::lround(std::clamp(u, 0.0f, 1.0f) * 255.0f));
  }
  return h;
}

std::string base64_encode(const std::uint8_t* data, std::size_t size) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((size + 2) / 3 * 4);
  for (std::size_t i = 0; i < size; i += 3) {
    const std::uint32_t b0 = data[i];
    const std::uint32_t b1 = i + 1 < size ? data[i + 1] : 0;
    const std::uint32_t b2 = i + 2 < size ? data[i + 2] : 0;
    const std::uint32_t v = (b0 << 16) | (b1 << 8) | b2;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += i + 1 < size ? kAlphabet[(v >> 6) & 63] : '=';
    out += i + 2 < size ? kAlphabet[v & 63] : '=';
  }
  return out;
}

std::string format_sse(const SseEvent& e) { return "event: " + e.type + "\ndata: " + e.data + "\n\n"; }

std::optional<SseEvent> Subscription::next(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
  if (queue_.empty()) return std::nullopt;
  SseEvent e = std::move(queue_.front());
  queue_.pop_front();
  return e;
}

bool Subscription::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

bool Subscription::overflowed() const {
  std::lock_guard lock(mu_);
  return overflowed_;
}

Index Subscription::dropped() const {
  std::lock_guard lock(mu_);
  return dropped_;
}

void Subscription::push(const SseEvent& e) {
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    if (static_cast<Index>(queue_.size()) < capacity_) {
      queue_.push_back(e);
    } else {
      queue_.pop_front();
      ++dropped_;
      overflowed_ = true;
      closed_ = true;
      queue_.push_back(
          {"overflow", json{{"error", std::string(to_string(Errc::ClientOverflow))},
                            {"message", "client fell behind; connection closed"},
                            {"buffer", capacity_}}
                           .dump()});
    }
  }
  cv_.notify_all();
}

void Subscription::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

std::shared_ptr<Subscription> EventHub::subscribe() {
  auto s = std::make_shared<Subscription>(capacity_);
  std::lock_guard lock(mu_);
  subs_.push_back(s);
  return s;
}

void EventHub::publish(const SseEvent& e) {
  std::lock_guard lock(mu_);
  std::erase_if(subs_, [](const std::shared_ptr<Subscription>& s) { return s->closed(); });
  for (const auto& s : subs_) s->push(e);
}

void EventHub::close_all() {
  std::lock_guard lock(mu_);
  for (const auto& s : subs_) s->close();
  subs_.clear();
}

Index EventHub::clients() const {
  std::lock_guard lock(mu_);
  return static_cast<Index>(std::count_if(subs_.begin(), subs_.end(),
                                          [](const auto& s) { return !s->closed(); }));
}

// -- service --------------------------------------------------------------------

TwinService::TwinService(TwinConfig cfg, std::shared_ptr<const TwinModel> model)
    : cfg_(std::move(cfg)), hub_(cfg_.service.client_buffer) {
  cfg_.validate();
  require(model != nullptr, Errc::BadConfig, "service needs a model");
  require(model->width == cfg_.simulator.width && model->height == cfg_.simulator.height,
          Errc::DimensionMismatch, "model grid does not match the simulator grid");
  // Detector settings come from the service config so they can be tuned
  // without retraining; the recorded model carries them for replay.
  auto m = std::make_shared<TwinModel>(*model);
  m->detector = cfg_.detector;
  m->validate();
  model_ = std::move(m);
  plate_.emplace(cfg_.simulator);
  runtime_ = std::make_unique<Runtime>(model_, cfg_.prediction);
  gamma1_ = cfg_.detector.gamma1;
  gamma2_ = cfg_.detector.gamma2;
}

TwinService::TwinService(TwinConfig cfg, ReplaySource source)
    : cfg_(std::move(cfg)), replay_(std::move(source)), hub_(cfg_.service.client_buffer) {
  cfg_.service.validate();
  const TwinConfig recorded = load_config(replay_->run_dir / "config.json");
  cfg_.simulator = recorded.simulator;
  cfg_.detector = recorded.detector;
  cfg_.prediction = recorded.prediction;
  model_ = std::make_shared<const TwinModel>(load_model(replay_->run_dir / "model.twin"));
  Therm1Reader probe(replay_->run_dir / "frames.therm");
  require(probe.width() == model_->width && probe.height() == model_->height,
          Errc::DimensionMismatch, "recorded frames do not match the recorded model");
  runtime_ = std::make_unique<Runtime>(model_, cfg_.prediction);
  gamma1_ = model_->detector.gamma1;
  gamma2_ = model_->detector.gamma2;
}

TwinService::~TwinService() { stop(); }

std::string TwinService::run_id() const { return recorder_ ? recorder_->id() : std::string(); }

void TwinService::start() {
  require(!running_.load() && !http_, Errc::BadConfig, "service already started");
  RunOptions opt;
  opt.mode = replay_ ? "replay" : "live";
  opt.extra = {{"seed", cfg_.simulator.seed}};
  if (replay_) opt.extra["source"] = replay_->run_dir.string();
  recorder_ = std::make_unique<RunRecorder>(cfg_.service.runs_dir, cfg_, *model_, opt);

  http_ = std::make_unique<httplib::Server>();
  // Every event-stream client holds a worker, so leave room for REST calls.
  http_->new_task_queue = [] { return new httplib::ThreadPool(32); };
  // SO_REUSEADDR only: the library default adds SO_REUSEPORT, which would let a
  // second service silently share the port.
  http_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  setup_routes();
  const auto [host, port] = cfg_.service.host_port();
  if (port == 0) {
    port_ = http_->bind_to_any_port(host);
    require(port_ > 0, Errc::PortInUse, "cannot bind " + host);
  } else {
    require(http_->bind_to_port(host, port), Errc::PortInUse,
            "address " + cfg_.service.addr + " is in use or not bindable");
    port_ = port;
  }
  started_ = Clock::now();
  running_ = true;
  http_thread_ = std::thread([this] { http_->listen_after_bind(); });
  worker_thread_ = std::thread([this] { worker(); });
  loop_thread_ = std::thread([this] { loop(); });
}

void TwinService::stop() {
  stopping_ = true;
  cmd_cv_.notify_all();
  job_cv_.notify_all();
  if (loop_thread_.joinable()) loop_thread_.join();
  if (worker_thread_.joinable()) worker_thread_.join();
  hub_.close_all();
  if (http_) http_->stop();
  if (http_thread_.joinable()) http_thread_.join();
  if (recorder_) recorder_->finish();
  running_ = false;
}

void TwinService::wait() {
  std::unique_lock lock(done_mu_);
  done_cv_.wait(lock, [&] { return loop_done_; });
}

bool TwinService::wait_for(std::chrono::milliseconds limit) {
  std::unique_lock lock(done_mu_);
  return done_cv_.wait_for(lock, limit, [&] { return loop_done_; });
}

void TwinService::enqueue(Command c) {
  {
    std::lock_guard lock(cmd_mu_);
    commands_.push_back(std::move(c));
  }
  cmd_cv_.notify_all();
}

void TwinService::apply(Command& c) {
  switch (c.kind) {
    case Command::Kind::Voltage:
      plate_->set_voltage(c.volts);
      break;
    case Command::Kind::Inject: {
      const int plate_id = plate_->inject(c.spec);
      std::lock_guard lock(cmd_mu_);
      plate_ids_[c.id] = plate_id;
      if (c.spec.kind == AnomalyKind::Splash) active_.erase(c.id);
      break;
    }
    case Command::Kind::Remove: {
      int plate_id = 0;
      {
        std::lock_guard lock(cmd_mu_);
        const auto it = plate_ids_.find(c.id);
        if (it != plate_ids_.end()) {
          plate_id = it->second;
          plate_ids_.erase(it);
        }
      }
      if (plate_id != 0) plate_->remove(plate_id);
      break;
    }
    case Command::Kind::Thresholds:
      runtime_->detector().set_thresholds(c.gamma1, c.gamma2);
      break;
    case Command::Kind::Snapshot: {
      Job job;
      job.ticket = c.ticket;
      {
        std::lock_guard lock(job_mu_);
        job.profile = cfg_.prediction.profile(tickets_.at(c.ticket).profile);
      }
      job.history = runtime_->snapshot();
      {
        std::lock_guard lock(job_mu_);
        jobs_.push_back(std::move(job));
      }
      job_cv_.notify_all();
      return;
    }
  }
  if (!c.log.is_null()) recorder_->record_control(c.log);
}

void TwinService::loop() {
  std::unique_ptr<Therm1Reader> reader;
  if (replay_) reader = std::make_unique<Therm1Reader>(replay_->run_dir / "frames.therm");
  const Index limit = reader ? reader->frames() : std::numeric_limits<Index>::max();
  const Index max_frames = cfg_.service.max_frames > 0 ? cfg_.service.max_frames : limit;
  std::vector<ThresholdChange> retunes;
  if (replay_) retunes = read_threshold_changes(replay_->run_dir);
  std::size_t next_retune = 0;
  const auto t0 = Clock::now();
  Frame frame;
  FrameVerdict verdict;
  std::deque<Command> pending;

  for (Index k = 0; k < std::min(limit, max_frames) && !stopping_; ++k) {
    {
      std::lock_guard lock(cmd_mu_);
      pending.swap(commands_);
    }
    for (Command& c : pending) {
      try {
        apply(c);
      } catch (const Error&) {
        // Requests are validated on arrival; a late failure drops the command.
      }
    }
    pending.clear();
    // Recorded retunes go through the same path as live ones, so this run's
    // own controls.jsonl replays too.
    for (; next_retune < retunes.size() && retunes[next_retune].frame <= k; ++next_retune) {
      Command c{Command::Kind::Thresholds};
      c.gamma1 = retunes[next_retune].gamma1;
      c.gamma2 = retunes[next_retune].gamma2;
      c.log = {{"type", "thresholds"}, {"gamma1", c.gamma1}, {"gamma2", c.gamma2}};
      apply(c);
    }

    if (reader) {
      reader->read(k, frame);
    } else {
      frame = plate_->render(frame_seed(cfg_.simulator.seed, 0, static_cast<std::uint64_t>(k)));
    }
    runtime_->process_frame(frame, verdict);
    recorder_->record(frame, verdict);
    publish_frame(frame, verdict);
    if (plate_) plate_->step(cfg_.simulator.dt);
    frames_ = k + 1;

    if (cfg_.prediction.sliding_refit &&
        runtime_->coefficients().size() >=
            cfg_.prediction.profile(cfg_.prediction.default_profile).state_frames()) {
      std::unique_lock lock(job_mu_);
      if (!refit_busy_) {
        refit_busy_ = true;
        const long ticket = next_ticket_++;
        tickets_[ticket].profile = cfg_.prediction.default_profile;
        lock.unlock();
        Command c{Command::Kind::Snapshot};
        c.ticket = ticket;
        apply(c);
      }
    }

    // Pace to the wall clock; replays follow the recorded timestamps.
    if (cfg_.service.frame_period > 0.0) {
      double offset = static_cast<double>(k + 1) * cfg_.service.frame_period;
      if (reader && k + 1 < reader->frames()) {
        offset = reader->timestamps()[static_cast<std::size_t>(k + 1)] - reader->timestamps()[0];
      }
      const auto due = t0 + std::chrono::duration_cast<Clock::duration>(
                                std::chrono::duration<double>(offset / cfg_.service.speed));
      std::unique_lock lock(cmd_mu_);
      cmd_cv_.wait_until(lock, due, [&] { return stopping_.load(); });
    }
  }
  recorder_->finish();
  hub_.publish({"end", json{{"run_id", recorder_->id()}, {"frames", frames_.load()}}.dump()});
  {
    std::lock_guard lock(done_mu_);
    loop_done_ = true;
  }
  done_cv_.notify_all();
}

void TwinService::worker() {
  while (true) {
    Job job;
    {
      std::unique_lock lock(job_mu_);
      job_cv_.wait(lock, [&] { return stopping_.load() || !jobs_.empty(); });
      if (jobs_.empty()) return;
      job = std::move(jobs_.front());
      jobs_.pop_front();
    }
    Ticket result;
    result.profile = job.profile.name;
    try {
      result.bundle = predict(*model_, job.history, job.profile);
      result.state = "ready";
    } catch (const Error& e) {
      result.state = "failed";
      result.error = error_body(e.code(), e.what());
    }
    json event = result.bundle ? to_json(*result.bundle, false) : result.error;
    event["ticket"] = job.ticket;
    event["state"] = result.state;
    {
      std::lock_guard lock(job_mu_);
      tickets_[job.ticket] = std::move(result);
      while (tickets_.size() > kMaxTickets) tickets_.erase(tickets_.begin());
      refit_busy_ = false;
    }
    hub_.publish({"prediction", event.dump()});
  }
}

void TwinService::publish_frame(const Frame& f, const FrameVerdict& v) {
  const Heatmap h =
      make_heatmap(f, cfg_.service.heatmap_max_width, cfg_.service.heatmap_max_height);
  const json frame_event = {{"frame", v.frame},
                            {"t", f.t},
                            {"dt", model_->detector.dt},
                            {"source_width", f.width},
                            {"source_height", f.height},
                            {"width", h.width},
                            {"height", h.height},
                            {"min", h.min},
                            {"max", h.max},
                            {"pixels", base64_encode(h.pixels.data(), h.pixels.size())}};
  json verdict = to_json(v);
  verdict["latency_ms"] = v.latency_ms;
  verdict["gamma1"] = runtime_->detector().config().gamma1;
  verdict["gamma2"] = runtime_->detector().config().gamma2;

  auto pub = std::make_shared<Published>();
  pub->frame = f;
  pub->verdict = verdict;
  pub->frames = v.frame + 1;
  {
    std::lock_guard lock(pub_mu_);
    published_ = std::move(pub);
    if (plate_) voltage_ = plate_->voltage();
    gamma1_ = runtime_->detector().config().gamma1;
    gamma2_ = runtime_->detector().config().gamma2;
  }
  hub_.publish({"frame", frame_event.dump()});
  hub_.publish({"verdict", verdict.dump()});
}

TwinService::Reply TwinService::reply_error(int status, Errc code, const std::string& what) const {
  return {status, error_body(code, what)};
}

TwinService::Reply TwinService::status() const {
  std::shared_ptr<const Published> pub;
  json out;
  {
    std::lock_guard lock(pub_mu_);
    pub = published_;
    out["voltage"] = replay_ ? json(nullptr) : json(voltage_);
    out["thresholds"] = {{"gamma1", gamma1_}, {"gamma2", gamma2_}};
  }
  out["run_id"] = run_id();
  out["mode"] = replay_ ? "replay" : "live";
  {
    std::lock_guard lock(done_mu_);
    out["running"] = running_.load() && !loop_done_;
  }
  out["frames"] = frames_.load();
  out["uptime_s"] = std::chrono::duration<double>(Clock::now() - started_).count();
  out["clients"] = hub_.clients();
  if (pub) {
    const json& v = pub->verdict;
    out["last_verdict"] = {{"frame", v["frame"]},
                           {"t", v["t"]},
                           {"e_max_m", v["report"]["e_max_m"]},
                           {"wma", v["report"]["wma"]},
                           {"grad_wma", v["report"]["grad_wma"]},
                           {"triggered_level", v["report"]["triggered_level"]},
                           {"triggered_gradient", v["report"]["triggered_gradient"]},
                           {"anomaly_pixels", v["report"]["anomaly_pixels"].size()},
                           {"sensor_fault", v["sensor_fault"]},
                           {"latency_ms", v["latency_ms"]}};
  } else {
    out["last_verdict"] = nullptr;
  }
  out["model"] = {{"width", model_->width},
                  {"height", model_->height},
                  {"rank", model_->basis.rank()},
                  {"sensors", model_->plan.indices},
                  {"energy_ratio", model_->info.value("energy_ratio", json(nullptr))}};
  {
    std::lock_guard lock(cmd_mu_);
    json anomalies = json::array();
    for (const auto& [id, spec] : active_) {
      json a = spec;
      a["id"] = id;
      anomalies.push_back(a);
    }
    out["anomalies"] = anomalies;
  }
  if (recorder_) {
    out["persisting"] = recorder_->persisting();
    out["persist_error"] = recorder_->error() ? json(*recorder_->error()) : json(nullptr);
  }
  return {200, out};
}

TwinService::Reply TwinService::model_info() const {
  const TwinModel& m = *model_;
  json sensors = json::array();
  for (Index i : m.plan.indices) {
    sensors.push_back({{"pixel", i}, {"row", i / m.width}, {"col", i % m.width}});
  }
  json profiles = json::array();
  for (const PredictionProfile& p : cfg_.prediction.profiles) profiles.push_back(to_json(p));
  return {200,
          {{"width", m.width},
           {"height", m.height},
           {"rank", m.basis.rank()},
           {"singular_values", std::vector<double>(m.basis.singular_values.data(),
                                                   m.basis.singular_values.data() +
                                                       m.basis.singular_values.size())},
           {"sensors", sensors},
           {"detector", to_json(m.detector)},
           {"profiles", profiles},
           {"default_profile", cfg_.prediction.default_profile},
           {"info", m.info}}};
}

TwinService::Reply TwinService::set_voltage(const json& body) {
  if (replay_) return reply_error(409, Errc::BadConfig, "replay runs take no plate controls");
  double volts = 0.0;
  if (!body.is_object() || !number_field(body, "volts", volts) || volts < 0.0 ||
      volts > kMaxVolts) {
    return reply_error(422, Errc::BadConfig,
                       "volts must be a number in [0, " + std::to_string(int(kMaxVolts)) + "]");
  }
  Command c{Command::Kind::Voltage};
  c.volts = volts;
  c.log = {{"type", "voltage"}, {"volts", volts}};
  enqueue(std::move(c));
  return {200, {{"volts", volts}, {"applies_from_frame", frames_.load()}}};
}

TwinService::Reply TwinService::add_anomaly(const json& body) {
  if (replay_) return reply_error(409, Errc::BadConfig, "replay runs take no plate controls");
  if (!body.is_object()) return reply_error(422, Errc::BadConfig, "body must be a JSON object");
  AnomalySpec spec;
  try {
    spec.kind = anomaly_kind_from_string(body.value("kind", std::string("splash")));
  } catch (const Error& e) {
    return reply_error(422, e.code(), e.what());
  } catch (const json::exception&) {
    return reply_error(422, Errc::BadConfig, "kind must be a string");
  }
  if (!number_field(body, "cx", spec.cx) || !number_field(body, "cy", spec.cy)) {
    return reply_error(422, Errc::BadConfig, "cx and cy are required numbers");
  }
  for (auto [key, field] : {std::pair{"radius", &spec.radius},
                            std::pair{"magnitude", &spec.magnitude},
                            std::pair{"emissivity", &spec.emissivity}}) {
    if (body.contains(key) && !number_field(body, key, *field)) {
      return reply_error(422, Errc::BadConfig, std::string(key) + " must be a finite number");
    }
  }
  try {
    validate_anomaly(cfg_.simulator, spec);
  } catch (const Error& e) {
    return reply_error(422, e.code(), e.what());
  }
  Command c{Command::Kind::Inject};
  c.spec = spec;
  json described = {{"kind", to_string(spec.kind)}, {"cx", spec.cx},
                    {"cy", spec.cy},                {"radius", spec.radius},
                    {"magnitude", spec.magnitude},  {"emissivity", spec.emissivity}};
  {
    std::lock_guard lock(cmd_mu_);
    c.id = next_anomaly_id_++;
    active_[c.id] = described;
  }
  described["id"] = c.id;
  c.log = described;
  c.log["type"] = "anomaly";
  enqueue(c);
  return {201, described};
}

TwinService::Reply TwinService::remove_anomaly(int id) {
  if (replay_) return reply_error(409, Errc::BadConfig, "replay runs take no plate controls");
  {
    std::lock_guard lock(cmd_mu_);
    if (active_.erase(id) == 0) {
      return reply_error(404, Errc::IndexOutOfRange, "no active anomaly " + std::to_string(id));
    }
  }
  Command c{Command::Kind::Remove};
  c.id = id;
  c.log = {{"type", "remove_anomaly"}, {"id", id}};
  enqueue(std::move(c));
  return {200, {{"id", id}, {"removed", true}}};
}

TwinService::Reply TwinService::set_thresholds(const json& body) {
  double g1 = 0.0;
  double g2 = 0.0;
  if (!body.is_object() || !number_field(body, "gamma1", g1) || !number_field(body, "gamma2", g2) ||
      g1 <= 0.0 || g2 <= 0.0) {
    return reply_error(422, Errc::BadConfig, "gamma1 and gamma2 must be positive numbers");
  }
  Command c{Command::Kind::Thresholds};
  c.gamma1 = g1;
  c.gamma2 = g2;
  c.log = {{"type", "thresholds"}, {"gamma1", g1}, {"gamma2", g2}};
  enqueue(std::move(c));
  return {200, {{"gamma1", g1}, {"gamma2", g2}}};
}

TwinService::Reply TwinService::request_prediction(const std::string& profile_name) {
  const std::string name = profile_name.empty() ? cfg_.prediction.default_profile : profile_name;
  const PredictionProfile* profile = nullptr;
  try {
    profile = &cfg_.prediction.profile(name);
  } catch (const Error& e) {
    return reply_error(422, e.code(), e.what());
  }
  const Index have = frames_.load();
  if (have < profile->state_frames()) {
    json body = error_body(Errc::InsufficientHistory,
                           "profile '" + name + "' needs " +
                               std::to_string(profile->state_frames()) + " frames");
    body["required"] = profile->state_frames();
    body["available"] = have;
    return {409, body};
  }
  long ticket = 0;
  {
    std::lock_guard lock(job_mu_);
    ticket = next_ticket_++;
    tickets_[ticket].profile = name;
  }
  Command c{Command::Kind::Snapshot};
  c.ticket = ticket;
  enqueue(std::move(c));
  return {202, {{"ticket", ticket}, {"state", "pending"}, {"profile", name}}};
}

TwinService::Reply TwinService::prediction(long ticket, bool with_field) const {
  std::lock_guard lock(job_mu_);
  const auto it = tickets_.find(ticket);
  if (it == tickets_.end()) {
    return reply_error(404, Errc::IndexOutOfRange, "unknown ticket " + std::to_string(ticket));
  }
  const Ticket& t = it->second;
  if (t.state == "pending") {
    return {202, {{"ticket", ticket}, {"state", "pending"}, {"profile", t.profile}}};
  }
  if (t.state == "failed") {
    json body = t.error;
    body["ticket"] = ticket;
    body["state"] = "failed";
    const bool short_history = body.value("error", "") == to_string(Errc::InsufficientHistory);
    return {short_history ? 409 : 500, body};
  }
  json body = to_json(*t.bundle, with_field);
  body["ticket"] = ticket;
  body["state"] = "ready";
  return {200, body};
}

TwinService::Reply TwinService::runs() const {
  return {200, json(list_runs(cfg_.service.runs_dir))};
}

TwinService::Reply TwinService::run(const std::string& id) const {
  if (id.empty() || id.find('/') != std::string::npos || id.find("..") != std::string::npos) {
    return reply_error(404, Errc::Io, "no such run");
  }
  const auto dir = cfg_.service.runs_dir / id;
  try {
    json body = load_run_summary(dir);
    json controls = json::array();
    if (std::ifstream in(dir / "controls.jsonl"); in) {
      for (std::string line; std::getline(in, line);) {
        if (!line.empty()) controls.push_back(json::parse(line, nullptr, false));
      }
    }
    body["controls"] = controls;
    return {200, body};
  } catch (const Error& e) {
    return reply_error(404, e.code(), e.what());
  }
}

void TwinService::setup_routes() {
  using httplib::Request;
  using httplib::Response;
  auto send = [](Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto parse = [](const Request& req, json& out) {
    out = json::parse(req.body, nullptr, false);
    return !out.is_discarded();
  };
  auto bad_json = [send](Response& res) {
    send(res, {400, error_body(Errc::BadConfig, "request body is not valid JSON")});
  };

  http_->Get("/api/status", [this, send](const Request&, Response& res) { send(res, status()); });
  http_->Get("/api/model", [this, send](const Request&, Response& res) { send(res, model_info()); });
  http_->Get("/api/frame/latest", [this, send](const Request&, Response& res) {
    std::shared_ptr<const Published> pub;
    {
      std::lock_guard lock(pub_mu_);
      pub = published_;
    }
    if (!pub) {
      send(res, {404, error_body(Errc::NoData, "no frame processed yet")});
      return;
    }
    const Frame& f = pub->frame;
    res.set_header("X-Frame-Width", std::to_string(f.width));
    res.set_header("X-Frame-Height", std::to_string(f.height));
    res.set_header("X-Frame-Index", std::to_string(pub->frames - 1));
    char t[32];
    std::snprintf(t, sizeof t, "%.17g", f.t);
    res.set_header("X-Frame-Time", t);
    res.set_content(std::string(reinterpret_cast<const char*>(f.values.data()),
                                static_cast<std::size_t>(f.size()) * sizeof(float)),
                    "application/octet-stream");
  });
  http_->Post("/api/control/voltage", [this, send, parse, bad_json](const Request& req,
                                                                    Response& res) {
    json body;
    if (!parse(req, body)) return bad_json(res);
    send(res, set_voltage(body));
  });
  http_->Post("/api/control/anomaly", [this, send, parse, bad_json](const Request& req,
                                                                    Response& res) {
    json body;
    if (!parse(req, body)) return bad_json(res);
    send(res, add_anomaly(body));
  });
  http_->Delete(R"(/api/control/anomaly/(\d+))", [this, send](const Request& req, Response& res) {
    send(res, remove_anomaly(std::stoi(req.matches[1].str())));
  });
  http_->Post("/api/control/thresholds", [this, send, parse, bad_json](const Request& req,
                                                                       Response& res) {
    json body;
    if (!parse(req, body)) return bad_json(res);
    send(res, set_thresholds(body));
  });
  http_->Get("/api/prediction", [this, send](const Request& req, Response& res) {
    if (req.has_param("ticket")) {
      long ticket = 0;
      try {
        ticket = std::stol(req.get_param_value("ticket"));
      } catch (const std::exception&) {
        send(res, {422, error_body(Errc::BadConfig, "ticket must be an integer")});
        return;
      }
      const bool field = req.get_param_value("field") != "0";
      send(res, prediction(ticket, field));
      return;
    }
    send(res, request_prediction(req.get_param_value("profile")));
  });
  http_->Get("/api/runs", [this, send](const Request&, Response& res) { send(res, runs()); });
  http_->Get(R"(/api/runs/([^/]+))", [this, send](const Request& req, Response& res) {
    send(res, run(req.matches[1].str()));
  });
  http_->Get("/events", [this](const Request&, Response& res) {
    auto sub = hub_.subscribe();
    res.set_header("Cache-Control", "no-cache");
    auto greeted = std::make_shared<bool>(false);
    res.set_chunked_content_provider(
        "text/event-stream",
        [sub, greeted](std::size_t, httplib::DataSink& sink) {
          if (!*greeted) {
            *greeted = true;
            static constexpr char kHello[] = ": connected\n\n";
            return sink.write(kHello, sizeof(kHello) - 1);
          }
          if (auto e = sub->next(std::chrono::milliseconds(200))) {
            const std::string s = format_sse(*e);
            return sink.write(s.data(), s.size());
          }
          if (sub->closed()) {
            sink.done();
            return true;
          }
          return sink.is_writable();
        },
        [sub](bool) { sub->close(); });
  });
}

}  // namespace twin
