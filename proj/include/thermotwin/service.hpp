#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "thermotwin/config.hpp"
#include "thermotwin/pipeline.hpp"
#include "thermotwin/runs.hpp"
#include "thermotwin/simulator.hpp"

namespace httplib {
class Server;
}

namespace twin {

/// Block-averaged, u8-quantised frame for the event stream. Pixel value v maps
/// to min + v / 255 * (max - min).
struct Heatmap {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  float min = 0.0f;
  float max = 0.0f;
  std::vector<std::uint8_t> pixels;  // row-major
};

Heatmap make_heatmap(const Frame& frame, std::uint32_t max_width, std::uint32_t max_height);

std::string base64_encode(const std::uint8_t* data, std::size_t size);

struct SseEvent {
  std::string type;
  std::string data;  // one line of JSON
};

/// "event: <type>\ndata: <data>\n\n"
std::string format_sse(const SseEvent& e);

/// One client's bounded queue. When a publish finds it full, the oldest events
/// are dropped to make room for a final `overflow` event and the subscription
/// closes; the client sees what was still queued, then the overflow notice.
class Subscription {
 public:
  explicit Subscription(Index capacity) : capacity_(capacity) {}

  /// Waits up to `timeout` for the next event. Empty when nothing arrived or
  /// the subscription is closed and drained.
  std::optional<SseEvent> next(std::chrono::milliseconds timeout);
  bool closed() const;
  bool overflowed() const;
  Index dropped() const;
  void close();

 private:
  friend class EventHub;
  void push(const SseEvent& e);

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<SseEvent> queue_;
  Index capacity_;
  Index dropped_ = 0;
  bool closed_ = false;
  bool overflowed_ = false;
};

/// Fans events out to subscribers without ever waiting on them.
class EventHub {
 public:
  explicit EventHub(Index client_buffer) : capacity_(client_buffer) {}

  std::shared_ptr<Subscription> subscribe();
  void publish(const SseEvent& e);
  void close_all();
  Index clients() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::shared_ptr<Subscription>> subs_;
  Index capacity_;
};

struct ReplaySource {
  std::filesystem::path run_dir;
};

/// Simulator or replayed run, pipeline, run recorder, HTTP/SSE front end.
class TwinService {
 public:
  TwinService(TwinConfig cfg, std::shared_ptr<const TwinModel> model);
  /// Replays a persisted run with the model and config stored next to it.
  TwinService(TwinConfig cfg, ReplaySource source);
  ~TwinService();
  TwinService(const TwinService&) = delete;
  TwinService& operator=(const TwinService&) = delete;

  /// Binds cfg.service.addr (port 0 picks a free port) and starts the loop.
  /// Throws PortInUse when the address is taken.
  void start();
  /// Stops the loop, flushes the run and closes every client. Idempotent.
  void stop();
  /// Blocks until the loop ends on its own (max_frames, end of replay) or stop().
  void wait();
  /// Like wait() with a limit; true when the loop has ended.
  bool wait_for(std::chrono::milliseconds limit);
  bool running() const noexcept { return running_.load(); }

  int port() const noexcept { return port_; }
  std::string run_id() const;
  Index frames() const noexcept { return frames_.load(); }

  // Programmatic counterparts of the REST handlers. Results mirror the HTTP
  // status codes: {status, body}.
  struct Reply {
    int status = 200;
    nlohmann::json body;
  };
  Reply status() const;
  Reply model_info() const;
  Reply set_voltage(const nlohmann::json& body);
  Reply add_anomaly(const nlohmann::json& body);
  Reply remove_anomaly(int id);
  Reply set_thresholds(const nlohmann::json& body);
  /// Queues a forecast and returns a ticket (202), or 409 on short history.
  Reply request_prediction(const std::string& profile);
  Reply prediction(long ticket, bool with_field) const;
  Reply runs() const;
  Reply run(const std::string& id) const;

  EventHub& events() noexcept { return hub_; }

 private:
  struct Command {
    enum class Kind { Voltage, Inject, Remove, Thresholds, Snapshot };
    explicit Command(Kind k) : kind(k) {}
    Kind kind;
    double volts = 0.0;
    AnomalySpec spec;
    int id = 0;
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    long ticket = 0;
    nlohmann::json log;
  };
  struct Ticket {
    std::string profile;
    std::string state = "pending";  // pending | ready | failed
    std::optional<PredictionBundle> bundle;
    nlohmann::json error;
  };
  struct Job {
    long ticket = 0;
    PredictionProfile profile;
    HistorySnapshot history;
  };
  struct Published {
    Frame frame;
    nlohmann::json verdict;
    Index frames = 0;
  };

  void setup_routes();
  void loop();
  void worker();
  void apply(Command& c);
  void enqueue(Command c);
  void publish_frame(const Frame& f, const FrameVerdict& v);
  Reply reply_error(int status, Errc code, const std::string& what) const;

  TwinConfig cfg_;
  std::shared_ptr<const TwinModel> model_;
  std::optional<ReplaySource> replay_;
  std::optional<Plate> plate_;
  std::unique_ptr<Runtime> runtime_;
  std::unique_ptr<RunRecorder> recorder_;
  std::unique_ptr<httplib::Server> http_;
  EventHub hub_;

  std::thread http_thread_;
  std::thread loop_thread_;
  std::thread worker_thread_;
  std::atomic<bool> running_{false};
  std::atomic<bool> stopping_{false};
  std::atomic<Index> frames_{0};
  int port_ = 0;
  std::chrono::steady_clock::time_point started_;

  mutable std::mutex cmd_mu_;
  std::condition_variable cmd_cv_;
  std::deque<Command> commands_;
  int next_anomaly_id_ = 1;
  std::map<int, int> plate_ids_;  // service id -> simulator id, once applied
  std::map<int, nlohmann::json> active_;  // service id -> spec

  mutable std::mutex job_mu_;
  std::condition_variable job_cv_;
  std::deque<Job> jobs_;
  bool refit_busy_ = false;
  std::map<long, Ticket> tickets_;
  long next_ticket_ = 1;

  mutable std::mutex pub_mu_;
  std::shared_ptr<const Published> published_;
  double voltage_ = 0.0;
  double gamma1_ = 0.0;
  double gamma2_ = 0.0;

  mutable std::mutex done_mu_;
  std::condition_variable done_cv_;
  bool loop_done_ = false;
};

}  // namespace twin
