#include "confslate/service.hpp"

#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "confslate/error.hpp"

namespace confslate::service {

using nlohmann::json;
using session::Phase;
using session::Session;

namespace {

// Seeds are kept below 2^53 so browser clients can echo them back exactly.
constexpr std::uint64_t kSeedMask = (std::uint64_t{1} << 53) - 1;

bool teleop(Phase p) {
  return p == Phase::TeleopA || p == Phase::TeleopB;
}

std::uint64_t random_u64() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

}  // namespace

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ValidationError:
    case ErrorCode::SchemaError:
    case ErrorCode::InvalidConfidence:
    case ErrorCode::InvalidCommand:
    case ErrorCode::InvalidProbability:
    case ErrorCode::InvalidDistribution:
    case ErrorCode::OutOfOrderCommand:
      return 400;
    case ErrorCode::NotFound:
      return 404;
    case ErrorCode::ProtocolViolation:
    case ErrorCode::Conflict:
      return 409;
    default:
      return 500;
  }
}

json error_message(ErrorCode code, std::string_view message) {
  return {{"v", kWireVersion}, {"type", "error"}, {"code", std::string(to_string(code))}, {"message", message}};
}

struct SessionManager::Entry {
  std::mutex mutex;
  std::unique_ptr<Session> session;
  std::uint64_t seed = 0;
  Calibration calibration = Calibration::Well;
  std::string created_at;
  bool streaming = false;
  bool armed = false;  // the active segment's clock runs only once armed
  std::optional<std::int64_t> last_client_seq;
  std::vector<json> outbox;
  std::unique_ptr<std::ofstream> log;
  Phase seen_phase = Phase::TeleopA;
  int seen_counter = 0;

  json phase_message() const {
    return {{"v", kWireVersion},
            {"type", "phase"},
            {"phase", std::string(session::to_string(session->phase()))},
            {"trial", session->trial_number()},
            {"practice", session->practice()}};
  }

  json state_message() const {
    const auto* seg = session->active_segment();
    return {{"v", kWireVersion},
            {"type", "state"},
            {"tick", seg->tick()},
            {"robot", {{"x", seg->pose().x}, {"y", seg->pose().y}, {"theta", seg->pose().theta}}},
            {"remaining_ms", seg->remaining_ms()}};
  }

  // Queues a phase message whenever the session moved to a new phase or trial.
  void note_phase() {
    if (session->phase() != seen_phase || session->trial_counter() != seen_counter) {
      seen_phase = session->phase();
      seen_counter = session->trial_counter();
      armed = false;
      outbox.push_back(phase_message());
    }
  }

  json summary() const {
    json j = {{"v", kWireVersion},
              {"session_id", session->id()},
              {"seed", seed},
              {"dss_calibration", std::string(to_string(calibration))},
              {"phase", std::string(session::to_string(session->phase()))},
              {"trial", session->trial_number()},
              {"practice", session->practice()},
              {"n_records", session->records().size()},
              {"streaming", streaming},
              {"created_at", created_at}};
    if (const auto* seg = session->active_segment()) {
      j["tick"] = seg->tick();
      j["remaining_ms"] = seg->remaining_ms();
    }
    if (session->phase() == Phase::Done) {
      j["trial"] = session->config().n_trials;
      j["practice"] = false;
    }
    return j;
  }
};

SessionManager::SessionManager(ServiceOptions options) : options_(std::move(options)) {
  if (options_.log_dir) {
    std::filesystem::create_directories(*options_.log_dir);
  }
}

SessionManager::~SessionManager() = default;

std::shared_ptr<SessionManager::Entry> SessionManager::find(const std::string& id) const {
  std::shared_lock lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) {
    throw Error(ErrorCode::NotFound, fmt::format("no session \"{}\"", id));
  }
  return it->second;
}

std::size_t SessionManager::size() const {
  std::shared_lock lock(mutex_);
  return sessions_.size();
}

json SessionManager::create_session(const json& body) {
  static const std::set<std::string> known{"seed", "dss_calibration", "dss_accuracy", "config"};
  if (!body.is_object()) {
    throw Error(ErrorCode::ValidationError, "request body must be a JSON object");
  }
  for (const auto& [key, _] : body.items()) {
    if (!known.contains(key)) {
      throw Error(ErrorCode::ValidationError, fmt::format("unknown field \"{}\"", key));
    }
  }
  if (!body.contains("dss_calibration") || !body.at("dss_calibration").is_string()) {
    throw Error(ErrorCode::ValidationError, "dss_calibration must be \"well\" or \"poor\"");
  }
  const Calibration calibration = parse_calibration(body.at("dss_calibration").get<std::string>());
  double accuracy = 0.70;
  if (body.contains("dss_accuracy")) {
    if (!body.at("dss_accuracy").is_number()) {
      throw Error(ErrorCode::ValidationError, "dss_accuracy must be a number");
    }
    accuracy = body.at("dss_accuracy").get<double>();
  }
  std::uint64_t seed = 0;
  if (body.contains("seed")) {
    const auto& v = body.at("seed");
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw Error(ErrorCode::ValidationError, "seed must be a non-negative integer");
    }
    seed = body.at("seed").get<std::uint64_t>();
  } else {
    seed = random_u64() & kSeedMask;
  }
  session::SessionConfig config;
  if (body.contains("config")) {
    config = session::config_from_json(body.at("config"));
  }
  config.seed = seed;
  auto dss = builtin_dss(calibration, accuracy);
  dss.validate();

  auto entry = std::make_shared<Entry>();
  entry->seed = seed;
  entry->calibration = calibration;
  entry->created_at = options_.clock();

  std::string id;
  {
    std::unique_lock lock(mutex_);
    id = fmt::format("s{:04}-{:08x}", next_id_++, random_u64() & 0xffffffffULL);
  }
  if (options_.log_dir) {
    const auto path = *options_.log_dir / (id + ".jsonl");
    entry->log = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
    if (!*entry->log) {
      throw Error(ErrorCode::IoError, fmt::format("cannot write {}", path.string()));
    }
  }
  Entry* raw = entry.get();
  entry->session = std::make_unique<Session>(id, config, std::move(dss), options_.clock, [raw](const session::Event& e) {
    if (raw->log) {
      *raw->log << session::to_json(e).dump() << '\n';
      raw->log->flush();
    }
  });
  entry->seen_phase = entry->session->phase();
  entry->seen_counter = entry->session->trial_counter();

  json reply;
  {
    std::lock_guard entry_lock(entry->mutex);
    reply = entry->summary();
  }
  std::unique_lock lock(mutex_);
  sessions_.emplace(id, std::move(entry));
  return reply;
}

json SessionManager::status(const std::string& id) const {
  auto e = find(id);
  std::lock_guard lock(e->mutex);
  return e->summary();
}

json SessionManager::submit_inference(const std::string& id, const json& body) {
  auto e = find(id);
  std::lock_guard lock(e->mutex);
  if (!body.is_object() || !body.contains("stage") || !body.at("stage").is_string()) {
    throw Error(ErrorCode::ValidationError, "stage must be \"initial\", \"no_change\" or \"final\"");
  }
  const auto stage = body.at("stage").get<std::string>();
  auto& s = *e->session;
  json reply = {{"v", kWireVersion}};

  if (stage == "initial") {
    const Inference inf = session::inference_from_json(body);
    s.advance(session::InitialInference{inf});
    // The reveal is shown together with the response, so it is acknowledged here.
    s.advance(session::RevealAcknowledged{});
    reply["ai"] = session::to_json(*s.ai_inference());
  } else if (stage == "no_change") {
    s.advance(session::KeepDecision{});
  } else if (stage == "final") {
    const Inference inf = session::inference_from_json(body);
    if (s.phase() == Phase::ChangeDecision) {
      s.advance(session::ChangeRequested{});
    }
    s.advance(session::FinalInference{inf});
  } else {
    throw Error(ErrorCode::ValidationError, fmt::format("unknown stage \"{}\"", stage));
  }

  if (s.phase() == Phase::Resolution) {
    reply["resolved"] = {{"trial", s.trial_number()}, {"practice", s.practice()}};
    s.advance(session::NextTrial{});
  }
  e->note_phase();
  reply["phase"] = std::string(session::to_string(s.phase()));
  reply["trial"] = s.phase() == Phase::Done ? s.config().n_trials : s.trial_number();
  reply["practice"] = s.phase() == Phase::Done ? false : s.practice();
  return reply;
}

std::string SessionManager::records_csv(const std::string& id) const {
  auto e = find(id);
  std::lock_guard lock(e->mutex);
  std::ostringstream out;
  session::write_records_csv(out, e->session->records());
  return out.str();
}

std::vector<session::Event> SessionManager::events(const std::string& id) const {
  auto e = find(id);
  std::lock_guard lock(e->mutex);
  return e->session->log().events();
}

void SessionManager::attach_stream(const std::string& id) {
  auto e = find(id);
  std::lock_guard lock(e->mutex);
  if (e->streaming) {
    throw Error(ErrorCode::Conflict, fmt::format("session {} already has a stream", id));
  }
  e->streaming = true;
  e->armed = false;
  e->last_client_seq.reset();
  e->outbox.clear();
  e->outbox.push_back(e->phase_message());
}

void SessionManager::detach_stream(const std::string& id) {
  auto e = find(id);
  std::lock_guard lock(e->mutex);
  e->streaming = false;
  e->armed = false;
}

std::vector<json> SessionManager::on_stream_message(const std::string& id, const std::string& text) {
  auto e = find(id);
  std::lock_guard lock(e->mutex);
  auto& s = *e->session;

  json msg;
  try {
    msg = json::parse(text);
  } catch (const json::exception&) {
    return {error_message(ErrorCode::SchemaError, "message is not JSON")};
  }
  if (!msg.is_object() || !msg.contains("type") || !msg.at("type").is_string()) {
    return {error_message(ErrorCode::SchemaError, "message needs a string \"type\"")};
  }
  if (!msg.contains("v") || msg.at("v") != kWireVersion) {
    return {error_message(ErrorCode::SchemaError, "unsupported or missing \"v\"")};
  }
  const auto type = msg.at("type").get<std::string>();

  if (type == "ready") {
    std::vector<json> out{e->phase_message()};
    if (teleop(s.phase())) {
      e->armed = true;
      out.push_back(e->state_message());
    }
    return out;
  }
  if (type == "cmd") {
    if (!msg.contains("seq") || !msg.at("seq").is_number_integer() || !msg.contains("linear") ||
        !msg.at("linear").is_number() || !msg.contains("angular") || !msg.at("angular").is_number()) {
      return {error_message(ErrorCode::SchemaError, "cmd needs integer seq and numeric linear/angular")};
    }
    const auto seq = msg.at("seq").get<std::int64_t>();
    if (e->last_client_seq && seq <= *e->last_client_seq) {
      return {error_message(ErrorCode::OutOfOrderCommand,
                            fmt::format("seq {} does not follow {}", seq, *e->last_client_seq))};
    }
    if (!teleop(s.phase())) {
      return {error_message(ErrorCode::ProtocolViolation,
                            fmt::format("cmd is not allowed in phase {}", session::to_string(s.phase())))};
    }
    try {
      s.advance(session::Command{s.active_segment()->tick(), msg.at("linear").get<double>(),
                                 msg.at("angular").get<double>()});
    } catch (const Error& err) {
      return {error_message(err.code(), err.what())};
    }
    e->last_client_seq = seq;
    e->armed = true;
    return {};
  }
  return {error_message(ErrorCode::SchemaError, fmt::format("unknown message type \"{}\"", type))};
}

std::vector<json> SessionManager::poll(const std::string& id) {
  auto e = find(id);
  std::lock_guard lock(e->mutex);
  auto& s = *e->session;
  if (e->streaming && e->armed && teleop(s.phase())) {
    const auto* seg = s.active_segment();
    s.advance(session::Tick{seg->tick() + kStateEveryTicks});
    e->outbox.push_back(e->state_message());
    if (seg->finished()) {
      const bool goal = seg->end_reason() == sim::SegmentEnd::Goal;
      s.advance(session::SegmentComplete{});
      e->outbox.push_back(
          {{"v", kWireVersion}, {"type", "segment_end"}, {"reason", goal ? "goal" : "timeout"}});
    }
  }
  e->note_phase();
  std::vector<json> out;
  out.swap(e->outbox);
  return out;
}

}  // namespace confslate::service
