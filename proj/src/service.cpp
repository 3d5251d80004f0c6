#include "dashlab/service.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "dashlab/errors.hpp"

namespace dashlab {

struct LiveSessionManager::Experiment {
    ExperimentConfig config;
    ExperimentContext context;
};

struct LiveSessionManager::Session {
    std::mutex lock;
    std::string id;
    const Experiment* experiment = nullptr;
    SessionConfig config;
    SessionState state = SessionState::Tutorial;
    int cursor = 1;  // next trialnum
    std::vector<TrialRecord> records;
    std::vector<RationaleRecord> rationales;
    std::vector<std::string> lines;
    std::filesystem::path file;
};

namespace {

std::string hex16(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::vector<std::string> conditionsFor(ExperimentKind kind)
{
    if (kind == ExperimentKind::Exp1) {
        return {std::string(toString(Visualization::AllocationRule)),
                std::string(toString(Visualization::Curves)),
                std::string(toString(Visualization::Heatmap))};
    }
    return {std::string(toString(TrainingCondition::TrueCost)),
            std::string(toString(TrainingCondition::HypotheticalCurves)),
            std::string(toString(TrainingCondition::Combined))};
}

int totalTrials() { return kBlocks * kTrialsPerBlock; }

// Position of the trial the cursor points at.
std::pair<int, int> position(int trialnum)
{
    return {(trialnum - 1) / kTrialsPerBlock + 1, (trialnum - 1) % kTrialsPerBlock + 1};
}

}  // namespace

std::string_view toString(SessionState state)
{
    switch (state) {
    case SessionState::Tutorial: return "tutorial";
    case SessionState::Bidding: return "bidding";
    case SessionState::Rationale: return "rationale";
    case SessionState::Done: return "done";
    }
    return "unknown";
}

int ServiceError::status() const
{
    switch (kind_) {
    case Kind::NotFound: return 404;
    case Kind::Conflict: return 409;
    case Kind::Gone: return 410;
    case Kind::Validation: return 422;
    }
    return 500;
}

std::string_view ServiceError::code() const
{
    switch (kind_) {
    case Kind::NotFound: return "not_found";
    case Kind::Conflict: return "conflict";
    case Kind::Gone: return "gone";
    case Kind::Validation: return "validation";
    }
    return "internal";
}

BalancedAssigner::BalancedAssigner(std::uint64_t seed, std::size_t arms) : seed_(seed), arms_(arms)
{
    if (arms == 0) throw ConfigError("assigner needs at least one arm");
}

std::size_t BalancedAssigner::next()
{
    const std::size_t slot = issued_ % arms_;
    if (slot == 0) {
        block_.resize(arms_);
        for (std::size_t i = 0; i < arms_; ++i) block_[i] = i;
        RandomStream stream(mixSeed(seed_, static_cast<std::uint64_t>(issued_ / arms_)));
        stream.shuffle(block_.begin(), block_.end());
    }
    ++issued_;
    return block_[slot];
}

std::string utcTimestamp()
{
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::system_clock::to_time_t(now);
    const auto millis =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                  static_cast<int>(millis));
    return buf;
}

std::filesystem::path resolveDataDir(const std::filesystem::path& fallback)
{
    if (const char* env = std::getenv(kDataDirEnv); env != nullptr && *env != '\0') return env;
    return fallback;
}

LiveSessionManager::LiveSessionManager(std::filesystem::path dataDir,
                                       std::map<std::string, ExperimentConfig> experiments,
                                       Clock clock)
    : dataDir_(std::move(dataDir)), clock_(clock ? std::move(clock) : Clock(utcTimestamp))
{
    for (auto& [id, config] : experiments) {
        ExperimentContext context(config.stimuli, config.cost);
        experiments_.emplace(id, std::make_unique<Experiment>(
                                     Experiment{std::move(config), std::move(context)}));
    }
    std::filesystem::create_directories(dataDir_);
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dataDir_)) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) replay(f);
}

LiveSessionManager::~LiveSessionManager() = default;

void LiveSessionManager::replay(const std::filesystem::path& file)
{
    std::string content;
    {
        std::ifstream in(file, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        content = ss.str();
    }
    // A line without its newline was cut short by a crash mid-write.
    const auto lastNewline = content.rfind('\n');
    const std::size_t complete = lastNewline == std::string::npos ? 0 : lastNewline + 1;
    if (complete < content.size()) {
        content.resize(complete);
        std::filesystem::resize_file(file, complete);
    }
    std::istringstream in(content);
    std::string line;
    if (!std::getline(in, line)) return;

    const Json header = Json::parse(line);
    if (header.value("schema", "") != kSessionSchema)
        throw ConfigError("session file " + file.string() + " lacks a session header");
    const auto experimentId = header.at("experimentId").get<std::string>();
    auto exp = experiments_.find(experimentId);
    if (exp == experiments_.end())
        throw ConfigError("session file " + file.string() + " names unknown experiment " + experimentId);

    auto session = std::make_shared<Session>();
    session->id = header.at("sessionId").get<std::string>();
    session->experiment = exp->second.get();
    session->config = sessionConfigFromJson(header.at("config"));
    session->file = file;
    session->lines.push_back(line);

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const Json j = Json::parse(line);
        const auto schema = j.value("schema", "");
        if (schema == kTrialSchema) {
            auto record = trialRecordFromJson(j);
            if (record.trialnum != session->cursor)
                throw ConfigError("session file " + file.string() + " has trials out of order");
            session->records.push_back(std::move(record));
            ++session->cursor;
            session->state = (session->cursor - 1) % kTrialsPerBlock == 0 ? SessionState::Rationale
                                                                           : SessionState::Bidding;
        } else if (schema == kRationaleSchema) {
            session->rationales.push_back(rationaleRecordFromJson(j));
            session->state = session->cursor > totalTrials() ? SessionState::Done : SessionState::Bidding;
        } else {
            throw ConfigError("session file " + file.string() + " has an unknown line");
        }
        session->lines.push_back(line);
    }

    {
        std::lock_guard lock(assignLock_);
        const auto seed = header.at("assignmentSeed").get<std::uint64_t>();
        const auto index = header.at("assignmentIndex").get<std::size_t>();
        auto& assigner = assigners_
                             .try_emplace({experimentId, seed},
                                          mixSeed(seed, hashTag(experimentId)))
                             .first->second;
        while (assigner.issued() <= index) assigner.next();
    }
    std::unique_lock lock(sessionsLock_);
    sessions_[session->id] = std::move(session);
}

std::shared_ptr<LiveSessionManager::Session> LiveSessionManager::find(const std::string& sessionId) const
{
    std::shared_lock lock(sessionsLock_);
    auto it = sessions_.find(sessionId);
    if (it == sessions_.end())
        throw ServiceError(ServiceError::Kind::NotFound, "unknown session " + sessionId);
    return it->second;
}

void LiveSessionManager::append(Session& session, const Json& line)
{
    const std::string text = line.dump();
    std::ofstream out(session.file, std::ios::binary | std::ios::app);
    out << text << '\n';
    out.flush();
    if (!out) throw std::runtime_error("failed to persist to " + session.file.string());
    session.lines.push_back(text);
}

CreatedSession LiveSessionManager::createSession(const std::string& experimentId,
                                                 std::uint64_t assignmentSeed)
{
    auto exp = experiments_.find(experimentId);
    if (exp == experiments_.end())
        throw ServiceError(ServiceError::Kind::NotFound, "unknown experiment " + experimentId);
    const auto& config = exp->second->config;
    const auto conditions = conditionsFor(config.experiment);

    auto session = std::make_shared<Session>();
    session->experiment = exp->second.get();
    std::size_t index = 0;
    {
        std::lock_guard lock(assignLock_);
        auto& assigner =
            assigners_
                .try_emplace({experimentId, assignmentSeed},
                             mixSeed(assignmentSeed, hashTag(experimentId)), conditions.size())
                .first->second;
        index = assigner.issued();
        const std::size_t arm = assigner.next();
        const std::uint64_t sessionSeed =
            mixSeed(assignmentSeed, {hashTag(experimentId), static_cast<std::uint64_t>(index)});
        session->id = experimentId + "-" + hex16(mixSeed(sessionSeed, hashTag("session-id")));
        session->config = makeSessionConfig(config.experiment, config.stimuli, conditions[arm],
                                            session->id, sessionSeed);
        session->file = dataDir_ / (session->id + ".jsonl");
        if (std::filesystem::exists(session->file))
            throw ServiceError(ServiceError::Kind::Conflict, "session " + session->id + " exists");

        Json header = Json::object();
        header["schema"] = kSessionSchema;
        header["sessionId"] = session->id;
        header["experimentId"] = experimentId;
        header["assignmentSeed"] = assignmentSeed;
        header["assignmentIndex"] = index;
        header["config"] = toJson(session->config);
        header["createdAt"] = clock_();
        append(*session, header);
    }
    CreatedSession created{session->id, session->config};
    std::unique_lock lock(sessionsLock_);
    sessions_[session->id] = std::move(session);
    return created;
}

TrialPrompt LiveSessionManager::getTrial(const std::string& sessionId)
{
    auto session = find(sessionId);
    std::lock_guard lock(session->lock);
    if (session->state == SessionState::Done)
        throw ServiceError(ServiceError::Kind::Gone, "session finished");
    if (session->state == SessionState::Rationale)
        throw ServiceError(ServiceError::Kind::Conflict, "rationale pending");
    if (session->state == SessionState::Tutorial) session->state = SessionState::Bidding;

    const auto [block, t] = position(session->cursor);
    const BlockSpec& spec = session->config.blocks[static_cast<std::size_t>(block - 1)];
    const auto& entry =
        session->experiment->context.entry(spec.stimulusOrder[static_cast<std::size_t>(t - 1)]);
    return TrialPrompt{session->cursor,
                       block,
                       t,
                       spec.feedback,
                       spec.payoffMode,
                       makePayload(payloadFor(session->config, block, t), entry.stimulus,
                                   session->experiment->context.cost())};
}

BidFeedback LiveSessionManager::submitBid(const std::string& sessionId, int trialnum, double bid)
{
    auto session = find(sessionId);
    std::lock_guard lock(session->lock);
    if (session->state == SessionState::Done)
        throw ServiceError(ServiceError::Kind::Gone, "session finished");
    if (session->state != SessionState::Bidding)
        throw ServiceError(ServiceError::Kind::Conflict,
                           "not accepting bids in state " + std::string(toString(session->state)));
    if (trialnum != session->cursor)
        throw ServiceError(ServiceError::Kind::Conflict,
                           "expected trial " + std::to_string(session->cursor) + ", got " +
                               std::to_string(trialnum));
    if (!std::isfinite(bid) || bid < 0.0)
        throw ServiceError(ServiceError::Kind::Validation, "bid must be a finite number >= 0");

    const auto [block, t] = position(trialnum);
    RandomStream outcomeStream(trialStreamSeed(session->config, "outcome", trialnum));
    TrialRecord record =
        recordTrial(session->config, session->experiment->context, block, t, bid, outcomeStream);
    record.timestamp = clock_();
    append(*session, toJson(record));

    session->records.push_back(record);
    ++session->cursor;
    session->state = t == kTrialsPerBlock ? SessionState::Rationale : SessionState::Bidding;

    BidFeedback fb{trialnum, record.outcome, std::nullopt, false, session->state};
    if (record.feedback == Feedback::PayoffPlusInferredCost) {
        fb.inferredCost = record.inferredCostBR;
        fb.inferredCostOutOfRange = record.inferredCostOutOfRange;
    }
    return fb;
}

RationaleAck LiveSessionManager::submitRationale(const std::string& sessionId, const std::string& text)
{
    auto session = find(sessionId);
    std::lock_guard lock(session->lock);
    if (session->state != SessionState::Rationale)
        throw ServiceError(ServiceError::Kind::Conflict, "no block awaiting a rationale");

    RationaleRecord r;
    r.participantId = session->config.participantId;
    r.block = (session->cursor - 1) / kTrialsPerBlock;
    r.text = text;
    r.empty = text.find_first_not_of(" \t\r\n") == std::string::npos;
    r.timestamp = clock_();
    append(*session, toJson(r));
    session->rationales.push_back(r);
    session->state = session->cursor > totalTrials() ? SessionState::Done : SessionState::Bidding;
    return RationaleAck{r.block, r.empty, session->state};
}

SessionState LiveSessionManager::state(const std::string& sessionId) const
{
    auto session = find(sessionId);
    std::lock_guard lock(session->lock);
    return session->state;
}

std::vector<TrialRecord> LiveSessionManager::records(const std::string& sessionId) const
{
    auto session = find(sessionId);
    std::lock_guard lock(session->lock);
    return session->records;
}

std::vector<RationaleRecord> LiveSessionManager::rationales(const std::string& sessionId) const
{
    auto session = find(sessionId);
    std::lock_guard lock(session->lock);
    return session->rationales;
}

std::string LiveSessionManager::exportJsonl(const std::string& sessionId) const
{
    auto session = find(sessionId);
    std::lock_guard lock(session->lock);
    std::string out;
    for (const auto& line : session->lines) {
        out += line;
        out += '\n';
    }
    return out;
}

std::size_t LiveSessionManager::sessionCount() const
{
    std::shared_lock lock(sessionsLock_);
    return sessions_.size();
}

namespace {

ApiResponse jsonResponse(int status, const Json& body)
{
    return ApiResponse{status, "application/json", body.dump()};
}

ApiResponse errorResponse(int status, std::string_view code, const std::string& message)
{
    Json err = Json::object();
    err["code"] = code;
    err["message"] = message;
    Json body = Json::object();
    body["schema"] = kApiSchema;
    body["error"] = std::move(err);
    return jsonResponse(status, body);
}

Json parseBody(const std::string& body)
{
    if (body.empty()) return Json::object();
    Json j = Json::parse(body);
    if (!j.is_object()) throw ServiceError(ServiceError::Kind::Validation, "body must be an object");
    return j;
}

Json apiEnvelope(const std::string& sessionId, SessionState state)
{
    Json j = Json::object();
    j["schema"] = kApiSchema;
    j["sessionId"] = sessionId;
    j["state"] = toString(state);
    return j;
}

std::vector<std::string> splitPath(const std::string& path)
{
    std::vector<std::string> parts;
    std::string part;
    std::istringstream in(path.substr(0, path.find('?')));
    while (std::getline(in, part, '/'))
        if (!part.empty()) parts.push_back(part);
    return parts;
}

}  // namespace

ApiResponse handleApi(LiveSessionManager& manager, const std::string& method,
                      const std::string& path, const std::string& body)
{
    try {
        const auto parts = splitPath(path);
        if (method == "GET" && parts == std::vector<std::string>{"health"}) {
            Json j = Json::object();
            j["schema"] = kApiSchema;
            j["status"] = "ok";
            return jsonResponse(200, j);
        }
        if (parts.empty() || parts[0] != "sessions" || parts.size() > 3)
            return errorResponse(404, "not_found", "no route for " + path);

        if (parts.size() == 1) {
            if (method != "POST") return errorResponse(405, "method_not_allowed", method);
            const Json req = parseBody(body);
            if (!req.contains("experimentId") || !req["experimentId"].is_string())
                throw ServiceError(ServiceError::Kind::Validation, "experimentId is required");
            std::uint64_t seed = 0;
            if (req.contains("assignmentSeed")) {
                if (!req["assignmentSeed"].is_number_unsigned())
                    throw ServiceError(ServiceError::Kind::Validation,
                                       "assignmentSeed must be a non-negative integer");
                seed = req["assignmentSeed"].get<std::uint64_t>();
            }
            const auto created = manager.createSession(req["experimentId"].get<std::string>(), seed);
            Json j = apiEnvelope(created.sessionId, SessionState::Tutorial);
            j["experiment"] = toString(created.config.experiment);
            j["condition"] = created.config.condition;
            j["blockOrder"] = created.config.blockOrder;
            return jsonResponse(201, j);
        }

        const std::string& id = parts[1];
        const std::string action = parts.size() == 3 ? parts[2] : "";
        if (action == "trial" && method == "GET") {
            const auto prompt = manager.getTrial(id);
            Json j = apiEnvelope(id, manager.state(id));
            j["trialnum"] = prompt.trialnum;
            j["block"] = prompt.block;
            j["trialInBlock"] = prompt.trialInBlock;
            j["feedbackCondition"] = toString(prompt.feedback);
            j["payoffMode"] = toString(prompt.payoffMode);
            j["showsInferredCost"] = prompt.feedback == Feedback::PayoffPlusInferredCost;
            j["payload"] = toJson(prompt.payload);
            return jsonResponse(200, j);
        }
        if (action == "bid" && method == "POST") {
            const Json req = parseBody(body);
            if (!req.contains("trialnum") || !req["trialnum"].is_number_integer())
                throw ServiceError(ServiceError::Kind::Validation, "trialnum is required");
            if (!req.contains("bid") || !req["bid"].is_number())
                throw ServiceError(ServiceError::Kind::Validation, "bid must be a number");
            const auto fb = manager.submitBid(id, req["trialnum"].get<int>(), req["bid"].get<double>());
            Json j = apiEnvelope(id, fb.state);
            j["trialnum"] = fb.trialnum;
            j["payoff"] = fb.outcome.payoff;
            if (fb.outcome.won) j["won"] = *fb.outcome.won;
            if (fb.outcome.opponentBid) j["opponentBid"] = *fb.outcome.opponentBid;
            if (fb.inferredCost) {
                j["inferredCost"] = *fb.inferredCost;
                j["inferredCostOutOfRange"] = fb.inferredCostOutOfRange;
            }
            return jsonResponse(200, j);
        }
        if (action == "rationale" && method == "POST") {
            const Json req = parseBody(body);
            if (!req.contains("text") || !req["text"].is_string())
                throw ServiceError(ServiceError::Kind::Validation, "text must be a string");
            const auto ack = manager.submitRationale(id, req["text"].get<std::string>());
            Json j = apiEnvelope(id, ack.state);
            j["block"] = ack.block;
            j["empty"] = ack.empty;
            return jsonResponse(200, j);
        }
        if (action == "export" && method == "GET")
            return ApiResponse{200, "application/x-ndjson", manager.exportJsonl(id)};
        return errorResponse(404, "not_found", "no route for " + method + " " + path);
    } catch (const ServiceError& e) {
        return errorResponse(e.status(), e.code(), e.what());
    } catch (const nlohmann::json::exception& e) {
        return errorResponse(400, "bad_request", e.what());
    } catch (const DomainError& e) {
        return errorResponse(422, "validation", e.what());
    } catch (const std::exception& e) {
        return errorResponse(500, "internal", e.what());
    }
}

int serve(LiveSessionManager& manager, const ServeOptions& options)
{
    httplib::Server server;
    auto forward = [&manager](const httplib::Request& req, httplib::Response& res) {
        const auto r = handleApi(manager, req.method, req.path, req.body);
        res.status = r.status;
        res.set_content(r.body, r.contentType.c_str());
    };
    server.Get(R"(/health|/sessions/.*)", forward);
    server.Post(R"(/sessions(/.*)?)", forward);
    if (options.staticDir && !server.set_mount_point("/", options.staticDir->string())) {
        std::fprintf(stderr, "static directory %s not found\n", options.staticDir->c_str());
        return 1;
    }
    std::fprintf(stderr, "listening on %s:%d, data in %s\n", options.host.c_str(), options.port,
                 manager.dataDir().c_str());
    return server.listen(options.host, options.port) ? 0 : 1;
}

}  // namespace dashlab
