#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "dashlab/experiment.hpp"
#include "dashlab/records_io.hpp"

namespace dashlab {

inline constexpr const char* kApiSchema = "dashlab.api/1";
inline constexpr const char* kSessionSchema = "dashlab.session/1";
inline constexpr const char* kDataDirEnv = "DASHLAB_DATA_DIR";

enum class SessionState { Tutorial, Bidding, Rationale, Done };
std::string_view toString(SessionState state);

// Protocol error carrying its HTTP status.
class ServiceError : public std::runtime_error {
public:
    enum class Kind { NotFound, Conflict, Gone, Validation };
    ServiceError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }
    int status() const;
    std::string_view code() const;

private:
    Kind kind_;
};

// Conditions dealt in shuffled blocks of `arms`, so after any prefix the
// counts differ by at most one.
class BalancedAssigner {
public:
    BalancedAssigner(std::uint64_t seed, std::size_t arms = 3);
    std::size_t next();
    std::size_t issued() const { return issued_; }

private:
    std::uint64_t seed_;
    std::size_t arms_;
    std::size_t issued_ = 0;
    std::vector<std::size_t> block_;
};

struct CreatedSession {
    std::string sessionId;
    SessionConfig config;
};

struct TrialPrompt {
    int trialnum;
    int block;
    int trialInBlock;
    Feedback feedback;
    PayoffMode payoffMode;
    DashboardPayload payload;
};

struct BidFeedback {
    int trialnum;
    Outcome outcome;
    std::optional<double> inferredCost;  // payoff_plus_cost blocks only
    bool inferredCostOutOfRange = false;
    SessionState state;
};

struct RationaleAck {
    int block;
    bool empty;
    SessionState state;
};

// Live bidding sessions with append-only JSONL persistence, one file per session.
class LiveSessionManager {
public:
    using Clock = std::function<std::string()>;

    // Replays every session file found in dataDir.
    LiveSessionManager(std::filesystem::path dataDir,
                       std::map<std::string, ExperimentConfig> experiments, Clock clock = {});
    ~LiveSessionManager();

    CreatedSession createSession(const std::string& experimentId, std::uint64_t assignmentSeed);
    // Leaves the tutorial on first call; idempotent until the next bid.
    TrialPrompt getTrial(const std::string& sessionId);
    BidFeedback submitBid(const std::string& sessionId, int trialnum, double bid);
    RationaleAck submitRationale(const std::string& sessionId, const std::string& text);

    SessionState state(const std::string& sessionId) const;
    std::vector<TrialRecord> records(const std::string& sessionId) const;
    std::vector<RationaleRecord> rationales(const std::string& sessionId) const;
    // Session header, trial and rationale lines in submission order.
    std::string exportJsonl(const std::string& sessionId) const;

    std::size_t sessionCount() const;
    const std::filesystem::path& dataDir() const { return dataDir_; }

private:
    struct Session;
    struct Experiment;

    std::shared_ptr<Session> find(const std::string& sessionId) const;
    void append(Session& session, const Json& line);
    void replay(const std::filesystem::path& file);

    std::filesystem::path dataDir_;
    std::map<std::string, std::unique_ptr<Experiment>> experiments_;
    Clock clock_;

    mutable std::shared_mutex sessionsLock_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;

    std::mutex assignLock_;
    std::map<std::pair<std::string, std::uint64_t>, BalancedAssigner> assigners_;
};

std::string utcTimestamp();

// DASHLAB_DATA_DIR if set, else the fallback.
std::filesystem::path resolveDataDir(const std::filesystem::path& fallback);

struct ServeOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::optional<std::filesystem::path> staticDir;
};

// Blocks until the server stops.
int serve(LiveSessionManager& manager, const ServeOptions& options);

// Request handler shared by the HTTP server and in-process tests.
struct ApiResponse {
    int status;
    std::string contentType;
    std::string body;
};
ApiResponse handleApi(LiveSessionManager& manager, const std::string& method,
                      const std::string& path, const std::string& body);

}  // namespace dashlab
