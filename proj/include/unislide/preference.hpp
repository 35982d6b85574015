#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace unislide::study {

enum class Mode { pairwise_ab, ranking3 };

std::string_view to_string(Mode m);
std::optional<Mode> parse_mode(std::string_view s);
std::size_t decks_per_case(Mode m);

struct CaseSpec {
    std::string case_id;
    std::string task_id;
    std::map<std::string, std::filesystem::path> decks;  // method -> deck directory
};

struct StudyConfig {
    std::string study_id;  // assigned when empty
    Mode mode = Mode::ranking3;
    std::uint64_t seed = 0;
    std::size_t sample_size = 5;
    std::vector<CaseSpec> cases;
};

StudyConfig study_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const StudyConfig& c);

struct SessionCase {
    std::string case_id;
    std::string task_id;
    std::vector<std::string> labels;             // "A", "B", ("C")
    std::map<std::string, std::string> methods;  // label -> method, hidden until close
};

struct StudySession {
    std::string session_id;
    std::string study_id;
    std::string annotator_id;
    Mode mode = Mode::ranking3;
    std::vector<SessionCase> cases;
    std::string status = "open";  // open, complete
};

struct RankingRecord {
    std::string session_id;
    std::string case_id;
    std::vector<std::string> ordering;  // labels, best first
    std::string timestamp;
};

/// Ordering by method, resolved from labels.
struct ResolvedRanking {
    std::string annotator_id;
    std::string case_id;
    std::vector<std::string> methods;  // best first
};

struct MethodPoints {
    std::string method;
    double mean_points = 0;
    int rank = 0;
    std::size_t count = 0;
};

/// A method ranked at position p of n gets n - p points (3/2/1 for three
/// decks), averaged over every case and annotator it appeared in. Ranks
/// follow descending mean points; ties share the better rank. Result is
/// sorted by rank, then method name.
std::vector<MethodPoints> aggregate_rankings(const std::vector<ResolvedRanking>& records);

/// ICC(2,k): two-way random effects, average measures, on an annotators x
/// items matrix. NaN when the items do not vary.
double icc(const std::vector<std::vector<double>>& ratings);

/// Spearman correlation over the shared method set (>= 3 methods).
double human_auto_correlation(const std::map<std::string, double>& human_points,
                              const std::map<std::string, double>& auto_scores);

/// Studies persisted as append-only JSON-lines event logs, one per study,
/// replayed on construction. Thread-safe; every acknowledged write has been
/// flushed to disk.
class StudyStore {
public:
    explicit StudyStore(std::filesystem::path root);

    /// Validates decks and the per-case deck count; throws InsufficientDecks
    /// or MissingFile.
    std::string create_study(StudyConfig config);

    /// Seeded sample of cases shared by all sessions of the study; deck
    /// labels are permuted per session.
    StudySession create_session(const std::string& study_id, const std::string& annotator_id);

    std::optional<SessionCase> next_case(const std::string& session_id) const;
    std::pair<std::size_t, std::size_t> progress(const std::string& session_id) const;

    /// Throws UnknownSession, UnknownCase, StudyClosed, DuplicateSubmission,
    /// or SchemaViolation for an ordering that is not a permutation.
    void record_ranking(RankingRecord record);

    void close_study(const std::string& study_id);
    bool is_closed(const std::string& study_id) const;

    const StudySession& session(const std::string& session_id) const;
    const StudyConfig& config(const std::string& study_id) const;
    std::vector<RankingRecord> records(const std::string& study_id) const;
    std::vector<ResolvedRanking> resolved(const std::string& study_id) const;

    /// Aggregated points, ICC over annotators with complete rankings and the
    /// resolved records. Throws StudyClosed (code reused) while still open.
    nlohmann::ordered_json results(const std::string& study_id) const;

    /// Deck directory behind an anonymized (session, case, label).
    std::filesystem::path deck_dir(const std::string& session_id, const std::string& case_id,
                                   const std::string& label) const;

private:
    struct StudyState {
        StudyConfig config;
        std::vector<std::string> sampled_cases;
        std::vector<std::string> sessions;
        std::vector<RankingRecord> records;
        bool closed = false;
    };

    void replay(const std::filesystem::path& log);
    void append(const std::string& study_id, const nlohmann::json& event);
    void apply(const nlohmann::json& event);
    StudySession build_session(const StudyState& st, const std::string& session_id,
                               const std::string& annotator_id) const;
    const StudyState& state(const std::string& study_id) const;
    StudySession& session_mut(const std::string& session_id);

    std::filesystem::path root_;
    std::map<std::string, StudyState> studies_;
    std::map<std::string, StudySession> sessions_;
    mutable std::mutex mutex_;
};

/// JSON view of a session as annotators see it (no method names).
nlohmann::ordered_json anonymized(const StudySession& s);

/// HTTP front end for a store:
///   POST /studies, POST /studies/{id}/sessions, POST /studies/{id}/close,
///   GET /sessions/{id}/next-case, POST /sessions/{id}/rankings,
///   GET /studies/{id}/results, GET /assets/{session}/{case}/{label}/{file}
class StudyServer {
public:
    explicit StudyServer(StudyStore& store);
    ~StudyServer();
    StudyServer(const StudyServer&) = delete;
    StudyServer& operator=(const StudyServer&) = delete;

    /// Port 0 binds any free port. Returns the bound port.
    int bind(const std::string& host, int port);
    void listen();  // blocks until stop()
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// UNISLIDE_STUDY_PORT, else the fallback.
int study_port_from_env(int fallback = 8765);

}  // namespace unislide::study
