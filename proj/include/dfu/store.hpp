#pragma once

// Durable storage for patients, exams, photographs and jobs, backed by an
// embedded SQLite database.
//
// Exams are written with compare-and-swap on a per-exam version counter.
// Photo bytes go either inline into the database (BLOB column) or into an
// object-store directory keyed by the photo's unique id:
//     <root>/<first two hex chars of key>/<key>.bin
//
// All public operations are serialisable. `atomically()` groups several of
// them into one transaction; nested calls become savepoints.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "dfu/clock.hpp"
#include "dfu/domain.hpp"
#include "dfu/png.hpp"
#include "dfu/result.hpp"
#include "dfu/serialization.hpp"
#include "dfu/sqlite.hpp"

namespace dfu {

namespace fs = std::filesystem;

inline constexpr std::size_t kDefaultMaxPhotoBytes = 5'242'880;

struct StoreConfig {
    BlobStrategy blob_strategy = BlobStrategy::inline_blob;
    fs::path object_store_root;
    std::size_t max_photo_bytes = kDefaultMaxPhotoBytes;
    /// SQLite file path, or ":memory:" for a private in-memory store.
    std::string data_path = ":memory:";

    [[nodiscard]] Status validate() const {
        if (max_photo_bytes < 1) return make_error(ErrorCode::InvalidConfig, "max_photo_bytes must be >= 1");
        if (data_path.empty()) return make_error(ErrorCode::InvalidConfig, "data_path must be set");
        if (blob_strategy == BlobStrategy::object_store && object_store_root.empty()) {
            return make_error(ErrorCode::InvalidConfig, "object_store strategy needs object_store_root");
        }
        return {};
    }
};

struct VersionedExam {
    ExamRecord exam;
    std::int64_t version = 0;
};

enum class JobState { pending, in_progress, complete, failed };

[[nodiscard]] constexpr std::string_view to_string(JobState s) noexcept {
    switch (s) {
        case JobState::pending: return "pending";
        case JobState::in_progress: return "in_progress";
        case JobState::complete: return "complete";
        case JobState::failed: return "failed";
    }
    return "pending";
}

[[nodiscard]] inline std::optional<JobState> parse_job_state(std::string_view s) noexcept {
    if (s == "pending") return JobState::pending;
    if (s == "in_progress") return JobState::in_progress;
    if (s == "complete") return JobState::complete;
    if (s == "failed") return JobState::failed;
    return std::nullopt;
}

/// One row of the jobs table.
struct Job {
    std::string job_id;
    std::int64_t seq = 0;
    std::string exam_id;
    FootSide side = FootSide::left;
    std::string photo_id;
    JobState state = JobState::pending;
    std::int32_t attempts = 0;
    std::optional<std::string> worker_id;
    Timestamp enqueued_at{};
    std::optional<Timestamp> claimed_at;
    std::optional<Timestamp> finished_at;
    std::optional<InferenceResult> result;
    std::optional<std::string> failure_reason;

    friend bool operator==(const Job&, const Job&) = default;
};

/// Object-store path for a blob key.
[[nodiscard]] inline fs::path object_path(const fs::path& root, std::string_view key) {
    return root / std::string{key.substr(0, 2)} / (std::string{key} + ".bin");
}

/// Keys become file names, so only [A-Za-z0-9_-] is accepted.
[[nodiscard]] inline bool valid_blob_key(std::string_view key) noexcept {
    if (key.size() < 2 || key.size() > 128) return false;
    return std::all_of(key.begin(), key.end(), [](char c) {
        return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c == '-';
    });
}

class Store {
public:
    explicit Store(StoreConfig config, Clock clock = system_clock())
        : config_(std::move(config)), clock_(std::move(clock)) {
        if (auto ok = config_.validate(); !ok) throw std::invalid_argument(ok.error().to_string());
        if (config_.data_path != ":memory:") {
            const auto parent = fs::path(config_.data_path).parent_path();
            if (!parent.empty()) fs::create_directories(parent);
        }
        db_.emplace(config_.data_path);
        if (config_.data_path != ":memory:") db_->exec("PRAGMA journal_mode=WAL;");
        db_->exec("PRAGMA synchronous=NORMAL;");
        db_->exec(R"sql(
            CREATE TABLE IF NOT EXISTS patients (
                patient_id TEXT PRIMARY KEY,
                qr_payload TEXT NOT NULL,
                created_at INTEGER NOT NULL);
            CREATE TABLE IF NOT EXISTS exams (
                exam_id TEXT PRIMARY KEY,
                patient_id TEXT NOT NULL,
                version INTEGER NOT NULL,
                body TEXT NOT NULL);
            CREATE TABLE IF NOT EXISTS photos (
                photo_id TEXT PRIMARY KEY,
                strategy TEXT NOT NULL,
                byte_size INTEGER NOT NULL,
                data BLOB,
                stored_at INTEGER NOT NULL);
            CREATE TABLE IF NOT EXISTS jobs (
                seq INTEGER PRIMARY KEY AUTOINCREMENT,
                job_id TEXT NOT NULL UNIQUE,
                exam_id TEXT NOT NULL,
                side TEXT NOT NULL,
                photo_id TEXT NOT NULL,
                state TEXT NOT NULL,
                attempts INTEGER NOT NULL DEFAULT 0,
                worker_id TEXT,
                enqueued_at INTEGER NOT NULL,
                claimed_at INTEGER,
                finished_at INTEGER,
                result TEXT,
                failure_reason TEXT);
            CREATE INDEX IF NOT EXISTS jobs_state_seq ON jobs(state, seq);
            CREATE INDEX IF NOT EXISTS jobs_foot ON jobs(exam_id, side, state);
        )sql");
    }

    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;

    [[nodiscard]] const StoreConfig& config() const noexcept { return config_; }
    [[nodiscard]] Timestamp now() const { return clock_(); }

    /// Runs `f` (returning some Result<T>) in one transaction. An error
    /// result or an exception rolls everything back, including object-store
    /// files written inside.
    template <class F>
    auto atomically(F&& f) -> std::invoke_result_t<F&> {
        using R = std::invoke_result_t<F&>;
        std::unique_lock lock(mutex_);
        if (fault_) return R{make_error(ErrorCode::StorageFailure, "store unavailable (fault injected)")};
        try {
            begin();
        } catch (const sql::SqliteError& e) {
            return R{make_error(ErrorCode::StorageFailure, e.what())};
        }
        try {
            R r = f();
            if (r) {
                commit();
            } else {
                rollback();
            }
            return r;
        } catch (const sql::SqliteError& e) {
            rollback_quietly();
            return R{make_error(ErrorCode::StorageFailure, e.what())};
        } catch (...) {
            rollback_quietly();
            throw;
        }
    }

    /// Raw connection; only valid inside `atomically()`.
    [[nodiscard]] sql::Database& database() { return *db_; }

    /// Registers an undo action for the innermost open transaction.
    void on_rollback(std::function<void()> undo) { undo_.push_back(std::move(undo)); }

    // --- patients -----------------------------------------------------

    Status put_patient(const PatientRef& patient) {
        return atomically([&]() -> Status {
            if (patient.patient_id.empty()) return make_error(ErrorCode::BadRequest, "empty patient_id");
            db_->prepare("INSERT OR REPLACE INTO patients(patient_id, qr_payload, created_at) VALUES(?,?,?)")
                .bind(1, patient.patient_id)
                .bind(2, patient.qr_payload)
                .bind(3, to_millis(now()))
                .run();
            return {};
        });
    }

    Result<PatientRef> get_patient(std::string_view patient_id) {
        return atomically([&]() -> Result<PatientRef> {
            auto st = db_->prepare("SELECT patient_id, qr_payload FROM patients WHERE patient_id = ?");
            st.bind(1, patient_id);
            if (!st.step()) return make_error(ErrorCode::NotFound, "unknown patient " + std::string{patient_id});
            return PatientRef{st.text(0), st.text(1)};
        });
    }

    // --- exams --------------------------------------------------------

    /// Compare-and-swap write. `expected_version` is 0 to create.
    Result<std::int64_t> save_exam(const ExamRecord& exam, std::int64_t expected_version) {
        return atomically([&]() -> Result<std::int64_t> {
            auto sel = db_->prepare("SELECT version FROM exams WHERE exam_id = ?");
            sel.bind(1, exam.exam_id);
            const std::int64_t current = sel.step() ? sel.int64(0) : 0;
            if (current != expected_version) {
                return make_error(ErrorCode::VersionConflict, "exam " + exam.exam_id + " is at version " +
                                                                  std::to_string(current) + ", expected " +
                                                                  std::to_string(expected_version));
            }
            const std::string body = Json(exam).dump();
            if (current == 0) {
                db_->prepare("INSERT INTO exams(exam_id, patient_id, version, body) VALUES(?,?,1,?)")
                    .bind(1, exam.exam_id)
                    .bind(2, exam.patient.patient_id)
                    .bind(3, body)
                    .run();
            } else {
                db_->prepare("UPDATE exams SET version = version + 1, body = ? WHERE exam_id = ? AND version = ?")
                    .bind(1, body)
                    .bind(2, exam.exam_id)
                    .bind(3, expected_version)
                    .run();
            }
            return current + 1;
        });
    }

    Result<VersionedExam> load_exam(std::string_view exam_id) {
        return atomically([&]() -> Result<VersionedExam> {
            auto st = db_->prepare("SELECT version, body FROM exams WHERE exam_id = ?");
            st.bind(1, exam_id);
            if (!st.step()) return make_error(ErrorCode::NotFound, "unknown exam " + std::string{exam_id});
            return parse_exam(st.text(1), st.int64(0));
        });
    }

    Result<std::vector<std::string>> list_exam_ids() {
        return atomically([&]() -> Result<std::vector<std::string>> {
            std::vector<std::string> ids;
            auto st = db_->prepare("SELECT exam_id FROM exams ORDER BY exam_id");
            while (st.step()) ids.push_back(st.text(0));
            return ids;
        });
    }

    // --- photos -------------------------------------------------------

    Result<BlobRef> store_photo(std::span<const std::uint8_t> bytes, const std::string& photo_id) {
        return store_photo(bytes, photo_id, config_.blob_strategy);
    }

    Result<BlobRef> store_photo(std::span<const std::uint8_t> bytes, const std::string& photo_id,
                                BlobStrategy strategy) {
        if (bytes.empty()) return make_error(ErrorCode::BadImage, "empty photo");
        if (bytes.size() > config_.max_photo_bytes) {
            return make_error(ErrorCode::TooLarge, std::to_string(bytes.size()) + " bytes exceeds the cap of " +
                                                       std::to_string(config_.max_photo_bytes));
        }
        if (!valid_blob_key(photo_id)) return make_error(ErrorCode::BadRequest, "invalid photo id");
        if (strategy == BlobStrategy::object_store && config_.object_store_root.empty()) {
            return make_error(ErrorCode::InvalidConfig, "object_store_root is not configured");
        }
        return atomically([&]() -> Result<BlobRef> {
            auto exists = db_->prepare("SELECT 1 FROM photos WHERE photo_id = ?");
            exists.bind(1, photo_id);
            if (exists.step()) return make_error(ErrorCode::DuplicatePhotoId, photo_id);

            auto ins = db_->prepare(
                "INSERT INTO photos(photo_id, strategy, byte_size, data, stored_at) VALUES(?,?,?,?,?)");
            ins.bind(1, photo_id)
                .bind(2, to_string(strategy))
                .bind(3, static_cast<std::int64_t>(bytes.size()))
                .bind(5, to_millis(now()));
            if (strategy == BlobStrategy::inline_blob) {
                ins.bind_blob(4, bytes);
            } else {
                ins.bind_null(4);
                if (auto written = write_object(photo_id, bytes); !written) return written.error();
            }
            ins.run();
            return BlobRef{strategy, photo_id};
        });
    }

    Result<Bytes> fetch_photo(const BlobRef& ref) {
        return atomically([&]() -> Result<Bytes> {
            auto st = db_->prepare("SELECT strategy, byte_size, data FROM photos WHERE photo_id = ?");
            st.bind(1, ref.key);
            if (!st.step() || st.text(0) != to_string(ref.strategy)) {
                return make_error(ErrorCode::NotFound, "no photo stored under key " + ref.key);
            }
            if (ref.strategy == BlobStrategy::inline_blob) return st.blob(2);
            const auto expected = static_cast<std::size_t>(st.int64(1));
            return read_object(ref.key, expected);
        });
    }

    Result<BlobRef> find_photo(const std::string& photo_id) {
        return atomically([&]() -> Result<BlobRef> {
            auto st = db_->prepare("SELECT strategy FROM photos WHERE photo_id = ?");
            st.bind(1, photo_id);
            if (!st.step()) return make_error(ErrorCode::NotFound, "no photo " + photo_id);
            return BlobRef{parse_blob_strategy(st.text(0)).value_or(BlobStrategy::inline_blob), photo_id};
        });
    }

    /// Writes every stored photograph to `destination` as `<photo_id>.png`
    /// plus `manifest.csv`. Returns the number of photographs written.
    Result<std::size_t> export_dataset(const fs::path& destination) {
        return atomically([&]() -> Result<std::size_t> {
            std::error_code ec;
            fs::create_directories(destination, ec);
            if (ec) return make_error(ErrorCode::StorageFailure, "cannot create " + destination.string());

            struct Owner {
                std::string exam_id;
                const FootRecord* foot = nullptr;
            };
            std::vector<ExamRecord> exams;
            {
                auto st = db_->prepare("SELECT version, body FROM exams ORDER BY exam_id");
                while (st.step()) {
                    auto parsed = parse_exam(st.text(1), st.int64(0));
                    if (!parsed) return parsed.error();
                    exams.push_back(std::move(parsed->exam));
                }
            }
            std::map<std::string, Owner, std::less<>> owners;
            for (const auto& exam : exams) {
                for (const auto& foot : exam.feet) {
                    if (foot && foot->photo) owners[foot->photo->photo_id] = Owner{exam.exam_id, &*foot};
                }
            }

            std::vector<std::pair<std::string, BlobStrategy>> photos;
            {
                auto st = db_->prepare("SELECT photo_id, strategy FROM photos ORDER BY stored_at, photo_id");
                while (st.step()) {
                    auto strategy = parse_blob_strategy(st.text(1)).value_or(BlobStrategy::inline_blob);
                    photos.emplace_back(st.text(0), strategy);
                }
            }

            std::ofstream manifest(destination / "manifest.csv", std::ios::binary | std::ios::trunc);
            if (!manifest) return make_error(ErrorCode::StorageFailure, "cannot write manifest");
            manifest << "photo_id,exam_id,side,visible_ulcer_count,detection_count,agrees\n";
            for (const auto& [photo_id, strategy] : photos) {
                auto bytes = fetch_photo(BlobRef{strategy, photo_id});
                if (!bytes) return bytes.error();
                std::ofstream out(destination / (photo_id + ".png"), std::ios::binary | std::ios::trunc);
                out.write(reinterpret_cast<const char*>(bytes->data()), static_cast<std::streamsize>(bytes->size()));
                if (!out) return make_error(ErrorCode::StorageFailure, "cannot write photo " + photo_id);

                manifest << csv_field(photo_id) << ',';
                if (auto it = owners.find(photo_id); it != owners.end()) {
                    const FootRecord& foot = *it->second.foot;
                    manifest << csv_field(it->second.exam_id) << ',' << to_string(foot.side) << ','
                             << foot.visible_ulcer_count << ',';
                    if (foot.result) manifest << foot.result->detections.size();
                    manifest << ',';
                    if (foot.confirmation) manifest << (foot.confirmation->agrees ? "true" : "false");
                } else {
                    manifest << ",,,,";
                }
                manifest << '\n';
            }
            manifest.flush();
            if (!manifest) return make_error(ErrorCode::StorageFailure, "cannot write manifest");
            return photos.size();
        });
    }

    // --- health -------------------------------------------------------

    [[nodiscard]] bool ping() {
        auto ok = atomically([&]() -> Status {
            db_->prepare("SELECT 1").run();
            return {};
        });
        return ok.has_value();
    }

    /// While set, every operation fails with StorageFailure.
    void set_fault_injection(bool unavailable) {
        std::lock_guard lock(mutex_);
        fault_ = unavailable;
    }

private:
    static Result<VersionedExam> parse_exam(const std::string& body, std::int64_t version) {
        try {
            return VersionedExam{Json::parse(body).get<ExamRecord>(), version};
        } catch (const Json::exception& e) {
            return make_error(ErrorCode::StorageFailure, std::string{"corrupt exam record: "} + e.what());
        }
    }

    static std::string csv_field(const std::string& s) {
        if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
        std::string out = "\"";
        for (char c : s) {
            if (c == '"') out += '"';
            out += c;
        }
        return out + '"';
    }

    Status write_object(const std::string& key, std::span<const std::uint8_t> bytes) {
        const fs::path path = object_path(config_.object_store_root, key);
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) return make_error(ErrorCode::StorageFailure, "cannot create " + path.parent_path().string());
        const fs::path tmp = path.string() + ".tmp";
        const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
        if (fd < 0) return make_error(ErrorCode::StorageFailure, "cannot open " + tmp.string());
        std::size_t off = 0;
        while (off < bytes.size()) {
            const ssize_t n = ::write(fd, bytes.data() + off, bytes.size() - off);
            if (n < 0) {
                if (errno == EINTR) continue;
                ::close(fd);
                fs::remove(tmp, ec);
                return make_error(ErrorCode::StorageFailure, std::string{"write failed: "} + std::strerror(errno));
            }
            off += static_cast<std::size_t>(n);
        }
        const bool synced = ::fsync(fd) == 0;
        ::close(fd);
        if (!synced || std::rename(tmp.c_str(), path.c_str()) != 0) {
            fs::remove(tmp, ec);
            return make_error(ErrorCode::StorageFailure, "cannot persist " + path.string());
        }
        on_rollback([path] {
            std::error_code ignored;
            fs::remove(path, ignored);
        });
        return {};
    }

    Result<Bytes> read_object(const std::string& key, std::size_t expected) const {
        const fs::path path = object_path(config_.object_store_root, key);
        std::ifstream in(path, std::ios::binary);
        if (!in) return make_error(ErrorCode::NotFound, "object missing for key " + key);
        Bytes bytes(expected);
        in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(expected));
        if (static_cast<std::size_t>(in.gcount()) != expected || in.peek() != std::char_traits<char>::eof()) {
            return make_error(ErrorCode::StorageFailure, "object size mismatch for key " + key);
        }
        return bytes;
    }

    void begin() {
        if (depth_ == 0) {
            db_->exec("BEGIN IMMEDIATE");
        } else {
            db_->exec("SAVEPOINT sp" + std::to_string(depth_));
        }
        undo_marks_.push_back(undo_.size());
        ++depth_;
    }

    void commit() {
        --depth_;
        try {
            if (depth_ == 0) {
                db_->exec("COMMIT");
            } else {
                db_->exec("RELEASE sp" + std::to_string(depth_));
            }
        } catch (...) {
            ++depth_;
            throw;
        }
        undo_marks_.pop_back();
        if (depth_ == 0) undo_.clear();
    }

    void rollback() {
        --depth_;
        if (depth_ == 0) {
            db_->exec("ROLLBACK");
        } else {
            const auto name = "sp" + std::to_string(depth_);
            db_->exec("ROLLBACK TO " + name);
            db_->exec("RELEASE " + name);
        }
        run_undo();
    }

    void rollback_quietly() noexcept {
        try {
            rollback();
        } catch (...) {
            run_undo();
        }
    }

    void run_undo() noexcept {
        const std::size_t mark = undo_marks_.empty() ? 0 : undo_marks_.back();
        if (!undo_marks_.empty()) undo_marks_.pop_back();
        while (undo_.size() > mark) {
            try {
                undo_.back()();
            } catch (...) {
            }
            undo_.pop_back();
        }
    }

    StoreConfig config_;
    Clock clock_;
    std::recursive_mutex mutex_;
    std::optional<sql::Database> db_;
    int depth_ = 0;
    bool fault_ = false;
    std::vector<std::function<void()>> undo_;
    std::vector<std::size_t> undo_marks_;
};

}  // namespace dfu
