#pragma once

// Thin RAII layer over the SQLite C API. Failures throw SqliteError; the
// store converts them to StorageFailure at its public boundary.

#include <sqlite3.h>

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dfu::sql {

class SqliteError : public std::runtime_error {
public:
    SqliteError(int code, const std::string& what) : std::runtime_error(what), code_(code) {}
    [[nodiscard]] int code() const noexcept { return code_; }

private:
    int code_;
};

/// Borrowed handle to a cached statement. Resets the statement when it goes
/// out of scope so a partly stepped query does not keep a read snapshot open.
class Statement {
public:
    Statement(sqlite3* db, sqlite3_stmt* stmt) : db_(db), stmt_(stmt) {}
    Statement(Statement&& other) noexcept : db_(other.db_), stmt_(std::exchange(other.stmt_, nullptr)) {}
    Statement(const Statement&) = delete;
    Statement& operator=(const Statement&) = delete;
    Statement& operator=(Statement&&) = delete;
    ~Statement() {
        if (stmt_) sqlite3_reset(stmt_);
    }

    Statement& bind(int index, std::int64_t v) {
        check(sqlite3_bind_int64(stmt_, index, v));
        return *this;
    }
    Statement& bind(int index, int v) { return bind(index, static_cast<std::int64_t>(v)); }
    Statement& bind(int index, std::string_view v) {
        check(sqlite3_bind_text(stmt_, index, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
        return *this;
    }
    Statement& bind(int index, const std::string& v) { return bind(index, std::string_view{v}); }
    Statement& bind(int index, const char* v) { return bind(index, std::string_view{v}); }
    Statement& bind_blob(int index, std::span<const std::uint8_t> v) {
        // zero-length blobs must still bind as blobs, not NULL
        static const std::uint8_t kEmpty = 0;
        check(sqlite3_bind_blob(stmt_, index, v.empty() ? &kEmpty : v.data(), static_cast<int>(v.size()),
                                SQLITE_TRANSIENT));
        return *this;
    }
    Statement& bind_null(int index) {
        check(sqlite3_bind_null(stmt_, index));
        return *this;
    }
    template <class T>
    Statement& bind(int index, const std::optional<T>& v) {
        if (!v) return bind_null(index);
        return bind(index, *v);
    }

    /// Returns true while a row is available.
    bool step() {
        const int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        throw SqliteError(rc, sqlite3_errmsg(db_));
    }

    void run() {
        while (step()) {
        }
    }

    [[nodiscard]] bool is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }
    [[nodiscard]] std::int64_t int64(int col) const { return sqlite3_column_int64(stmt_, col); }
    [[nodiscard]] std::string text(int col) const {
        const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt_, col));
        return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col))) : std::string{};
    }
    [[nodiscard]] std::optional<std::string> opt_text(int col) const {
        if (is_null(col)) return std::nullopt;
        return text(col);
    }
    [[nodiscard]] std::optional<std::int64_t> opt_int64(int col) const {
        if (is_null(col)) return std::nullopt;
        return int64(col);
    }
    [[nodiscard]] std::vector<std::uint8_t> blob(int col) const {
        const auto* p = static_cast<const std::uint8_t*>(sqlite3_column_blob(stmt_, col));
        const auto n = static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col));
        return p ? std::vector<std::uint8_t>(p, p + n) : std::vector<std::uint8_t>{};
    }

private:
    void check(int rc) const {
        if (rc != SQLITE_OK) throw SqliteError(rc, sqlite3_errmsg(db_));
    }

    sqlite3* db_;
    sqlite3_stmt* stmt_;
};

/// One connection with a prepared-statement cache. Not synchronised; the
/// owner serialises access.
class Database {
public:
    explicit Database(const std::string& path) {
        sqlite3* raw = nullptr;
        const int flags = SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX;
        const int rc = sqlite3_open_v2(path.c_str(), &raw, flags, nullptr);
        db_.reset(raw);
        if (rc != SQLITE_OK) {
            throw SqliteError(rc, "cannot open " + path + ": " + (raw ? sqlite3_errmsg(raw) : "out of memory"));
        }
        sqlite3_busy_timeout(db_.get(), 10'000);
    }

    Database(const Database&) = delete;
    Database& operator=(const Database&) = delete;

    ~Database() { cache_.clear(); }

    void exec(const std::string& sql) {
        char* err = nullptr;
        const int rc = sqlite3_exec(db_.get(), sql.c_str(), nullptr, nullptr, &err);
        if (rc != SQLITE_OK) {
            std::string msg = err ? err : sqlite3_errstr(rc);
            sqlite3_free(err);
            throw SqliteError(rc, msg);
        }
    }

    /// Cached, reset and unbound statement for `sql`.
    Statement prepare(const std::string& sql) {
        auto it = cache_.find(sql);
        if (it == cache_.end()) {
            sqlite3_stmt* raw = nullptr;
            const int rc = sqlite3_prepare_v2(db_.get(), sql.c_str(), static_cast<int>(sql.size()), &raw, nullptr);
            if (rc != SQLITE_OK) throw SqliteError(rc, sqlite3_errmsg(db_.get()));
            it = cache_.emplace(sql, StmtPtr{raw}).first;
        }
        sqlite3_stmt* stmt = it->second.get();
        sqlite3_reset(stmt);
        sqlite3_clear_bindings(stmt);
        return Statement{db_.get(), stmt};
    }

    [[nodiscard]] int changes() const { return sqlite3_changes(db_.get()); }
    [[nodiscard]] std::int64_t last_insert_rowid() const { return sqlite3_last_insert_rowid(db_.get()); }

private:
    struct DbClose {
        void operator()(sqlite3* db) const { sqlite3_close_v2(db); }
    };
    struct StmtFinalize {
        void operator()(sqlite3_stmt* s) const { sqlite3_finalize(s); }
    };
    using StmtPtr = std::unique_ptr<sqlite3_stmt, StmtFinalize>;

    std::unique_ptr<sqlite3, DbClose> db_;
    std::map<std::string, StmtPtr, std::less<>> cache_;
};

}  // namespace dfu::sql
