#include "common.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <mutex>
#include <thread>

namespace fpmv {

static LogLevel read_env_level() {
    const char* v = std::getenv("FPMV_LOG");
    if (!v) return LogLevel::Warn;
    if (!std::strcmp(v, "error")) return LogLevel::Error;
    if (!std::strcmp(v, "warn")) return LogLevel::Warn;
    if (!std::strcmp(v, "info")) return LogLevel::Info;
    if (!std::strcmp(v, "debug")) return LogLevel::Debug;
    return LogLevel::Warn;
}

LogLevel log_level() {
    static LogLevel lvl = read_env_level();
    return lvl;
}

void log(LogLevel level, const std::string& msg) {
    if (static_cast<int>(level) > static_cast<int>(log_level())) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    std::fprintf(stderr, "[fpmv][%s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

static std::atomic<int> g_thread_cap{0};

void set_thread_cap(int n) { g_thread_cap.store(n < 0 ? 0 : n); }

int thread_cap() {
    int cap = g_thread_cap.load();
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (cap <= 0 || cap > hw) cap = hw;
    return cap;
}

void parallel_for(long total, const std::function<void(long, long)>& fn) {
    if (total <= 0) return;
    int workers = thread_cap();
    // Fixed chunk grid: partition is independent of the worker count.
    long chunks = std::min<long>(64, total);
    if (workers <= 1 || chunks <= 1) {
        fn(0, total);
        return;
    }
    std::atomic<long> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    auto work = [&] {
        try {
            for (;;) {
                long c = next.fetch_add(1);
                if (c >= chunks) return;
                long b = total * c / chunks;
                long e = total * (c + 1) / chunks;
                fn(b, e);
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mu);
            if (!first_error) first_error = std::current_exception();
            next.store(chunks);  // drain remaining chunks
        }
    };
    std::vector<std::thread> pool;
    int n_threads = std::min<int>(workers, static_cast<int>(chunks));
    pool.reserve(n_threads - 1);
    for (int i = 1; i < n_threads; ++i) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string iso_timestamp() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::tm tm_utc;
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

}  // namespace fpmv
