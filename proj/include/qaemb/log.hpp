#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace qaemb::log {

enum class Level { debug, info, warn, error };

constexpr std::string_view to_string(Level level) noexcept
{
    switch (level) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warn";
    case Level::error: return "error";
    }
    return "?";
}

using Sink = std::function<void(Level, std::string_view)>;

namespace detail {
struct State {
    std::mutex mutex;
    Level threshold = Level::info;
    Sink sink = [](Level level, std::string_view msg) {
        std::cerr << "[qaemb " << to_string(level) << "] " << msg << '\n';
    };
};

inline State& state()
{
    static State s;
    return s;
}
}  // namespace detail

/// Replaces the global sink and returns the previous one.
inline Sink set_sink(Sink sink)
{
    auto& s = detail::state();
    std::lock_guard lock(s.mutex);
    std::swap(s.sink, sink);
    return sink;
}

inline void set_level(Level level)
{
    auto& s = detail::state();
    std::lock_guard lock(s.mutex);
    s.threshold = level;
}

inline void write(Level level, std::string_view msg)
{
    auto& s = detail::state();
    std::lock_guard lock(s.mutex);
    if (level >= s.threshold && s.sink) {
        s.sink(level, msg);
    }
}

inline void debug(std::string_view msg) { write(Level::debug, msg); }
inline void info(std::string_view msg) { write(Level::info, msg); }
inline void warn(std::string_view msg) { write(Level::warn, msg); }
inline void error(std::string_view msg) { write(Level::error, msg); }

/// Collects warnings for the lifetime of the object (tests and reports).
class ScopedCapture {
  public:
    ScopedCapture()
    {
        m_previous = set_sink([this](Level level, std::string_view msg) {
            if (level >= Level::warn) {
                m_messages.emplace_back(msg);
            }
        });
    }
    ~ScopedCapture() { set_sink(std::move(m_previous)); }
    ScopedCapture(const ScopedCapture&) = delete;
    ScopedCapture& operator=(const ScopedCapture&) = delete;

    const std::vector<std::string>& messages() const { return m_messages; }

    bool contains(std::string_view needle) const
    {
        for (const auto& m : m_messages) {
            if (m.find(needle) != std::string::npos) {
                return true;
            }
        }
        return false;
    }

  private:
    Sink m_previous;
    std::vector<std::string> m_messages;
};

}  // namespace qaemb::log
