#pragma once

#include <mutex>
#include <string>
#include <vector>

#include "qaemb/completion.hpp"

namespace testing_support {

/// Replays canned replies in order (the last one repeats) and records every
/// request it receives.
class ScriptedClient final : public qaemb::CompletionClient {
  public:
    explicit ScriptedClient(std::vector<std::string> replies) : m_replies(std::move(replies)) {}

    std::string complete(const qaemb::CompletionRequest& request) override
    {
        std::lock_guard lock(m_mutex);
        m_requests.push_back(request);
        const auto i = std::min(m_requests.size() - 1, m_replies.size() - 1);
        return m_replies[i];
    }

    std::vector<qaemb::CompletionRequest> requests() const
    {
        std::lock_guard lock(m_mutex);
        return m_requests;
    }

  private:
    std::vector<std::string> m_replies;
    std::vector<qaemb::CompletionRequest> m_requests;
    mutable std::mutex m_mutex;
};

}  // namespace testing_support
