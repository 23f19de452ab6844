#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace qaemb {

struct ChatMessage {
    std::string role;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct CompletionRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 64;
};

/// Body of an OpenAI-compatible `POST /v1/chat/completions` call.
inline nlohmann::json to_json(const CompletionRequest& req)
{
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : req.messages) {
        messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    return {{"model", req.model},
            {"messages", std::move(messages)},
            {"temperature", req.temperature},
            {"max_tokens", req.max_tokens}};
}

/// Anything that turns a chat request into assistant text: an HTTP endpoint,
/// a scripted stand-in, a local model.
class CompletionClient {
  public:
    virtual ~CompletionClient() = default;
    virtual std::string complete(const CompletionRequest& request) = 0;
};

}  // namespace qaemb
