#include "igaiva/synthesis.hpp"

#include <cstdlib>
#include <thread>

// After Eigen: <resolv.h>, pulled in by httplib, defines a macro _res.
#include <httplib.h>
#include <json.hpp>

#include "igaiva/error.hpp"
#include "igaiva/util.hpp"

namespace igaiva::synthesis {

using nlohmann::json;

RemoteConfig RemoteConfig::from_env() {
    RemoteConfig c;
    auto env = [](const char* name) {
        const char* v = std::getenv(name);
        return v ? std::string(v) : std::string{};
    };
    c.base_url = env("IGAIVA_LLM_BASE_URL");
    c.api_key = env("IGAIVA_LLM_API_KEY");
    c.model = env("IGAIVA_LLM_MODEL");
    return c;
}

ChatCompletionGenerator::ChatCompletionGenerator(RemoteConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) throw UsageError("remote generator needs a base URL (IGAIVA_LLM_BASE_URL)");
    if (config_.model.empty()) throw UsageError("remote generator needs a model name (IGAIVA_LLM_MODEL)");
    const auto scheme_end = config_.base_url.find("://");
    if (scheme_end == std::string::npos) throw UsageError("base URL must start with http:// or https://");
    const auto scheme = config_.base_url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") throw UsageError("unsupported URL scheme '" + scheme + "'");
    const auto path_start = config_.base_url.find('/', scheme_end + 3);
    scheme_host_ = config_.base_url.substr(0, path_start);
    path_prefix_ = path_start == std::string::npos ? "" : config_.base_url.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    if (config_.parallelism < 1) config_.parallelism = 1;
}

std::string ChatCompletionGenerator::request_body(const corpus::Message& example,
                                                  const GenerationParams& params) const {
    json body{{"model", config_.model},
              {"messages",
               json::array({{{"role", "system"}, {"content", system_prompt(params.k)}},
                            {{"role", "user"}, {"content", example.text}}})},
              {"temperature", params.temperature},
              {"max_tokens", params.max_tokens},
              {"top_p", params.top_p},
              {"frequency_penalty", params.frequency_penalty},
              {"presence_penalty", params.presence_penalty}};
    return body.dump();
}

GenerationResult ChatCompletionGenerator::generate(const corpus::Message& example,
                                                   const GenerationParams& params) const {
    const auto body = request_body(example, params);
    GenerationResult result;
    result.prompt_hash = to_hex(fnv1a64(body));

    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
    const auto path = path_prefix_ + "/chat/completions";
    std::string last_error;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(config_.backoff * (1 << (attempt - 1)));
        httplib::Client client(scheme_host_);
        client.set_connection_timeout(config_.timeout);
        client.set_read_timeout(config_.timeout);
        client.set_write_timeout(config_.timeout);
        auto res = client.Post(path, headers, body, "application/json");
        if (!res) {
            last_error = "request failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            last_error = "HTTP status " + std::to_string(res->status);
            continue;
        }
        try {
            const auto j = json::parse(res->body);
            const auto& content = j.at("choices").at(0).at("message").at("content");
            if (!content.is_string()) throw std::runtime_error("content is not a string");
            result.texts = parse_completion_lines(content.get<std::string>());
            if (result.texts.empty()) result.failure = "completion contained no messages";
        } catch (const std::exception& e) {
            result.failure = std::string("unparseable completion: ") + e.what();
        }
        return result;
    }
    throw GeneratorError("chat completion for example '" + example.id + "' failed after " +
                         std::to_string(config_.retries + 1) + " attempts: " + last_error);
}

}  // namespace igaiva::synthesis
