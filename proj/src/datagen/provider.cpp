#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "molllama/datagen/provider.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "molllama/hash.hpp"

namespace molllama::datagen {
namespace {

using nlohmann::json;

bool contains(const std::string& text, std::string_view needle) { return text.find(needle) != std::string::npos; }

// Rest of the line following `prefix`, or empty.
std::string after(const std::string& text, std::string_view prefix) {
  const auto at = text.find(prefix);
  if (at == std::string::npos) return {};
  const auto start = at + prefix.size();
  const auto end = text.find('\n', start);
  return text.substr(start, end == std::string::npos ? std::string::npos : end - start);
}

// Text between "[Assistant n]\n" and "\n[End of Assistant n]".
std::string response_block(const std::string& text, int n) {
  const std::string open = "[Assistant " + std::to_string(n) + "]\n";
  const std::string close = "\n[End of Assistant " + std::to_string(n) + "]";
  const auto a = text.find(open);
  if (a == std::string::npos) return {};
  const auto b = text.find(close, a + open.size());
  if (b == std::string::npos) return {};
  return text.substr(a + open.size(), b - a - open.size());
}

int mock_score(const std::string& text, std::string_view salt) {
  return 1 + static_cast<int>(mix64(fnv1a(text) ^ fnv1a(salt)) % 10);
}

std::string first_sentence(const std::string& text) {
  const auto dot = text.find(". ");
  return dot == std::string::npos ? text : text.substr(0, dot + 1);
}

}  // namespace

std::string MockProvider::complete(const CompletionRequest& request) {
  std::string system, user;
  for (const auto& m : request.messages) {
    if (m.role == Role::kSystem) system += m.text;
    if (m.role == Role::kUser) user += m.text;
  }
  if (fail_every_ > 0 && mix64(fnv1a(system + "\x1f" + user)) % static_cast<std::uint64_t>(fail_every_) == 0) {
    throw ProviderError("mock: injected failure", false);
  }
  const std::string iupac = after(user, "Input molecule (IUPAC name): ");
  const std::string description = after(user, "Description: ");

  if (contains(system, "evaluate the factual accuracy")) {
    const int score = mix64(fnv1a(user)) % 5 == 0 ? 3 : 4;
    return "The description is consistent with the IUPAC name.\nScore: " + std::to_string(score);
  }
  if (contains(system, "evaluate the performance of two AI assistants")) {
    std::string out;
    for (int n = 1; n <= 2; ++n) {
      const std::string r = response_block(user, n);
      out += "[Assistant " + std::to_string(n) + "]\n";
      out += "- Helpfulness: " + std::to_string(mock_score(r, "helpfulness")) + "\n";
      out += "- Relevance: " + std::to_string(mock_score(r, "relevance")) + "\n";
      out += "- Accuracy: " + std::to_string(mock_score(r, "accuracy")) + "\n";
      out += "- Level of detail: " + std::to_string(mock_score(r, "detail")) + "\n";
      out += "- Overall: " + std::to_string(mock_score(r, "overall")) + "\n";
    }
    return out + "Both responses were scored independently of their order.";
  }
  if (contains(system, "quality of the reasoning process")) {
    std::string out = "Explanation of the evaluation: scores follow from the text of each response.\nFinal Decision:\n";
    for (int n = 1; n <= 2; ++n) {
      const std::string r = response_block(user, n);
      out += "[Assistant " + std::to_string(n) + "]\n";
      out += "- Fidelity : " + std::to_string(mock_score(r, "fidelity")) + "\n";
      out += "- Helpfulness : " + std::to_string(mock_score(r, "helpfulness")) + "\n";
    }
    return out;
  }
  if (contains(system, "design a conversation between you")) {
    return "User: What are the main structural features of " + iupac + "?\n" +
           "Assistant: " + iupac + " is built from the substructures named in its IUPAC name.\n" +
           "User: How do these features shape its chemical properties?\n" +
           "Assistant: " + first_sentence(description) + "\n" +
           "User: What biological roles follow from these properties?\n" +
           "Assistant: Its biological behaviour follows from the same functional groups.";
  }
  if (contains(system, "at the molecular structural level")) {
    return "The molecule " + iupac + " is described by its IUPAC name, whose parent chain and substituents give "
           "its substructures and functional groups and how they are connected.";
  }
  for (const char* level : {"chemical", "biological"}) {
    if (contains(system, std::string("You are a ") + level + " assistant")) {
      return std::string("The ") + level + " properties of " + iupac + " follow from its structure. " +
             first_sentence(description);
    }
  }
  return "Mock response.";
}

HttpProvider::HttpProvider(std::string endpoint, std::string model, std::string api_key_env, int timeout_seconds)
    : model_(std::move(model)), key_env_(std::move(api_key_env)), timeout_(timeout_seconds) {
  const auto scheme = endpoint.find("://");
  if (scheme == std::string::npos) throw std::invalid_argument("endpoint must be an http(s) URL: " + endpoint);
  const auto slash = endpoint.find('/', scheme + 3);
  base_ = endpoint.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : endpoint.substr(slash);
}

std::string HttpProvider::complete(const CompletionRequest& request) {
  const char* key = std::getenv(key_env_.c_str());
  if (key == nullptr || *key == '\0') throw ProviderError("environment variable " + key_env_ + " is not set", false);
  json body{{"model", model_}, {"temperature", request.temperature}, {"messages", json::array()}};
  for (const auto& m : request.messages) body["messages"].push_back({{"role", role_name(m.role)}, {"content", m.text}});

  httplib::Client client(base_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  const httplib::Headers headers{{"Authorization", std::string("Bearer ") + key}};
  const auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) throw ProviderError("transport error: " + httplib::to_string(res.error()), true);
  if (res->status == 429 || res->status >= 500) {
    throw ProviderError("HTTP " + std::to_string(res->status), true);
  }
  if (res->status != 200) throw ProviderError("HTTP " + std::to_string(res->status) + ": " + res->body, false);
  try {
    return json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed completion response: ") + e.what(), false);
  }
}

std::string LLMClient::complete(const CompletionRequest& request) const {
  if (!provider) throw std::logic_error("LLMClient without provider");
  int delay = retry.backoff_ms;
  for (int attempt = 1;; ++attempt) {
    try {
      return provider->complete(request);
    } catch (const ProviderError& e) {
      if (!e.transient() || attempt >= retry.max_attempts) throw;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    delay *= 2;
  }
}

std::shared_ptr<ChatProvider> make_provider(const std::string& endpoint, const std::string& model,
                                            const std::string& api_key_env) {
  if (endpoint.rfind("mock:", 0) == 0) {
    const std::string opts = endpoint.substr(5);
    int fail_every = 0;
    if (opts.rfind("fail-every=", 0) == 0) fail_every = std::stoi(opts.substr(11));
    else if (!opts.empty()) throw std::invalid_argument("unknown mock option '" + opts + "'");
    return std::make_shared<MockProvider>(fail_every);
  }
  if (endpoint.rfind("http://", 0) == 0 || endpoint.rfind("https://", 0) == 0) {
    return std::make_shared<HttpProvider>(endpoint, model, api_key_env);
  }
  throw std::invalid_argument("unsupported provider endpoint '" + endpoint + "'");
}

}  // namespace molllama::datagen
