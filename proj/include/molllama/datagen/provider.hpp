#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "molllama/samples.hpp"

namespace molllama::datagen {

// Chat-completion request: {model, messages[{role, content}], temperature}.
struct CompletionRequest {
  std::vector<ChatMessage> messages;
  double temperature = 1.0;
};

class ProviderError : public std::runtime_error {
 public:
  ProviderError(const std::string& what, bool transient) : std::runtime_error(what), transient_(transient) {}
  bool transient() const { return transient_; }

 private:
  bool transient_;
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  // Returns the assistant text. Throws ProviderError. Must be safe to call
  // from several threads at once.
  virtual std::string complete(const CompletionRequest& request) = 0;
  virtual std::string model_name() const = 0;
};

// Offline provider with canned, content-derived answers for every prompt
// family (generation, filtering, pairwise and reasoning judges).
class MockProvider : public ChatProvider {
 public:
  // fail_every > 0 makes every n-th distinct request fail permanently,
  // selected by a hash of the request so the choice is order independent.
  explicit MockProvider(int fail_every = 0) : fail_every_(fail_every) {}
  std::string complete(const CompletionRequest& request) override;
  std::string model_name() const override { return "mock"; }

 private:
  int fail_every_;
};

// Wraps a callable; used for scripted models in tests and harnesses.
class FunctionProvider : public ChatProvider {
 public:
  using Fn = std::function<std::string(const CompletionRequest&)>;
  FunctionProvider(Fn fn, std::string name = "scripted") : fn_(std::move(fn)), name_(std::move(name)) {}
  std::string complete(const CompletionRequest& request) override { return fn_(request); }
  std::string model_name() const override { return name_; }

 private:
  Fn fn_;
  std::string name_;
};

// OpenAI-style POST /chat/completions over HTTP(S). The bearer token is read
// from the named environment variable at call time.
class HttpProvider : public ChatProvider {
 public:
  HttpProvider(std::string endpoint, std::string model, std::string api_key_env, int timeout_seconds = 120);
  std::string complete(const CompletionRequest& request) override;
  std::string model_name() const override { return model_; }

 private:
  std::string base_;  // scheme://host[:port]
  std::string path_;
  std::string model_;
  std::string key_env_;
  int timeout_;
};

struct RetryPolicy {
  int max_attempts = 3;
  int backoff_ms = 500;  // Doubles after each transient failure.
};

struct LLMClient {
  std::shared_ptr<ChatProvider> provider;
  int max_parallel = 4;
  RetryPolicy retry;

  // Retries transient failures; rethrows the last error.
  std::string complete(const CompletionRequest& request) const;
};

// "mock:" (optionally "mock:fail-every=N") or an http(s) endpoint URL.
std::shared_ptr<ChatProvider> make_provider(const std::string& endpoint, const std::string& model,
                                            const std::string& api_key_env);

}  // namespace molllama::datagen
