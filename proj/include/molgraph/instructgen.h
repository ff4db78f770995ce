//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLGRAPH_INSTRUCTGEN_H_
#define MOLGRAPH_INSTRUCTGEN_H_

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace molgraph::instructgen {

struct MoleculeContext {
  std::string smiles;
  std::string caption;
  std::optional<std::string> iupac;
};

struct Turn {
  std::string question;
  std::string answer;
};

struct Conversation {
  std::vector<Turn> turns;
  // False when a question has no answer.
  bool complete = true;
  MoleculeContext source;
};

class MissingField : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UnknownTemplate : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class MalformedBlock : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class BackendFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TemplateId { kCaption, kCaptionIupac };

// "caption" or "caption+iupac".
TemplateId parse_template(std::string_view name);
std::string_view to_string(TemplateId id);

// The raw template with {SMILES}, {CAPTION} and {IUPAC} placeholders.
std::string_view template_text(TemplateId id);

// Substitutes the context into the template. Exemplars are rendered as
// complete context/conversation blocks and inserted ahead of the target
// molecule's context.
std::string build_prompt(const MoleculeContext &ctx, const std::vector<Conversation> &exemplars,
                         TemplateId id);

// Blocks are separated by lines holding only "===". Each block starts with a
// "Question:" or "Answer:" header; the header's text and the following lines
// form the body. A question without an answer leaves complete = false.
Conversation parse_conversation(std::string_view text);
std::string serialize_conversation(const Conversation &conv);

inline constexpr std::string_view kIncomplete = "incomplete";
inline constexpr std::string_view kTooManyTurns = "too-many-turns";

struct Rejection {
  std::size_t index;
  std::string reason;
};

struct FilterResult {
  std::vector<Conversation> kept;
  std::vector<Rejection> rejected;
};

FilterResult filter_conversations(const std::vector<Conversation> &convs, std::size_t max_turns);

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  // Must be safe to call from several threads at once.
  virtual std::string complete(const std::string &prompt) = 0;
  virtual std::string name() const = 0;
};

// Calls a plain function; the stub used in tests and offline runs.
class StubBackend : public GenerationBackend {
 public:
  using Fn = std::function<std::string(const std::string &)>;
  explicit StubBackend(Fn fn, std::string name = "stub")
      : fn_(std::move(fn)), name_(std::move(name)) { }

  // Answers every prompt with a fixed two-turn conversation about the last
  // SMILES in the prompt.
  static std::unique_ptr<StubBackend> deterministic();

  std::string complete(const std::string &prompt) override { return fn_(prompt); }
  std::string name() const override { return name_; }

 private:
  Fn fn_;
  std::string name_;
};

struct HttpOptions {
  std::string endpoint;  // http://host[:port]/path
  std::string token;     // sent as a bearer token when non-empty
  std::size_t max_retries = 5;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::seconds timeout{60};
};

// POSTs {"prompt": ...} and reads {"completion": ...}. Status 429 and 503
// are retried with exponential backoff; anything else non-200 fails.
class HttpBackend : public GenerationBackend {
 public:
  explicit HttpBackend(HttpOptions options);
  // Token from MOLGRAPH_BACKEND_TOKEN.
  static HttpOptions options_from_env(std::string endpoint);

  std::string complete(const std::string &prompt) override;
  std::string name() const override { return "http"; }

 private:
  HttpOptions options_;
  std::string host_;
  std::string path_;
};

struct GenerationConfig {
  std::size_t exemplar_pool = 50;
  std::size_t exemplars_per_prompt = 3;
  std::size_t max_turns = 8;
  std::size_t concurrency = 1;
  std::uint64_t seed = 0;
  TemplateId template_id = TemplateId::kCaption;
};

struct GenerationStats {
  std::size_t contexts = 0;
  std::size_t pool_size = 0;
  std::size_t generated = 0;
  std::size_t kept = 0;
  std::map<std::string, std::size_t> rejections;

  nlohmann::json to_json() const;
};

struct GenerationOutput {
  std::vector<Conversation> kept;
  std::string jsonl;
  GenerationStats stats;
};

// Step 1 fills the exemplar pool from zero-exemplar prompts over the first
// contexts, step 2 prompts every context with exemplars sampled without
// replacement from the pool, step 3 filters. Per-context failures are counted
// as rejections. Output order follows the input order.
GenerationOutput generate_dataset(const std::vector<MoleculeContext> &contexts,
                                  GenerationBackend &backend, const GenerationConfig &config);

std::string conversation_record(const Conversation &conv);
std::vector<MoleculeContext> parse_contexts(const std::string &jsonl);

}  // namespace molgraph::instructgen

#endif  // MOLGRAPH_INSTRUCTGEN_H_
