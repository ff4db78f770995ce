//
// SPDX-License-Identifier: Apache-2.0
//

#include "molgraph/instructgen.h"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <thread>

#include "molgraph/chem.h"
#include "molgraph/rng.h"

namespace molgraph::instructgen {
namespace {

constexpr std::string_view kCaptionTemplate =
    "You are an AI chemical assistant, and you are seeing a single molecule. What you see is "
    "provided with SMILES representation of the molecule and sentences describing the same "
    "molecule you are analyzing. Answer all questions as you are seeing the molecule.\n"
    "Ask diverse questions and give corresponding answers.\n"
    "Include questions asking about the detailed information of the molecule, including the "
    "class, conjugate acid/base, functional groups, chemical role, etc.\n"
    "Do not ask any question that cannot be answered confidently.\n"
    "\n"
    "Molecule SMILES: {SMILES}\n"
    "Caption: {CAPTION}\n"
    "Conversation:\n";

constexpr std::string_view kCaptionIupacTemplate =
    "You are an AI chemical assistant, and you are seeing a single molecule. What you see is "
    "provided with SMILES representation of the molecule and sentences describing the same "
    "molecule you are analyzing. In addition, the IUPAC name of the molecule is given. Answer "
    "all questions as you are seeing the molecule.\n"
    "Ask diverse questions and give corresponding answers.\n"
    "Include questions asking about the detailed information of the molecule, including the "
    "class, conjugate acid/base, functional groups, chemical role, etc.\n"
    "Do not ask any questions that cannot be answered confidently.\n"
    "\n"
    "Molecule SMILES: {SMILES}\n"
    "Caption: {CAPTION}\n"
    "IUPAC: {IUPAC}\n"
    "Conversation:\n";

constexpr std::string_view kContextStart = "Molecule SMILES: ";

// Replaces placeholders in one left-to-right pass, so substituted text is
// never rescanned.
std::string substitute(std::string_view text, const MoleculeContext &ctx) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto open = text.find('{', i);
    if (open == std::string_view::npos) break;
    const auto close = text.find('}', open);
    if (close == std::string_view::npos) break;
    out.append(text.substr(i, open - i));
    const auto key = text.substr(open + 1, close - open - 1);
    if (key == "SMILES") {
      out += ctx.smiles;
    } else if (key == "CAPTION") {
      out += ctx.caption;
    } else if (key == "IUPAC") {
      out += ctx.iupac.value_or("");
    } else {
      out.append(text.substr(open, close - open + 1));
    }
    i = close + 1;
  }
  out.append(text.substr(std::min(i, text.size())));
  return out;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto &t : threads) t.join();
}

struct Attempt {
  std::optional<Conversation> conv;
  std::string failure;
};

Attempt attempt(GenerationBackend &backend, const std::string &prompt,
                const MoleculeContext &ctx) {
  Attempt a;
  try {
    auto conv = parse_conversation(backend.complete(prompt));
    conv.source = ctx;
    a.conv = std::move(conv);
  } catch (const MalformedBlock &) {
    a.failure = "malformed";
  } catch (const BackendFailure &) {
    a.failure = "backend-failure";
  }
  return a;
}

std::uint64_t context_seed(std::uint64_t seed, std::size_t index) {
  return seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(index) + 1));
}

}  // namespace

TemplateId parse_template(std::string_view name) {
  if (name == "caption") return TemplateId::kCaption;
  if (name == "caption+iupac") return TemplateId::kCaptionIupac;
  throw UnknownTemplate("unknown template '" + std::string(name) +
                        "' (expected caption or caption+iupac)");
}

std::string_view to_string(TemplateId id) {
  return id == TemplateId::kCaption ? "caption" : "caption+iupac";
}

std::string_view template_text(TemplateId id) {
  return id == TemplateId::kCaption ? kCaptionTemplate : kCaptionIupacTemplate;
}

std::string build_prompt(const MoleculeContext &ctx, const std::vector<Conversation> &exemplars,
                         TemplateId id) {
  if (id != TemplateId::kCaption && id != TemplateId::kCaptionIupac)
    throw UnknownTemplate("unknown template id");
  if (ctx.smiles.empty()) throw MissingField("context has no SMILES");
  if (ctx.caption.empty()) throw MissingField("context has no caption");
  if (id == TemplateId::kCaptionIupac && (!ctx.iupac || ctx.iupac->empty()))
    throw MissingField("the caption+iupac template needs an IUPAC name");
  const std::string_view text = template_text(id);
  const auto split = text.find(kContextStart);
  const std::string_view header = text.substr(0, split);
  const std::string_view context = text.substr(split);
  std::string out(header);
  for (const auto &ex : exemplars) {
    out += substitute(context, ex.source);
    out += serialize_conversation(ex);
    out += '\n';
  }
  out += substitute(context, ctx);
  return out;
}

Conversation parse_conversation(std::string_view text) {
  std::vector<std::vector<std::string_view>> blocks(1);
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    if (trim(line) == "===") {
      blocks.emplace_back();
    } else {
      blocks.back().push_back(line);
    }
    pos = end + 1;
  }

  Conversation conv;
  std::optional<std::string> pending;
  bool any = false;
  for (const auto &block : blocks) {
    std::size_t first = 0;
    while (first < block.size() && trim(block[first]).empty()) ++first;
    if (first == block.size()) continue;
    any = true;
    const auto header = trim(block[first]);
    bool question;
    std::string_view rest;
    if (header.starts_with("Question:")) {
      question = true;
      rest = header.substr(9);
    } else if (header.starts_with("Answer:")) {
      question = false;
      rest = header.substr(7);
    } else {
      throw MalformedBlock("block starts with '" + std::string(header) +
                           "', expected Question: or Answer:");
    }
    std::string body(trim(rest));
    for (std::size_t i = first + 1; i < block.size(); ++i) {
      if (!body.empty()) body += '\n';
      body += trim(block[i]);
    }
    body = std::string(trim(body));
    if (question) {
      if (pending) {
        conv.turns.push_back({*pending, ""});
        conv.complete = false;
      }
      pending = std::move(body);
    } else {
      if (!pending) throw MalformedBlock("answer block without a preceding question");
      if (body.empty() || pending->empty()) conv.complete = false;
      conv.turns.push_back({std::move(*pending), std::move(body)});
      pending.reset();
    }
  }
  if (!any) throw MalformedBlock("conversation text is empty");
  if (pending) {
    conv.turns.push_back({*pending, ""});
    conv.complete = false;
  }
  return conv;
}

std::string serialize_conversation(const Conversation &conv) {
  std::string out;
  for (std::size_t i = 0; i < conv.turns.size(); ++i) {
    if (i > 0) out += "===\n";
    out += "Question:\n" + conv.turns[i].question + "\n";
    if (!conv.turns[i].answer.empty()) out += "===\nAnswer:\n" + conv.turns[i].answer + "\n";
  }
  return out;
}

FilterResult filter_conversations(const std::vector<Conversation> &convs, std::size_t max_turns) {
  if (max_turns < 1) throw std::invalid_argument("max_turns must be at least 1");
  FilterResult r;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const auto &c = convs[i];
    const bool answered = std::all_of(c.turns.begin(), c.turns.end(), [](const Turn &t) {
      return !t.question.empty() && !t.answer.empty();
    });
    if (!c.complete || c.turns.empty() || !answered) {
      r.rejected.push_back({i, std::string(kIncomplete)});
    } else if (c.turns.size() > max_turns) {
      r.rejected.push_back({i, std::string(kTooManyTurns)});
    } else {
      r.kept.push_back(c);
    }
  }
  return r;
}

std::unique_ptr<StubBackend> StubBackend::deterministic() {
  return std::make_unique<StubBackend>([](const std::string &prompt) {
    std::string smiles;
    const auto at = prompt.rfind(kContextStart);
    if (at != std::string::npos) {
      const auto start = at + kContextStart.size();
      smiles = prompt.substr(start, prompt.find('\n', start) - start);
    }
    return "Question:\nWhat is the SMILES string of this molecule?\n===\nAnswer:\n"
           "The SMILES string is " + smiles + ".\n===\nQuestion:\n"
           "How long is its SMILES string?\n===\nAnswer:\nIt has " +
           std::to_string(smiles.size()) + " characters.\n";
  });
}

nlohmann::json GenerationStats::to_json() const {
  return {{"contexts", contexts}, {"pool_size", pool_size}, {"generated", generated},
          {"kept", kept},         {"rejections", rejections}};
}

std::string conversation_record(const Conversation &conv) {
  nlohmann::json j;
  j["smiles"] = conv.source.smiles;
  j["caption"] = conv.source.caption;
  if (conv.source.iupac) j["iupac"] = *conv.source.iupac;
  j["conversation"] = nlohmann::json::array();
  for (const auto &t : conv.turns)
    j["conversation"].push_back({{"question", t.question}, {"answer", t.answer}});
  return j.dump();
}

std::vector<MoleculeContext> parse_contexts(const std::string &jsonl) {
  std::vector<MoleculeContext> out;
  std::istringstream in(jsonl);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("smiles") || !j["smiles"].is_string())
      throw std::invalid_argument("context line " + std::to_string(number) +
                                  " is not an object with a smiles string");
    MoleculeContext ctx;
    ctx.smiles = j["smiles"].get<std::string>();
    ctx.caption = j.value("caption", std::string());
    if (j.contains("iupac") && j["iupac"].is_string()) ctx.iupac = j["iupac"].get<std::string>();
    out.push_back(std::move(ctx));
  }
  return out;
}

GenerationOutput generate_dataset(const std::vector<MoleculeContext> &contexts,
                                  GenerationBackend &backend, const GenerationConfig &config) {
  if (config.max_turns < 1) throw std::invalid_argument("max_turns must be at least 1");
  GenerationOutput out;
  auto &stats = out.stats;
  stats.contexts = contexts.size();

  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    if (chem::validate(contexts[i].smiles)) {
      valid.push_back(i);
    } else {
      ++stats.rejections["invalid-smiles"];
    }
  }

  // Step 1: exemplar pool from zero-exemplar prompts.
  const std::size_t seeds = std::min(config.exemplar_pool, valid.size());
  std::vector<Attempt> seeded(seeds);
  parallel_for(seeds, config.concurrency, [&](std::size_t k) {
    const auto &ctx = contexts[valid[k]];
    seeded[k] = attempt(backend, build_prompt(ctx, {}, config.template_id), ctx);
  });
  std::vector<Conversation> pool;
  for (auto &a : seeded) {
    if (!a.conv) continue;
    auto f = filter_conversations({*a.conv}, config.max_turns);
    if (!f.kept.empty()) pool.push_back(std::move(f.kept.front()));
  }
  stats.pool_size = pool.size();

  // Step 2: in-context generation with sampled exemplars.
  std::vector<Attempt> results(valid.size());
  parallel_for(valid.size(), config.concurrency, [&](std::size_t k) {
    Rng rng(context_seed(config.seed, valid[k]));
    std::vector<std::size_t> ids(pool.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    const std::size_t take = std::min(config.exemplars_per_prompt, ids.size());
    std::vector<Conversation> exemplars;
    for (std::size_t i = 0; i < take; ++i) {
      std::swap(ids[i], ids[i + rng.below(ids.size() - i)]);
      exemplars.push_back(pool[ids[i]]);
    }
    const auto &ctx = contexts[valid[k]];
    results[k] = attempt(backend, build_prompt(ctx, exemplars, config.template_id), ctx);
  });

  // Step 3: filtering.
  std::vector<Conversation> generated;
  for (auto &a : results) {
    if (a.conv) {
      generated.push_back(std::move(*a.conv));
    } else {
      ++stats.rejections[a.failure];
    }
  }
  stats.generated = generated.size();
  auto filtered = filter_conversations(generated, config.max_turns);
  for (const auto &r : filtered.rejected) ++stats.rejections[r.reason];
  stats.kept = filtered.kept.size();
  for (const auto &c : filtered.kept) out.jsonl += conversation_record(c) + "\n";
  out.kept = std::move(filtered.kept);
  return out;
}

}  // namespace molgraph::instructgen
