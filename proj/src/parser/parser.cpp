#include "verse3d/parser/parser.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "verse3d/core/errors.hpp"
#include "verse3d/core/image_io.hpp"

namespace verse3d {

namespace {

using nlohmann::json;

constexpr const char* kClauseOpen = " [must include: ";

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string read_template(const std::filesystem::path& dir, const char* name) {
  const auto path = dir / name;
  if (!std::filesystem::exists(path)) throw NotFoundError("template not found: " + path.string());
  return read_file(path);
}

std::string require_string(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw ParseError(std::string("field '") + key + "' must be a string");
  }
  return j[key].get<std::string>();
}

// Sends `messages` and decodes the tagged block. A failed attempt appends the
// raw answer and a repair request, then asks again.
template <typename T, typename Decode>
T exchange(const LlmBackend& llm, std::vector<ChatMessage> messages, const PromptTemplates& templates,
           const std::string& tag, const std::string& schema, const ParserOptions& opts,
           Decode decode) {
  std::string raw;
  std::string error;
  for (int attempt = 0; attempt <= opts.max_retries; ++attempt) {
    raw = llm.complete(messages);
    try {
      const auto block = extract_tagged_block(raw, tag);
      if (!block) throw ParseError("no ```" + tag + " block found");
      json j;
      try {
        j = json::parse(*block);
      } catch (const json::exception& e) {
        throw ParseError(std::string("block is not valid JSON: ") + e.what());
      }
      return decode(j);
    } catch (const ParseError& e) {
      error = e.what();
    } catch (const DomainError& e) {
      error = e.what();
    }
    spdlog::warn("{}: unusable response (attempt {}): {}", tag, attempt + 1, error);
    messages.push_back({"assistant", raw});
    messages.push_back(
        {"user", render_template(templates.repair, {{"error", error}, {"tag", tag}, {"schema", schema}})});
  }
  throw UnparseableResponseError(tag + ": no usable response after " +
                                     std::to_string(opts.max_retries + 1) + " attempts: " + error +
                                     "\n--- last response ---\n" + raw,
                                 raw);
}

const char* const kStage1Schema =
    R"({"translation": "...", "cultural_context": "...", "appreciation": "...", "attributed_poet": "... or null"})";
const char* const kStage2Schema =
    R"({"elements": [{"phrase": "...", "symbolic_note": "..."}], "emotional_themes": ["..."]})";
const char* const kStage3Schema = R"({"prompt": "..."})";

std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < text.size(); ++i) {
    cur += text[i];
    const char c = text[i];
    const bool end = (c == '.' || c == '!' || c == '?') &&
                     (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])));
    if (end) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!trim(cur).empty()) out.push_back(cur);
  return out;
}

}  // namespace

void HaikuInput::validate() const {
  if (trim(text).empty()) throw DomainError("haiku: text must be non-empty");
  if (id.empty()) throw DomainError("haiku: id must be non-empty");
}

std::vector<HaikuInput> load_haiku_samples(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw NotFoundError("haiku samples not found: " + path.string());
  std::vector<HaikuInput> out;
  try {
    const json j = json::parse(read_file(path));
    for (const json& h : j.at("haiku")) {
      out.push_back({h.at("id"), h.at("text"), h.value("language", std::string())});
    }
  } catch (const json::exception& e) {
    throw ParseError("haiku samples " + path.string() + ": " + e.what());
  }
  return out;
}

HaikuInput find_haiku(const std::vector<HaikuInput>& samples, const std::string& id) {
  for (const HaikuInput& h : samples) {
    if (h.id == id) return h;
  }
  throw NotFoundError("no haiku with id '" + id + "'");
}

void StageOneAnalysis::validate() const {
  if (trim(translation).empty()) throw DomainError("stage1: translation must be non-empty");
}

json StageOneAnalysis::to_json() const {
  return {{"translation", translation},
          {"cultural_context", cultural_context},
          {"appreciation", appreciation},
          {"attributed_poet", attributed_poet ? json(*attributed_poet) : json(nullptr)}};
}

StageOneAnalysis StageOneAnalysis::from_json(const json& j) {
  if (!j.is_object()) throw ParseError("stage1: expected an object");
  StageOneAnalysis a;
  a.translation = require_string(j, "translation");
  a.cultural_context = require_string(j, "cultural_context");
  a.appreciation = require_string(j, "appreciation");
  if (j.contains("attributed_poet") && !j["attributed_poet"].is_null()) {
    a.attributed_poet = require_string(j, "attributed_poet");
  }
  return a;
}

void KeyElements::validate() const {
  if (elements.empty()) throw DomainError("key elements: at least one element is required");
  std::set<std::string> seen;
  for (const KeyElement& e : elements) {
    if (trim(e.phrase).empty()) throw DomainError("key elements: phrases must be non-empty");
    if (!seen.insert(e.phrase).second) throw DomainError("key elements: duplicate phrase '" + e.phrase + "'");
  }
}

json KeyElements::to_json() const {
  json arr = json::array();
  for (const KeyElement& e : elements) arr.push_back({{"phrase", e.phrase}, {"symbolic_note", e.symbolic_note}});
  return {{"elements", arr}, {"emotional_themes", emotional_themes}};
}

KeyElements KeyElements::from_json(const json& j) {
  if (!j.is_object() || !j.contains("elements") || !j["elements"].is_array()) {
    throw ParseError("stage2: 'elements' must be an array");
  }
  KeyElements k;
  for (const json& e : j["elements"]) {
    if (!e.is_object()) throw ParseError("stage2: each element must be an object");
    k.elements.push_back({require_string(e, "phrase"), e.value("symbolic_note", std::string())});
  }
  if (j.contains("emotional_themes")) {
    if (!j["emotional_themes"].is_array()) throw ParseError("stage2: 'emotional_themes' must be an array");
    for (const json& t : j["emotional_themes"]) {
      if (!t.is_string()) throw ParseError("stage2: themes must be strings");
      k.emotional_themes.push_back(t);
    }
  }
  return k;
}

KeyElements deduplicate(KeyElements in) {
  KeyElements out;
  out.emotional_themes = std::move(in.emotional_themes);
  std::set<std::string> seen;
  for (KeyElement& e : in.elements) {
    e.phrase = trim(e.phrase);
    if (seen.insert(e.phrase).second) out.elements.push_back(std::move(e));
  }
  return out;
}

json EnhancedPrompt::to_json() const {
  return {{"text", text}, {"token_count", token_count}, {"key_elements_appended", key_elements_appended}};
}

EnhancedPrompt EnhancedPrompt::from_json(const json& j) {
  return {j.at("text"), j.at("token_count"), j.at("key_elements_appended")};
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
  PromptTemplates t;
  t.version = trim(read_template(dir, "VERSION"));
  t.system = read_template(dir, "system.txt");
  t.stage1 = read_template(dir, "stage1.txt");
  t.stage2 = read_template(dir, "stage2.txt");
  t.stage3 = read_template(dir, "stage3.txt");
  t.tighten = read_template(dir, "tighten.txt");
  t.repair = read_template(dir, "repair.txt");
  return t;
}

std::string render_template(const std::string& tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string::npos) break;
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string::npos) break;
    const std::string name = tmpl.substr(open + 2, close - open - 2);
    const auto it = vars.find(name);
    if (it == vars.end()) throw ConfigError("template: no value for placeholder {{" + name + "}}");
    out.append(tmpl, pos, open - pos);
    out += it->second;
    pos = close + 2;
  }
  out.append(tmpl, pos, std::string::npos);
  return out;
}

std::optional<std::string> extract_tagged_block(const std::string& text, const std::string& tag) {
  const std::string fence = "```" + tag;
  std::size_t at = 0;
  while ((at = text.find(fence, at)) != std::string::npos) {
    const std::size_t after = at + fence.size();
    // The tag must end the fence line.
    const std::size_t eol = text.find('\n', after);
    if (eol != std::string::npos && trim(text.substr(after, eol - after)).empty()) {
      const std::size_t end = text.find("```", eol + 1);
      if (end == std::string::npos) return std::nullopt;
      return text.substr(eol + 1, end - eol - 1);
    }
    at = after;
  }
  return std::nullopt;
}

int FallbackTokenCounter::count_tokens(const std::string& text) const {
  if (primary_) {
    try {
      return primary_->count_tokens(text);
    } catch (const TransportError& e) {
      spdlog::warn("tokenizer unavailable ({}); using the local estimate", e.what());
    }
  }
  return local_.count_tokens(text);
}

StageOneAnalysis stage1_translate_appreciate(const HaikuInput& haiku, const LlmBackend& llm,
                                             const PromptTemplates& templates, const ParserOptions& opts) {
  haiku.validate();
  std::vector<ChatMessage> messages = {
      {"system", templates.system},
      {"user", render_template(templates.stage1,
                               {{"haiku", trim(haiku.text)},
                                {"language", haiku.language.empty() ? "unknown" : haiku.language}})}};
  return exchange<StageOneAnalysis>(llm, std::move(messages), templates, "verse3d:stage1", kStage1Schema,
                                    opts, [](const json& j) {
                                      StageOneAnalysis a = StageOneAnalysis::from_json(j);
                                      a.validate();
                                      return a;
                                    });
}

KeyElements stage2_extract_elements(const StageOneAnalysis& analysis, const LlmBackend& llm,
                                    const PromptTemplates& templates, const ParserOptions& opts) {
  analysis.validate();
  std::vector<ChatMessage> messages = {
      {"system", templates.system},
      {"user", render_template(templates.stage2, {{"translation", analysis.translation},
                                                  {"cultural_context", analysis.cultural_context},
                                                  {"appreciation", analysis.appreciation}})}};
  return exchange<KeyElements>(llm, std::move(messages), templates, "verse3d:stage2", kStage2Schema, opts,
                               [](const json& j) {
                                 KeyElements k = deduplicate(KeyElements::from_json(j));
                                 k.validate();
                                 return k;
                               });
}

std::string truncate_to_budget(const std::string& text, const TokenCounter& counter, int budget) {
  if (budget < 1) throw DomainError("truncate: budget must be positive");
  if (counter.count_tokens(text) <= budget) return text;
  std::string kept;
  for (const std::string& s : split_sentences(text)) {
    const std::string next = kept + s;
    if (counter.count_tokens(trim(next)) > budget) break;
    kept = next;
  }
  if (!trim(kept).empty()) return trim(kept);
  std::string words;
  std::string word;
  std::istringstream in(text);
  while (in >> word) {
    const std::string next = words.empty() ? word : words + " " + word;
    if (counter.count_tokens(next + ".") > budget) break;
    words = next;
  }
  while (!words.empty() && std::ispunct(static_cast<unsigned char>(words.back()))) words.pop_back();
  return words.empty() ? std::string() : words + ".";
}

EnhancedPrompt stage3_enhance(const StageOneAnalysis& analysis, const KeyElements& elements,
                              const LlmBackend& llm, const TokenCounter& counter,
                              const PromptTemplates& templates, const ParserOptions& opts) {
  analysis.validate();
  elements.validate();
  const int budget = opts.token_budget;
  std::string list;
  for (const KeyElement& e : elements.elements) list += "- " + e.phrase + "\n";
  std::string themes;
  for (const std::string& t : elements.emotional_themes) themes += (themes.empty() ? "" : ", ") + t;
  std::vector<ChatMessage> messages = {
      {"system", templates.system},
      {"user", render_template(templates.stage3, {{"translation", analysis.translation},
                                                  {"elements", trim(list)},
                                                  {"themes", themes},
                                                  {"budget", std::to_string(budget)}})}};
  const auto decode = [](const json& j) {
    std::string p = trim(require_string(j, "prompt"));
    if (p.empty()) throw ParseError("stage3: prompt must be non-empty");
    return p;
  };
  std::string text = exchange<std::string>(llm, messages, templates, "verse3d:stage3", kStage3Schema, opts, decode);
  int count = counter.count_tokens(text);
  if (count > budget) {
    spdlog::info("stage3 prompt has {} tokens (budget {}); requesting a shorter one", count, budget);
    messages.push_back({"assistant", "```verse3d:stage3\n" + json{{"prompt", text}}.dump() + "\n```"});
    messages.push_back({"user", render_template(templates.tighten, {{"count", std::to_string(count)},
                                                                    {"budget", std::to_string(budget)},
                                                                    {"target", std::to_string(budget * 4 / 5)}})});
    text = exchange<std::string>(llm, messages, templates, "verse3d:stage3", kStage3Schema, opts, decode);
    count = counter.count_tokens(text);
    if (count > budget) {
      spdlog::warn("stage3 prompt still has {} tokens; truncating at a sentence boundary", count);
      text = truncate_to_budget(text, counter, budget);
      count = counter.count_tokens(text);
    }
  }
  return {text, count, false};
}

std::string elements_clause(const KeyElements& elements) {
  std::string out = kClauseOpen;
  for (std::size_t i = 0; i < elements.elements.size(); ++i) {
    out += (i ? ", " : "") + elements.elements[i].phrase;
  }
  return out + "]";
}

EnhancedPrompt inject_key_elements(const EnhancedPrompt& prompt, const KeyElements& elements,
                                   const TokenCounter& counter, int budget) {
  elements.validate();
  if (prompt.key_elements_appended || prompt.text.find(kClauseOpen) != std::string::npos) return prompt;
  const std::string clause = elements_clause(elements);
  if (counter.count_tokens(trim(clause)) > budget) {
    throw DomainError("key elements alone exceed the token budget of " + std::to_string(budget));
  }
  std::string body = prompt.text;
  int body_budget = budget - counter.count_tokens(clause);
  while (true) {
    const std::string text = body + clause;
    const int count = counter.count_tokens(text);
    if (count <= budget) return {text, count, true};
    if (body_budget < 1) throw DomainError("key elements alone exceed the token budget");
    body = truncate_to_budget(body, counter, body_budget);
    --body_budget;
  }
}

EnhancedPrompt raw_haiku_prompt(const HaikuInput& haiku, const TokenCounter& counter, int budget) {
  haiku.validate();
  std::string text = trim(haiku.text);
  if (counter.count_tokens(text) > budget) text = truncate_to_budget(text, counter, budget);
  return {text, counter.count_tokens(text), false};
}

json ParseResult::to_json() const {
  return {{"analysis", analysis.to_json()},
          {"elements", elements.to_json()},
          {"stage3", stage3 ? stage3->to_json() : json(nullptr)},
          {"prompt", prompt.to_json()}};
}

ParseResult ParseResult::from_json(const json& j) {
  ParseResult r;
  r.analysis = StageOneAnalysis::from_json(j.at("analysis"));
  r.elements = KeyElements::from_json(j.at("elements"));
  if (!j.at("stage3").is_null()) r.stage3 = EnhancedPrompt::from_json(j["stage3"]);
  r.prompt = EnhancedPrompt::from_json(j.at("prompt"));
  return r;
}

ParseResult parse_haiku(const HaikuInput& haiku, const LlmBackend& analysis_llm,
                        const LlmBackend& enhance_llm, const TokenCounter& counter,
                        const PromptTemplates& templates, const ParseFlags& flags,
                        const ParserOptions& opts) {
  ParseResult r;
  r.analysis = stage1_translate_appreciate(haiku, analysis_llm, templates, opts);
  r.elements = stage2_extract_elements(r.analysis, analysis_llm, templates, opts);
  if (flags.disable_enhancement) {
    r.prompt = raw_haiku_prompt(haiku, counter, opts.token_budget);
  } else {
    r.stage3 = stage3_enhance(r.analysis, r.elements, enhance_llm, counter, templates, opts);
    r.prompt = *r.stage3;
  }
  if (!flags.disable_key_elements) {
    r.prompt = inject_key_elements(r.prompt, r.elements, counter, opts.token_budget);
  }
  return r;
}

}  // namespace verse3d
