#include <functional>

#include <gtest/gtest.h>

#include "verse3d/backends/mock.hpp"
#include "verse3d/backends/mock_server.hpp"
#include "verse3d/backends/http.hpp"
#include "verse3d/core/errors.hpp"
#include "verse3d/parser/parser.hpp"

namespace verse3d {
namespace {

const std::string kAssets = VERSE3D_ASSETS_DIR;

const PromptTemplates& templates() {
  static const PromptTemplates t = PromptTemplates::load(kAssets + "/templates");
  return t;
}

HaikuInput old_pond() { return find_haiku(load_haiku_samples(kAssets + "/haiku/samples.json"), "old-pond"); }

std::shared_ptr<const ScriptedLlm> old_pond_llm() {
  return std::make_shared<ScriptedLlm>(ScriptedLlm::from_file(kAssets + "/transcripts/old_pond.json"));
}

class FnLlm final : public LlmBackend {
 public:
  explicit FnLlm(std::function<std::string(const std::vector<ChatMessage>&)> fn) : fn_(std::move(fn)) {}
  std::string complete(const std::vector<ChatMessage>& m) const override {
    ++calls;
    return fn_(m);
  }
  std::string identifier() const override { return "test"; }
  mutable int calls = 0;

 private:
  std::function<std::string(const std::vector<ChatMessage>&)> fn_;
};

std::string block(const std::string& tag, const std::string& body) { return "```" + tag + "\n" + body + "\n```"; }

const StageOneAnalysis kAnalysis{"The old pond / a frog jumps in / the sound of water", "Edo period.",
                                 "Stillness broken by life.", std::nullopt};

KeyElements triple() {
  return {{{"old pond", "age"}, {"frog jumping in", "life"}, {"sound of water", "ripple"}}, {"stillness"}};
}

TEST(Stage1, OldPondAppreciation) {
  const auto llm = old_pond_llm();
  const StageOneAnalysis a = stage1_translate_appreciate(old_pond(), *llm, templates());
  EXPECT_NE(a.appreciation.find("timelessness and vitality"), std::string::npos);
  EXPECT_EQ(a.attributed_poet.value_or(""), "Matsuo Basho");
  EXPECT_FALSE(a.translation.empty());
}

TEST(Stage1, EmptyHaikuRejected) {
  const auto llm = old_pond_llm();
  EXPECT_THROW(stage1_translate_appreciate({"x", "  \n ", "ja"}, *llm, templates()), DomainError);
}

TEST(Stage1, DeterministicReplay) {
  const auto llm = old_pond_llm();
  EXPECT_EQ(stage1_translate_appreciate(old_pond(), *llm, templates()).to_json().dump(),
            stage1_translate_appreciate(old_pond(), *llm, templates()).to_json().dump());
}

TEST(Stage1, RepairAfterBadAnswer) {
  FnLlm llm([](const std::vector<ChatMessage>& m) {
    if (m.size() == 2) return std::string("Sure! Here is the analysis: it is a lovely poem.");
    EXPECT_EQ(m[2].role, "assistant");
    EXPECT_NE(m[3].content.find("no ```verse3d:stage1 block"), std::string::npos);
    return block("verse3d:stage1", R"({"translation": "t", "cultural_context": "c", "appreciation": "a", "attributed_poet": null})");
  });
  const StageOneAnalysis a = stage1_translate_appreciate(old_pond(), llm, templates());
  EXPECT_EQ(a.translation, "t");
  EXPECT_FALSE(a.attributed_poet.has_value());
  EXPECT_EQ(llm.calls, 2);
}

TEST(Stage2, OldPondElements) {
  const auto llm = old_pond_llm();
  const StageOneAnalysis a = stage1_translate_appreciate(old_pond(), *llm, templates());
  const KeyElements k = stage2_extract_elements(a, *llm, templates());
  ASSERT_EQ(k.elements.size(), 3u);
  EXPECT_EQ(k.elements[0].phrase, "old pond");
  EXPECT_EQ(k.elements[1].phrase, "frog jumping in");
  EXPECT_EQ(k.elements[2].phrase, "sound of water");
}

TEST(Stage2, DuplicatesRemovedInOrder) {
  FnLlm llm([](const std::vector<ChatMessage>&) {
    return block("verse3d:stage2", R"({"elements": [{"phrase": "moon", "symbolic_note": "1"},
      {"phrase": "river", "symbolic_note": "2"}, {"phrase": " moon ", "symbolic_note": "3"},
      {"phrase": "boat", "symbolic_note": "4"}], "emotional_themes": []})");
  });
  const KeyElements k = stage2_extract_elements(kAnalysis, llm, templates());
  ASSERT_EQ(k.elements.size(), 3u);
  EXPECT_EQ(k.elements[0].phrase, "moon");
  EXPECT_EQ(k.elements[0].symbolic_note, "1");
  EXPECT_EQ(k.elements[1].phrase, "river");
  EXPECT_EQ(k.elements[2].phrase, "boat");
}

TEST(Stage2, SchemaViolationFailsAfterRetries) {
  FnLlm llm([](const std::vector<ChatMessage>&) {
    return block("verse3d:stage2", R"({"elements": [{"note": "missing phrase"}]})");
  });
  try {
    stage2_extract_elements(kAnalysis, llm, templates());
    FAIL() << "expected UnparseableResponseError";
  } catch (const UnparseableResponseError& e) {
    EXPECT_NE(e.raw().find("missing phrase"), std::string::npos);
  }
  EXPECT_EQ(llm.calls, 3);

  FnLlm empty([](const std::vector<ChatMessage>&) {
    return block("verse3d:stage2", R"({"elements": [], "emotional_themes": []})");
  });
  EXPECT_THROW(stage2_extract_elements(kAnalysis, empty, templates()), ParseError);
}

TEST(Stage3, WithinBudgetForAllSamples) {
  const ProceduralLlm llm(3);
  const MockTextToImage tok;
  for (const HaikuInput& h : load_haiku_samples(kAssets + "/haiku/samples.json")) {
    const ParseResult r = parse_haiku(h, llm, llm, tok, templates());
    ASSERT_TRUE(r.stage3.has_value());
    EXPECT_LE(r.stage3->token_count, kPromptTokenBudget) << h.id;
    EXPECT_LE(r.prompt.token_count, kPromptTokenBudget) << h.id;
    EXPECT_EQ(r.prompt.token_count, tok.count_tokens(r.prompt.text));
  }
}

std::string long_prompt(int sentences) {
  std::string p;
  for (int i = 0; i < sentences; ++i) p += "Soft mist drifts over the still water near reeds number " + std::to_string(i) + ". ";
  return p;
}

TEST(Stage3, OverBudgetTruncatedAtSentence) {
  const MockTextToImage tok;
  // 12 tokens per sentence; 25 sentences = 300 tokens.
  ASSERT_EQ(tok.count_tokens(long_prompt(25)), 300);
  FnLlm llm([](const std::vector<ChatMessage>&) {
    return block("verse3d:stage3", nlohmann::json{{"prompt", long_prompt(25)}}.dump());
  });
  const EnhancedPrompt p = stage3_enhance(kAnalysis, triple(), llm, tok, templates());
  EXPECT_EQ(llm.calls, 2);
  EXPECT_LE(p.token_count, kPromptTokenBudget);
  EXPECT_EQ(p.token_count, 216);
  EXPECT_EQ(p.text.back(), '.');
  EXPECT_EQ(p.text, long_prompt(18).substr(0, long_prompt(18).size() - 1));
}

TEST(Stage3, TightenedAnswerAccepted) {
  const MockTextToImage tok;
  FnLlm llm([](const std::vector<ChatMessage>& m) {
    const int n = m.size() == 2 ? 25 : 10;
    if (m.size() > 2) EXPECT_NE(m.back().content.find("at most 180 tokens"), std::string::npos);
    return block("verse3d:stage3", nlohmann::json{{"prompt", long_prompt(n)}}.dump());
  });
  const EnhancedPrompt p = stage3_enhance(kAnalysis, triple(), llm, tok, templates());
  EXPECT_EQ(p.token_count, 120);
}

TEST(Truncate, WordFallbackWhenNoSentenceFits) {
  const MockTextToImage tok;
  const std::string t = truncate_to_budget("one two three four five six seven", tok, 4);
  EXPECT_EQ(t, "one two three.");
  EXPECT_LE(tok.count_tokens(t), 4);
}

TEST(Inject, PhrasesVerbatimAndIdempotent) {
  const MockTextToImage tok;
  const EnhancedPrompt base{"A misty garden at dawn.", tok.count_tokens("A misty garden at dawn."), false};
  const EnhancedPrompt once = inject_key_elements(base, triple(), tok);
  EXPECT_TRUE(once.key_elements_appended);
  for (const KeyElement& e : triple().elements) EXPECT_NE(once.text.find(e.phrase), std::string::npos);
  EXPECT_EQ(once.text, "A misty garden at dawn. [must include: old pond, frog jumping in, sound of water]");
  EXPECT_EQ(inject_key_elements(once, triple(), tok), once);
  EnhancedPrompt unflagged = once;
  unflagged.key_elements_appended = false;
  EXPECT_EQ(inject_key_elements(unflagged, triple(), tok).text, once.text);
}

TEST(Inject, BudgetProtectsClause) {
  const MockTextToImage tok;
  const std::string body = long_prompt(18).substr(0, long_prompt(18).size() - 1);
  const EnhancedPrompt p = inject_key_elements({body, tok.count_tokens(body), false}, triple(), tok);
  EXPECT_LE(p.token_count, kPromptTokenBudget);
  EXPECT_NE(p.text.find(elements_clause(triple())), std::string::npos);
  EXPECT_LT(p.text.size(), body.size() + elements_clause(triple()).size());

  KeyElements huge;
  for (int i = 0; i < 120; ++i) huge.elements.push_back({"element " + std::to_string(i), ""});
  EXPECT_THROW(inject_key_elements({"x.", 2, false}, huge, tok), DomainError);
  EXPECT_THROW(inject_key_elements({"x.", 2, false}, KeyElements{}, tok), DomainError);
}

TEST(Pipeline, OldPondDeterministic) {
  const auto llm = old_pond_llm();
  const MockTextToImage tok;
  const ParseResult a = parse_haiku(old_pond(), *llm, *llm, tok, templates());
  const ParseResult b = parse_haiku(old_pond(), *llm, *llm, tok, templates());
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  EXPECT_EQ(ParseResult::from_json(a.to_json()), a);
  for (const char* phrase : {"old pond", "frog jumping in", "sound of water"}) {
    EXPECT_NE(a.prompt.text.find(phrase), std::string::npos) << phrase;
  }
}

TEST(Pipeline, AblationPaths) {
  const auto llm = old_pond_llm();
  const MockTextToImage tok;
  const HaikuInput h = old_pond();
  const ParseResult full = parse_haiku(h, *llm, *llm, tok, templates());

  const ParseResult no_llm = parse_haiku(h, *llm, *llm, tok, templates(), {.disable_enhancement = true});
  EXPECT_FALSE(no_llm.stage3.has_value());
  EXPECT_EQ(no_llm.prompt.text, h.text + elements_clause(full.elements));

  const ParseResult no_elements = parse_haiku(h, *llm, *llm, tok, templates(), {.disable_key_elements = true});
  EXPECT_EQ(no_elements.prompt, *full.stage3);
  EXPECT_EQ(no_elements.prompt.text.find("must include"), std::string::npos);
}

TEST(Pipeline, OverHttpMatchesInProcess) {
  MockServerOptions o;
  o.transcript = kAssets + "/transcripts/old_pond.json";
  MockServer server(o);
  server.start();
  BackendEndpoint e;
  e.base_url = server.base_url();
  const HttpJsonClient client(e);
  const HttpLlm llm(client);
  const HttpTextToImage tok(client);
  const auto local = old_pond_llm();
  EXPECT_EQ(parse_haiku(old_pond(), llm, llm, tok, templates()),
            parse_haiku(old_pond(), *local, *local, MockTextToImage(), templates()));
}

TEST(Templates, RenderingAndBlocks) {
  EXPECT_EQ(render_template("a {{x}} b {{y}}", {{"x", "1"}, {"y", "{{x}}"}}), "a 1 b {{x}}");
  EXPECT_THROW(render_template("{{missing}}", {}), ConfigError);
  EXPECT_EQ(extract_tagged_block("pre ```verse3d:stage1\n{}\n``` post", "verse3d:stage1").value(), "{}\n");
  EXPECT_FALSE(extract_tagged_block("```verse3d:stage12\n{}\n```", "verse3d:stage1").has_value());
  EXPECT_THROW(PromptTemplates::load("/nonexistent"), NotFoundError);
}

TEST(Tokens, FallbackOnTransportError) {
  class Down final : public TokenCounter {
   public:
    int count_tokens(const std::string&) const override { throw TransportError("down", 503); }
  };
  const FallbackTokenCounter c(std::make_shared<Down>());
  EXPECT_EQ(c.count_tokens("old pond"), LocalTokenEstimate().count_tokens("old pond"));
  EXPECT_EQ(FallbackTokenCounter(std::make_shared<MockTextToImage>()).count_tokens("old pond"), 2);
}

}  // namespace
}  // namespace verse3d
