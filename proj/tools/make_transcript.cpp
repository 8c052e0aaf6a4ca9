// Builds the scripted-LLM transcript for one sample verse from per-stage
// canned answers. With --check, compares against the existing file instead.
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "verse3d/backends/mock.hpp"
#include "verse3d/core/image_io.hpp"
#include "verse3d/parser/parser.hpp"

using namespace verse3d;

namespace {

class StageLlm final : public LlmBackend {
 public:
  explicit StageLlm(nlohmann::json answers) : answers_(std::move(answers)) {}
  std::string complete(const std::vector<ChatMessage>& messages) const override {
    const std::string& msg = messages.back().content;
    for (const char* stage : {"stage1", "stage2", "stage3"}) {
      if (msg.find(std::string("verse3d:") + stage) != std::string::npos) return answers_.at(stage);
    }
    throw NotFoundError("no canned answer for request");
  }
  std::string identifier() const override { return "canned"; }

 private:
  nlohmann::json answers_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Build a scripted LLM transcript"};
  std::string templates_dir, samples, responses, output;
  bool check = false;
  app.add_option("--templates", templates_dir)->required();
  app.add_option("--samples", samples)->required();
  app.add_option("--responses", responses)->required();
  app.add_option("--output", output)->required();
  app.add_flag("--check", check, "fail if the output file differs");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto answers = nlohmann::json::parse(read_file(responses));
    const HaikuInput haiku = find_haiku(load_haiku_samples(samples), answers.at("haiku"));
    auto recorder = std::make_shared<RecordingLlm>(std::make_shared<StageLlm>(answers));
    const PromptTemplates templates = PromptTemplates::load(templates_dir);
    MockTextToImage tokenizer;
    // Both ablation paths share stages 1 and 2; the default path adds stage 3.
    parse_haiku(haiku, *recorder, *recorder, tokenizer, templates);
    const auto path = std::filesystem::path(output);
    if (check) {
      const ScriptedLlm existing = ScriptedLlm::from_file(path);
      if (existing.transcript() != recorder->transcript()) {
        std::cerr << "transcript " << output << " is stale; regenerate without --check\n";
        return 1;
      }
      std::cout << "transcript up to date (" << existing.transcript().size() << " entries)\n";
      return 0;
    }
    save_transcript(path, recorder->transcript());
    std::cout << "wrote " << recorder->transcript().size() << " entries to " << output << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
