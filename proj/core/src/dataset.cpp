#include "promptopt/dataset.hpp"

#include <fstream>
#include <string>

#include "promptopt/json_io.hpp"

namespace promptopt {

std::vector<Example> load_dataset_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw PipelineError("config_error", "cannot open dataset file: " + path.string());
  }
  std::vector<Example> examples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      examples.push_back(nlohmann::json::parse(line).get<Example>());
    } catch (const std::exception& e) {
      throw PipelineError("config_error", path.string() + ":" + std::to_string(line_no) +
                                              ": bad example record: " + e.what());
    }
  }
  return examples;
}

void save_dataset_jsonl(const std::filesystem::path& path,
                        const std::vector<Example>& examples) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF endings everywhere
  if (!out) {
    throw PipelineError("config_error", "cannot write dataset file: " + path.string());
  }
  for (const Example& example : examples) {
    out << nlohmann::json(example).dump() << '\n';
  }
}

}  // namespace promptopt
