#include <cmath>

#include "mcdban/attention_net.hpp"
#include "mcdban/csv.hpp"
#include "mcdban/error.hpp"

namespace mcdban {

namespace {
constexpr const char* kMagic = "MCDBAN-CHECKPOINT";
}

// Layout, in order: magic, version, config, vocabulary, best_metric,
// threshold, params[{name, rows, cols, values}]. Doubles are written in
// shortest round-trip form, so parameters survive save/load bit for bit.
std::string serialize_checkpoint(const ModelCheckpoint& checkpoint) {
  const BanModel& model = checkpoint.model;
  nlohmann::ordered_json j;
  j["magic"] = kMagic;
  j["version"] = ModelCheckpoint::kFormatVersion;
  j["config"] = nlohmann::ordered_json::parse(nlohmann::json(model.config()).dump());
  j["vocabulary"] = model.vocab().tokens();
  j["best_metric"] = checkpoint.best_metric;
  j["threshold"] = checkpoint.threshold;
  auto params = nlohmann::ordered_json::array();
  for (const auto& p : model.params()) {
    nlohmann::ordered_json entry;
    entry["name"] = p.name;
    entry["rows"] = p.value.rows();
    entry["cols"] = p.value.cols();
    entry["values"] = std::vector<double>(p.value.values().begin(), p.value.values().end());
    params.push_back(std::move(entry));
  }
  j["params"] = std::move(params);
  return j.dump() + "\n";
}

ModelCheckpoint parse_checkpoint(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("corrupt checkpoint: ") + e.what());
  }
  if (!j.is_object() || !j.contains("magic") || j["magic"] != kMagic) {
    throw ValidationError("corrupt checkpoint: missing magic header");
  }
  const int version = j.value("version", -1);
  if (version != ModelCheckpoint::kFormatVersion) {
    throw ValidationError("unsupported version: checkpoint format " + std::to_string(version) +
                          " (this build reads " + std::to_string(ModelCheckpoint::kFormatVersion) + ")");
  }
  try {
    BanConfig config = j.at("config").get<BanConfig>();
    Vocabulary vocab(j.at("vocabulary").get<std::vector<std::string>>());
    std::vector<NamedParam> params;
    for (const auto& entry : j.at("params")) {
      const auto rows = entry.at("rows").get<std::size_t>();
      const auto cols = entry.at("cols").get<std::size_t>();
      auto values = entry.at("values").get<std::vector<double>>();
      params.push_back({entry.at("name").get<std::string>(), Matrix::checked(rows, cols, std::move(values))});
    }
    ModelCheckpoint checkpoint;
    checkpoint.model = BanModel(std::move(config), std::move(vocab), std::move(params));
    checkpoint.best_metric = j.at("best_metric").get<double>();
    checkpoint.threshold = j.at("threshold").get<double>();
    return checkpoint;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("corrupt checkpoint: ") + e.what());
  }
}

void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path) {
  write_text_file(path, serialize_checkpoint(checkpoint));
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ValidationError("checkpoint not found: " + path.string());
  return parse_checkpoint(read_text_file(path));
}

}  // namespace mcdban
