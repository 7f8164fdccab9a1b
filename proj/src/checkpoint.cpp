#include "morphaeus/checkpoint.hpp"

#include <ATen/CPUGeneratorImpl.h>

namespace morphaeus {

namespace fs = std::filesystem;

void save_checkpoint(const fs::path& path, AnomalyModel& model, int epoch, const nlohmann::json& meta) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  torch::serialize::OutputArchive archive;
  archive.write("schema", c10::IValue(kCheckpointSchema));
  archive.write("spec", c10::IValue(model.spec().to_json().dump()));
  archive.write("epoch", c10::IValue(static_cast<int64_t>(epoch)));
  archive.write("meta", c10::IValue(meta.dump()));
  archive.write("rng_state", at::detail::getDefaultCPUGenerator().get_state(), /*is_buffer=*/true);
  torch::serialize::OutputArchive weights;
  model.save(weights);
  archive.write("model", weights);
  // Write to a sibling file first so an interrupted save never leaves a torn checkpoint.
  fs::path tmp = path;
  tmp += ".partial";
  archive.save_to(tmp.string());
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path, bool restore_rng) {
  if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw RuntimeFailure("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  c10::IValue schema, spec, epoch, meta;
  archive.read("schema", schema);
  if (!schema.isInt() || schema.toInt() != kCheckpointSchema) {
    throw ConfigError("unsupported checkpoint schema in " + path.string());
  }
  archive.read("spec", spec);
  archive.read("epoch", epoch);
  archive.read("meta", meta);

  Checkpoint ck;
  ck.model = build_model(ModelSpec::from_json(nlohmann::json::parse(spec.toStringRef())));
  ck.epoch = static_cast<int>(epoch.toInt());
  ck.meta = nlohmann::json::parse(meta.toStringRef());

  torch::serialize::InputArchive weights;
  archive.read("model", weights);
  ck.model->load(weights);
  ck.model->eval();

  if (restore_rng) {
    Tensor state;
    archive.read("rng_state", state, /*is_buffer=*/true);
    auto generator = at::detail::getDefaultCPUGenerator();
    generator.set_state(state);
  }
  return ck;
}

}  // namespace morphaeus
