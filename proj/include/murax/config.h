#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "murax/augment.h"
#include "murax/model.h"
#include "murax/preprocess.h"
#include "murax/trainer.h"

namespace murax {

struct DataConfig {
  std::string root;
  int threads = 1;
};

struct EvalConfig {
  int batch_size = 16;
};

struct RunConfig {
  std::string profile = "desk";  // desk | full
  DataConfig data;
  PreprocessConfig preprocess;
  AugmentConfig augment;
  DenseNetConfig model;
  TrainConfig train;
  EvalConfig eval;
};

// Profile defaults, e.g. resolve_config("desk", ...). Resolution order per
// key: command-line override > config-file value > profile default.
// Unknown section or key -> error.
RunConfig resolve_config(const std::string& profile, const std::string& config_file_path,
                         const std::map<std::string, std::string>& overrides);

// Flat normative log form: sorted "section.key=value" lines.
std::vector<std::string> resolved_lines(const RunConfig& config);

// FNV-1a over the resolved lines.
uint64_t config_hash(const RunConfig& config);

}  // namespace murax
