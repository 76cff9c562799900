#pragma once

// Command-line front end: train, evaluate, explain, synth.
// Exit codes: 0 success, 1 usage/config, 2 data, 3 numeric failure.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "akgan/run_config.hpp"

namespace akgan {

struct Dataset {
  KnowledgeGraph graph;
  InteractionSet data;
};

/// Interactions first (item count from the config or inferred), then the KG,
/// whose entity set is widened to cover every item.
Dataset load_dataset(const RunConfig& cfg);

/// relation_id<TAB>name rows. Missing ids fall back to r<id>.
std::map<RelationId, std::string> read_relation_names(const std::filesystem::path& path);
std::string relation_label(const std::map<RelationId, std::string>& names, RelationId r);

/// Creates dir/.lock exclusively; throws ConfigError if another run holds it.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// Parses argv and runs a command; never throws.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace akgan
