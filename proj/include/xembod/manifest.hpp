#pragma once

// Run manifests tie every training or evaluation output back to the exact
// command, resolved config, and seeds that produced it, so a run can be
// replayed bit for bit from the manifest alone.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "xembod/json_io.hpp"

namespace xembod {

struct RunManifest {
  std::string command;                          // subcommand name
  std::vector<std::string> argv;                // raw invocation, for the log
  Json config;                                  // fully resolved settings
  std::map<std::string, std::uint64_t> seeds;   // named seed per consumer
  std::map<std::string, std::string> inputs;    // label -> path of read files
  std::map<std::string, std::string> artifacts; // out-relative path -> hash
  double wall_clock_s = 0.0;
  std::string git_revision;
  std::string created_at;  // ISO 8601, UTC
};

// FNV-1a over the raw bytes, hex encoded. Stable across platforms; used for
// artifact fingerprints, not security.
std::uint64_t fnv1a_bytes(const void* data, std::size_t size);
std::string hash_file(const std::string& path);

// HEAD commit of the repository containing `dir` (walks up, follows one level
// of ref indirection). Empty string when there is no repository.
std::string git_revision_for(const std::string& dir);

std::string utc_timestamp_now();

Json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const Json& j);
RunManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const RunManifest& m);

// Writes rows with full-precision doubles (%.17g) so a reload or a re-run
// compares bit for bit. The header row is written verbatim.
void write_curves_csv(const std::string& path,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows);

}  // namespace xembod
