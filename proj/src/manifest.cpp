#include "xembod/manifest.hpp"

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace xembod {

std::uint64_t fnv1a_bytes(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for hashing: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  char out[24];
  std::snprintf(out, sizeof(out), "fnv1a:%016llx",
                static_cast<unsigned long long>(
                    fnv1a_bytes(bytes.data(), bytes.size())));
  return out;
}

namespace {

std::string read_trimmed(const fs::path& p) {
  std::ifstream in(p);
  if (!in) return "";
  std::string line;
  std::getline(in, line);
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r'))
    line.pop_back();
  return line;
}

}  // namespace

std::string git_revision_for(const std::string& dir) {
  fs::path p = fs::absolute(dir);
  for (int depth = 0; depth < 32 && !p.empty(); ++depth) {
    const fs::path git = p / ".git";
    if (fs::exists(git / "HEAD")) {
      std::string head = read_trimmed(git / "HEAD");
      if (head.rfind("ref: ", 0) == 0) {
        const std::string ref = head.substr(5);
        std::string rev = read_trimmed(git / ref);
        if (!rev.empty()) return rev;
        // packed refs as fallback
        std::ifstream packed(git / "packed-refs");
        std::string line;
        while (std::getline(packed, line)) {
          if (line.size() > ref.size() + 41 &&
              line.compare(41, ref.size(), ref) == 0)
            return line.substr(0, 40);
        }
        return head;
      }
      return head;
    }
    if (p == p.parent_path()) break;
    p = p.parent_path();
  }
  return "";
}

std::string utc_timestamp_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

Json manifest_to_json(const RunManifest& m) {
  Json j;
  j["format"] = "xembod-manifest-v1";
  j["command"] = m.command;
  j["argv"] = m.argv;
  j["config"] = m.config;
  j["seeds"] = Json::object();
  for (const auto& [k, v] : m.seeds) j["seeds"][k] = v;
  j["inputs"] = Json::object();
  for (const auto& [k, v] : m.inputs) j["inputs"][k] = v;
  j["artifacts"] = Json::object();
  for (const auto& [k, v] : m.artifacts) j["artifacts"][k] = v;
  j["wall_clock_s"] = m.wall_clock_s;
  j["git_revision"] = m.git_revision;
  j["created_at"] = m.created_at;
  return j;
}

RunManifest manifest_from_json(const Json& j) {
  if (j.value("format", "") != "xembod-manifest-v1")
    throw std::runtime_error("not a run manifest (missing format tag)");
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  if (j.contains("argv")) m.argv = j["argv"].get<std::vector<std::string>>();
  m.config = j.value("config", Json::object());
  // bind before iterating: items() on a temporary dangles
  const Json seeds = j.value("seeds", Json::object());
  for (const auto& [k, v] : seeds.items()) m.seeds[k] = v.get<std::uint64_t>();
  const Json inputs = j.value("inputs", Json::object());
  for (const auto& [k, v] : inputs.items()) m.inputs[k] = v.get<std::string>();
  const Json artifacts = j.value("artifacts", Json::object());
  for (const auto& [k, v] : artifacts.items())
    m.artifacts[k] = v.get<std::string>();
  m.wall_clock_s = j.value("wall_clock_s", 0.0);
  m.git_revision = j.value("git_revision", "");
  m.created_at = j.value("created_at", "");
  return m;
}

RunManifest load_manifest(const std::string& path) {
  return manifest_from_json(load_json_file(path));
}

void save_manifest(const std::string& path, const RunManifest& m) {
  save_json_file(manifest_to_json(m), path);
}

void write_curves_csv(const std::string& path,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write csv: " + path);
  for (std::size_t i = 0; i < header.size(); ++i)
    out << (i ? "," : "") << header[i];
  out << "\n";
  char buf[40];
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw std::runtime_error("csv row width does not match header");
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
      out << (i ? "," : "") << buf;
    }
    out << "\n";
  }
}

}  // namespace xembod
