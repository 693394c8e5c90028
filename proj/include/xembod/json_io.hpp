#pragma once

#include <json.hpp>
#include <string>

#include "xembod/embodiment.hpp"
#include "xembod/transform.hpp"

namespace xembod {

// Ordered keys keep saved files byte-stable across runs.
using Json = nlohmann::ordered_json;

inline Json to_json(const Vector3d& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline Vector3d vec3_from_json(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != 3)
    throw std::runtime_error(std::string(what) + ": expected 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

// quaternions are stored wxyz
inline Json to_json(const Quaterniond& q) {
  return Json::array({q.w(), q.x(), q.y(), q.z()});
}

inline Quaterniond quat_from_json(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != 4)
    throw std::runtime_error(std::string(what) + ": expected 4-element array (wxyz)");
  return Quaterniond(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
                     j[3].get<double>());
}

inline Json to_json(const Transform& t) {
  Json j;
  j["pos"] = to_json(t.position);
  j["quat"] = to_json(t.orientation);
  return j;
}

inline Transform transform_from_json(const Json& j, const char* what) {
  if (!j.is_object())
    throw std::runtime_error(std::string(what) + ": expected {pos, quat} object");
  return Transform(vec3_from_json(j.at("pos"), what),
                   quat_from_json(j.at("quat"), what));
}

Json spec_to_json(const EmbodimentSpec& spec);
EmbodimentSpec spec_from_json(const Json& j);
EmbodimentSpec load_spec(const std::string& path);
void save_spec(const EmbodimentSpec& spec, const std::string& path);

Json load_json_file(const std::string& path);
void save_json_file(const Json& j, const std::string& path);

}  // namespace xembod
