#include "xembod/json_io.hpp"

#include <fstream>

namespace xembod {

Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("parse error in '" + path + "': " + e.what());
  }
  return j;
}

void save_json_file(const Json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

Json spec_to_json(const EmbodimentSpec& spec) {
  Json j;
  j["name"] = spec.name;
  j["root_link"] = spec.root_link;
  j["root_height"] = spec.root_height;
  j["links"] = Json::array();
  for (const auto& l : spec.links) {
    Json lj;
    lj["name"] = l.name;
    lj["parent"] = l.parent;
    lj["mass"] = l.mass;
    lj["inertia_scale"] = l.inertia_scale;
    j["links"].push_back(lj);
  }
  j["joints"] = Json::array();
  for (const auto& jd : spec.joints) {
    Json jj;
    jj["name"] = jd.name;
    jj["parent_link"] = jd.parent_link;
    jj["child_link"] = jd.child_link;
    jj["axis"] = to_json(jd.axis);
    jj["lower_limit"] = jd.lower_limit;
    jj["upper_limit"] = jd.upper_limit;
    jj["offset"] = to_json(jd.offset);
    j["joints"].push_back(jj);
  }
  j["groups"] = Json::array();
  for (const auto& g : spec.groups) {
    Json gj;
    gj["part_id"] = g.part_id;
    gj["joints"] = g.joint_names;
    gj["end_frame"] = g.end_frame;
    j["groups"].push_back(gj);
  }
  return j;
}

EmbodimentSpec spec_from_json(const Json& j) {
  EmbodimentSpec spec;
  try {
    spec.name = j.at("name").get<std::string>();
    spec.root_link = j.at("root_link").get<std::string>();
    spec.root_height = j.at("root_height").get<double>();
    for (const auto& lj : j.at("links")) {
      LinkDef l;
      l.name = lj.at("name").get<std::string>();
      l.parent = lj.value("parent", std::string{});
      l.mass = lj.value("mass", 0.0);
      l.inertia_scale = lj.value("inertia_scale", 0.0);
      spec.links.push_back(l);
    }
    for (const auto& jj : j.at("joints")) {
      JointDef jd;
      jd.name = jj.at("name").get<std::string>();
      jd.parent_link = jj.at("parent_link").get<std::string>();
      jd.child_link = jj.at("child_link").get<std::string>();
      jd.axis = vec3_from_json(jj.at("axis"), "joint axis");
      jd.lower_limit = jj.at("lower_limit").get<double>();
      jd.upper_limit = jj.at("upper_limit").get<double>();
      jd.offset = transform_from_json(jj.at("offset"), "joint offset");
      spec.joints.push_back(jd);
    }
    for (const auto& gj : j.at("groups")) {
      FunctionalGroup g;
      g.part_id = gj.at("part_id").get<std::string>();
      g.joint_names = gj.at("joints").get<std::vector<std::string>>();
      g.end_frame = gj.at("end_frame").get<std::string>();
      spec.groups.push_back(g);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed embodiment spec: ") + e.what());
  }
  return spec;
}

EmbodimentSpec load_spec(const std::string& path) {
  return spec_from_json(load_json_file(path));
}

void save_spec(const EmbodimentSpec& spec, const std::string& path) {
  save_json_file(spec_to_json(spec), path);
}

}  // namespace xembod
