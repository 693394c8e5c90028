#pragma once

#include <Eigen/Dense>
#include <string>
#include <unordered_map>
#include <vector>

#include "xembod/transform.hpp"

namespace xembod {

struct LinkDef {
  std::string name;
  std::string parent;  // empty for the root link
  double mass = 0.0;   // kg
  double inertia_scale = 0.0;  // reflected joint-space inertia seen by the parent joint
};

// Single-axis revolute joint. Joint frame = parent link frame ∘ offset; the
// child link frame coincides with the joint frame rotated by q about `axis`.
// Multi-DoF joints are stacks of these.
struct JointDef {
  std::string name;
  std::string parent_link;
  std::string child_link;
  Vector3d axis{0, 0, 1};       // unit, in the joint frame
  double lower_limit = -M_PI;   // rad
  double upper_limit = M_PI;
  Transform offset;             // parent link frame -> joint frame
};

// Joints grouped by function (an arm, a leg). IK solves the group's joints
// against the pose of `end_frame`, which may sit distal to the last joint.
struct FunctionalGroup {
  std::string part_id;
  std::vector<std::string> joint_names;  // root-to-leaf order
  std::string end_frame;                 // link name
};

struct EmbodimentSpec {
  std::string name;
  std::vector<LinkDef> links;
  std::vector<JointDef> joints;
  std::vector<FunctionalGroup> groups;
  std::string root_link;
  double root_height = 1.0;  // nominal standing pelvis height, the scale unit

  int joint_count() const { return static_cast<int>(joints.size()); }
  int link_count() const { return static_cast<int>(links.size()); }

  int joint_index(const std::string& name) const {
    for (int i = 0; i < joint_count(); ++i)
      if (joints[i].name == name) return i;
    return -1;
  }
  int link_index(const std::string& name) const {
    for (int i = 0; i < link_count(); ++i)
      if (links[i].name == name) return i;
    return -1;
  }
  const FunctionalGroup* find_group(const std::string& part_id) const {
    for (const auto& g : groups)
      if (g.part_id == part_id) return &g;
    return nullptr;
  }

  Eigen::VectorXd lower_limits() const {
    Eigen::VectorXd lo(joint_count());
    for (int i = 0; i < joint_count(); ++i) lo[i] = joints[i].lower_limit;
    return lo;
  }
  Eigen::VectorXd upper_limits() const {
    Eigen::VectorXd hi(joint_count());
    for (int i = 0; i < joint_count(); ++i) hi[i] = joints[i].upper_limit;
    return hi;
  }
  Eigen::VectorXd mid_pose() const {
    return 0.5 * (lower_limits() + upper_limits());
  }
  double total_mass() const {
    double m = 0.0;
    for (const auto& l : links) m += l.mass;
    return m;
  }
};

struct JointState {
  Eigen::VectorXd q;      // rad, spec joint order
  Eigen::VectorXd q_dot;  // rad/s

  JointState() = default;
  explicit JointState(int n)
      : q(Eigen::VectorXd::Zero(n)), q_dot(Eigen::VectorXd::Zero(n)) {}
};

// Precomputed tree structure for a spec: topological link order, parent joint
// per link, name lookups. Build once, reuse across FK calls in hot loops.
class TreeIndex {
 public:
  explicit TreeIndex(const EmbodimentSpec& spec);

  int link_count() const { return static_cast<int>(link_order_.size()); }
  // links in topological order (root first); entries are link indices
  const std::vector<int>& link_order() const { return link_order_; }
  // joint index whose child is link i, or -1 for the root
  int parent_joint_of_link(int link_index) const {
    return parent_joint_[link_index];
  }
  int link_index(const std::string& name) const;
  int joint_index(const std::string& name) const;
  int root_index() const { return root_index_; }
  // link index of a joint's parent/child links
  int joint_parent_link(int joint_index) const {
    return joint_parent_link_[joint_index];
  }
  int joint_child_link(int joint_index) const {
    return joint_child_link_[joint_index];
  }
  // true if `link` is in the subtree rooted at `joint`'s child
  bool link_descends_from_joint(int link, int joint) const {
    return descends_[static_cast<size_t>(joint) * link_count_ + link] != 0;
  }

 private:
  std::unordered_map<std::string, int> link_by_name_;
  std::unordered_map<std::string, int> joint_by_name_;
  std::vector<int> link_order_;
  std::vector<int> parent_joint_;
  std::vector<int> joint_parent_link_;
  std::vector<int> joint_child_link_;
  std::vector<char> descends_;
  int root_index_ = -1;
  int link_count_ = 0;
};

}  // namespace xembod
