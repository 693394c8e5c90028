#include "xembod/kinematics.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace xembod {

TreeIndex::TreeIndex(const EmbodimentSpec& spec) {
  link_count_ = spec.link_count();
  for (int i = 0; i < spec.link_count(); ++i) link_by_name_[spec.links[i].name] = i;
  for (int i = 0; i < spec.joint_count(); ++i) joint_by_name_[spec.joints[i].name] = i;

  root_index_ = link_index(spec.root_link);
  if (root_index_ < 0)
    throw std::invalid_argument("root link '" + spec.root_link + "' not found");

  parent_joint_.assign(spec.link_count(), -1);
  joint_parent_link_.resize(spec.joint_count());
  joint_child_link_.resize(spec.joint_count());
  for (int j = 0; j < spec.joint_count(); ++j) {
    const auto& jd = spec.joints[j];
    const int pl = link_index(jd.parent_link);
    const int cl = link_index(jd.child_link);
    if (pl < 0 || cl < 0)
      throw std::invalid_argument("joint '" + jd.name + "' references unknown link");
    joint_parent_link_[j] = pl;
    joint_child_link_[j] = cl;
    if (parent_joint_[cl] != -1)
      throw std::invalid_argument("link '" + jd.child_link + "' has two parent joints");
    parent_joint_[cl] = j;
  }

  // topological order by repeated sweeps; cycle or orphan -> never placed
  std::vector<char> placed(spec.link_count(), 0);
  link_order_.push_back(root_index_);
  placed[root_index_] = 1;
  bool progress = true;
  while (static_cast<int>(link_order_.size()) < spec.link_count() && progress) {
    progress = false;
    for (int l = 0; l < spec.link_count(); ++l) {
      if (placed[l]) continue;
      const int pj = parent_joint_[l];
      if (pj >= 0 && placed[joint_parent_link_[pj]]) {
        link_order_.push_back(l);
        placed[l] = 1;
        progress = true;
      }
    }
  }
  if (static_cast<int>(link_order_.size()) != spec.link_count())
    throw std::invalid_argument("links and joints do not form a single tree");

  // descendant table: walk each link's ancestor chain
  descends_.assign(static_cast<size_t>(spec.joint_count()) * link_count_, 0);
  for (int l = 0; l < spec.link_count(); ++l) {
    int cur = l;
    while (cur != root_index_) {
      const int pj = parent_joint_[cur];
      descends_[static_cast<size_t>(pj) * link_count_ + l] = 1;
      cur = joint_parent_link_[pj];
    }
  }
}

int TreeIndex::link_index(const std::string& name) const {
  auto it = link_by_name_.find(name);
  return it == link_by_name_.end() ? -1 : it->second;
}

int TreeIndex::joint_index(const std::string& name) const {
  auto it = joint_by_name_.find(name);
  return it == joint_by_name_.end() ? -1 : it->second;
}

namespace kin {

const Transform& LinkPoses::of(const EmbodimentSpec& spec,
                               const std::string& link) const {
  const int i = spec.link_index(link);
  if (i < 0) throw std::invalid_argument("unknown link '" + link + "'");
  return poses[i];
}

std::vector<std::string> validate_spec(const EmbodimentSpec& spec) {
  std::vector<std::string> out;
  if (spec.root_height <= 0.0)
    out.push_back("root_height must be positive, got " +
                  std::to_string(spec.root_height));
  if (spec.link_index(spec.root_link) < 0)
    out.push_back("root_link '" + spec.root_link + "' is not a declared link");

  std::set<std::string> link_names;
  for (const auto& l : spec.links) {
    if (!link_names.insert(l.name).second)
      out.push_back("duplicate link name '" + l.name + "'");
  }

  std::set<std::string> joint_names;
  for (const auto& j : spec.joints) {
    if (!joint_names.insert(j.name).second)
      out.push_back("duplicate joint name '" + j.name + "'");
    // equal limits are allowed: they freeze a joint that only carries a frame
    if (j.lower_limit > j.upper_limit)
      out.push_back("joint '" + j.name + "': lower_limit must be <= upper_limit");
    if (std::abs(j.axis.norm() - 1.0) > 1e-9)
      out.push_back("joint '" + j.name + "': axis is not unit length");
    if (spec.link_index(j.parent_link) < 0)
      out.push_back("joint '" + j.name + "': unknown parent_link '" +
                    j.parent_link + "'");
    if (spec.link_index(j.child_link) < 0)
      out.push_back("joint '" + j.name + "': unknown child_link '" +
                    j.child_link + "'");
  }

  // tree structure: every non-root link the child of exactly one joint
  std::unordered_map<std::string, int> child_joint_count;
  for (const auto& j : spec.joints) child_joint_count[j.child_link]++;
  for (const auto& l : spec.links) {
    if (l.name == spec.root_link) {
      if (child_joint_count.count(l.name))
        out.push_back("root link '" + l.name + "' must not be a joint child");
      continue;
    }
    const int c = child_joint_count.count(l.name) ? child_joint_count[l.name] : 0;
    if (c != 1)
      out.push_back("link '" + l.name + "' must be the child of exactly one joint, has " +
                    std::to_string(c));
  }
  if (out.empty()) {
    // connectivity/acyclicity; TreeIndex throws with the reason
    try {
      TreeIndex idx(spec);
    } catch (const std::exception& e) {
      out.push_back(e.what());
    }
  }

  // group partition: disjoint, covering, chain-shaped
  std::unordered_map<std::string, std::string> joint_group;
  for (const auto& g : spec.groups) {
    if (spec.link_index(g.end_frame) < 0)
      out.push_back("group '" + g.part_id + "': unknown end_frame '" +
                    g.end_frame + "'");
    for (const auto& jn : g.joint_names) {
      if (!joint_names.count(jn)) {
        out.push_back("group '" + g.part_id + "': unknown joint '" + jn + "'");
        continue;
      }
      auto it = joint_group.find(jn);
      if (it != joint_group.end())
        out.push_back("joint '" + jn + "' listed in groups '" + it->second +
                      "' and '" + g.part_id + "'");
      else
        joint_group[jn] = g.part_id;
    }
  }
  for (const auto& j : spec.joints) {
    if (!joint_group.count(j.name))
      out.push_back("joint '" + j.name + "' belongs to no group");
  }
  // chain check: within a group, each joint's parent link is the previous
  // joint's child link (first joint anchors anywhere)
  for (const auto& g : spec.groups) {
    for (size_t i = 1; i < g.joint_names.size(); ++i) {
      const int prev = spec.joint_index(g.joint_names[i - 1]);
      const int cur = spec.joint_index(g.joint_names[i]);
      if (prev < 0 || cur < 0) continue;
      if (spec.joints[cur].parent_link != spec.joints[prev].child_link)
        out.push_back("group '" + g.part_id + "': joints '" +
                      g.joint_names[i - 1] + "' -> '" + g.joint_names[i] +
                      "' are not a parent-child chain");
    }
  }
  return out;
}

LinkPoses forward_kinematics(const EmbodimentSpec& spec, const TreeIndex& idx,
                             const Transform& root_pose,
                             const Eigen::VectorXd& q) {
  if (q.size() != spec.joint_count())
    throw std::invalid_argument("forward_kinematics: q has dimension " +
                                std::to_string(q.size()) + ", spec has " +
                                std::to_string(spec.joint_count()) + " joints");
  LinkPoses out;
  out.poses.resize(spec.link_count());
  for (int l : idx.link_order()) {
    const int pj = idx.parent_joint_of_link(l);
    if (pj < 0) {
      out.poses[l] = root_pose;
      continue;
    }
    const auto& jd = spec.joints[pj];
    const Transform& parent = out.poses[idx.joint_parent_link(pj)];
    const Quaterniond rot(Eigen::AngleAxisd(q[pj], jd.axis));
    out.poses[l] = parent * jd.offset * Transform::rotation(rot);
  }
  return out;
}

LinkPoses forward_kinematics(const EmbodimentSpec& spec,
                             const Transform& root_pose,
                             const Eigen::VectorXd& q) {
  TreeIndex idx(spec);
  return forward_kinematics(spec, idx, root_pose, q);
}

Eigen::MatrixXd group_jacobian(const EmbodimentSpec& spec, const TreeIndex& idx,
                               const Transform& root_pose,
                               const Eigen::VectorXd& q,
                               const FunctionalGroup& group) {
  const int end_link = idx.link_index(group.end_frame);
  if (end_link < 0)
    throw std::invalid_argument("group_jacobian: unknown end_frame '" +
                                group.end_frame + "'");
  const LinkPoses poses = forward_kinematics(spec, idx, root_pose, q);
  const Vector3d p_end = poses.at(end_link).position;

  const int k = static_cast<int>(group.joint_names.size());
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(6, k);
  for (int c = 0; c < k; ++c) {
    const int j = idx.joint_index(group.joint_names[c]);
    if (j < 0)
      throw std::invalid_argument("group_jacobian: unknown joint '" +
                                  group.joint_names[c] + "'");
    if (!idx.link_descends_from_joint(end_link, j)) continue;  // no influence
    const auto& jd = spec.joints[j];
    const Transform joint_frame = poses.at(idx.joint_parent_link(j)) * jd.offset;
    const Vector3d axis_w = joint_frame.orientation * jd.axis;
    jac.block<3, 1>(0, c) = axis_w.cross(p_end - joint_frame.position);
    jac.block<3, 1>(3, c) = axis_w;
  }
  return jac;
}

Eigen::MatrixXd group_jacobian(const EmbodimentSpec& spec,
                               const Transform& root_pose,
                               const Eigen::VectorXd& q,
                               const FunctionalGroup& group) {
  TreeIndex idx(spec);
  return group_jacobian(spec, idx, root_pose, q, group);
}

IkResult partial_ik(const EmbodimentSpec& spec, const TreeIndex& idx,
                    const FunctionalGroup& group, const Transform& root_pose,
                    const Transform& target, const Eigen::VectorXd& q_init,
                    const IkConfig& config) {
  const int k = static_cast<int>(group.joint_names.size());
  std::vector<int> jidx(k);
  for (int c = 0; c < k; ++c) {
    jidx[c] = idx.joint_index(group.joint_names[c]);
    if (jidx[c] < 0)
      throw std::invalid_argument("partial_ik: unknown joint '" +
                                  group.joint_names[c] + "'");
  }
  const int end_link = idx.link_index(group.end_frame);
  if (end_link < 0)
    throw std::invalid_argument("partial_ik: unknown end_frame '" +
                                group.end_frame + "'");

  const double lambda2 = config.damping * config.damping;

  auto pose_error = [&](const Transform& cur, Vector3d& e_pos, Vector3d& e_rot) {
    e_pos = target.position - cur.position;
    e_rot = quat_log(quat_delta(target.orientation, cur.orientation));
  };

  auto solve_from = [&](const Eigen::VectorXd& q_start) {
    IkResult res;
    res.q = q_start;
    Vector3d e_pos, e_rot;
    for (int it = 0; it < config.max_iters; ++it) {
      const LinkPoses poses = forward_kinematics(spec, idx, root_pose, res.q);
      pose_error(poses.at(end_link), e_pos, e_rot);
      res.pos_error = e_pos.norm();
      res.rot_error = e_rot.norm();
      res.iters = it;
      if (res.pos_error < config.pos_tol && res.rot_error < config.rot_tol) {
        res.converged = true;
        return res;
      }

      Eigen::MatrixXd jac = group_jacobian(spec, idx, root_pose, res.q, group);
      jac.bottomRows(3) *= config.rot_weight;
      Eigen::Matrix<double, 6, 1> err;
      err << e_pos, config.rot_weight * e_rot;

      const Eigen::MatrixXd jjt =
          jac * jac.transpose() + lambda2 * Eigen::MatrixXd::Identity(6, 6);
      const Eigen::VectorXd dq = jac.transpose() * jjt.ldlt().solve(err);
      if (!dq.allFinite())
        throw std::runtime_error("partial_ik: non-finite step (group '" +
                                 group.part_id + "')");
      for (int c = 0; c < k; ++c) {
        const auto& jd = spec.joints[jidx[c]];
        res.q[jidx[c]] = std::clamp(res.q[jidx[c]] + dq[c], jd.lower_limit,
                                    jd.upper_limit);
      }
    }

    const LinkPoses poses = forward_kinematics(spec, idx, root_pose, res.q);
    pose_error(poses.at(end_link), e_pos, e_rot);
    res.pos_error = e_pos.norm();
    res.rot_error = e_rot.norm();
    res.iters = config.max_iters;
    return res;
  };

  IkResult res = solve_from(q_init);
  if (res.converged) return res;

  // Gradient descent picks a bend branch early and cannot cross singular
  // configurations to leave it, so a miss usually means the wrong elbow
  // fold. Retry from fixed bend-sign combinations of the group's movable
  // joints and keep the best attempt. The restart list is deterministic.
  std::vector<int> movable;
  for (int c = 0; c < k && static_cast<int>(movable.size()) < 3; ++c) {
    const auto& jd = spec.joints[jidx[c]];
    if (jd.upper_limit > jd.lower_limit) movable.push_back(jidx[c]);
  }
  const int combos = 1 << static_cast<int>(movable.size());
  auto better = [](const IkResult& a, const IkResult& b) {
    if (a.converged != b.converged) return a.converged;
    if (a.pos_error != b.pos_error) return a.pos_error < b.pos_error;
    return a.rot_error < b.rot_error;
  };
  for (int mask = 0; mask < combos && !res.converged; ++mask) {
    Eigen::VectorXd q_seed = q_init;
    for (std::size_t m = 0; m < movable.size(); ++m) {
      const auto& jd = spec.joints[movable[m]];
      const double mid = 0.5 * (jd.lower_limit + jd.upper_limit);
      const double half = 0.5 * (jd.upper_limit - jd.lower_limit);
      q_seed[movable[m]] = mid + ((mask >> m) & 1 ? 0.5 : -0.5) * half;
    }
    const IkResult attempt = solve_from(q_seed);
    if (better(attempt, res)) res = attempt;
  }
  res.converged =
      res.pos_error < config.pos_tol && res.rot_error < config.rot_tol;
  return res;
}

IkResult partial_ik(const EmbodimentSpec& spec, const FunctionalGroup& group,
                    const Transform& root_pose, const Transform& target,
                    const Eigen::VectorXd& q_init, const IkConfig& config) {
  TreeIndex idx(spec);
  return partial_ik(spec, idx, group, root_pose, target, q_init, config);
}

std::vector<Transform> normalize_root_trajectory(
    const std::vector<Transform>& root_track, double source_height,
    double target_height) {
  if (source_height <= 0.0 || target_height <= 0.0)
    throw std::invalid_argument("normalize_root_trajectory: heights must be positive");
  std::vector<Transform> out;
  out.reserve(root_track.size());
  if (root_track.empty()) return out;
  const double ratio = target_height / source_height;
  const Vector3d p0 = root_track.front().position;
  for (const auto& t : root_track) {
    Vector3d p;
    p.x() = p0.x() + ratio * (t.position.x() - p0.x());
    p.y() = p0.y() + ratio * (t.position.y() - p0.y());
    p.z() = ratio * t.position.z();
    out.emplace_back(p, t.orientation);
  }
  return out;
}

}  // namespace kin
}  // namespace xembod
