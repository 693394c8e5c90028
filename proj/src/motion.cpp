#include "xembod/motion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace xembod::motion {

namespace {

Eigen::VectorXd vecx_from_json(const Json& j) {
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = j[i].get<double>();
  return v;
}

Json vecx_to_json(const Eigen::VectorXd& v) {
  Json j = Json::array();
  for (int i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

// segment containing t: frame index i and blend alpha toward i+1
std::pair<int, double> locate(const std::vector<Frame>& frames, double t) {
  const int n = static_cast<int>(frames.size());
  if (n <= 1) return {0, 0.0};
  if (t <= frames.front().t) return {0, 0.0};
  if (t >= frames.back().t) return {n - 2, 1.0};
  int lo = 0;
  int hi = n - 1;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (frames[mid].t <= t) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double dt = frames[hi].t - frames[lo].t;
  return {lo, dt > 0.0 ? (t - frames[lo].t) / dt : 0.0};
}

}  // namespace

Json clip_to_json(const MotionClip& clip) {
  Json j;
  j["embodiment"] = clip.embodiment;
  j["fps"] = clip.fps;
  j["label"] = clip.label;
  j["frames"] = Json::array();
  for (const auto& f : clip.frames) {
    Json fj;
    fj["t"] = f.t;
    fj["root"] = to_json(f.root);
    fj["q"] = vecx_to_json(f.q);
    fj["qd"] = vecx_to_json(f.q_dot);
    Json vj;
    vj["lin"] = to_json(f.root_lin_vel);
    vj["ang"] = to_json(f.root_ang_vel);
    fj["root_vel"] = vj;
    j["frames"].push_back(fj);
  }
  j["objects"] = Json::array();
  for (const auto& o : clip.objects) {
    Json oj;
    oj["id"] = o.id;
    oj["poses"] = Json::array();
    for (const auto& p : o.poses) oj["poses"].push_back(to_json(p));
    oj["goal"] = to_json(o.goal);
    j["objects"].push_back(oj);
  }
  if (!clip.meta.is_null()) j["meta"] = clip.meta;
  return j;
}

MotionClip clip_from_json(const Json& j) {
  MotionClip clip;
  try {
    clip.embodiment = j.at("embodiment").get<std::string>();
    clip.fps = j.at("fps").get<double>();
    clip.label = j.value("label", std::string{});
    for (const auto& fj : j.at("frames")) {
      Frame f;
      f.t = fj.at("t").get<double>();
      f.root = transform_from_json(fj.at("root"), "frame root");
      f.q = vecx_from_json(fj.at("q"));
      f.q_dot = vecx_from_json(fj.at("qd"));
      if (fj.contains("root_vel")) {
        f.root_lin_vel = vec3_from_json(fj.at("root_vel").at("lin"), "root_vel.lin");
        f.root_ang_vel = vec3_from_json(fj.at("root_vel").at("ang"), "root_vel.ang");
      }
      clip.frames.push_back(std::move(f));
    }
    for (const auto& oj : j.value("objects", Json::array())) {
      ObjectTrack o;
      o.id = oj.at("id").get<std::string>();
      for (const auto& pj : oj.at("poses"))
        o.poses.push_back(transform_from_json(pj, "object pose"));
      o.goal = transform_from_json(oj.at("goal"), "object goal");
      clip.objects.push_back(std::move(o));
    }
    if (j.contains("meta")) clip.meta = j.at("meta");
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed clip: ") + e.what());
  }

  if (clip.fps <= 0.0) throw std::runtime_error("clip fps must be positive");
  if (clip.frames.empty()) throw std::runtime_error("empty clip");
  const int dof = static_cast<int>(clip.frames[0].q.size());
  for (size_t i = 1; i < clip.frames.size(); ++i) {
    const double dt = clip.frames[i].t - clip.frames[i - 1].t;
    if (std::abs(dt - 1.0 / clip.fps) > 1e-9)
      throw std::runtime_error("frame " + std::to_string(i) +
                               ": time spacing " + std::to_string(dt) +
                               " does not match fps " + std::to_string(clip.fps));
  }
  for (size_t i = 0; i < clip.frames.size(); ++i) {
    const auto& f = clip.frames[i];
    if (static_cast<int>(f.q.size()) != dof)
      throw std::runtime_error("frame " + std::to_string(i) + ": q has " +
                               std::to_string(f.q.size()) + " entries, expected " +
                               std::to_string(dof));
    if (f.q_dot.size() != f.q.size())
      throw std::runtime_error("frame " + std::to_string(i) + ": qd has " +
                               std::to_string(f.q_dot.size()) +
                               " entries, expected " + std::to_string(dof));
  }
  for (const auto& o : clip.objects) {
    if (o.poses.size() != clip.frames.size())
      throw std::runtime_error("object '" + o.id + "': " +
                               std::to_string(o.poses.size()) + " poses for " +
                               std::to_string(clip.frames.size()) + " frames");
  }
  return clip;
}

MotionClip load_clip(const std::string& path) {
  try {
    return clip_from_json(load_json_file(path));
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void save_clip(const MotionClip& clip, const std::string& path) {
  save_json_file(clip_to_json(clip), path);
}

MotionDataset load_dataset(const std::vector<std::string>& paths) {
  MotionDataset out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(load_clip(p));
  return out;
}

void finite_difference_velocities(MotionClip& clip) {
  const int n = clip.frame_count();
  if (n < 2)
    throw std::invalid_argument("finite differences need at least 2 frames");
  for (auto& f : clip.frames) {
    f.q_dot = Eigen::VectorXd::Zero(f.q.size());
    f.root_lin_vel.setZero();
    f.root_ang_vel.setZero();
  }

  auto fill = [&clip](int k, int a, int b) {
    const auto& fa = clip.frames[a];
    const auto& fb = clip.frames[b];
    const double dt = fb.t - fa.t;
    if (dt <= 0.0) return;
    auto& f = clip.frames[k];
    f.q_dot = (fb.q - fa.q) / dt;
    f.root_lin_vel = (fb.root.position - fa.root.position) / dt;
    f.root_ang_vel =
        quat_log(quat_delta(fb.root.orientation, fa.root.orientation)) / dt;
  };

  fill(0, 0, 1);
  for (int k = 1; k + 1 < n; ++k) fill(k, k - 1, k + 1);
  fill(n - 1, n - 2, n - 1);
}

Frame sample_frame(const MotionClip& clip, double t) {
  if (clip.frames.empty()) throw std::runtime_error("cannot sample an empty clip");
  const auto [i, a] = locate(clip.frames, t);
  const auto& f0 = clip.frames[i];
  if (clip.frame_count() == 1 || a == 0.0) {
    Frame f = f0;
    f.t = t;
    return f;
  }
  const auto& f1 = clip.frames[i + 1];
  Frame f;
  f.t = t;
  f.root.position = (1.0 - a) * f0.root.position + a * f1.root.position;
  f.root.orientation = slerp(f0.root.orientation, f1.root.orientation, a);
  f.q = (1.0 - a) * f0.q + a * f1.q;
  f.q_dot = (1.0 - a) * f0.q_dot + a * f1.q_dot;
  f.root_lin_vel = (1.0 - a) * f0.root_lin_vel + a * f1.root_lin_vel;
  f.root_ang_vel = (1.0 - a) * f0.root_ang_vel + a * f1.root_ang_vel;
  return f;
}

Transform sample_object_pose(const MotionClip& clip, const ObjectTrack& track,
                             double t) {
  if (track.poses.size() != clip.frames.size())
    throw std::runtime_error("object '" + track.id + "' not aligned with clip");
  const auto [i, a] = locate(clip.frames, t);
  if (clip.frame_count() == 1 || a == 0.0) return track.poses[i];
  const auto& p0 = track.poses[i];
  const auto& p1 = track.poses[i + 1];
  return Transform((1.0 - a) * p0.position + a * p1.position,
                   slerp(p0.orientation, p1.orientation, a));
}

MotionClip resample_clip(const MotionClip& clip, double new_fps) {
  if (new_fps <= 0.0) throw std::runtime_error("resample fps must be positive");
  if (clip.frames.empty()) throw std::runtime_error("cannot resample an empty clip");

  const double t0 = clip.frames.front().t;
  const int n = std::max(1, static_cast<int>(std::lround(clip.duration() * new_fps)) + 1);

  MotionClip out;
  out.embodiment = clip.embodiment;
  out.fps = new_fps;
  out.label = clip.label;
  out.meta = clip.meta;
  out.frames.reserve(n);
  for (int k = 0; k < n; ++k)
    out.frames.push_back(sample_frame(clip, t0 + k / new_fps));
  for (const auto& o : clip.objects) {
    ObjectTrack track;
    track.id = o.id;
    track.goal = o.goal;
    track.poses.reserve(n);
    for (int k = 0; k < n; ++k)
      track.poses.push_back(sample_object_pose(clip, o, t0 + k / new_fps));
    out.objects.push_back(std::move(track));
  }
  if (out.frame_count() >= 2) finite_difference_velocities(out);
  return out;
}

MotionClip retarget_clip(const MotionClip& src_clip,
                         const EmbodimentSpec& src_spec,
                         const EmbodimentSpec& tgt_spec,
                         const RetargetConfig& config, RetargetReport* report) {
  if (src_clip.frames.empty())
    throw std::runtime_error("cannot retarget an empty clip");
  if (src_clip.dof() != src_spec.joint_count())
    throw std::runtime_error("clip has " + std::to_string(src_clip.dof()) +
                             " joints, source body has " +
                             std::to_string(src_spec.joint_count()));

  const TreeIndex src_idx(src_spec);
  const TreeIndex tgt_idx(tgt_spec);

  // resolve the part mapping
  std::vector<std::pair<const FunctionalGroup*, const FunctionalGroup*>> pairs;
  if (config.part_map.empty()) {
    for (const auto& sg : src_spec.groups)
      if (const auto* tg = tgt_spec.find_group(sg.part_id))
        pairs.emplace_back(&sg, tg);
  } else {
    for (const auto& [src_id, tgt_id] : config.part_map) {
      const auto* sg = src_spec.find_group(src_id);
      const auto* tg = tgt_spec.find_group(tgt_id);
      if (!sg) throw std::runtime_error("source part '" + src_id + "' not found");
      if (!tg) throw std::runtime_error("target part '" + tgt_id + "' not found");
      pairs.emplace_back(sg, tg);
    }
  }
  if (pairs.empty()) throw std::runtime_error("no part mapping between bodies");

  const double ratio = config.scale > 0.0
                           ? config.scale
                           : tgt_spec.root_height / src_spec.root_height;
  if (!(ratio > 0.0)) throw std::runtime_error("retarget scale must be positive");

  // rescale the root track
  std::vector<Transform> src_roots;
  src_roots.reserve(src_clip.frames.size());
  for (const auto& f : src_clip.frames) src_roots.push_back(f.root);
  const std::vector<Transform> tgt_roots =
      kin::normalize_root_trajectory(src_roots, 1.0, ratio);

  // precompute group joint indices; equal-size pairs copy source angles as
  // the IK seed (exact when the bodies coincide), others track the previous
  // frame's solution
  struct PairIdx {
    std::vector<int> src_joints;
    std::vector<int> tgt_joints;
    int src_end_link = -1;
    bool copy_seed = false;
  };
  std::vector<PairIdx> pidx;
  for (const auto& [sg, tg] : pairs) {
    PairIdx p;
    for (const auto& jn : sg->joint_names) p.src_joints.push_back(src_idx.joint_index(jn));
    for (const auto& jn : tg->joint_names) p.tgt_joints.push_back(tgt_idx.joint_index(jn));
    p.src_end_link = src_idx.link_index(sg->end_frame);
    p.copy_seed = p.src_joints.size() == p.tgt_joints.size();
    pidx.push_back(std::move(p));
  }

  const Eigen::VectorXd tgt_lo = tgt_spec.lower_limits();
  const Eigen::VectorXd tgt_hi = tgt_spec.upper_limits();

  MotionClip out;
  out.embodiment = tgt_spec.name;
  out.fps = src_clip.fps;
  out.label = src_clip.label;
  out.meta = src_clip.meta;

  double err_sum = 0.0;
  double err_max = 0.0;
  int failures = 0;
  int solves = 0;

  Eigen::VectorXd q = tgt_spec.mid_pose();
  for (size_t fi = 0; fi < src_clip.frames.size(); ++fi) {
    const auto& sf = src_clip.frames[fi];
    const auto src_poses =
        kin::forward_kinematics(src_spec, src_idx, sf.root, sf.q);
    const Transform src_root_inv = sf.root.inverse();
    const Transform& tgt_root = tgt_roots[fi];

    for (size_t pi = 0; pi < pairs.size(); ++pi) {
      const auto& p = pidx[pi];
      // end frame pose in the root frame, limbs scaled with the body
      const Transform local = src_root_inv * src_poses.at(p.src_end_link);
      const Transform target =
          tgt_root * Transform(ratio * local.position, local.orientation);

      if (p.copy_seed) {
        for (size_t k = 0; k < p.tgt_joints.size(); ++k) {
          const int tj = p.tgt_joints[k];
          q[tj] = std::clamp(sf.q[p.src_joints[k]], tgt_lo[tj], tgt_hi[tj]);
        }
      }
      const auto res = kin::partial_ik(tgt_spec, tgt_idx, *pairs[pi].second,
                                       tgt_root, target, q, config.ik);
      q = res.q;
      err_sum += res.pos_error;
      err_max = std::max(err_max, res.pos_error);
      if (!res.converged) ++failures;
      ++solves;
    }

    Frame f;
    f.t = sf.t;
    f.root = tgt_root;
    f.q = q;
    f.q_dot = Eigen::VectorXd::Zero(q.size());
    out.frames.push_back(std::move(f));
  }

  // objects live in the same world, so they get the same rescale: horizontal
  // about the first root position, height about the ground
  const Vector3d anchor = src_clip.frames.front().root.position;
  auto rescale_point = [&](const Vector3d& p) {
    Vector3d r;
    r.x() = anchor.x() + ratio * (p.x() - anchor.x());
    r.y() = anchor.y() + ratio * (p.y() - anchor.y());
    r.z() = ratio * p.z();
    return r;
  };
  for (const auto& o : src_clip.objects) {
    ObjectTrack track;
    track.id = o.id;
    track.goal = Transform(rescale_point(o.goal.position), o.goal.orientation);
    track.poses.reserve(o.poses.size());
    for (const auto& pose : o.poses)
      track.poses.emplace_back(rescale_point(pose.position), pose.orientation);
    out.objects.push_back(std::move(track));
  }

  if (out.frame_count() >= 2) finite_difference_velocities(out);

  if (report) {
    report->mean_pos_error = solves > 0 ? err_sum / solves : 0.0;
    report->max_pos_error = err_max;
    report->ik_failures = failures;
  }
  return out;
}

}  // namespace xembod::motion
