#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "../src/rigs.hpp"
#include "xembod/json_io.hpp"
#include "xembod/kinematics.hpp"
#include "xembod/motion.hpp"

using namespace xembod;
namespace fs = std::filesystem;

namespace {

// tiny hand-built clip: moving root, rotating yaw joint, one object
motion::MotionClip toy_clip() {
  motion::MotionClip c;
  c.embodiment = "three_link_arm";
  c.fps = 10.0;
  c.label = "toy";
  for (int i = 0; i < 5; ++i) {
    motion::Frame f;
    f.t = i / c.fps;
    f.root = Transform({0.1 * i, 0.0, 0.7}, quat_exp({0, 0, 0.05 * i}));
    f.q = Eigen::VectorXd::Zero(4);
    f.q[0] = 0.2 * i;
    f.q_dot = Eigen::VectorXd::Zero(4);
    c.frames.push_back(std::move(f));
  }
  motion::ObjectTrack o;
  o.id = "ball";
  for (int i = 0; i < 5; ++i)
    o.poses.emplace_back(Vector3d(1.0, 0.1 * i, 0.2), Quaterniond::Identity());
  o.goal = Transform::translation({2.0, 0.0, 0.2});
  c.objects.push_back(std::move(o));
  c.meta["note"] = "hand built";
  motion::finite_difference_velocities(c);
  return c;
}

}  // namespace

TEST_CASE("clip json round trip preserves every field") {
  const auto c = toy_clip();
  const auto c2 = motion::clip_from_json(motion::clip_to_json(c));
  CHECK(c2.embodiment == c.embodiment);
  CHECK(c2.fps == c.fps);
  CHECK(c2.label == c.label);
  CHECK(c2.meta == c.meta);
  REQUIRE(c2.frames.size() == c.frames.size());
  for (std::size_t i = 0; i < c.frames.size(); ++i) {
    CHECK(c2.frames[i].t == c.frames[i].t);
    CHECK((c2.frames[i].q - c.frames[i].q).norm() == 0.0);
    CHECK((c2.frames[i].q_dot - c.frames[i].q_dot).norm() == 0.0);
    CHECK((c2.frames[i].root.position - c.frames[i].root.position).norm() <
          1e-15);
    CHECK((c2.frames[i].root_lin_vel - c.frames[i].root_lin_vel).norm() == 0.0);
    CHECK((c2.frames[i].root_ang_vel - c.frames[i].root_ang_vel).norm() == 0.0);
  }
  REQUIRE(c2.objects.size() == 1);
  CHECK(c2.objects[0].id == "ball");
  CHECK((c2.objects[0].goal.position - c.objects[0].goal.position).norm() == 0.0);
}

TEST_CASE("clip file io survives a disk round trip") {
  const auto c = toy_clip();
  const fs::path p = fs::temp_directory_path() / "xembod_clip_test.json";
  motion::save_clip(c, p.string());
  const auto c2 = motion::load_clip(p.string());
  CHECK(c2.frames.size() == c.frames.size());
  CHECK(c2.label == c.label);
  fs::remove(p);
}

TEST_CASE("clip validation rejects malformed data") {
  SUBCASE("empty clip") {
    Json j;
    j["embodiment"] = "x";
    j["fps"] = 30.0;
    j["frames"] = Json::array();
    CHECK_THROWS_WITH_AS((void)motion::clip_from_json(j), "empty clip",
                         std::runtime_error);
  }
  SUBCASE("bad time spacing") {
    auto j = motion::clip_to_json(toy_clip());
    j["frames"][2]["t"] = 0.5;
    CHECK_THROWS_AS((void)motion::clip_from_json(j), std::runtime_error);
  }
  SUBCASE("ragged joint vector") {
    auto j = motion::clip_to_json(toy_clip());
    j["frames"][1]["q"].push_back(0.0);
    CHECK_THROWS_AS((void)motion::clip_from_json(j), std::runtime_error);
  }
  SUBCASE("object track length mismatch") {
    auto j = motion::clip_to_json(toy_clip());
    j["objects"][0]["poses"].erase(0);
    CHECK_THROWS_AS((void)motion::clip_from_json(j), std::runtime_error);
  }
  SUBCASE("nonpositive fps") {
    auto j = motion::clip_to_json(toy_clip());
    j["fps"] = 0.0;
    CHECK_THROWS_AS((void)motion::clip_from_json(j), std::runtime_error);
  }
}

TEST_CASE("finite differences recover analytic sinusoid velocities") {
  const auto spec = rigs::three_link_arm();
  auto clip = rigs::sine_clip(spec, 100.0, 2.0, 0.5, {0.0}, "sine");
  // keep the analytic derivatives, rebuild by finite differences, compare
  std::vector<Eigen::VectorXd> analytic;
  for (const auto& f : clip.frames) analytic.push_back(f.q_dot);
  motion::finite_difference_velocities(clip);
  double max_err_interior = 0.0;
  for (std::size_t i = 1; i + 1 < clip.frames.size(); ++i)
    max_err_interior = std::max(
        max_err_interior,
        (clip.frames[i].q_dot - analytic[i]).cwiseAbs().maxCoeff());
  // central differences at 100 Hz: error ~ A w^3 h^2 / 6
  CHECK(max_err_interior < 2e-3);
  // one-sided endpoints are first order
  CHECK((clip.frames.front().q_dot - analytic.front()).cwiseAbs().maxCoeff() <
        0.1);
}

TEST_CASE("finite differences need two frames") {
  motion::MotionClip c;
  c.fps = 10.0;
  c.frames.resize(1);
  c.frames[0].q = Eigen::VectorXd::Zero(2);
  c.frames[0].q_dot = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(motion::finite_difference_velocities(c),
                  std::invalid_argument);
}

TEST_CASE("sample_frame interpolates and clamps") {
  const auto c = toy_clip();
  SUBCASE("grid points are exact") {
    const auto f = motion::sample_frame(c, 0.2);
    CHECK((f.q - c.frames[2].q).norm() < 1e-12);
    CHECK((f.root.position - c.frames[2].root.position).norm() < 1e-12);
  }
  SUBCASE("midpoints lerp positions and joints") {
    const auto f = motion::sample_frame(c, 0.15);
    CHECK(f.q[0] == doctest::Approx(0.5 * (c.frames[1].q[0] + c.frames[2].q[0])));
    CHECK(f.root.position.x() ==
          doctest::Approx(0.5 * (c.frames[1].root.position.x() +
                                 c.frames[2].root.position.x())));
    // orientation slerps along the shared yaw axis
    const double a1 = quat_log(c.frames[1].root.orientation).z();
    const double a2 = quat_log(c.frames[2].root.orientation).z();
    CHECK(quat_log(f.root.orientation).z() ==
          doctest::Approx(0.5 * (a1 + a2)).epsilon(1e-9));
  }
  SUBCASE("out of range clamps to the ends") {
    CHECK((motion::sample_frame(c, -1.0).q - c.frames.front().q).norm() == 0.0);
    CHECK((motion::sample_frame(c, 99.0).q - c.frames.back().q).norm() == 0.0);
  }
  SUBCASE("object poses follow the same rule") {
    const auto p = motion::sample_object_pose(c, c.objects[0], 0.15);
    CHECK(p.position.y() == doctest::Approx(0.15));
  }
}

TEST_CASE("resample keeps duration, meta, and object tracks") {
  const auto spec = rigs::three_link_arm();
  auto clip = rigs::sine_clip(spec, 100.0, 1.0, 0.5, {0.3}, "sine");
  clip.meta["tag"] = 7;
  const auto half = motion::resample_clip(clip, 50.0);
  CHECK(half.fps == 50.0);
  CHECK(half.frames.size() == 51);
  CHECK(half.frames.back().t == doctest::Approx(1.0));
  CHECK(half.meta == clip.meta);
  // resampled joints match the analytic curve at the new grid
  const Eigen::VectorXd mid = spec.mid_pose();
  for (const auto& f : half.frames) {
    const auto ref = motion::sample_frame(clip, f.t);
    CHECK((f.q - ref.q).cwiseAbs().maxCoeff() < 1e-12);
  }

  const auto c2 = motion::resample_clip(toy_clip(), 20.0);
  REQUIRE(c2.objects.size() == 1);
  CHECK(c2.objects[0].poses.size() == c2.frames.size());
}

TEST_CASE("identity retarget reproduces the clip") {
  const auto spec = rigs::three_link_arm();
  const auto clip = rigs::sine_clip(spec, 50.0, 1.0, 0.5, {0.2}, "sine");
  motion::MotionClip src = clip;
  motion::finite_difference_velocities(src);  // output rebuilds them the same way
  src.meta["origin"] = "test";

  motion::RetargetReport rep;
  const auto out = motion::retarget_clip(src, spec, spec, {}, &rep);
  CHECK(out.embodiment == spec.name);
  CHECK(out.label == src.label);
  CHECK(out.meta == src.meta);
  REQUIRE(out.frames.size() == src.frames.size());
  for (std::size_t i = 0; i < src.frames.size(); ++i) {
    CHECK((out.frames[i].q - src.frames[i].q).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((out.frames[i].root.position - src.frames[i].root.position).norm() <
          1e-6);
    CHECK((out.frames[i].q_dot - src.frames[i].q_dot).cwiseAbs().maxCoeff() <
          1e-6);
  }
  CHECK(rep.ik_failures == 0);
  CHECK(rep.max_pos_error < 1e-6);
}

TEST_CASE("uniform half-size body halves root displacement and object tracks") {
  const auto src_spec = rigs::three_link_arm();
  auto tgt_spec = rigs::three_link_arm_scaled(0.5, "half_arm");
  tgt_spec.root_height = 0.35;  // uniform scale includes the base height

  // moving-root source clip
  auto src = rigs::sine_clip(src_spec, 50.0, 1.0, 0.5, {0.1}, "walkish");
  for (std::size_t i = 0; i < src.frames.size(); ++i)
    src.frames[i].root.position += Vector3d(0.02 * i, 0.01 * i, 0.0);
  motion::ObjectTrack o;
  o.id = "box";
  for (std::size_t i = 0; i < src.frames.size(); ++i)
    o.poses.emplace_back(Vector3d(1.0, 0.5, 0.2), Quaterniond::Identity());
  o.goal = Transform::translation({2.0, 0.0, 0.4});
  src.objects.push_back(o);
  motion::finite_difference_velocities(src);

  const auto out = motion::retarget_clip(src, src_spec, tgt_spec, {});
  const Vector3d anchor = src.frames.front().root.position;
  for (std::size_t i = 0; i < src.frames.size(); ++i) {
    const Eigen::Vector2d want =
        anchor.head<2>() +
        0.5 * (src.frames[i].root.position.head<2>() - anchor.head<2>());
    CHECK((out.frames[i].root.position.head<2>() - want).norm() < 1e-6);
    CHECK(out.frames[i].root.position.z() ==
          doctest::Approx(0.5 * src.frames[i].root.position.z()));
    // same angles reach the scaled pose exactly, so the solver keeps them
    CHECK((out.frames[i].q - src.frames[i].q).cwiseAbs().maxCoeff() < 1e-6);
  }
  const Vector3d goal_want(anchor.x() + 0.5 * (2.0 - anchor.x()),
                           anchor.y() + 0.5 * (0.0 - anchor.y()), 0.2);
  CHECK((out.objects[0].goal.position - goal_want).norm() < 1e-9);
}

TEST_CASE("heterogeneous retarget tracks end frames within tolerance") {
  const auto src_spec = rigs::three_link_arm();
  const auto tgt_spec = rigs::three_link_arm_scaled(1.25, "big_arm");
  const auto src = rigs::sine_clip(src_spec, 50.0, 1.0, 0.4, {0.5}, "sine");

  motion::RetargetConfig cfg;
  motion::RetargetReport rep;
  const auto out = motion::retarget_clip(src, src_spec, tgt_spec, cfg, &rep);
  CHECK(rep.ik_failures == 0);
  CHECK(rep.max_pos_error < 2.0 * cfg.ik.pos_tol);

  // verify via fk, not via the report
  const TreeIndex src_idx(src_spec);
  const TreeIndex tgt_idx(tgt_spec);
  const double ratio = tgt_spec.root_height / src_spec.root_height;
  for (std::size_t i = 0; i < src.frames.size(); ++i) {
    const auto sp = kin::forward_kinematics(src_spec, src_idx,
                                            src.frames[i].root, src.frames[i].q);
    const auto tp = kin::forward_kinematics(tgt_spec, tgt_idx,
                                            out.frames[i].root, out.frames[i].q);
    const Transform local =
        src.frames[i].root.inverse() * sp.of(src_spec, "hand");
    const Vector3d want =
        (out.frames[i].root * Transform(ratio * local.position,
                                        local.orientation)).position;
    CHECK((tp.of(tgt_spec, "hand").position - want).norm() <
          2.0 * cfg.ik.pos_tol);
  }
}

TEST_CASE("retarget rejects mismatched inputs") {
  const auto spec = rigs::three_link_arm();
  const auto clip = rigs::sine_clip(spec, 50.0, 0.2, 0.5, {0.0}, "sine");
  SUBCASE("wrong dof") {
    CHECK_THROWS_AS((void)motion::retarget_clip(clip, rigs::two_part_arms(),
                                                spec, {}),
                    std::runtime_error);
  }
  SUBCASE("no shared parts") {
    CHECK_THROWS_AS((void)motion::retarget_clip(clip, spec,
                                                rigs::two_part_arms(), {}),
                    std::runtime_error);
  }
  SUBCASE("unknown explicit mapping") {
    motion::RetargetConfig cfg;
    cfg.part_map = {{"arm", "nope"}};
    CHECK_THROWS_AS((void)motion::retarget_clip(clip, spec, spec, cfg),
                    std::runtime_error);
  }
}

TEST_CASE("carry demo is consistent with its scene") {
  const auto spec = rigs::mobile_arm();
  const auto scene = rigs::carry_box_scene(spec);
  const auto demo = rigs::carry_box_demo(spec, scene, {1.0, 0.0, 0.2},
                                         {2.0, 0.0, 0.2}, 50.0, "demo");
  REQUIRE(demo.objects.size() == 1);
  CHECK(demo.objects[0].id == scene.objects[0].id);
  CHECK(demo.objects[0].poses.size() == demo.frames.size());
  CHECK(demo.frames.size() == 251);

  // hand actually reaches the object when the carry phase starts
  const TreeIndex idx(spec);
  const auto& grab = demo.frames[100];  // t = 2 s
  const auto poses = kin::forward_kinematics(spec, idx, grab.root, grab.q);
  CHECK((poses.of(spec, "hand").position - Vector3d(1.0, 0.0, 0.2)).norm() <
        5e-3);
  // object rides the hand mid-carry
  const auto& mid = demo.frames[150];  // t = 3 s
  const auto mid_poses = kin::forward_kinematics(spec, idx, mid.root, mid.q);
  CHECK((mid_poses.of(spec, "hand").position -
         demo.objects[0].poses[150].position).norm() < 5e-3);
  // and ends at the goal
  CHECK((demo.objects[0].poses.back().position - Vector3d(2.0, 0.0, 0.2))
            .norm() < 1e-9);
}
