#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "physdf/fixtures.hpp"
#include "physdf/rigid_body.hpp"

using namespace physdf;

namespace {

RigidBody<double> body_of(const std::vector<Vec3d>& pts, double m = 0.01) {
  return build_body<double>(std::span<const Vec3d>(pts), m, 0.005);
}

ContactBody<double> contact_body(const RigidBody<double>& body, const Vec3d& com, const Vec3d& v,
                                 const Vec3d& w = {}) {
  ContactBody<double> cb;
  for (const auto& u : body.offsets) {
    cb.arms.push_back(u);
    cb.positions.push_back(com + u);
  }
  cb.linear_velocity = v;
  cb.angular_velocity = w;
  cb.inv_mass = 1.0 / body.total_mass;
  cb.inv_inertia = body.inertia_ref_inv;
  return cb;
}

struct WarningCapture {
  std::vector<std::string> messages;
  std::function<void(const std::string&)> saved;
  WarningCapture() : saved(warning_sink()) {
    warning_sink() = [this](const std::string& m) { messages.push_back(m); };
  }
  ~WarningCapture() { warning_sink() = saved; }
};

void expect_states_identical(const BodyState<double>& a, const BodyState<double>& b) {
  EXPECT_EQ(a.position, b.position);
  EXPECT_EQ(a.orientation.w, b.orientation.w);
  EXPECT_EQ(a.orientation.x, b.orientation.x);
  EXPECT_EQ(a.orientation.y, b.orientation.y);
  EXPECT_EQ(a.orientation.z, b.orientation.z);
  EXPECT_EQ(a.linear_velocity, b.linear_velocity);
  EXPECT_EQ(a.angular_velocity, b.angular_velocity);
  EXPECT_EQ(a.asleep, b.asleep);
}

}  // namespace

TEST(SimConfig, DefaultsMatchPublishedConstants) {
  const SimConfig c;
  EXPECT_EQ(c.dt, 0.01);
  EXPECT_EQ(c.particle_radius, 0.005);
  EXPECT_EQ(c.particle_mass, 0.01);
  EXPECT_EQ(c.restitution, 0.0);
  EXPECT_EQ(c.friction, 0.4);
  EXPECT_EQ(c.velocity_epsilon, 1e-5);
  EXPECT_EQ(c.sleep_weight, 0.1);
  EXPECT_EQ(c.max_steps, 100);
  EXPECT_EQ(c.impulse_max_iterations, 10);
  EXPECT_EQ(c.gravity, (Vec3d{0, 0, -9.81}));
  EXPECT_FALSE(c.symplectic);
  EXPECT_NO_THROW(c.validate());
  SimConfig bad;
  bad.dt = 0.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = {};
  bad.max_steps = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = {};
  bad.restitution = 1.5;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(BuildBody, TwoParticles) {
  const auto b = body_of({{0.1, 0, 0}, {-0.1, 0, 0}});
  EXPECT_DOUBLE_EQ(b.total_mass, 0.02);
  EXPECT_EQ(b.center_of_mass, (Vec3d{0, 0, 0}));
  EXPECT_DOUBLE_EQ(b.inertia_ref(0, 0), 0.0);
  EXPECT_NEAR(b.inertia_ref(1, 1), 2e-4, 1e-18);
  EXPECT_NEAR(b.inertia_ref(2, 2), 2e-4, 1e-18);
  EXPECT_EQ(b.inertia_rank, 2);
  EXPECT_DOUBLE_EQ(b.u_max, 0.1);
}

TEST(BuildBody, SingleParticle) {
  const auto b = body_of({{3, 1, 2}});
  EXPECT_EQ(b.center_of_mass, (Vec3d{3, 1, 2}));
  EXPECT_EQ(b.offsets[0], (Vec3d{0, 0, 0}));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(b.inertia_ref(i, j), 0.0);
  EXPECT_EQ(b.inertia_rank, 0);
}

TEST(BuildBody, CubeCorners) {
  std::vector<Vec3d> pts;
  for (int c = 0; c < 8; ++c) pts.push_back({c & 1 ? 0.1 : -0.1, c & 2 ? 0.1 : -0.1, c & 4 ? 0.1 : -0.1});
  const auto b = body_of(pts);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(b.inertia_ref(i, j), i == j ? 0.0016 : 0.0, 1e-15);
  EXPECT_EQ(b.inertia_rank, 3);
}

TEST(BuildBody, Invariants) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  std::vector<Vec3d> pts(37);
  for (auto& p : pts) p = {u(rng) + 1.0, u(rng), u(rng) - 2.0};
  const auto b = body_of(pts);
  Vec3d sum;
  double umax = 0.0;
  for (const auto& o : b.offsets) {
    sum += o;
    umax = std::max(umax, norm(o));
  }
  EXPECT_LE(norm(sum), 1e-9 * 37);
  EXPECT_EQ(b.u_max, umax);
  for (int i = 0; i < 3; ++i) {
    EXPECT_GE(b.inertia_ref(i, i), 0.0);
    for (int j = 0; j < 3; ++j) EXPECT_EQ(b.inertia_ref(i, j), b.inertia_ref(j, i));
  }
  // I * I^-1 = identity for a full-rank body.
  const Mat3d P = b.inertia_ref * b.inertia_ref_inv;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(P(i, j), i == j ? 1.0 : 0.0, 1e-9);
  EXPECT_THROW(body_of({}), Error);
}

TEST(BuildBody, PseudoInverseOfCollinearBody) {
  const auto b = body_of({{0, 0, -0.1}, {0, 0, 0.1}});
  // Rank 2: inverse on the span, zero along z.
  EXPECT_NEAR(b.inertia_ref_inv(0, 0), 1.0 / 2e-4, 1e-6);
  EXPECT_NEAR(b.inertia_ref_inv(1, 1), 1.0 / 2e-4, 1e-6);
  EXPECT_NEAR(b.inertia_ref_inv(2, 2), 0.0, 1e-9);
}

TEST(RotationMatrix, Examples) {
  const Mat3d I = rotation_matrix(Quatd::identity());
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(I(i, j), i == j ? 1.0 : 0.0);
  const double c = std::cos(kPi / 4), s = std::sin(kPi / 4);
  const Vec3d r = rotation_matrix(Quatd{c, s, 0, 0}) * Vec3d{0, 1, 0};
  EXPECT_NEAR(r[0], 0.0, 1e-15);
  EXPECT_NEAR(r[1], 0.0, 1e-15);
  EXPECT_NEAR(r[2], 1.0, 1e-15);
  EXPECT_THROW(rotation_matrix(Quatd{1.0, 0.1, 0, 0}), Error);
}

TEST(RotationMatrix, Orthonormal) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (int k = 0; k < 100; ++k) {
    Quatd q{n(rng), n(rng), n(rng), n(rng)};
    const double len = std::sqrt(q.squared_norm());
    q = {q.w / len, q.x / len, q.y / len, q.z / len};
    const Mat3d R = rotation_matrix(q);
    const Mat3d P = R * R.transposed();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) EXPECT_NEAR(P(i, j), i == j ? 1.0 : 0.0, 1e-12);
  }
}

TEST(Integrate, FreeFallClosedForm) {
  const auto b = body_of({{0, 0, 0}, {0.02, 0, 0}, {0, 0.02, 0}});
  SimConfig cfg;
  BodyState<double> s = rest_state(b);
  const Vec3d z0 = s.position;
  const Vec3d f = cfg.gravity * b.total_mass;
  for (int k = 0; k < 10; ++k) s = integrate(s, b, f, Vec3d{}, cfg);
  EXPECT_NEAR(s.linear_velocity[2], -0.981, 1e-12);
  // z_10 = -g dt^2 (0 + 1 + ... + 9) = -9.81e-4 * 45.
  EXPECT_NEAR(s.position[2] - z0[2], -0.044145, 1e-12);
  EXPECT_EQ(s.position[0], z0[0]);
}

TEST(Integrate, SymplecticVariantUsesUpdatedVelocity) {
  const auto b = body_of({{0, 0, 0}});
  SimConfig cfg;
  cfg.symplectic = true;
  BodyState<double> s = rest_state(b);
  const Vec3d f = cfg.gravity * b.total_mass;
  for (int k = 0; k < 10; ++k) s = integrate(s, b, f, Vec3d{}, cfg);
  EXPECT_NEAR(s.position[2], -9.81e-4 * 55.0, 1e-12);
}

TEST(Integrate, ZeroForceDrift) {
  const auto b = body_of({{0, 0, 0}, {0.1, 0, 0}, {0, 0.1, 0}});
  BodyState<double> s = rest_state(b, {0.5, -0.25, 1.0});
  const BodyState<double> n = integrate(s, b, Vec3d{}, Vec3d{}, SimConfig{});
  EXPECT_EQ(n.position, (s.position + Vec3d{0.5, -0.25, 1.0} * 0.01));
  EXPECT_EQ(n.orientation.w, 1.0);
  EXPECT_EQ(n.orientation.x, 0.0);
}

TEST(Integrate, HalfTurnAboutZ) {
  const auto b = body_of({{0.1, 0, 0}, {-0.1, 0, 0}, {0, 0.1, 0}, {0, 0, 0.1}});
  SimConfig cfg;
  cfg.dt = 0.001;
  BodyState<double> s = rest_state(b, {}, {0, 0, kPi});
  for (int k = 0; k < 1000; ++k) {
    s = integrate(s, b, Vec3d{}, Vec3d{}, cfg);
    ASSERT_NEAR(std::sqrt(s.orientation.squared_norm()), 1.0, 1e-12);
  }
  const Quatd half{0.0, 0.0, 0.0, 1.0};
  EXPECT_LE(degrees(rotation_angle_between(s.orientation, half)), 2.0);
}

TEST(Integrate, AsleepUnchanged) {
  const auto b = body_of({{0, 0, 0}, {0.1, 0, 0}});
  BodyState<double> s = rest_state(b);
  s.asleep = true;
  const auto n = integrate(s, b, Vec3d{0, 0, -1}, Vec3d{1, 0, 0}, SimConfig{});
  expect_states_identical(s, n);
}

TEST(Integrate, TorqueAlongDegenerateAxisIsProjectedWithWarning) {
  const auto b = body_of({{-0.1, 0, 0}, {0.1, 0, 0}});
  WarningCapture cap;
  const auto n = integrate(rest_state(b), b, Vec3d{}, Vec3d{1e-3, 2e-3, 0}, SimConfig{});
  ASSERT_EQ(cap.messages.size(), 1u);
  EXPECT_EQ(n.angular_velocity[0], 0.0);
  EXPECT_NEAR(n.angular_velocity[1], 0.01 * 2e-3 / 2e-4, 1e-12);
  // Torque inside the span raises no warning.
  integrate(rest_state(b), b, Vec3d{}, Vec3d{0, 0, 1e-3}, SimConfig{});
  EXPECT_EQ(cap.messages.size(), 1u);
}

TEST(Classify, TableThresholds) {
  EXPECT_EQ(classify(-2.0, 1e-5), ContactClass::kColliding);
  EXPECT_EQ(classify(-1e-5, 1e-5), ContactClass::kResting);
  EXPECT_EQ(classify(0.0, 1e-5), ContactClass::kResting);
  EXPECT_EQ(classify(1e-5, 1e-5), ContactClass::kResting);
  EXPECT_EQ(classify(2e-5, 1e-5), ContactClass::kSeparation);
  EXPECT_STREQ(to_string(ContactClass::kResting), "resting");
}

TEST(DetectContacts, Examples) {
  const SimConfig cfg;
  const auto single = body_of({{0, 0, 0}});
  auto run = [&](double gap, double va, double vb) {
    std::vector<ContactBody<double>> bodies{contact_body(single, {-gap / 2, 0, 0}, {va, 0, 0}),
                                            contact_body(single, {gap / 2, 0, 0}, {vb, 0, 0})};
    return detect_contacts<double>(std::span<const ContactBody<double>>(bodies), SpatialHash({{9, 9, 9}}, 0.01), cfg);
  };
  auto approaching = run(0.009, 1.0, -1.0);
  ASSERT_EQ(approaching.size(), 1u);
  EXPECT_EQ(approaching[0].classification, ContactClass::kColliding);
  EXPECT_DOUBLE_EQ(approaching[0].normal_speed, -2.0);
  EXPECT_EQ(approaching[0].normal, (Vec3d{-1, 0, 0}));
  EXPECT_TRUE(run(0.011, 1.0, -1.0).empty());
  auto still = run(0.008, 0.0, 0.0);
  ASSERT_EQ(still.size(), 1u);
  EXPECT_EQ(still[0].classification, ContactClass::kResting);
  EXPECT_THROW(run(0.0, 0.0, 0.0), Error);
}

TEST(DetectContacts, BoundaryPairsAndOrdering) {
  const SimConfig cfg;
  const auto b = body_of({{0, 0, 0.008}, {0.005, 0, 0.008}, {0.1, 0, 0.5}});
  std::vector<ContactBody<double>> bodies{contact_body(b, b.center_of_mass, {0, 0, -0.5})};
  const SpatialHash plane({{0.005, 0, 0}, {0, 0, 0}, {0.2, 0, 0}}, 0.01);
  const auto pairs = detect_contacts<double>(std::span<const ContactBody<double>>(bodies), plane, cfg);
  ASSERT_EQ(pairs.size(), 4u);
  EXPECT_EQ(pairs[0].particle_a, 0u);
  EXPECT_EQ(pairs[0].particle_b, 0u);
  EXPECT_EQ(pairs[1].particle_a, 0u);
  EXPECT_EQ(pairs[1].particle_b, 1u);
  EXPECT_EQ(pairs[2].particle_a, 1u);
  for (const auto& p : pairs) {
    EXPECT_EQ(p.body_b, kBoundary);
    EXPECT_EQ(p.classification, ContactClass::kColliding);
  }
}

TEST(SpatialHash, MatchesBruteForce) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  std::vector<Vec3d> pts(500);
  for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
  const SpatialHash h(pts, 0.01);
  for (int k = 0; k < 200; ++k) {
    const Vec3d q{u(rng), u(rng), u(rng)};
    std::vector<std::uint32_t> brute;
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (norm(pts[i] - q) < 0.01) brute.push_back(std::uint32_t(i));
    EXPECT_EQ(h.near(q, 0.01), brute);
  }
}

TEST(ResolveImpulse, HeadOnElasticExchangesVelocities) {
  SimConfig cfg;
  cfg.restitution = 1.0;
  cfg.friction = 0.0;
  const auto single = body_of({{0, 0, 0}});
  std::vector<ContactBody<double>> bodies{contact_body(single, {-0.0045, 0, 0}, {1, 0, 0}),
                                          contact_body(single, {0.0045, 0, 0}, {-1, 0, 0})};
  const auto pairs = detect_contacts<double>(std::span<const ContactBody<double>>(bodies), SpatialHash({{9, 9, 9}}, 0.01), cfg);
  ASSERT_EQ(pairs.size(), 1u);
  const auto r = resolve_impulse(pairs[0], bodies[0], bodies[1], cfg);
  EXPECT_NEAR(r.impulse[0], -0.02, 1e-15);
  EXPECT_NEAR(bodies[0].linear_velocity[0] + r.dv_a[0], -1.0, 1e-9);
  EXPECT_NEAR(bodies[1].linear_velocity[0] + r.dv_b[0], 1.0, 1e-9);
  // Kinetic energy before and after.
  const double e0 = 0.5 * 0.01 * 2.0;
  const double va = bodies[0].linear_velocity[0] + r.dv_a[0], vb = bodies[1].linear_velocity[0] + r.dv_b[0];
  EXPECT_NEAR((0.5 * 0.01 * (va * va + vb * vb) - e0) / e0, 0.0, 1e-9);
}

TEST(ResolveImpulse, PlasticCollisionStopsRelativeMotion) {
  SimConfig cfg;
  cfg.restitution = 0.0;
  cfg.friction = 0.0;
  const auto single = body_of({{0, 0, 0}});
  std::vector<ContactBody<double>> bodies{contact_body(single, {-0.0045, 0, 0}, {1, 0, 0}),
                                          contact_body(single, {0.0045, 0, 0}, {-1, 0, 0})};
  const auto pairs = detect_contacts<double>(std::span<const ContactBody<double>>(bodies), SpatialHash({{9, 9, 9}}, 0.01), cfg);
  const auto r = resolve_impulse(pairs[0], bodies[0], bodies[1], cfg);
  const double rel = (bodies[0].linear_velocity[0] + r.dv_a[0]) - (bodies[1].linear_velocity[0] + r.dv_b[0]);
  EXPECT_NEAR(rel, 0.0, 1e-12);
}

TEST(ResolveImpulse, NoSlidingGivesZeroTangentialTarget) {
  SimConfig cfg;
  const auto single = body_of({{0, 0, 0}});
  std::vector<ContactBody<double>> bodies{contact_body(single, {0, 0, 0.008}, {0, 0, -1})};
  const SpatialHash plane({{0, 0, 0}}, 0.01);
  const auto pairs = detect_contacts<double>(std::span<const ContactBody<double>>(bodies), plane, cfg);
  const auto r = resolve_impulse(pairs[0], bodies[0], ContactBody<double>::fixed(), cfg);
  EXPECT_EQ(r.target_velocity, (Vec3d{0, 0, 0}));
  EXPECT_NEAR(r.dv_a[2], 1.0, 1e-12);
}

TEST(ResolveImpulse, FrictionScalesTangentialVelocity) {
  // v_c = (1, 0, -1) against a plane, eta 0.4, mu 0: alpha = 1 - 0.4 = 0.6.
  SimConfig cfg;
  const auto single = body_of({{0, 0, 0}});
  std::vector<ContactBody<double>> bodies{contact_body(single, {0, 0, 0.008}, {1, 0, -1})};
  const auto pairs = detect_contacts<double>(std::span<const ContactBody<double>>(bodies), SpatialHash({{0, 0, 0}}, 0.01), cfg);
  const auto r = resolve_impulse(pairs[0], bodies[0], ContactBody<double>::fixed(), cfg);
  EXPECT_NEAR(r.target_velocity[0], 0.6, 1e-15);
  EXPECT_NEAR(r.target_velocity[2], 0.0, 1e-15);
  // Strong friction clamps alpha at zero.
  cfg.friction = 5.0;
  EXPECT_EQ(resolve_impulse(pairs[0], bodies[0], ContactBody<double>::fixed(), cfg).target_velocity[0], 0.0);
}

TEST(ResolveImpulse, RandomCollisionsConserveMomentum) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SimConfig cfg;
  for (int trial = 0; trial < 100; ++trial) {
    cfg.restitution = 0.5 * (u(rng) + 1.0);
    cfg.friction = 0.5 * (u(rng) + 1.0);
    std::vector<Vec3d> pa(6), pb(5);
    for (auto& p : pa) p = {0.03 * u(rng), 0.03 * u(rng), 0.03 * u(rng)};
    for (auto& p : pb) p = {0.03 * u(rng), 0.03 * u(rng), 0.03 * u(rng)};
    const auto A = body_of(pa, 0.01 + 0.005 * (u(rng) + 1.0));
    const auto B = body_of(pb, 0.01 + 0.005 * (u(rng) + 1.0));
    ContactBody<double> ca = contact_body(A, {0, 0, 0}, {u(rng), u(rng), u(rng)}, {u(rng), u(rng), u(rng)});
    // Place B so that particle 0 of B sits just off particle 0 of A.
    const Vec3d dir{u(rng), u(rng), u(rng) + 2.0};
    const Vec3d offset = ca.positions[0] + dir * (0.008 / norm(dir)) - B.offsets[0];
    ContactBody<double> cbb = contact_body(B, offset, {u(rng), u(rng), u(rng)}, {u(rng), u(rng), u(rng)});
    ContactPair<double> pair;
    pair.body_a = 0;
    pair.particle_a = 0;
    pair.body_b = 1;
    pair.particle_b = 0;
    const Vec3d d = ca.positions[0] - cbb.positions[0];
    pair.normal = d / norm(d);
    std::vector<ContactBody<double>> bodies{ca, cbb};
    reclassify(pair, std::span<const ContactBody<double>>(bodies), cfg.velocity_epsilon);
    const auto r = resolve_impulse(pair, ca, cbb, cfg);
    const Vec3d p0 = ca.linear_velocity * A.total_mass + cbb.linear_velocity * B.total_mass;
    const Vec3d p1 = (ca.linear_velocity + r.dv_a) * A.total_mass + (cbb.linear_velocity + r.dv_b) * B.total_mass;
    const double scale = std::max({norm(p0), norm(ca.linear_velocity) * A.total_mass,
                                   norm(cbb.linear_velocity) * B.total_mass});
    EXPECT_LE(norm(p1 - p0) / scale, 1e-9) << "trial " << trial;
    // The contact point reaches its target relative velocity.
    bodies[0].linear_velocity += r.dv_a;
    bodies[0].angular_velocity += r.dw_a;
    bodies[1].linear_velocity += r.dv_b;
    bodies[1].angular_velocity += r.dw_b;
    const Vec3d vc = relative_velocity(pair, std::span<const ContactBody<double>>(bodies));
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(vc[k], r.target_velocity[k], 1e-9);
  }
}

TEST(UpdateSleep, GeometricDecayLiteralRule) {
  SimConfig cfg;
  cfg.sleep_hold_time = 0.0;
  const auto b = body_of({{0, 0, 0}, {0.1, 0, 0}});
  BodyState<double> s = rest_state(b);
  s.rwa = 1.0;
  s = update_sleep(s, b, cfg);
  EXPECT_NEAR(s.rwa, 0.1, 1e-15);
  EXPECT_FALSE(s.asleep);  // 0.1 > 0.0981
  s = update_sleep(s, b, cfg);
  EXPECT_NEAR(s.rwa, 0.01, 1e-15);
  EXPECT_TRUE(s.asleep);
}

TEST(UpdateSleep, FastBodyStaysAwake) {
  SimConfig cfg;
  cfg.sleep_hold_time = 0.0;
  const auto b = body_of({{0, 0, 0}, {0.1, 0, 0}});
  BodyState<double> s = rest_state(b, {10, 0, 0});
  s = update_sleep(s, b, cfg);
  EXPECT_NEAR(s.rwa, 180.0, 1e-12);
  EXPECT_FALSE(s.asleep);
}

TEST(UpdateSleep, HoldTimeAndSupport) {
  SimConfig cfg;  // hold 0.5 s at dt 0.01 -> 50 quiet steps
  const auto b = body_of({{0, 0, 0}, {0.1, 0, 0}});
  BodyState<double> s = rest_state(b);
  for (int k = 0; k < 49; ++k) s = update_sleep(s, b, cfg);
  EXPECT_FALSE(s.asleep);
  s = update_sleep(s, b, cfg);
  EXPECT_TRUE(s.asleep);
  BodyState<double> f = rest_state(b);
  for (int k = 0; k < 200; ++k) f = update_sleep(f, b, cfg, false);
  EXPECT_FALSE(f.asleep);
}

TEST(Simulate, CubeRestsAndSleeps) {
  const auto pts = fixtures::cube();
  const auto b = body_of(pts);
  const auto support = select_supporting_plane(pts, fixtures::plane_boundary());
  ASSERT_FALSE(support.empty());
  const auto r = simulate(b, rest_state(b), support, SimConfig{});
  EXPECT_TRUE(r.final_state.asleep);
  EXPECT_LE(r.steps, 100);
  EXPECT_TRUE(r.stable);
  double lowest = 1e9;
  for (const auto& p : pts) lowest = std::min(lowest, p[2]);
  std::size_t bottom = 0;
  for (const auto& c : r.contacts) {
    if (c.p0[2] != lowest) continue;
    ++bottom;
    EXPECT_TRUE(c.contacted);
    EXPECT_EQ(c.step, 1);
    EXPECT_EQ(c.p_first, c.p0);
  }
  EXPECT_EQ(bottom, 100u);
}

TEST(Simulate, FreeFallNoContactsUnstable) {
  const auto pts = fixtures::cube();
  const auto b = body_of(pts);
  const auto r = simulate(b, rest_state(b), fixtures::plane_boundary(-10.0, 2), SimConfig{});
  EXPECT_EQ(r.steps, 100);
  EXPECT_FALSE(r.stable);
  EXPECT_FALSE(r.final_state.asleep);
  for (const auto& c : r.contacts) {
    EXPECT_FALSE(c.contacted);
    EXPECT_EQ(c.p_first, c.p0);
    EXPECT_EQ(c.step, -1);
  }
}

TEST(Simulate, SingleParticleLandsOnPlane) {
  const auto pts = fixtures::single_particle();
  const auto b = body_of(pts);
  SimConfig cfg;
  const auto r = simulate(b, rest_state(b), fixtures::plane_boundary(0.0, 4), cfg);
  ASSERT_TRUE(r.contacts[0].contacted);
  EXPECT_LE(std::abs(r.contacts[0].p_first[2] - 0.0), 2.0 * cfg.particle_radius);
  EXPECT_GT(r.contacts[0].step, 1);
  EXPECT_TRUE(r.final_state.asleep);
  EXPECT_LT(r.final_state.position[2], pts[0][2]);
  EXPECT_GT(r.final_state.position[2], 0.0);
}

TEST(Simulate, RequiresBoundary) {
  const auto b = body_of({{0, 0, 0}});
  EXPECT_THROW(simulate(b, rest_state(b), {}, SimConfig{}), Error);
}

TEST(Simulate, Deterministic) {
  const auto s = fixtures::slide_scenario();
  const auto a = run_scenario<double>(s, s.points);
  const auto b = run_scenario<double>(s, s.points);
  ASSERT_EQ(a.trajectory.size(), b.trajectory.size());
  for (std::size_t i = 0; i < a.trajectory.size(); ++i) {
    EXPECT_EQ(a.trajectory[i].position, b.trajectory[i].position);
    EXPECT_EQ(a.trajectory[i].linear_velocity, b.trajectory[i].linear_velocity);
    EXPECT_EQ(a.trajectory[i].angular_velocity, b.trajectory[i].angular_velocity);
    EXPECT_EQ(a.trajectory[i].orientation.w, b.trajectory[i].orientation.w);
  }
}

TEST(Simulate, FirstContactMonotoneAndQuaternionNormalized) {
  const auto pts = fixtures::tall_box();
  const auto b = body_of(pts);
  Simulator<double> sim(b, rest_state(b), select_supporting_plane(pts, fixtures::plane_boundary()), SimConfig{});
  std::vector<ContactRecord<double>> prev = sim.contacts();
  for (int k = 0; k < 100; ++k) {
    sim.step();
    const auto& cur = sim.contacts();
    for (std::size_t i = 0; i < cur.size(); ++i) {
      if (prev[i].contacted) {
        ASSERT_TRUE(cur[i].contacted);
        ASSERT_EQ(cur[i].p_first, prev[i].p_first);
        ASSERT_EQ(cur[i].step, prev[i].step);
      }
    }
    prev = cur;
    ASSERT_NEAR(std::sqrt(sim.state().orientation.squared_norm()), 1.0, 1e-9);
  }
}

TEST(Simulate, SleepingBodyUnchangedWithoutCollisions) {
  const auto pts = fixtures::cube();
  const auto b = body_of(pts);
  Simulator<double> sim(b, rest_state(b), select_supporting_plane(pts, fixtures::plane_boundary()), SimConfig{});
  while (!sim.state().asleep && sim.steps_taken() < 100) sim.step();
  ASSERT_TRUE(sim.state().asleep);
  const BodyState<double> frozen = sim.state();
  for (int k = 0; k < 50; ++k) {
    sim.step();
    expect_states_identical(sim.state(), frozen);
    EXPECT_EQ(sim.trajectory().back().n_colliding_pairs, 0);
  }
}

TEST(Simulate, CollidingContactWakesSleepingBody) {
  const auto b = body_of({{0, 0, 0.008}});
  BodyState<double> s = rest_state(b, {0, 0, -1});
  s.asleep = true;
  Simulator<double> sim(b, s, {{0, 0, 0}}, SimConfig{});
  sim.step();
  EXPECT_FALSE(sim.state().asleep);
  EXPECT_EQ(sim.trajectory().back().n_colliding_pairs, 1);
  EXPECT_NEAR(sim.state().linear_velocity[2], 0.0, 1e-12);
}

TEST(Simulate, StepRecordFields) {
  const auto pts = fixtures::sphere();
  const auto b = body_of(pts);
  const auto r = simulate(b, rest_state(b), select_supporting_plane(pts, fixtures::plane_boundary()), SimConfig{});
  ASSERT_EQ(int(r.trajectory.size()), r.steps);
  EXPECT_EQ(r.trajectory.front().step, 1);
  EXPECT_DOUBLE_EQ(r.trajectory.front().t, 0.01);
  EXPECT_TRUE(r.stable);
}

TEST(Stability, Verdict) {
  const Quatd id = Quatd::identity();
  EXPECT_TRUE(stability_verdict({0, 0, 0}, id, {0.05, 0, 0}, id));
  EXPECT_FALSE(stability_verdict({0, 0, 0}, id, {0.0501, 0, 0}, id));
  EXPECT_TRUE(stability_verdict({0, 0, 0}, id, {0, 0, 0}, Quatd::from_axis_angle({1, 0, 0}, radians(4.9))));
  EXPECT_FALSE(stability_verdict({0, 0, 0}, id, {0, 0, 0}, Quatd::from_axis_angle({1, 0, 0}, radians(5.1))));
}

TEST(SupportingPlane, SelectsBeneathFootprint) {
  const std::vector<Vec3d> obj{{0, 0, 0.1}, {0.1, 0.1, 0.2}};
  const std::vector<Vec3d> plane{{0.05, 0.05, 0}, {0.2, 0.05, 0}, {0.14, 0.05, 0}, {0.05, 0.05, 0.3}};
  const auto s = select_supporting_plane(obj, plane, 0.05);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0], plane[0]);
  EXPECT_EQ(s[1], plane[2]);
}
