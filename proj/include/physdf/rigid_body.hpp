#pragma once

// Particle-based rigid-body simulation against a fixed particle boundary.
//
// A body is a set of equal spheres rigidly attached to a frame at the centre of
// mass. Each step integrates gravity with explicit Euler, moves the particles,
// detects particle pairs closer than two radii, and removes approaching contact
// velocity with impulses (restitution and Coulomb friction). Bodies that stay
// slow while supported are put to sleep.
//
// Everything is templated on the scalar so a run can be recorded on an
// `ad::Tape` and differentiated with respect to the initial particle positions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "physdf/core/autodiff.hpp"
#include "physdf/core/error.hpp"
#include "physdf/core/vec.hpp"
#include "physdf/spmc.hpp"
#include "physdf/stability.hpp"

namespace physdf {

struct SimConfig {
  double dt = 0.01;
  Vec3d gravity{0.0, 0.0, -9.81};
  double restitution = 0.0;
  double friction = 0.4;
  double velocity_epsilon = 1e-5;
  double sleep_weight = 0.1;
  int max_steps = 100;
  int impulse_max_iterations = 10;
  double particle_radius = 0.005;
  double particle_mass = 0.01;
  /// Position update from the post-update velocity instead of the pre-update one.
  bool symplectic = false;
  /// How long the sleep criterion must hold, while supported, before a body sleeps.
  double sleep_hold_time = 0.5;
  StabilityThresholds stability{};

  void validate() const {
    if (!(dt > 0.0)) throw Error("SimConfig: dt must be positive");
    if (max_steps < 1) throw Error("SimConfig: max_steps must be >= 1");
    if (impulse_max_iterations < 1) throw Error("SimConfig: impulse_max_iterations must be >= 1");
    if (!(restitution >= 0.0 && restitution <= 1.0))
      throw Error("SimConfig: restitution must lie in [0, 1]");
    if (!(friction >= 0.0)) throw Error("SimConfig: friction must be >= 0");
    if (!(sleep_weight >= 0.0 && sleep_weight <= 1.0))
      throw Error("SimConfig: sleep_weight must lie in [0, 1]");
    if (!(particle_radius > 0.0) || !(particle_mass > 0.0))
      throw Error("SimConfig: particle radius and mass must be positive");
    if (!(sleep_hold_time >= 0.0)) throw Error("SimConfig: sleep_hold_time must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Bodies
// ---------------------------------------------------------------------------

template <class T = double>
struct RigidBody {
  std::vector<Vec3<T>> offsets;  // particle positions in the body frame
  double particle_mass = 0.0;
  double particle_radius = 0.0;
  double total_mass = 0.0;
  Vec3<T> center_of_mass;
  Mat3<T> inertia_ref;
  Mat3<T> inertia_ref_inv;  // pseudo-inverse when the particles are collinear or single
  int inertia_rank = 0;
  T u_max{0.0};

  std::size_t count() const { return offsets.size(); }
};

/// Pseudo-inverse of a symmetric positive semi-definite inertia matrix. Rank 1
/// cannot arise from a particle set, so only ranks 0, 2 and 3 are handled.
template <class T>
Mat3<T> inertia_pseudo_inverse(const Mat3<T>& inertia, int* rank_out = nullptr) {
  const double tr = value(inertia.trace());
  int rank = 3;
  Mat3<T> result;
  if (!(tr > 1e-300)) {
    rank = 0;
  } else {
    const T det = inertia.determinant();
    const double scale = tr / 3.0;
    if (std::abs(value(det)) > 1e-10 * scale * scale * scale) {
      result = inertia.inverse_unchecked(det);
    } else {
      // Null axis from the best-conditioned cross product of two rows.
      const Vec3<T> rows[3] = {inertia.row(0), inertia.row(1), inertia.row(2)};
      Vec3<T> best = cross(rows[0], rows[1]);
      for (const auto& c : {cross(rows[0], rows[2]), cross(rows[1], rows[2])})
        if (value(squared_norm(c)) > value(squared_norm(best))) best = c;
      const Vec3<T> n = best / norm(best);
      const Mat3<T> nn = Mat3<T>::outer(n, n);
      const Mat3<T> lifted = inertia + nn * T(scale);
      result = lifted.inverse_unchecked(lifted.determinant()) - nn * (T(1.0) / T(scale));
      rank = 2;
    }
  }
  if (rank_out) *rank_out = rank;
  return result;
}

/// Mass, centre of mass, body-frame offsets and reference inertia from the
/// initial particle positions.
template <class T>
RigidBody<T> build_body(std::span<const Vec3<T>> points, double particle_mass,
                        double particle_radius) {
  if (points.empty()) throw Error("build_body: empty point cloud");
  if (!(particle_mass > 0.0) || !(particle_radius > 0.0))
    throw Error("build_body: particle mass and radius must be positive");
  RigidBody<T> body;
  body.particle_mass = particle_mass;
  body.particle_radius = particle_radius;
  const double n = double(points.size());
  body.total_mass = n * particle_mass;

  Vec3<T> sum{T(0.0), T(0.0), T(0.0)};
  for (const auto& p : points) sum += p;
  body.center_of_mass = sum / n;

  body.offsets.reserve(points.size());
  T sxx(0.0), syy(0.0), szz(0.0), sxy(0.0), sxz(0.0), syz(0.0);
  std::size_t far = 0;
  double far_sq = -1.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3<T> u = points[i] - body.center_of_mass;
    sxx = sxx + u[0] * u[0];
    syy = syy + u[1] * u[1];
    szz = szz + u[2] * u[2];
    sxy = sxy + u[0] * u[1];
    sxz = sxz + u[0] * u[2];
    syz = syz + u[1] * u[2];
    const double sq = value(squared_norm(u));
    if (sq > far_sq) {
      far_sq = sq;
      far = i;
    }
    body.offsets.push_back(u);
  }
  const double m = particle_mass;
  Mat3<T>& I = body.inertia_ref;
  I(0, 0) = (syy + szz) * m;
  I(1, 1) = (sxx + szz) * m;
  I(2, 2) = (sxx + syy) * m;
  I(0, 1) = I(1, 0) = -(sxy * m);
  I(0, 2) = I(2, 0) = -(sxz * m);
  I(1, 2) = I(2, 1) = -(syz * m);
  body.inertia_ref_inv = inertia_pseudo_inverse(I, &body.inertia_rank);
  body.u_max = norm(body.offsets[far]);
  return body;
}

inline RigidBody<double> build_body(const SurfacePointCloud& cloud, double particle_mass,
                                    double particle_radius) {
  return build_body<double>(std::span<const Vec3d>(cloud.points), particle_mass, particle_radius);
}

/// Rotation matrix of a unit quaternion (w, x, y, z).
template <class T>
Mat3<T> rotation_matrix(const Quat<T>& q) {
  const double n2 = value(q.squared_norm());
  if (!(std::abs(std::sqrt(n2) - 1.0) <= 1e-6))
    throw Error("rotation_matrix: quaternion is not unit length (norm " +
                std::to_string(std::sqrt(n2)) + ")");
  const T& q0 = q.w;
  const T& q1 = q.x;
  const T& q2 = q.y;
  const T& q3 = q.z;
  Mat3<T> R;
  R(0, 0) = 2.0 * (q0 * q0 + q1 * q1) - 1.0;
  R(0, 1) = 2.0 * (q1 * q2 - q0 * q3);
  R(0, 2) = 2.0 * (q1 * q3 + q0 * q2);
  R(1, 0) = 2.0 * (q1 * q2 + q0 * q3);
  R(1, 1) = 2.0 * (q0 * q0 + q2 * q2) - 1.0;
  R(1, 2) = 2.0 * (q2 * q3 - q0 * q1);
  R(2, 0) = 2.0 * (q1 * q3 - q0 * q2);
  R(2, 1) = 2.0 * (q2 * q3 + q0 * q1);
  R(2, 2) = 2.0 * (q0 * q0 + q3 * q3) - 1.0;
  return R;
}

template <class T = double>
struct BodyState {
  Vec3<T> position;
  Quat<T> orientation = Quat<T>::identity();
  Vec3<T> linear_velocity;
  Vec3<T> angular_velocity;
  bool asleep = false;
  double rwa = 0.0;      // running average of the squared speed bound
  int quiet_steps = 0;   // consecutive supported steps below the sleep threshold
};

/// World-space inverse inertia R I_ref^+ R^T.
template <class T>
Mat3<T> world_inverse_inertia(const RigidBody<T>& body, const Mat3<T>& R) {
  return R * body.inertia_ref_inv * R.transposed();
}

/// One explicit Euler step under an external force and torque.
template <class T>
BodyState<T> integrate(const BodyState<T>& state, const RigidBody<T>& body, const Vec3<T>& force,
                       const Vec3<T>& torque, const SimConfig& cfg) {
  if (state.asleep) return state;
  const double dt = cfg.dt;
  const Mat3<T> R = rotation_matrix(state.orientation);
  const Mat3<T> I_inv = world_inverse_inertia(body, R);

  if (body.inertia_rank < 3) {
    const double tn = norm(values(torque));
    if (tn > 0.0) {
      const Mat3<T> I = R * body.inertia_ref * R.transposed();
      const Vec3d kept = values(I * (I_inv * torque));
      if (norm(values(torque) - kept) > 1e-12 * tn)
        warn("integrate: torque about a degenerate inertia axis was projected out");
    }
  }

  BodyState<T> next = state;
  next.linear_velocity = state.linear_velocity + force * (dt / body.total_mass);
  next.angular_velocity = state.angular_velocity + (I_inv * torque) * dt;
  const Vec3<T>& v = cfg.symplectic ? next.linear_velocity : state.linear_velocity;
  const Vec3<T>& w = cfg.symplectic ? next.angular_velocity : state.angular_velocity;
  next.position = state.position + v * dt;

  const Quat<T> omega{T(0.0), w[0], w[1], w[2]};
  const Quat<T> dq = omega * state.orientation;
  const double h = dt / 2.0;
  Quat<T> q{state.orientation.w + dq.w * h, state.orientation.x + dq.x * h,
            state.orientation.y + dq.y * h, state.orientation.z + dq.z * h};
  using std::sqrt;
  const T len = sqrt(q.squared_norm());
  next.orientation = {q.w / len, q.x / len, q.y / len, q.z / len};
  return next;
}

// ---------------------------------------------------------------------------
// Contacts
// ---------------------------------------------------------------------------

enum class ContactClass { kColliding, kResting, kSeparation };

inline const char* to_string(ContactClass c) {
  switch (c) {
    case ContactClass::kColliding: return "colliding";
    case ContactClass::kResting: return "resting";
    case ContactClass::kSeparation: return "separation";
  }
  return "?";
}

/// Classification of a contact from its normal relative speed v_c . N_c.
inline ContactClass classify(double normal_speed, double epsilon) {
  if (normal_speed < -epsilon) return ContactClass::kColliding;
  if (normal_speed > epsilon) return ContactClass::kSeparation;
  return ContactClass::kResting;
}

/// Uniform hash grid over a fixed point set.
class SpatialHash {
 public:
  SpatialHash() = default;
  SpatialHash(std::vector<Vec3d> points, double cell) : points_(std::move(points)), cell_(cell) {
    if (!(cell_ > 0.0)) throw Error("SpatialHash: cell size must be positive");
    for (std::size_t i = 0; i < points_.size(); ++i)
      cells_[key(coord(points_[i]))].push_back(static_cast<std::uint32_t>(i));
  }

  const std::vector<Vec3d>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  /// Indices, ascending, of points within `radius` (strictly) of p. `radius`
  /// must not exceed the cell size.
  std::vector<std::uint32_t> near(const Vec3d& p, double radius) const {
    std::vector<std::uint32_t> out;
    const auto c = coord(p);
    for (std::int64_t dz = -1; dz <= 1; ++dz)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
          auto it = cells_.find(key({c[0] + dx, c[1] + dy, c[2] + dz}));
          if (it == cells_.end()) continue;
          for (std::uint32_t j : it->second)
            if (norm(points_[j] - p) < radius) out.push_back(j);
        }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  using Coord = std::array<std::int64_t, 3>;

  Coord coord(const Vec3d& p) const {
    return {static_cast<std::int64_t>(std::floor(p[0] / cell_)),
            static_cast<std::int64_t>(std::floor(p[1] / cell_)),
            static_cast<std::int64_t>(std::floor(p[2] / cell_))};
  }
  static std::uint64_t key(const Coord& c) {
    const auto u = [](std::int64_t v) { return static_cast<std::uint64_t>(v) & 0x1FFFFFu; };
    return u(c[0]) | (u(c[1]) << 21) | (u(c[2]) << 42);
  }

  std::vector<Vec3d> points_;
  double cell_ = 1.0;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> cells_;
};

/// World-space snapshot of a body as seen by contact handling.
template <class T = double>
struct ContactBody {
  std::vector<Vec3<T>> positions;  // world particle centres
  std::vector<Vec3<T>> arms;       // R u_i, particle centre relative to the COM
  Vec3<T> linear_velocity;
  Vec3<T> angular_velocity;
  double inv_mass = 0.0;
  Mat3<T> inv_inertia;
  bool asleep = false;

  /// Immovable body (1/M = 0, I^-1 = 0) at rest.
  static ContactBody fixed() { return ContactBody{}; }

  Vec3<T> point_velocity(std::size_t i) const {
    return linear_velocity + cross(angular_velocity, arms[i]);
  }
};

inline constexpr int kBoundary = -1;

template <class T = double>
struct ContactPair {
  int body_a = 0;
  std::size_t particle_a = 0;
  int body_b = kBoundary;  // kBoundary for the fixed boundary
  std::size_t particle_b = 0;
  Vec3<T> normal;        // from b towards a
  Vec3<T> rel_velocity;  // velocity of a's point minus b's point
  double normal_speed = 0.0;
  ContactClass classification = ContactClass::kSeparation;
};

template <class T>
Vec3<T> relative_velocity(const ContactPair<T>& pair, std::span<const ContactBody<T>> bodies) {
  const Vec3<T> va = bodies[std::size_t(pair.body_a)].point_velocity(pair.particle_a);
  if (pair.body_b == kBoundary) return va;
  return va - bodies[std::size_t(pair.body_b)].point_velocity(pair.particle_b);
}

/// Refreshes the relative velocity and classification of a pair.
template <class T>
void reclassify(ContactPair<T>& pair, std::span<const ContactBody<T>> bodies,
                double epsilon) {
  pair.rel_velocity = relative_velocity(pair, bodies);
  pair.normal_speed = value(dot(pair.rel_velocity, pair.normal));
  pair.classification = classify(pair.normal_speed, epsilon);
}

namespace detail {
template <class T>
ContactPair<T> make_pair(int a, std::size_t i, int b, std::size_t j, const Vec3<T>& pa,
                         const Vec3<T>& pb, std::span<const ContactBody<T>> bodies,
                         double epsilon) {
  const Vec3<T> d = pa - pb;
  if (norm(values(d)) < 1e-9) {
    std::ostringstream os;
    os << "detect_contacts: coincident particle centres (body " << a << " particle " << i
       << ", " << (b == kBoundary ? std::string("boundary") : "body " + std::to_string(b))
       << " particle " << j << ")";
    throw Error(os.str());
  }
  ContactPair<T> pair;
  pair.body_a = a;
  pair.particle_a = i;
  pair.body_b = b;
  pair.particle_b = j;
  pair.normal = d / norm(d);
  reclassify(pair, bodies, epsilon);
  return pair;
}
}  // namespace detail

/// Every particle pair closer than 2r, between bodies and against the fixed
/// boundary, in ascending (body, particle, other body, other particle) order.
/// Boundary pairs for a particle come after its body-body pairs.
template <class T>
std::vector<ContactPair<T>> detect_contacts(std::span<const ContactBody<T>> bodies,
                                            const SpatialHash& boundary, const SimConfig& cfg) {
  const double reach = 2.0 * cfg.particle_radius;
  std::vector<ContactPair<T>> pairs;
  std::vector<SpatialHash> hashes;
  hashes.reserve(bodies.size());
  for (const auto& body : bodies) {
    std::vector<Vec3d> pts;
    pts.reserve(body.positions.size());
    for (const auto& p : body.positions) pts.push_back(values(p));
    hashes.emplace_back(std::move(pts), reach);
  }
  for (std::size_t a = 0; a < bodies.size(); ++a) {
    for (std::size_t i = 0; i < bodies[a].positions.size(); ++i) {
      const Vec3d pa = hashes[a].points()[i];
      for (std::size_t b = a + 1; b < bodies.size(); ++b)
        for (std::uint32_t j : hashes[b].near(pa, reach))
          pairs.push_back(detail::make_pair<T>(int(a), i, int(b), j, bodies[a].positions[i],
                                               bodies[b].positions[j], bodies,
                                               cfg.velocity_epsilon));
      for (std::uint32_t j : boundary.near(pa, reach))
        pairs.push_back(detail::make_pair<T>(int(a), i, kBoundary, j, bodies[a].positions[i],
                                             Vec3<T>::from(boundary.points()[j]), bodies,
                                             cfg.velocity_epsilon));
    }
  }
  return pairs;
}

template <class T = double>
struct ImpulseResult {
  Vec3<T> impulse;
  Vec3<T> target_velocity;  // desired relative contact velocity v*
  Vec3<T> dv_a, dw_a, dv_b, dw_b;
};

/// Impulse that takes the contact's relative velocity to the restitution and
/// friction target, and the resulting velocity changes of both bodies.
template <class T>
ImpulseResult<T> resolve_impulse(const ContactPair<T>& pair, const ContactBody<T>& a,
                                 const ContactBody<T>& b, const SimConfig& cfg) {
  const double mu = cfg.restitution;
  const double eta = cfg.friction;
  const Vec3<T>& vc = pair.rel_velocity;
  const Vec3<T>& n = pair.normal;
  const Vec3<T> v_perp = n * dot(vc, n);
  const Vec3<T> v_par = vc - v_perp;

  Vec3<T> target = v_perp * (-mu);
  const double par_len = norm(values(v_par));
  if (par_len >= 1e-12) {
    const T alpha = T(1.0) - eta * (1.0 + mu) * norm(v_perp) / norm(v_par);
    if (value(alpha) > 0.0) target += v_par * alpha;
  }

  const Vec3<T> ra = a.arms.empty() ? Vec3<T>{} : a.arms[pair.particle_a];
  const Vec3<T> rb = (pair.body_b == kBoundary || b.arms.empty()) ? Vec3<T>{} : b.arms[pair.particle_b];
  const Mat3<T> Sa = Mat3<T>::skew(ra);
  const Mat3<T> Sb = Mat3<T>::skew(rb);
  const Mat3<T> K = Mat3<T>::identity() * (a.inv_mass + b.inv_mass) - Sa * a.inv_inertia * Sa -
                    Sb * b.inv_inertia * Sb;
  const T det = K.determinant();
  const double tr = value(K.trace()) / 3.0;
  if (!(std::abs(value(det)) > 1e-12 * tr * tr * tr) || !std::isfinite(value(det)))
    throw Error("resolve_impulse: singular contact matrix K");
  const Mat3<T> K_inv = K.inverse_unchecked(det);

  ImpulseResult<T> r;
  r.target_velocity = target;
  r.impulse = K_inv * (target - vc);
  r.dv_a = r.impulse * a.inv_mass;
  r.dw_a = a.inv_inertia * cross(ra, r.impulse);
  r.dv_b = r.impulse * (-b.inv_mass);
  r.dw_b = -(b.inv_inertia * cross(rb, r.impulse));
  return r;
}

/// Sleep bookkeeping at the end of a step. `supported` tells whether the body
/// touched anything this step; an unsupported body under gravity never sleeps.
template <class T>
BodyState<T> update_sleep(const BodyState<T>& state, const RigidBody<T>& body,
                          const SimConfig& cfg, bool supported = true) {
  BodyState<T> next = state;
  if (state.asleep) return next;
  const Vec3d v = values(state.linear_velocity);
  const Vec3d w = values(state.angular_velocity);
  const double u = value(body.u_max);
  const double v_up_sq = 2.0 * (dot(v, v) + dot(w, w) * (u * u));
  const double gamma = cfg.sleep_weight;
  next.rwa = gamma * state.rwa + (1.0 - gamma) * v_up_sq;
  const double threshold = norm(cfg.gravity) * cfg.dt;
  if (next.rwa < threshold && supported)
    ++next.quiet_steps;
  else
    next.quiet_steps = 0;
  const int needed = std::max(1, static_cast<int>(std::ceil(cfg.sleep_hold_time / cfg.dt - 1e-9)));
  if (next.quiet_steps >= needed) {
    next.asleep = true;
    next.linear_velocity = Vec3<T>{};
    next.angular_velocity = Vec3<T>{};
  }
  return next;
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

template <class T = double>
struct ContactRecord {
  std::size_t particle_index = 0;
  Vec3<T> p0;       // initial world position
  Vec3<T> p_first;  // world position at first contact with the boundary
  bool contacted = false;
  int step = -1;    // step of first contact, -1 if never
};

struct StepRecord {
  int step = 0;
  double t = 0.0;
  Vec3d position;
  Quatd orientation;
  Vec3d linear_velocity;
  Vec3d angular_velocity;
  bool asleep = false;
  int n_colliding_pairs = 0;
};

template <class T = double>
struct SimResult {
  std::vector<StepRecord> trajectory;
  std::vector<ContactRecord<T>> contacts;
  BodyState<T> initial;
  BodyState<T> final_state;
  bool stable = false;
  int steps = 0;
  /// Smallest distance of a recorded colliding-vs-resting decision from the
  /// -epsilon threshold. Values pinned at zero by a full impulse solve are
  /// skipped. +infinity when no decision was recorded.
  double min_decision_margin = std::numeric_limits<double>::infinity();
};

/// Steppable simulation of one body against a fixed boundary.
template <class T = double>
class Simulator {
 public:
  Simulator(RigidBody<T> body, BodyState<T> initial, std::vector<Vec3d> boundary,
            SimConfig cfg)
      : body_(std::move(body)),
        state_(std::move(initial)),
        boundary_(std::move(boundary), 2.0 * cfg.particle_radius),
        cfg_(std::move(cfg)) {
    cfg_.validate();
    if (boundary_.empty()) throw Error("simulate: boundary point set is empty");
    initial_ = state_;
    const auto world = world_positions();
    records_.resize(body_.count());
    for (std::size_t i = 0; i < world.positions.size(); ++i)
      records_[i] = {i, world.positions[i], world.positions[i], false, -1};
  }

  const BodyState<T>& state() const { return state_; }
  const BodyState<T>& initial_state() const { return initial_; }
  const RigidBody<T>& body() const { return body_; }
  const std::vector<ContactRecord<T>>& contacts() const { return records_; }
  const std::vector<StepRecord>& trajectory() const { return trajectory_; }
  int steps_taken() const { return step_; }
  double min_decision_margin() const { return min_margin_; }

  /// Advances one time step.
  void step() {
    ++step_;
    if (!state_.asleep) {
      const Vec3<T> gravity_force = Vec3<T>::from(cfg_.gravity) * body_.total_mass;
      state_ = integrate(state_, body_, gravity_force, Vec3<T>{}, cfg_);
    }

    ContactBody<T> cb = world_positions();
    std::vector<ContactBody<T>> bodies{cb};
    auto pairs = detect_contacts<T>(std::span<const ContactBody<T>>(bodies), boundary_, cfg_);

    for (const auto& pair : pairs) {
      auto& rec = records_[pair.particle_a];
      if (!rec.contacted) {
        rec.contacted = true;
        rec.p_first = bodies[0].positions[pair.particle_a];
        rec.step = step_;
      }
    }

    int first_pass_colliding = 0;
    for (int iter = 0; iter < cfg_.impulse_max_iterations; ++iter) {
      if (iter > 0)
        for (auto& pair : pairs) reclassify(pair, std::span<const ContactBody<T>>(bodies), cfg_.velocity_epsilon);
      Vec3<T> dv_sum, dw_sum;
      int colliding = 0;
      for (const auto& pair : pairs) {
        note_decision(pair.normal_speed);
        if (pair.classification != ContactClass::kColliding) continue;
        if (bodies[0].asleep) {
          bodies[0].asleep = false;
          state_.asleep = false;
          state_.quiet_steps = 0;
        }
        const ImpulseResult<T> r =
            resolve_impulse(pair, bodies[0], ContactBody<T>::fixed(), cfg_);
        dv_sum += r.dv_a;
        dw_sum += r.dw_a;
        ++colliding;
      }
      if (iter == 0) first_pass_colliding = colliding;
      if (colliding == 0) break;
      const double inv = 1.0 / double(colliding);
      state_.linear_velocity += dv_sum * inv;
      state_.angular_velocity += dw_sum * inv;
      bodies[0].linear_velocity = state_.linear_velocity;
      bodies[0].angular_velocity = state_.angular_velocity;
    }

    state_ = update_sleep(state_, body_, cfg_, !pairs.empty());
    check_finite();

    trajectory_.push_back({step_, step_ * cfg_.dt, values(state_.position),
                           values(state_.orientation), values(state_.linear_velocity),
                           values(state_.angular_velocity), state_.asleep, first_pass_colliding});
  }

  /// Steps until the body sleeps or the step budget is spent.
  SimResult<T> run() {
    while (step_ < cfg_.max_steps) {
      step();
      if (state_.asleep) break;
    }
    return result();
  }

  SimResult<T> result() const {
    SimResult<T> r;
    r.trajectory = trajectory_;
    r.contacts = records_;
    r.initial = initial_;
    r.final_state = state_;
    r.steps = step_;
    r.min_decision_margin = min_margin_;
    r.stable = stability_verdict(values(initial_.position), values(initial_.orientation),
                                 values(state_.position), values(state_.orientation),
                                 cfg_.stability);
    return r;
  }

 private:
  ContactBody<T> world_positions() const {
    ContactBody<T> cb;
    const Mat3<T> R = rotation_matrix(state_.orientation);
    cb.positions.reserve(body_.count());
    cb.arms.reserve(body_.count());
    for (const auto& u : body_.offsets) {
      const Vec3<T> arm = R * u;
      cb.arms.push_back(arm);
      cb.positions.push_back(arm + state_.position);
    }
    cb.linear_velocity = state_.linear_velocity;
    cb.angular_velocity = state_.angular_velocity;
    cb.inv_mass = 1.0 / body_.total_mass;
    cb.inv_inertia = world_inverse_inertia(body_, R);
    cb.asleep = state_.asleep;
    return cb;
  }

  void note_decision(double normal_speed) {
    if (std::abs(normal_speed) <= 1e-12) return;
    min_margin_ = std::min(min_margin_, std::abs(normal_speed + cfg_.velocity_epsilon));
  }

  void check_finite() const {
    const bool ok = all_finite(values(state_.position)) &&
                    all_finite(values(state_.linear_velocity)) &&
                    all_finite(values(state_.angular_velocity)) &&
                    std::isfinite(value(state_.orientation.squared_norm()));
    if (!ok) throw Error("simulate: non-finite body state at step " + std::to_string(step_));
  }

  RigidBody<T> body_;
  BodyState<T> state_;
  BodyState<T> initial_;
  SpatialHash boundary_;
  SimConfig cfg_;
  std::vector<ContactRecord<T>> records_;
  std::vector<StepRecord> trajectory_;
  int step_ = 0;
  double min_margin_ = std::numeric_limits<double>::infinity();
};

template <class T>
SimResult<T> simulate(const RigidBody<T>& body, const BodyState<T>& initial,
                      const std::vector<Vec3d>& boundary, const SimConfig& cfg) {
  return Simulator<T>(body, initial, boundary, cfg).run();
}

/// Initial state that places the body frame at its centre of mass, unrotated.
template <class T>
BodyState<T> rest_state(const RigidBody<T>& body, const Vec3d& velocity = {},
                        const Vec3d& angular_velocity = {}) {
  BodyState<T> s;
  s.position = body.center_of_mass;
  s.linear_velocity = Vec3<T>::from(velocity);
  s.angular_velocity = Vec3<T>::from(angular_velocity);
  return s;
}

/// Boundary particles near and below an object: within `margin` of the
/// object's horizontal bounding rectangle and no higher than its lowest point
/// plus `margin`.
inline std::vector<Vec3d> select_supporting_plane(const std::vector<Vec3d>& object,
                                                  const std::vector<Vec3d>& boundary,
                                                  double margin = 0.05) {
  if (object.empty()) throw Error("select_supporting_plane: empty object");
  Vec3d lo = object.front(), hi = object.front();
  for (const auto& p : object)
    for (int d = 0; d < 3; ++d) {
      lo[d] = std::min(lo[d], p[d]);
      hi[d] = std::max(hi[d], p[d]);
    }
  std::vector<Vec3d> out;
  for (const auto& b : boundary) {
    const double dx = std::max({lo[0] - b[0], 0.0, b[0] - hi[0]});
    const double dy = std::max({lo[1] - b[1], 0.0, b[1] - hi[1]});
    if (std::hypot(dx, dy) <= margin && b[2] <= lo[2] + margin) out.push_back(b);
  }
  return out;
}

}  // namespace physdf
