#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "invariant_atlas/core/error.hpp"
#include "invariant_atlas/core/numeric.hpp"
#include "invariant_atlas/core/parallel.hpp"
#include "invariant_atlas/core/text_io.hpp"
#include "invariant_atlas/dynamics.hpp"
#include "invariant_atlas/observation.hpp"

namespace atlas {

/// The outer box Q as a product of intervals center +- radius.
struct BoxDomain {
  Eigen::VectorXd center;
  Eigen::VectorXd radius;

  BoxDomain() = default;
  BoxDomain(Eigen::VectorXd c, Eigen::VectorXd r) : center(std::move(c)), radius(std::move(r)) {
    validate();
  }

  static BoxDomain from_bounds(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    return BoxDomain(0.5 * (lo + hi), 0.5 * (hi - lo));
  }

  Eigen::Index dim() const { return center.size(); }
  Eigen::VectorXd lower() const { return center - radius; }
  Eigen::VectorXd upper() const { return center + radius; }

  bool contains(const Eigen::VectorXd& x) const {
    return x.size() == dim() && ((x - center).cwiseAbs().array() <= radius.array()).all();
  }

  void validate() const {
    if (center.size() == 0 || center.size() != radius.size())
      throw InvalidArgument("box domain: center/radius size mismatch");
    if (!(radius.array() > 0.0).all()) throw InvalidArgument("box domain: radii must be positive");
  }
};

/// Cell identifier at a given depth. Axis a carries bits(a) bits; components
/// are concatenated with axis 0 most significant, so numeric order of keys is
/// lexicographic order of multi-indices. A key of depth s uses s bits.
using BoxKey = std::uint64_t;

inline constexpr int kMaxDepth = 64;

struct Box {
  Eigen::VectorXd center;
  Eigen::VectorXd radius;

  double diameter() const { return 2.0 * radius.norm(); }
  bool contains(const Eigen::VectorXd& x) const {
    return ((x - center).cwiseAbs().array() <= radius.array()).all();
  }
};

/// A set of cells of the dyadic partition of Q at one depth. Depth s means s
/// single-axis bisections applied cyclically (axis s mod k at step s).
class BoxCollection {
public:
  BoxCollection() = default;

  BoxCollection(BoxDomain domain, int depth, std::vector<BoxKey> keys)
      : domain_(std::move(domain)), depth_(depth), keys_(std::move(keys)) {
    domain_.validate();
    if (depth_ < 0 || depth_ > kMaxDepth) throw InvalidArgument("box depth out of range");
    std::sort(keys_.begin(), keys_.end());
    keys_.erase(std::unique(keys_.begin(), keys_.end()), keys_.end());
    for (BoxKey key : keys_)
      if (depth_ < 64 && (key >> depth_) != 0) throw InvalidArgument("box key invalid for depth");
  }

  /// B_0 = {Q}.
  static BoxCollection root(const BoxDomain& domain) { return BoxCollection(domain, 0, {0}); }

  const BoxDomain& domain() const { return domain_; }
  int depth() const { return depth_; }
  Eigen::Index dim() const { return domain_.dim(); }
  const std::vector<BoxKey>& keys() const { return keys_; }
  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }

  bool contains(BoxKey key) const { return std::binary_search(keys_.begin(), keys_.end(), key); }

  /// Number of bisections axis `axis` has received at `depth`.
  static int bits(int depth, Eigen::Index dim, Eigen::Index axis) {
    const auto k = static_cast<int>(dim);
    return depth / k + (static_cast<int>(axis) < depth % k ? 1 : 0);
  }
  int bits(Eigen::Index axis) const { return bits(depth_, dim(), axis); }

  std::vector<std::uint64_t> multi_index(BoxKey key) const {
    std::vector<std::uint64_t> idx(static_cast<std::size_t>(dim()));
    int shift = 0;
    for (Eigen::Index a = dim() - 1; a >= 0; --a) {
      const int b = bits(a);
      idx[static_cast<std::size_t>(a)] = b == 0 ? 0 : (key >> shift) & ((std::uint64_t{1} << b) - 1);
      shift += b;
    }
    return idx;
  }

  BoxKey key_of(const std::vector<std::uint64_t>& idx) const { return pack(idx, depth_); }

  /// Edge lengths of every cell at this depth.
  Eigen::VectorXd cell_width() const {
    Eigen::VectorXd w(dim());
    for (Eigen::Index a = 0; a < dim(); ++a) w(a) = 2.0 * domain_.radius(a) / std::ldexp(1.0, bits(a));
    return w;
  }

  double cell_diameter() const { return cell_width().norm(); }

  Box box(BoxKey key) const {
    const auto idx = multi_index(key);
    const Eigen::VectorXd w = cell_width();
    const Eigen::VectorXd lo = domain_.lower();
    Box b;
    b.radius = 0.5 * w;
    b.center.resize(dim());
    for (Eigen::Index a = 0; a < dim(); ++a)
      b.center(a) = lo(a) + (static_cast<double>(idx[static_cast<std::size_t>(a)]) + 0.5) * w(a);
    return b;
  }

  /// Key of the cell at this depth containing x (whether or not it is in the
  /// collection). Cells are half-open except on the upper face of Q.
  std::optional<BoxKey> locate(const Eigen::VectorXd& x) const {
    if (x.size() != dim()) throw InvalidArgument("point dimension does not match the box domain");
    std::vector<std::uint64_t> idx(static_cast<std::size_t>(dim()));
    for (Eigen::Index a = 0; a < dim(); ++a) {
      const double lo = domain_.center(a) - domain_.radius(a);
      const double hi = domain_.center(a) + domain_.radius(a);
      if (!(x(a) >= lo && x(a) <= hi)) return std::nullopt;
      const double cells = std::ldexp(1.0, bits(a));
      double t = std::floor((x(a) - lo) / (hi - lo) * cells);
      t = std::clamp(t, 0.0, cells - 1.0);
      idx[static_cast<std::size_t>(a)] = static_cast<std::uint64_t>(t);
    }
    return pack(idx, depth_);
  }

  /// Collection with only the given keys (same domain and depth).
  BoxCollection with_keys(std::vector<BoxKey> keys) const {
    return BoxCollection(domain_, depth_, std::move(keys));
  }

  /// Cells of this collection that are covered by `coarser` (same domain,
  /// depth <= this depth).
  bool within(const BoxCollection& coarser) const {
    if (coarser.depth() > depth_) throw InvalidArgument("within: argument must be coarser");
    for (BoxKey key : keys_)
      if (!coarser.contains(coarser.locate(box(key).center).value_or(~BoxKey{0}))) return false;
    return true;
  }

private:
  BoxKey pack(const std::vector<std::uint64_t>& idx, int depth) const {
    BoxKey key = 0;
    int shift = 0;
    for (Eigen::Index a = dim() - 1; a >= 0; --a) {
      const int b = bits(depth, dim(), a);
      if (b > 0) key |= idx[static_cast<std::size_t>(a)] << shift;
      shift += b;
    }
    return key;
  }

  BoxDomain domain_;
  int depth_ = 0;
  std::vector<BoxKey> keys_;
};

/// Unique cell index containing x, or nothing when x lies outside Q.
inline std::optional<std::vector<std::uint64_t>> box_of(const Eigen::VectorXd& x,
                                                        const BoxCollection& coll) {
  auto key = coll.locate(x);
  if (!key) return std::nullopt;
  return coll.multi_index(*key);
}

/// Bisects every box along axis (depth mod k).
inline BoxCollection subdivide(const BoxCollection& coll) {
  if (coll.depth() >= kMaxDepth) throw InvalidArgument("subdivide: depth exceeds the key width");
  const Eigen::Index axis = coll.depth() % coll.dim();
  const BoxCollection next_shape(coll.domain(), coll.depth() + 1, {});
  std::vector<BoxKey> children;
  children.reserve(2 * coll.size());
  for (BoxKey key : coll.keys()) {
    auto idx = coll.multi_index(key);
    idx[static_cast<std::size_t>(axis)] *= 2;
    children.push_back(next_shape.key_of(idx));
    idx[static_cast<std::size_t>(axis)] += 1;
    children.push_back(next_shape.key_of(idx));
  }
  return next_shape.with_keys(std::move(children));
}

// ---------------------------------------------------------------------------
// Sample points inside boxes for analytic maps
// ---------------------------------------------------------------------------

namespace detail {

inline double radical_inverse(std::uint64_t i, std::uint64_t base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= static_cast<double>(base);
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

inline std::uint64_t nth_prime(std::size_t n) {
  static const std::uint64_t primes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31,
                                         37, 41, 43, 47, 53, 59, 61, 67, 71, 73};
  if (n >= std::size(primes)) throw InvalidArgument("lattice sampling supports at most 21 dimensions");
  return primes[n];
}

}  // namespace detail

/// Reference points in [-1, 1]^k: the center followed by a randomly shifted
/// Halton sequence. Any prefix of the list is itself a valid sample, so larger
/// counts only add points.
inline Eigen::MatrixXd reference_samples(Eigen::Index dim, int count, std::uint64_t seed) {
  Eigen::MatrixXd pts(count, dim);
  if (count == 0) return pts;
  pts.row(0).setZero();
  Rng rng(seed);
  Eigen::VectorXd shift(dim);
  for (Eigen::Index a = 0; a < dim; ++a) shift(a) = rng.uniform();
  for (int i = 1; i < count; ++i)
    for (Eigen::Index a = 0; a < dim; ++a) {
      double u = detail::radical_inverse(static_cast<std::uint64_t>(i), detail::nth_prime(static_cast<std::size_t>(a))) + shift(a);
      u -= std::floor(u);
      pts(i, a) = 2.0 * u - 1.0;
    }
  return pts;
}

// ---------------------------------------------------------------------------
// Evaluators: produce the images phi(x) of the sample points of a box.
// ---------------------------------------------------------------------------

template <class E>
concept BoxImageEvaluator =
    requires(E& e, const BoxCollection& c, BoxKey key, std::vector<Eigen::VectorXd>& out) {
      e.prepare(c);
      e.images(c, key, out);
    };

/// phi is an explicit map on observation space; samples come from the
/// reference lattice scaled into each box.
class AnalyticEvaluator {
public:
  AnalyticEvaluator(AnalyticMap map, Eigen::Index dim, int points_per_box = 27, std::uint64_t seed = 1)
      : map_(std::move(map)), samples_(reference_samples(dim, points_per_box, seed)) {}

  void prepare(const BoxCollection&) {}

  void images(const BoxCollection& c, BoxKey key, std::vector<Eigen::VectorXd>& out) const {
    const Box b = c.box(key);
    for (Eigen::Index i = 0; i < samples_.rows(); ++i) {
      const Eigen::VectorXd x = b.center + b.radius.cwiseProduct(samples_.row(i).transpose());
      out.push_back(map_(x));
    }
  }

  const AnalyticMap& map() const { return map_; }

private:
  AnalyticMap map_;
  Eigen::MatrixXd samples_;
};

/// A lifted state u together with its observation R(u).
struct LiftedPair {
  StateVector state;
  ObservedPoint obs;
  std::uint64_t seed = 0;     // provenance: which initial condition
  std::uint64_t iterate = 0;  // provenance: number of map applications
};

/// Stored lifts replacing the extension E: phi is only ever evaluated at
/// observations whose preimage state is known.
class LiftedEnsemble {
public:
  void add(LiftedPair p) { pairs_.push_back(std::move(p)); }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  const LiftedPair& operator[](std::size_t i) const { return pairs_[i]; }
  const std::vector<LiftedPair>& pairs() const { return pairs_; }

  /// Records `samples` states at `stride` after discarding `transient` time
  /// units, for each initial state.
  static LiftedEnsemble from_trajectories(const FlowMap& flow, const ObservationMap& observer,
                                          const std::vector<StateVector>& initial, double transient,
                                          double stride, std::size_t samples) {
    std::vector<std::vector<LiftedPair>> per_seed(initial.size());
    parallel_for(initial.size(), [&](std::size_t s) {
      StateVector u = flow.advance(initial[s], transient);
      for (std::size_t i = 0; i < samples; ++i) {
        if (i > 0) u = flow.advance(u, stride);
        per_seed[s].push_back(LiftedPair{u, observer(u), s, i});
      }
    });
    LiftedEnsemble out;
    for (auto& v : per_seed)
      for (auto& p : v) out.add(std::move(p));
    return out;
  }

private:
  std::vector<LiftedPair> pairs_;
};

/// The core dynamical system on lifted points: phi(R(u)) := R(Phi(u)).
/// Each pair is pushed through the flow at most once; images are cached.
/// With `adopt_images` the image pairs join the ensemble so that boxes reached
/// by continuation have representatives of their own.
class CDSEvaluator {
public:
  CDSEvaluator(FlowMap flow, ObservationMap observer, LiftedEnsemble ensemble,
               std::size_t points_per_box = 0, bool adopt_images = false)
      : flow_(std::move(flow)),
        observer_(std::move(observer)),
        ensemble_(std::move(ensemble)),
        points_per_box_(points_per_box),
        adopt_images_(adopt_images) {}

  const LiftedEnsemble& ensemble() const { return ensemble_; }
  const FlowMap& flow() const { return flow_; }
  const ObservationMap& observer() const { return observer_; }

  /// R(Phi(u)) for one lifted pair.
  LiftedPair evaluate(const LiftedPair& p) const {
    StateVector image = flow_.step(p.state);
    ObservedPoint obs = observer_(image);
    return LiftedPair{std::move(image), std::move(obs), p.seed, p.iterate + 1};
  }

  /// Indexes the ensemble by cell of `c` and evaluates every selected pair
  /// that has not been mapped yet.
  void prepare(const BoxCollection& c) {
    members_.clear();
    for (std::size_t i = 0; i < ensemble_.size(); ++i) {
      auto key = c.locate(ensemble_[i].obs.coords);
      if (!key || !c.contains(*key)) continue;
      auto& list = members_[*key];
      if (points_per_box_ == 0 || list.size() < points_per_box_) list.push_back(i);
    }
    std::vector<std::size_t> todo;
    for (const auto& [key, list] : members_)
      for (std::size_t i : list)
        if (i >= image_of_.size() || image_of_[i] == kNone) todo.push_back(i);
    std::sort(todo.begin(), todo.end());
    std::vector<LiftedPair> fresh(todo.size());
    parallel_for(todo.size(), [&](std::size_t t) { fresh[t] = evaluate(ensemble_[todo[t]]); });
    image_of_.resize(ensemble_.size(), kNone);
    for (std::size_t t = 0; t < todo.size(); ++t) {
      image_obs_.push_back(fresh[t].obs.coords);
      image_of_[todo[t]] = image_obs_.size() - 1;
      if (adopt_images_) ensemble_.add(std::move(fresh[t]));
    }
    image_of_.resize(ensemble_.size(), kNone);
  }

  void images(const BoxCollection&, BoxKey key, std::vector<Eigen::VectorXd>& out) const {
    auto it = members_.find(key);
    if (it == members_.end()) return;
    for (std::size_t i : it->second) out.push_back(image_obs_[image_of_[i]]);
  }

private:
  static constexpr std::size_t kNone = ~std::size_t{0};

  FlowMap flow_;
  ObservationMap observer_;
  LiftedEnsemble ensemble_;
  std::size_t points_per_box_;
  bool adopt_images_;
  std::unordered_map<BoxKey, std::vector<std::size_t>> members_;
  std::vector<std::size_t> image_of_;
  std::vector<Eigen::VectorXd> image_obs_;
};

// ---------------------------------------------------------------------------
// Algorithms
// ---------------------------------------------------------------------------

struct StepStats {
  int depth = 0;
  std::size_t boxes = 0;
  std::size_t images = 0;
  std::size_t dropped = 0;  // images outside Q
};

struct CoveringResult {
  BoxCollection boxes;
  std::vector<StepStats> steps;

  std::size_t dropped() const {
    std::size_t n = 0;
    for (const auto& s : steps) n += s.dropped;
    return n;
  }
};

namespace detail {

/// Keys (at the depth of `target`) hit by the images of the boxes of `source`.
template <BoxImageEvaluator E>
std::vector<BoxKey> hit_keys(E& eval, const BoxCollection& source, const BoxCollection& target,
                             StepStats& stats) {
  eval.prepare(source);
  std::vector<BoxKey> hits;
  std::vector<Eigen::VectorXd> buffer;
  for (BoxKey key : source.keys()) {
    buffer.clear();
    eval.images(source, key, buffer);
    stats.images += buffer.size();
    for (const auto& y : buffer) {
      if (auto hit = target.locate(y)) hits.push_back(*hit);
      else ++stats.dropped;
    }
  }
  std::sort(hits.begin(), hits.end());
  hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
  return hits;
}

}  // namespace detail

/// Keeps the boxes of `coll` hit by the image of a sample point of some box
/// of `coll`.
template <BoxImageEvaluator E>
BoxCollection select(const BoxCollection& coll, E& eval, StepStats* stats = nullptr) {
  StepStats local;
  const auto hits = detail::hit_keys(eval, coll, coll, local);
  std::vector<BoxKey> kept;
  std::set_intersection(coll.keys().begin(), coll.keys().end(), hits.begin(), hits.end(),
                        std::back_inserter(kept));
  if (stats) {
    local.depth = coll.depth();
    local.boxes = kept.size();
    *stats = local;
  }
  return coll.with_keys(std::move(kept));
}

/// Alternating subdivision and selection, starting from `start`.
template <BoxImageEvaluator E>
CoveringResult subdivision_algorithm(E& eval, BoxCollection start, int levels) {
  if (levels < 1) throw InvalidArgument("subdivision needs at least one level");
  CoveringResult out;
  out.boxes = std::move(start);
  for (int l = 0; l < levels; ++l) {
    StepStats stats;
    out.boxes = select(subdivide(out.boxes), eval, &stats);
    out.steps.push_back(stats);
    if (out.boxes.empty()) {
      // every later level is empty as well
      for (int rest = l + 1; rest < levels; ++rest) {
        out.boxes = subdivide(out.boxes);
        out.steps.push_back(StepStats{out.boxes.depth(), 0, 0, 0});
      }
      break;
    }
  }
  return out;
}

template <BoxImageEvaluator E>
CoveringResult subdivision_algorithm(E& eval, const BoxDomain& domain, int levels) {
  return subdivision_algorithm(eval, BoxCollection::root(domain), levels);
}

struct ContinuationOptions {
  int seed_depth = 0;                  // level s of the initial box C
  std::size_t max_steps = 1'000'000;   // cap on continuation steps j
};

struct ContinuationResult {
  CoveringResult covering;
  BoxCollection local;                 // C_0 (local unstable manifold)
  std::vector<std::size_t> step_sizes; // |C_j| for j = 0, 1, ...
};

/// Classic continuation: subdivide the box C containing `seed` from
/// `seed_depth` down to `depth`, then grow C_{j+1} = C_j + boxes hit by phi(C_j)
/// until nothing new appears.
template <BoxImageEvaluator E>
ContinuationResult continuation_classic(E& eval, const BoxDomain& domain, const Eigen::VectorXd& seed,
                                        int depth, const ContinuationOptions& opt = {}) {
  if (opt.seed_depth < 0 || opt.seed_depth > depth)
    throw InvalidArgument("continuation: seed depth must lie in [0, depth]");
  const BoxCollection seed_shape(domain, opt.seed_depth, {});
  const auto c = seed_shape.locate(seed);
  if (!c) throw InvalidArgument("continuation: seed point lies outside Q");

  ContinuationResult out;
  BoxCollection current = seed_shape.with_keys({*c});
  if (depth > opt.seed_depth) {
    CoveringResult local = subdivision_algorithm(eval, current, depth - opt.seed_depth);
    current = std::move(local.boxes);
    out.covering.steps = std::move(local.steps);
  }
  out.local = current;
  out.step_sizes.push_back(current.size());

  BoxCollection frontier = current;
  for (std::size_t j = 0; j < opt.max_steps && !frontier.empty(); ++j) {
    StepStats stats;
    const auto hits = detail::hit_keys(eval, frontier, current, stats);
    std::vector<BoxKey> fresh;
    std::set_difference(hits.begin(), hits.end(), current.keys().begin(), current.keys().end(),
                        std::back_inserter(fresh));
    if (fresh.empty()) break;
    std::vector<BoxKey> merged;
    std::set_union(current.keys().begin(), current.keys().end(), fresh.begin(), fresh.end(),
                   std::back_inserter(merged));
    current = current.with_keys(std::move(merged));
    frontier = current.with_keys(std::move(fresh));
    stats.depth = depth;
    stats.boxes = current.size();
    out.covering.steps.push_back(stats);
    out.step_sizes.push_back(current.size());
  }
  out.covering.boxes = std::move(current);
  return out;
}

struct SweepOptions {
  std::size_t n_test_points = 1000;
  double horizon = 800.0;      // T
  double stride = 0.2;         // h
  double perturbation = 1e-4;  // relative size of the initial offsets from u*
  std::uint64_t seed = 1;
};

/// Single-step continuation with trajectory crossing: test states near u*
/// are integrated for T and the box of every observation at t = i*h,
/// i = 1..T/h, is inserted.
inline CoveringResult continuation_sweep(const FlowMap& flow, const ObservationMap& observer,
                                         const BoxDomain& domain, const StateVector& u_star, int depth,
                                         const SweepOptions& opt) {
  const double ratio = opt.horizon / opt.stride;
  const auto n_strides = static_cast<std::size_t>(std::llround(ratio));
  if (!(opt.stride > 0.0) || std::abs(static_cast<double>(n_strides) - ratio) > 1e-9 * std::max(1.0, ratio))
    throw InvalidArgument("sweep: stride must divide the horizon");
  const BoxCollection shape(domain, depth, {});
  if (!shape.locate(observer(u_star).coords)) throw InvalidArgument("sweep: seed lies outside Q");

  const double scale = opt.perturbation * std::max(1.0, u_star.values.cwiseAbs().maxCoeff());
  std::vector<std::vector<BoxKey>> per_point(opt.n_test_points);
  std::vector<std::size_t> dropped(opt.n_test_points, 0);
  parallel_for(opt.n_test_points, [&](std::size_t p) {
    Rng rng(opt.seed * 0x9E3779B97F4A7C15ull + p);
    StateVector u = u_star;
    Eigen::VectorXd offset(u.values.size());
    for (Eigen::Index j = 0; j < offset.size(); ++j) offset(j) = rng.symmetric();
    u.values += scale * offset / offset.cwiseAbs().maxCoeff();
    auto& keys = per_point[p];
    for (std::size_t i = 0; i < n_strides; ++i) {
      u = flow.advance(u, opt.stride);
      if (auto key = shape.locate(observer(u).coords)) keys.push_back(*key);
      else ++dropped[p];
    }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  });
  std::vector<BoxKey> all;
  StepStats stats;
  stats.depth = depth;
  for (std::size_t p = 0; p < per_point.size(); ++p) {
    all.insert(all.end(), per_point[p].begin(), per_point[p].end());
    stats.dropped += dropped[p];
  }
  stats.images = opt.n_test_points * n_strides;
  CoveringResult out;
  out.boxes = shape.with_keys(std::move(all));
  stats.boxes = out.boxes.size();
  out.steps.push_back(stats);
  return out;
}

/// Centers of `count` boxes drawn uniformly without replacement (all boxes
/// when count is empty), returned in key order.
inline Eigen::MatrixXd midpoints(const BoxCollection& coll, std::optional<std::size_t> count,
                                 std::uint64_t seed) {
  std::vector<std::size_t> chosen(coll.size());
  for (std::size_t i = 0; i < chosen.size(); ++i) chosen[i] = i;
  if (count) {
    if (*count > coll.size()) throw InvalidArgument("midpoints: more points requested than boxes");
    Rng rng(seed);
    for (std::size_t i = 0; i < *count; ++i) std::swap(chosen[i], chosen[i + rng.below(chosen.size() - i)]);
    chosen.resize(*count);
    std::sort(chosen.begin(), chosen.end());
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(chosen.size()), coll.dim());
  for (std::size_t i = 0; i < chosen.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = coll.box(coll.keys()[chosen[i]]).center.transpose();
  return out;
}

// ---------------------------------------------------------------------------
// Covering file: text header then one sorted multi-index per line.
// ---------------------------------------------------------------------------

inline void write_covering(const std::string& path, const BoxCollection& coll) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "# covering\n";
  out << "# k " << coll.dim() << '\n';
  out << "# depth " << coll.depth() << '\n';
  out << "# center " << io::format_row(coll.domain().center.transpose()) << '\n';
  out << "# radius " << io::format_row(coll.domain().radius.transpose()) << '\n';
  out << "# count " << coll.size() << '\n';
  for (BoxKey key : coll.keys()) {
    const auto idx = coll.multi_index(key);
    for (std::size_t a = 0; a < idx.size(); ++a) out << (a ? " " : "") << idx[a];
    out << '\n';
  }
  if (!out) throw Error("write failed for '" + path + "'");
}

inline BoxCollection read_covering(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  Eigen::Index k = -1;
  int depth = -1;
  std::size_t count = 0;
  std::vector<double> center, radius;
  std::vector<std::vector<std::uint64_t>> rows;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    auto toks = io::split_ws(line[0] == '#' ? line.substr(1) : line);
    if (line[0] == '#') {
      if (toks.empty()) continue;
      if (toks[0] == "k") k = std::stoll(toks.at(1));
      else if (toks[0] == "depth") depth = std::stoi(toks.at(1));
      else if (toks[0] == "count") count = std::stoull(toks.at(1));
      else if (toks[0] == "center" || toks[0] == "radius") {
        auto& dst = toks[0] == "center" ? center : radius;
        for (std::size_t i = 1; i < toks.size(); ++i) dst.push_back(io::parse_double(toks[i]));
      }
      continue;
    }
    std::vector<std::uint64_t> idx;
    for (const auto& t : toks) idx.push_back(std::stoull(t));
    rows.push_back(std::move(idx));
  }
  if (k < 1 || depth < 0 || static_cast<Eigen::Index>(center.size()) != k ||
      static_cast<Eigen::Index>(radius.size()) != k || rows.size() != count)
    throw Error("malformed covering file '" + path + "'");
  BoxDomain domain(Eigen::Map<Eigen::VectorXd>(center.data(), k), Eigen::Map<Eigen::VectorXd>(radius.data(), k));
  BoxCollection shape(domain, depth, {});
  std::vector<BoxKey> keys;
  for (const auto& r : rows) {
    if (static_cast<Eigen::Index>(r.size()) != k) throw Error("malformed covering row in '" + path + "'");
    for (Eigen::Index a = 0; a < k; ++a)
      if (r[static_cast<std::size_t>(a)] >> shape.bits(a)) throw Error("covering index out of range in '" + path + "'");
    keys.push_back(shape.key_of(r));
  }
  return shape.with_keys(std::move(keys));
}

}  // namespace atlas
