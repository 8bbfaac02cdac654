#include "aggsim/hydro.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

namespace aggsim::hydro {

namespace {

constexpr std::array<const char*, kKernelCount> kNames = {"prep", "reconstruct", "flux", "reduce",
                                                          "update"};

std::size_t ki(Kernel k) { return static_cast<std::size_t>(k); }

std::int64_t cube(std::int64_t v) { return v * v * v; }

int wrap(int i, int m) { return ((i % m) + m) % m; }

// Index into an (n+2*pad)^3 box whose origin sits at interior cell -pad.
struct Box {
  int n;
  int pad;
  std::int64_t side() const { return n + 2 * pad; }
  std::int64_t size() const { return cube(side()); }
  std::int64_t at(int i, int j, int k) const {
    return ((static_cast<std::int64_t>(k + pad) * side()) + (j + pad)) * side() + (i + pad);
  }
  void decode(std::int64_t idx, int& i, int& j, int& k) const {
    const auto s = side();
    i = static_cast<int>(idx % s) - pad;
    j = static_cast<int>((idx / s) % s) - pad;
    k = static_cast<int>(idx / (s * s)) - pad;
  }
};

}  // namespace

const char* to_string(Kernel k) { return kNames[ki(k)]; }

double minmod(double a, double b) {
  if (a * b <= 0) return 0;
  return std::abs(a) < std::abs(b) ? a : b;
}

std::int64_t Scenario::total_cells() const { return subgrid_count() * cube(n()); }

std::int64_t Scenario::ghost_cells_per_subgrid() const { return cube(n() + 2 * kGhost) - cube(n()); }

int Scenario::flat(int ix, int iy, int iz) const {
  const int m = subgrids_per_edge;
  return (wrap(iz, m) * m + wrap(iy, m)) * m + wrap(ix, m);
}

std::vector<double> Scenario::gather() const {
  const int e = params.edge_cells;
  const int nn = n();
  std::vector<double> out(static_cast<std::size_t>(cube(e)));
  for (const auto& g : grids) {
    for (int k = 0; k < nn; ++k)
      for (int j = 0; j < nn; ++j)
        for (int i = 0; i < nn; ++i) {
          const std::int64_t gx = g.index[0] * nn + i, gy = g.index[1] * nn + j,
                             gz = g.index[2] * nn + k;
          out[static_cast<std::size_t>((gz * e + gy) * e + gx)] =
              g.interior[static_cast<std::size_t>((k * nn + j) * nn + i)];
        }
  }
  return out;
}

void Scenario::scatter(std::span<const double> global) {
  const int e = params.edge_cells;
  const int nn = n();
  if (static_cast<std::int64_t>(global.size()) != cube(e)) {
    throw ValidationError("scatter: expected " + std::to_string(cube(e)) + " values, got " +
                          std::to_string(global.size()));
  }
  for (auto& g : grids) {
    for (int k = 0; k < nn; ++k)
      for (int j = 0; j < nn; ++j)
        for (int i = 0; i < nn; ++i) {
          const std::int64_t gx = g.index[0] * nn + i, gy = g.index[1] * nn + j,
                             gz = g.index[2] * nn + k;
          g.interior[static_cast<std::size_t>((k * nn + j) * nn + i)] =
              global[static_cast<std::size_t>((gz * e + gy) * e + gx)];
        }
  }
}

double Scenario::total_mass() const {
  double sum = 0;
  for (const auto& g : grids)
    for (double v : g.interior) sum += v;
  return sum * dx * dx * dx;
}

Scenario build_scenario(const ScenarioParams& p) {
  if (p.subgrid_n < 1 || p.edge_cells < 1 || p.edge_cells % p.subgrid_n != 0) {
    throw ValidationError("edge_cells " + std::to_string(p.edge_cells) +
                          " is not a positive multiple of subgrid_n " + std::to_string(p.subgrid_n));
  }
  const int per_edge = p.edge_cells / p.subgrid_n;
  if (!std::has_single_bit(static_cast<unsigned>(per_edge))) {
    throw ValidationError("sub-grids per edge (" + std::to_string(per_edge) +
                          ") must be a power of two");
  }
  if (!(p.velocity != 0) || !std::isfinite(p.velocity)) throw ValidationError("velocity must be non-zero");
  if (!(p.cfl > 0)) throw ValidationError("cfl must be positive");

  Scenario s;
  s.params = p;
  s.subgrids_per_edge = per_edge;
  s.level = std::countr_zero(static_cast<unsigned>(per_edge));
  s.dx = 1.0 / p.edge_cells;
  s.dt = p.cfl * s.dx / std::abs(p.velocity);

  const int n = p.subgrid_n;
  const auto n3 = static_cast<std::size_t>(cube(n));
  const auto g3 = static_cast<std::size_t>(cube(n + 2 * kGhost));
  const auto r3 = static_cast<std::size_t>(cube(n + 2));
  s.grids.resize(static_cast<std::size_t>(cube(per_edge)));
  for (int iz = 0; iz < per_edge; ++iz)
    for (int iy = 0; iy < per_edge; ++iy)
      for (int ix = 0; ix < per_edge; ++ix) {
        auto& g = s.grids[static_cast<std::size_t>(s.flat(ix, iy, iz))];
        g.index = {ix, iy, iz};
        int slot = 0;
        for (int dz = -1; dz <= 1; ++dz)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dxn = -1; dxn <= 1; ++dxn) g.neighbors[slot++] = s.flat(ix + dxn, iy + dy, iz + dz);
        g.interior.assign(n3, 1.0);
        g.next.assign(n3, 0.0);
        g.ghosted.assign(g3, 0.0);
        g.work.assign(g3, 0.0);
        g.faces.assign(6 * r3, 0.0);
        g.flux.assign(3 * r3, 0.0);
        if (p.uniform) continue;
        for (int k = 0; k < n; ++k)
          for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
              const double x = (ix * n + i + 0.5) * s.dx;
              const double y = (iy * n + j + 0.5) * s.dx;
              const double z = (iz * n + k + 0.5) * s.dx;
              const double rx = x - p.pulse.center[0], ry = y - p.pulse.center[1],
                           rz = z - p.pulse.center[2];
              const double r2 = rx * rx + ry * ry + rz * rz;
              const double w2 = p.pulse.width * p.pulse.width;
              g.interior[static_cast<std::size_t>((k * n + j) * n + i)] =
                  1.0 + p.pulse.amplitude * std::exp(-r2 / w2);
            }
      }
  return s;
}

Scenario build_scenario(int subgrid_n, int edge_cells, Pulse pulse) {
  ScenarioParams p;
  p.subgrid_n = subgrid_n;
  p.edge_cells = edge_cells;
  p.pulse = pulse;
  return build_scenario(p);
}

void exchange_ghosts(Scenario& s, SubGrid& g) {
  const int n = s.n();
  const Box box{n, kGhost};
  for (int k = -kGhost; k < n + kGhost; ++k)
    for (int j = -kGhost; j < n + kGhost; ++j)
      for (int i = -kGhost; i < n + kGhost; ++i) {
        const int ox = i < 0 ? -1 : (i >= n ? 1 : 0);
        const int oy = j < 0 ? -1 : (j >= n ? 1 : 0);
        const int oz = k < 0 ? -1 : (k >= n ? 1 : 0);
        const auto& src =
            s.grids[static_cast<std::size_t>(g.neighbors[static_cast<std::size_t>((oz + 1) * 9 + (oy + 1) * 3 + ox + 1)])];
        const int li = i - ox * n, lj = j - oy * n, lk = k - oz * n;
        g.ghosted[static_cast<std::size_t>(box.at(i, j, k))] =
            src.interior[static_cast<std::size_t>((lk * n + lj) * n + li)];
      }
}

KernelShape kernel_shape(Kernel k, int n) {
  const std::int64_t g3 = cube(n + 2 * kGhost), r3 = cube(n + 2), n3 = cube(n);
  KernelShape s;
  switch (k) {
    case Kernel::prep:
      s.input_len = g3;
      s.output_len = g3;
      s.work_items = g3;
      s.blocks = vdev::blocks_for(g3);
      break;
    case Kernel::reconstruct:
      s.input_len = g3;
      s.output_len = 6 * r3;
      s.work_items = r3;
      s.blocks = vdev::blocks_for(r3);
      s.work_factor = Ratio{29, 10};
      break;
    case Kernel::flux:
      s.input_len = 6 * r3;
      s.output_len = 3 * r3;
      s.work_items = 3 * r3;
      s.blocks = 3 * vdev::blocks_for(r3);
      s.work_factor = Ratio{14, 10};
      break;
    case Kernel::reduce:
      s.input_len = n3;
      s.output_len = 1;
      s.work_items = 1;
      s.blocks = 1;
      s.host_items = n3;
      break;
    case Kernel::update:
      s.input_len = 3 * r3 + n3;
      s.output_len = n3;
      s.work_items = n3;
      s.blocks = vdev::blocks_for(n3);
      break;
  }
  if (s.host_items == 0) s.host_items = s.work_items;
  return s;
}

void run_items(Kernel kernel, const KernelArgs& a, std::span<const double> in, std::span<double> out,
               std::int64_t begin, std::int64_t end) {
  const int n = a.n;
  const Box gbox{n, kGhost};
  const Box rbox{n, 1};
  const std::int64_t r3 = rbox.size();
  auto at = [](auto span, std::int64_t i) -> auto& { return span[static_cast<std::size_t>(i)]; };

  switch (kernel) {
    case Kernel::prep:
      for (auto q = begin; q < end; ++q) at(out, q) = at(in, q);
      break;
    case Kernel::reconstruct:
      for (auto q = begin; q < end; ++q) {
        int i, j, k;
        rbox.decode(q, i, j, k);
        const double u0 = at(in, gbox.at(i, j, k));
        for (int d = 0; d < 3; ++d) {
          const int ex = d == 0, ey = d == 1, ez = d == 2;
          const double up = at(in, gbox.at(i + ex, j + ey, k + ez));
          const double um = at(in, gbox.at(i - ex, j - ey, k - ez));
          const double sigma = minmod(up - u0, u0 - um);
          at(out, (2 * d) * r3 + q) = u0 - 0.5 * sigma;
          at(out, (2 * d + 1) * r3 + q) = u0 + 0.5 * sigma;
        }
      }
      break;
    case Kernel::flux:
      for (auto q = begin; q < end; ++q) {
        const int d = static_cast<int>(q / r3);
        const std::int64_t c = q % r3;
        if (a.velocity > 0) {
          at(out, q) = a.velocity * at(in, (2 * d + 1) * r3 + c);
          continue;
        }
        int i, j, k;
        rbox.decode(c, i, j, k);
        const int ex = d == 0, ey = d == 1, ez = d == 2;
        if (i + ex > n || j + ey > n || k + ez > n) {
          at(out, q) = 0;
        } else {
          at(out, q) = a.velocity * at(in, (2 * d) * r3 + rbox.at(i + ex, j + ey, k + ez));
        }
      }
      break;
    case Kernel::reduce:
      if (begin < end) {
        const std::int64_t n3 = cube(n);
        double m = 0;
        for (std::int64_t q = 0; q < n3; ++q) {
          const double w = std::isfinite(at(in, q)) ? std::abs(a.velocity) : std::nan("");
          m = std::isnan(w) || std::isnan(m) ? std::nan("") : std::max(m, w);
        }
        at(out, 0) = m;
      }
      break;
    case Kernel::update:
      for (auto q = begin; q < end; ++q) {
        const int i = static_cast<int>(q % n), j = static_cast<int>((q / n) % n),
                  k = static_cast<int>(q / (static_cast<std::int64_t>(n) * n));
        const std::int64_t c = rbox.at(i, j, k);
        const double dfx = at(in, c) - at(in, rbox.at(i - 1, j, k));
        const double dfy = at(in, r3 + c) - at(in, r3 + rbox.at(i, j - 1, k));
        const double dfz = at(in, 2 * r3 + c) - at(in, 2 * r3 + rbox.at(i, j, k - 1));
        at(out, q) = at(in, 3 * r3 + q) - a.dtdx * (dfx + dfy + dfz);
      }
      break;
  }
}

const std::vector<std::string>& HostCosts::keys() {
  static const std::vector<std::string> k = {
      "ghost_exchange_per_cell", "stage_per_value",         "launch_api",
      "copy_api",                "cpu_prep_per_item",       "cpu_reconstruct_per_item",
      "cpu_flux_per_item",       "cpu_reduce_per_item",     "cpu_update_per_item"};
  return k;
}

HostCosts HostCosts::from(const sched::SchedulerConfig& cfg) {
  for (const auto& [key, v] : cfg.host_op_costs) {
    if (std::find(keys().begin(), keys().end(), key) == keys().end()) {
      throw ValidationError("unknown host cost '" + key + "'");
    }
  }
  HostCosts c;
  c.ghost_exchange_per_cell = cfg.cost("ghost_exchange_per_cell");
  c.stage_per_value = cfg.cost("stage_per_value");
  c.launch_api = cfg.cost("launch_api");
  c.copy_api = cfg.cost("copy_api");
  for (auto k : kKernels) {
    c.cpu_per_item[ki(k)] = cfg.cost(std::string("cpu_") + to_string(k) + "_per_item");
  }
  return c;
}

// ---- Simulation -------------------------------------------------------

Simulation::Simulation(Scenario& scenario, StrategyConfig cfg, vdev::DeviceProfile profile,
                       sched::SchedulerConfig sched_cfg)
    : scenario_(scenario), cfg_(cfg), costs_(HostCosts::from(sched_cfg)) {
  if (cfg.max_team < 1) throw ValidationError("max_team must be at least 1");
  sched_ = std::make_unique<sched::Scheduler>(std::move(sched_cfg));
  device_ = std::make_unique<vdev::Device>(*sched_, std::move(profile));
  executors_ = std::make_unique<exec::ExecutorPool>(*device_, cfg.executors, cfg.policy);
  buffers_ = std::make_unique<pool::BufferPool>(*device_);
  for (auto k : kKernels) shapes_[ki(k)] = kernel_shape(k, scenario_.n());
  if (!executors_->cpu_only()) {
    aggregator_ = std::make_unique<agg::Aggregator>(*executors_, *buffers_);
    for (auto k : kKernels) {
      regions_[ki(k)] = &aggregator_->define_region(to_string(k), cfg.executors, cfg.max_team);
    }
    presize_pools();
  }
}

// A task sits in at most one team per kernel and iteration, so at most
// count/s teams of size s hold a kernel's buffers at once.
void Simulation::presize_pools() {
  std::map<pool::BucketKey, std::size_t> need;
  const int tasks = scenario_.subgrid_count();
  for (auto k : kKernels) {
    const auto& sh = shapes_[ki(k)];
    for (int s = 1; s <= std::min(cfg_.max_team, tasks); ++s) {
      const auto teams = static_cast<std::size_t>(tasks / s);
      for (auto kind : {pool::MemoryKind::pinned_host, pool::MemoryKind::device}) {
        for (auto len : {sh.input_len, sh.output_len}) {
          need[{kind, pool::ElementKind::f64, static_cast<std::size_t>(len) * static_cast<std::size_t>(s)}] += teams;
        }
      }
    }
  }
  for (const auto& [key, count] : need) buffers_->reserve(key.kind, key.element, key.length, count);
}

Simulation::~Simulation() = default;

KernelArgs Simulation::args() const {
  return KernelArgs{scenario_.n(), scenario_.params.velocity, scenario_.dt / scenario_.dx};
}

void Simulation::stage(Kernel k, const SubGrid& g, std::span<double> dst) const {
  auto put = [&](const std::vector<double>& v, std::size_t at) {
    std::copy(v.begin(), v.end(), dst.begin() + static_cast<std::ptrdiff_t>(at));
  };
  switch (k) {
    case Kernel::prep: put(g.ghosted, 0); break;
    case Kernel::reconstruct: put(g.work, 0); break;
    case Kernel::flux: put(g.faces, 0); break;
    case Kernel::reduce: put(g.interior, 0); break;
    case Kernel::update:
      put(g.flux, 0);
      put(g.interior, g.flux.size());
      break;
  }
}

void Simulation::unstage(Kernel k, SubGrid& g, std::span<const double> src) const {
  auto get = [&](std::vector<double>& v) { std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(v.size()), v.begin()); };
  switch (k) {
    case Kernel::prep: get(g.work); break;
    case Kernel::reconstruct: get(g.faces); break;
    case Kernel::flux: get(g.flux); break;
    case Kernel::reduce: g.wavespeed = src[0]; break;
    case Kernel::update: get(g.next); break;
  }
}

sched::Task<> Simulation::device_kernel(Kernel k, int gi) {
  auto& s = *sched_;
  auto& g = scenario_.grids[static_cast<std::size_t>(gi)];
  const auto& shape = shapes_[ki(k)];
  const auto in_len = static_cast<std::size_t>(shape.input_len);
  const auto out_len = static_cast<std::size_t>(shape.output_len);

  auto slice = co_await aggregator_->enter(*regions_[ki(k)]);
  auto h_in = co_await slice.alloc(pool::MemoryKind::pinned_host, pool::ElementKind::f64, in_len);
  auto d_in = co_await slice.alloc(pool::MemoryKind::device, pool::ElementKind::f64, in_len);
  auto d_out = co_await slice.alloc(pool::MemoryKind::device, pool::ElementKind::f64, out_len);
  auto h_out = co_await slice.alloc(pool::MemoryKind::pinned_host, pool::ElementKind::f64, out_len);

  stage(k, g, h_in.as<double>());
  co_await s.charge(costs_.stage_per_value * shape.input_len);

  slice.copy(vdev::CopyDirection::host_to_device, h_in, d_in);
  if (slice.issued_last()) co_await s.charge(costs_.copy_api);

  const auto a = args();
  const auto items = shape.work_items;
  auto in = d_in.as<const double>();
  auto out = d_out.as<double>();
  slice.launch(to_string(k), shape.blocks, shape.work_factor,
               [k, a, items, in, out](const vdev::BlockContext& ctx) {
                 const std::int64_t b = std::int64_t{ctx.block} * vdev::kThreadsPerBlock;
                 run_items(k, a, in, out, b, std::min(items, b + vdev::kThreadsPerBlock));
               });
  if (slice.issued_last()) co_await s.charge(costs_.launch_api);

  auto done = slice.copy(vdev::CopyDirection::device_to_host, d_out, h_out);
  if (slice.issued_last()) co_await s.charge(costs_.copy_api);

  co_await s.await(done);
  unstage(k, g, h_out.as<const double>());
  co_await s.charge(costs_.stage_per_value * shape.output_len);
  slice.leave();
}

sched::Task<> Simulation::subgrid_task(int gi) {
  auto& s = *sched_;
  auto& g = scenario_.grids[static_cast<std::size_t>(gi)];
  exchange_ghosts(scenario_, g);
  co_await s.charge(costs_.ghost_exchange_per_cell * scenario_.ghost_cells_per_subgrid());

  if (!aggregator_) {
    const auto a = args();
    std::vector<double> in;
    for (auto k : kKernels) {
      const auto& shape = shapes_[ki(k)];
      in.assign(static_cast<std::size_t>(shape.input_len), 0.0);
      std::vector<double> out(static_cast<std::size_t>(shape.output_len));
      stage(k, g, in);
      run_items(k, a, in, out, 0, shape.work_items);
      unstage(k, g, out);
      co_await s.charge(costs_.cpu_per_item[ki(k)] * shape.host_items);
    }
    co_return;
  }
  for (auto k : kKernels) co_await device_kernel(k, gi);
}

StepStats Simulation::step() {
  for (int it = 0; it < kIterationsPerStep; ++it) {
    std::vector<std::function<sched::Task<>()>> roots;
    roots.reserve(scenario_.grids.size());
    for (int g = 0; g < scenario_.subgrid_count(); ++g) {
      roots.push_back([this, g] { return subgrid_task(g); });
    }
    sched_->run(std::move(roots));
    for (auto& g : scenario_.grids) {
      if (g.wavespeed != std::abs(scenario_.params.velocity)) {
        throw std::logic_error("reduce kernel returned an unexpected wavespeed");
      }
      g.interior.swap(g.next);
    }
  }

  StepStats st;
  const auto& c = device_->counters();
  st.duration = sched_->now() - mark_;
  st.kernels = c.kernels - counters_mark_.kernels;
  st.transfers = c.copies - counters_mark_.copies;
  st.raw_allocs_device = c.raw_allocs_device - counters_mark_.raw_allocs_device;
  st.raw_allocs_pinned = c.raw_allocs_pinned - counters_mark_.raw_allocs_pinned;
  st.syncs = c.sync_events - counters_mark_.sync_events;
  st.stream_creations = c.stream_creations - counters_mark_.stream_creations;
  if (aggregator_) {
    for (auto k : kKernels) {
      const auto& sizes = regions_[ki(k)]->stats().team_sizes;
      for (const auto& [size, count] : sizes) {
        const auto prev = teams_mark_[ki(k)].count(size) ? teams_mark_[ki(k)].at(size) : 0;
        if (count > prev) {
          st.team_sizes[ki(k)][size] = count - prev;
          st.teams += count - prev;
        }
      }
      teams_mark_[ki(k)] = sizes;
    }
  }
  mark_ = sched_->now();
  counters_mark_ = c;
  return st;
}

// ---- serial reference -------------------------------------------------

std::vector<double> serial_reference(const Scenario& scenario, int steps) {
  const int e = scenario.params.edge_cells;
  const double a = scenario.params.velocity;
  const double dtdx = scenario.dt / scenario.dx;
  std::vector<double> u = scenario.gather();
  std::vector<double> uL(u.size() * 3), uR(u.size() * 3), F(u.size() * 3), next(u.size());
  auto id = [e](int i, int j, int k) {
    return static_cast<std::size_t>((static_cast<std::int64_t>(wrap(k, e)) * e + wrap(j, e)) * e + wrap(i, e));
  };
  const std::size_t N = u.size();

  for (int it = 0; it < steps * kIterationsPerStep; ++it) {
    for (int k = 0; k < e; ++k)
      for (int j = 0; j < e; ++j)
        for (int i = 0; i < e; ++i) {
          const auto c = id(i, j, k);
          for (int d = 0; d < 3; ++d) {
            const int ex = d == 0, ey = d == 1, ez = d == 2;
            const double sigma = minmod(u[id(i + ex, j + ey, k + ez)] - u[c],
                                        u[c] - u[id(i - ex, j - ey, k - ez)]);
            uL[d * N + c] = u[c] - 0.5 * sigma;
            uR[d * N + c] = u[c] + 0.5 * sigma;
          }
        }
    for (int k = 0; k < e; ++k)
      for (int j = 0; j < e; ++j)
        for (int i = 0; i < e; ++i) {
          const auto c = id(i, j, k);
          for (int d = 0; d < 3; ++d) {
            const int ex = d == 0, ey = d == 1, ez = d == 2;
            F[d * N + c] = a > 0 ? a * uR[d * N + c] : a * uL[d * N + id(i + ex, j + ey, k + ez)];
          }
        }
    for (int k = 0; k < e; ++k)
      for (int j = 0; j < e; ++j)
        for (int i = 0; i < e; ++i) {
          const auto c = id(i, j, k);
          const double dfx = F[c] - F[id(i - 1, j, k)];
          const double dfy = F[N + c] - F[N + id(i, j - 1, k)];
          const double dfz = F[2 * N + c] - F[2 * N + id(i, j, k - 1)];
          next[c] = u[c] - dtdx * (dfx + dfy + dfz);
        }
    u.swap(next);
  }
  return u;
}

// ---- dump / load ------------------------------------------------------

namespace {
constexpr char kMagic[4] = {'A', 'G', 'S', 'M'};

void put_i32(std::ostream& out, std::int32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::int32_t get_i32(std::istream& in) {
  std::int32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ValidationError("scenario dump truncated");
  return v;
}
}  // namespace

void dump(const Scenario& s, std::ostream& out) {
  out.write(kMagic, 4);
  put_i32(out, s.n());
  put_i32(out, s.params.edge_cells);
  put_i32(out, s.subgrid_count());
  for (const auto& g : s.grids) {
    out.write(reinterpret_cast<const char*>(g.interior.data()),
              static_cast<std::streamsize>(g.interior.size() * sizeof(double)));
  }
}

Scenario load(std::istream& in, const ScenarioParams& base) {
  char magic[4] = {};
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw ValidationError("not a scenario dump (bad magic)");
  }
  ScenarioParams p = base;
  p.subgrid_n = get_i32(in);
  p.edge_cells = get_i32(in);
  const auto count = get_i32(in);
  p.uniform = true;
  Scenario s = build_scenario(p);
  if (count != s.subgrid_count()) {
    throw ValidationError("scenario dump declares " + std::to_string(count) + " sub-grids, expected " +
                          std::to_string(s.subgrid_count()));
  }
  s.params.uniform = base.uniform;
  for (auto& g : s.grids) {
    if (!in.read(reinterpret_cast<char*>(g.interior.data()),
                 static_cast<std::streamsize>(g.interior.size() * sizeof(double)))) {
      throw ValidationError("scenario dump truncated");
    }
  }
  return s;
}

}  // namespace aggsim::hydro
