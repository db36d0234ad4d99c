//! Exact lattice SSA with checkerboard decomposition and Lie/Strang
//! parallel schedules.
//!
//! One scheme step executes the substep schedule in order; within a
//! substep, independent clusters of same-group sublattices run
//! concurrently against frozen boundary snapshots, which realizes the
//! restricted semigroup exactly. Results are merged in cluster-id order
//! so trajectories are bit-identical for any thread count.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{arrhenius_rate, ArrheniusRates, Group, LatticeDims, SchemeSpec, SpinConfiguration};

/// Nearest-neighbor interaction range of the Arrhenius dynamics.
pub const NN_RANGE: usize = 1;

#[derive(Debug, Error)]
pub enum KmcError {
    #[error("lattice side {n} not divisible by m={m}")]
    Indivisible { n: usize, m: usize },
    #[error("sublattice width {width} must exceed the interaction range {range}")]
    SublatticeTooNarrow { width: usize, range: usize },
    #[error("invalid simulation window: T={t_end}, burn_in={burn_in}")]
    BadWindow { t_end: f64, burn_in: f64 },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Checkerboard partition of the lattice into m (1D) or m^2 (2D)
/// sublattices with alternating group labels.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub dims: LatticeDims,
    pub m: usize,
    /// Site -> sublattice id.
    pub assignment: Vec<usize>,
    /// Sublattice id -> group.
    pub group: Vec<Group>,
    /// Sublattice id -> its sites.
    pub sublattice_sites: Vec<Vec<usize>>,
    /// Sublattice id -> sites whose neighborhood leaves the sublattice.
    pub boundary_sites: Vec<Vec<usize>>,
    /// Site -> group (derived from assignment).
    pub site_group: Vec<Group>,
    /// Per group: independent clusters of same-group sublattices that
    /// interact across sublattice boundaries (e.g. the wrap seam when m
    /// is odd); each cluster is one SSA unit. Sites sorted ascending.
    pub clusters: [Vec<Vec<usize>>; 2],
    /// Per group: count of sites in that group adjacent to the other
    /// group — the sites refreshed when the group receives a boundary
    /// synchronization.
    pub cross_boundary_sites: [usize; 2],
}

/// Builds the checkerboard decomposition; requires the lattice side to
/// be divisible by m and the sublattice width to exceed the
/// interaction range (so different-group neighbors are at most one
/// sublattice away).
pub fn checkerboard(dims: LatticeDims, m: usize) -> Result<Decomposition, KmcError> {
    let side = dims.side();
    if m == 0 || side % m != 0 {
        return Err(KmcError::Indivisible { n: side, m });
    }
    let width = side / m;
    if width <= NN_RANGE {
        return Err(KmcError::SublatticeTooNarrow { width, range: NN_RANGE });
    }
    let n_sites = dims.n_sites();
    let n_sub = match dims {
        LatticeDims::OneD(_) => m,
        LatticeDims::TwoD(_) => m * m,
    };
    let mut assignment = vec![0usize; n_sites];
    let mut group = vec![Group::G1; n_sub];
    for x in 0..n_sites {
        let sub = match dims {
            LatticeDims::OneD(_) => x / width,
            LatticeDims::TwoD(n) => {
                let (r, c) = (x / n, x % n);
                (r / width) * m + c / width
            }
        };
        assignment[x] = sub;
    }
    for (s, g) in group.iter_mut().enumerate() {
        let parity = match dims {
            LatticeDims::OneD(_) => s % 2,
            LatticeDims::TwoD(_) => (s / m + s % m) % 2,
        };
        *g = if parity == 0 { Group::G1 } else { Group::G2 };
    }
    // When m == 1 there is only one sublattice; it stays in G1 and the
    // G2 substeps of any scheme are no-ops.

    let mut sublattice_sites = vec![Vec::new(); n_sub];
    for (x, &s) in assignment.iter().enumerate() {
        sublattice_sites[s].push(x);
    }
    let site_group: Vec<Group> = assignment.iter().map(|&s| group[s]).collect();

    let mut boundary_sites = vec![Vec::new(); n_sub];
    let mut nb = [0usize; 4];
    for x in 0..n_sites {
        let k = dims.neighbors(x, &mut nb);
        if nb[..k].iter().any(|&y| assignment[y] != assignment[x]) {
            boundary_sites[assignment[x]].push(x);
        }
    }

    // Union same-group sublattices that touch: each union is one exact
    // SSA unit, so intra-group interactions are never frozen.
    let mut parent: Vec<usize> = (0..n_sub).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for x in 0..n_sites {
        let k = dims.neighbors(x, &mut nb);
        for &y in &nb[..k] {
            let (sa, sb) = (assignment[x], assignment[y]);
            if sa != sb && group[sa] == group[sb] {
                let (ra, rb) = (find(&mut parent, sa), find(&mut parent, sb));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut clusters: [Vec<Vec<usize>>; 2] = [Vec::new(), Vec::new()];
    for gi in 0..2 {
        let g = if gi == 0 { Group::G1 } else { Group::G2 };
        let mut roots: Vec<usize> = (0..n_sub)
            .filter(|&s| group[s] == g && find(&mut parent, s) == s)
            .collect();
        roots.sort_unstable();
        for root in roots {
            let mut sites: Vec<usize> = (0..n_sub)
                .filter(|&s| group[s] == g && find(&mut parent, s) == root)
                .flat_map(|s| sublattice_sites[s].iter().copied())
                .collect();
            sites.sort_unstable();
            clusters[gi].push(sites);
        }
    }

    let mut cross_boundary_sites = [0usize; 2];
    for x in 0..n_sites {
        let k = dims.neighbors(x, &mut nb);
        if nb[..k].iter().any(|&y| site_group[y] != site_group[x]) {
            let gi = if site_group[x] == Group::G1 { 0 } else { 1 };
            cross_boundary_sites[gi] += 1;
        }
    }

    Ok(Decomposition {
        dims,
        m,
        assignment,
        group,
        sublattice_sites,
        boundary_sites,
        site_group,
        clusters,
        cross_boundary_sites,
    })
}

/// Communication accounting over a run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CommStats {
    /// Boundary-site refreshes performed at synchronization events.
    pub boundary_rate_evals: u64,
    /// Inter-group boundary synchronizations.
    pub sync_events: u64,
    /// Fraction of wall time spent synchronizing/merging. Hardware
    /// dependent; excluded from deterministic outputs.
    pub wall_fraction_comm: f64,
}

/// Table-style upper bound on boundary communication per step,
/// normalized by the site count: 2(m+1)/N for Lie, 6(m+1)/N for Strang.
pub fn comm_bound(m: usize, n_side: usize, scheme: &SchemeSpec) -> f64 {
    let factor = match scheme.kind {
        crate::model::SchemeKind::Lie => 2.0,
        crate::model::SchemeKind::Strang => 6.0,
    };
    factor * (m as f64 + 1.0) / n_side as f64
}

/// One recorded SSA event.
#[derive(Clone, Copy, Debug)]
pub struct Event {
    pub step: u64,
    pub sublattice: usize,
    pub site: usize,
    pub new_spin: u8,
    /// Time within the run at which the flip occurred.
    pub time: f64,
}

/// Simulation clock; after every scheme step all local clocks have
/// advanced to the global time.
#[derive(Clone, Copy, Debug, Default)]
pub struct SimClock {
    pub global_time: f64,
    pub step_count: u64,
}

/// Counter-based stream: a fresh ChaCha generator keyed by
/// (seed, step, substep, cluster) so execution order and thread count
/// cannot affect the numbers a unit consumes.
pub fn stream_rng(seed: u64, step: u64, substep: u64, cluster: u64) -> ChaCha8Rng {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e3779b97f4a7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }
    let mut key = [0u8; 32];
    let words = [
        mix(seed),
        mix(seed ^ mix(step)),
        mix(seed ^ mix(substep ^ 0x5851_f42d_4c95_7f2d)),
        mix(seed ^ mix(cluster ^ 0x1405_7b7e_f767_814f)),
    ];
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Rejection-free SSA restricted to `active` sites, with all other
/// sites frozen at their snapshot values. Events past the horizon are
/// discarded, so the returned configuration is an exact sample of the
/// restricted semigroup at `horizon`.
pub fn ssa_run(
    snapshot: &SpinConfiguration,
    active: &[usize],
    params: &ArrheniusRates,
    horizon: f64,
    rng: &mut ChaCha8Rng,
) -> (SpinConfiguration, Vec<(usize, f64)>) {
    let mut sigma = snapshot.clone();
    let mut events = Vec::new();
    if active.is_empty() || horizon <= 0.0 {
        return (sigma, events);
    }
    let mut rates: Vec<f64> = active.iter().map(|&x| arrhenius_rate(x, &sigma, params)).collect();
    let mut clock = 0.0f64;
    loop {
        let total: f64 = rates.iter().sum();
        if total <= 0.0 {
            break;
        }
        let u: f64 = rng.gen();
        clock += -(1.0 - u).ln() / total;
        if clock > horizon {
            break;
        }
        // Cumulative-rate inversion picks the firing site.
        let target: f64 = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = active.len() - 1;
        for (idx, &r) in rates.iter().enumerate() {
            acc += r;
            if target < acc {
                chosen = idx;
                break;
            }
        }
        let site = active[chosen];
        sigma.flip(site);
        events.push((site, clock));
        // Refresh the flipped site and any active neighbors.
        rates[chosen] = arrhenius_rate(site, &sigma, params);
        let mut nb = [0usize; 4];
        let k = sigma.dims().neighbors(site, &mut nb);
        for &y in &nb[..k] {
            if let Ok(idx) = active.binary_search(&y) {
                rates[idx] = arrhenius_rate(y, &sigma, params);
            }
        }
    }
    (sigma, events)
}

/// Executes one step of the splitting schedule. Returns the new
/// configuration and the step's communication counters; appends events
/// to `event_log` when provided.
pub fn scheme_step(
    sigma: &SpinConfiguration,
    decomp: &Decomposition,
    params: &ArrheniusRates,
    scheme: &SchemeSpec,
    dt: f64,
    seed: u64,
    clock: &mut SimClock,
    event_log: Option<&mut Vec<Event>>,
) -> (SpinConfiguration, CommStats) {
    let mut stats = CommStats::default();
    let mut current = sigma.clone();
    let step = clock.step_count;
    let t0 = clock.global_time;
    let wall_start = std::time::Instant::now();
    let mut comm_wall = std::time::Duration::ZERO;
    let mut step_events: Vec<Event> = Vec::new();
    let mut elapsed_frac = 0.0f64;

    for (si, &(group, frac)) in scheme.schedule.iter().enumerate() {
        if si > 0 {
            // Boundary exchange: the group about to run refreshes its
            // cross-group boundary sites from the other group's state.
            let sync_start = std::time::Instant::now();
            stats.sync_events += 1;
            let gi = if group == Group::G1 { 0 } else { 1 };
            stats.boundary_rate_evals += decomp.cross_boundary_sites[gi] as u64;
            comm_wall += sync_start.elapsed();
        }
        let gi = if group == Group::G1 { 0 } else { 1 };
        let horizon = frac * dt;
        let snapshot = &current;
        let results: Vec<(usize, SpinConfiguration, Vec<(usize, f64)>)> = decomp.clusters[gi]
            .par_iter()
            .enumerate()
            .map(|(ci, sites)| {
                let mut rng = stream_rng(seed, step, si as u64, ci as u64);
                let (out, events) = ssa_run(snapshot, sites, params, horizon, &mut rng);
                (ci, out, events)
            })
            .collect();
        // Merge own-group flips back in cluster-id order.
        let merge_start = std::time::Instant::now();
        let mut merged = current.clone();
        for (ci, out, events) in results {
            for &x in &decomp.clusters[gi][ci] {
                merged.set_spin(x, out.spin(x));
            }
            if event_log.is_some() {
                for (site, t) in events {
                    step_events.push(Event {
                        step,
                        sublattice: decomp.assignment[site],
                        site,
                        new_spin: merged.spin(site),
                        time: t0 + (elapsed_frac * dt) + t,
                    });
                }
            }
        }
        current = merged;
        comm_wall += merge_start.elapsed();
        elapsed_frac += frac;
    }

    clock.global_time = t0 + dt;
    clock.step_count += 1;
    let total_wall = wall_start.elapsed().as_secs_f64();
    stats.wall_fraction_comm = if total_wall > 0.0 {
        comm_wall.as_secs_f64() / total_wall
    } else {
        0.0
    };
    if let Some(log) = event_log {
        log.extend(step_events);
    }
    (current, stats)
}

/// Observer invoked on every post-burn-in configuration.
pub trait SampleHook {
    fn on_sample(&mut self, sigma: &SpinConfiguration);
}

/// Running mean of lattice coverage.
#[derive(Clone, Debug, Default)]
pub struct CoverageHook {
    pub sum: f64,
    pub count: u64,
}

impl SampleHook for CoverageHook {
    fn on_sample(&mut self, sigma: &SpinConfiguration) {
        self.sum += sigma.coverage();
        self.count += 1;
    }
}

impl CoverageHook {
    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.sum / self.count as f64
        }
    }
}

/// Trajectory-level summary returned by `simulate`.
#[derive(Clone, Debug)]
pub struct SimSummary {
    pub comm: CommStats,
    pub steps: u64,
    pub sampled_steps: u64,
    pub final_state: SpinConfiguration,
}

/// Runs T/dt scheme steps from `initial`; after `burn_in` time, every
/// post-step configuration is passed to the hooks (single-threaded).
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    initial: &SpinConfiguration,
    decomp: &Decomposition,
    params: &ArrheniusRates,
    scheme: &SchemeSpec,
    dt: f64,
    t_end: f64,
    burn_in: f64,
    seed: u64,
    hooks: &mut [&mut dyn SampleHook],
    mut event_log: Option<&mut Vec<Event>>,
) -> Result<SimSummary, KmcError> {
    if !(t_end >= burn_in && burn_in >= 0.0) {
        return Err(KmcError::BadWindow { t_end, burn_in });
    }
    params.validate()?;
    let n_steps = (t_end / dt).round() as u64;
    let mut clock = SimClock::default();
    let mut sigma = initial.clone();
    let mut comm = CommStats::default();
    let mut sampled = 0u64;
    let mut wall_num = 0.0f64;
    for _ in 0..n_steps {
        let (next, stats) =
            scheme_step(&sigma, decomp, params, scheme, dt, seed, &mut clock, event_log.as_deref_mut());
        sigma = next;
        comm.boundary_rate_evals += stats.boundary_rate_evals;
        comm.sync_events += stats.sync_events;
        wall_num += stats.wall_fraction_comm;
        // Sampling starts strictly after the burn-in window.
        if clock.global_time > burn_in + 1e-12 {
            for hook in hooks.iter_mut() {
                hook.on_sample(&sigma);
            }
            sampled += 1;
        }
    }
    comm.wall_fraction_comm = if n_steps > 0 { wall_num / n_steps as f64 } else { 0.0 };
    Ok(SimSummary { comm, steps: n_steps, sampled_steps: sampled, final_state: sigma })
}
