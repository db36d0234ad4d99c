//! Domain types shared by the dense analysis engine and the lattice
//! simulator: spin configurations, Arrhenius spin-flip rates, dense
//! generators and their restrictions, and splitting-scheme descriptors.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Mat;

/// Hard cap on enumerated lattice state spaces (2^20 states).
pub const STATE_SPACE_CAP: usize = 1 << 20;

/// Row sums of a generator must vanish to this absolute tolerance.
pub const GENERATOR_ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("negative off-diagonal rate {value} at ({row},{col})")]
    NegativeRate { row: usize, col: usize, value: f64 },
    #[error("generator row {row} sums to {sum:e}, expected 0")]
    RowSumNonZero { row: usize, sum: f64 },
    #[error("state space of {states} states exceeds cap of {cap}")]
    StateSpaceTooLarge { states: usize, cap: usize },
    #[error("invalid rate parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// Periodic lattice geometry: a 1D ring of `N` sites or an `N x N` torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatticeDims {
    OneD(usize),
    TwoD(usize),
}

impl LatticeDims {
    pub fn n_sites(&self) -> usize {
        match *self {
            LatticeDims::OneD(n) => n,
            LatticeDims::TwoD(n) => n * n,
        }
    }

    pub fn side(&self) -> usize {
        match *self {
            LatticeDims::OneD(n) | LatticeDims::TwoD(n) => n,
        }
    }

    /// Nearest neighbors of `x` under periodic boundaries, written into
    /// `out`; returns the neighbor count (2 in 1D, 4 in 2D, fewer on
    /// degenerate side lengths where wrap-around folds neighbors onto
    /// each other or onto `x` itself).
    #[inline]
    pub fn neighbors(&self, x: usize, out: &mut [usize; 4]) -> usize {
        let mut candidates = [0usize; 4];
        let raw = match *self {
            LatticeDims::OneD(n) => {
                candidates[0] = (x + 1) % n;
                candidates[1] = (x + n - 1) % n;
                2
            }
            LatticeDims::TwoD(n) => {
                let (r, c) = (x / n, x % n);
                candidates[0] = r * n + (c + 1) % n;
                candidates[1] = r * n + (c + n - 1) % n;
                candidates[2] = ((r + 1) % n) * n + c;
                candidates[3] = ((r + n - 1) % n) * n + c;
                4
            }
        };
        let mut k = 0;
        for &y in &candidates[..raw] {
            if y != x && !out[..k].contains(&y) {
                out[k] = y;
                k += 1;
            }
        }
        k
    }

    /// True if `x` and `y` are nearest neighbors.
    pub fn adjacent(&self, x: usize, y: usize) -> bool {
        let mut nb = [0usize; 4];
        let k = self.neighbors(x, &mut nb);
        nb[..k].contains(&y)
    }
}

/// Lattice occupation state sigma: each site carries a spin in {0,1}.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpinConfiguration {
    dims: LatticeDims,
    spins: Vec<u8>,
}

impl SpinConfiguration {
    pub fn empty(dims: LatticeDims) -> Self {
        SpinConfiguration { dims, spins: vec![0; dims.n_sites()] }
    }

    /// Decodes a packed state index: site 0 is the least significant bit.
    pub fn from_bits(dims: LatticeDims, bits: u64) -> Self {
        let n = dims.n_sites();
        assert!(n <= 63, "packed encoding limited to 63 sites");
        let spins = (0..n).map(|k| ((bits >> k) & 1) as u8).collect();
        SpinConfiguration { dims, spins }
    }

    pub fn to_bits(&self) -> u64 {
        self.spins
            .iter()
            .enumerate()
            .fold(0u64, |acc, (k, &s)| acc | ((s as u64) << k))
    }

    pub fn dims(&self) -> LatticeDims {
        self.dims
    }

    pub fn n_sites(&self) -> usize {
        self.spins.len()
    }

    #[inline]
    pub fn spin(&self, x: usize) -> u8 {
        self.spins[x]
    }

    pub fn set_spin(&mut self, x: usize, v: u8) {
        debug_assert!(v <= 1);
        self.spins[x] = v;
    }

    #[inline]
    pub fn flip(&mut self, x: usize) {
        self.spins[x] ^= 1;
    }

    /// Fraction of occupied sites.
    pub fn coverage(&self) -> f64 {
        self.spins.iter().map(|&s| s as f64).sum::<f64>() / self.spins.len() as f64
    }
}

/// Parameters of spin-flip Arrhenius adsorption/desorption dynamics.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ArrheniusRates {
    /// Adsorption prefactor (1/time).
    pub c1: f64,
    /// Desorption prefactor (1/time).
    pub c2: f64,
    /// Inverse temperature.
    pub beta: f64,
    /// Nearest-neighbor coupling (energy).
    pub j0: f64,
    /// External field (energy).
    pub h: f64,
}

impl ArrheniusRates {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.c1 >= 0.0) || !(self.c2 >= 0.0) {
            return Err(ModelError::InvalidParams(format!(
                "prefactors must be non-negative: c1={}, c2={}",
                self.c1, self.c2
            )));
        }
        Ok(())
    }
}

/// Spin-flip rate at site `x`:
/// `c1*(1-sigma(x)) + c2*sigma(x)*exp(-beta*(J0*sum_{y in Omega_x} sigma(y) + h))`.
#[inline]
pub fn arrhenius_rate(x: usize, sigma: &SpinConfiguration, params: &ArrheniusRates) -> f64 {
    if sigma.spin(x) == 0 {
        params.c1
    } else {
        let mut nb = [0usize; 4];
        let k = sigma.dims().neighbors(x, &mut nb);
        let occ: u8 = nb[..k].iter().map(|&y| sigma.spin(y)).sum();
        let u = params.j0 * occ as f64 + params.h;
        params.c2 * (-params.beta * u).exp()
    }
}

/// Total jump rate `lambda(sigma)` of the lattice chain at `sigma`.
pub fn lattice_total_rate(sigma: &SpinConfiguration, params: &ArrheniusRates) -> f64 {
    (0..sigma.n_sites()).map(|x| arrhenius_rate(x, sigma, params)).sum()
}

/// Rate matrix q(sigma,sigma') over an enumerated finite state space.
/// Off-diagonal entries are non-negative, the diagonal carries minus the
/// row sum, so every row sums to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseGenerator {
    rates: Mat,
}

impl DenseGenerator {
    /// Builds from a full matrix, validating sign and row-sum invariants.
    pub fn try_from_matrix(m: Mat) -> Result<Self, ModelError> {
        for i in 0..m.n() {
            for j in 0..m.n() {
                if i != j && m.get(i, j) < 0.0 {
                    return Err(ModelError::NegativeRate { row: i, col: j, value: m.get(i, j) });
                }
            }
            let sum: f64 = m.row(i).iter().sum();
            if sum.abs() > GENERATOR_ROW_SUM_TOL {
                return Err(ModelError::RowSumNonZero { row: i, sum });
            }
        }
        Ok(DenseGenerator { rates: m })
    }

    /// Builds from off-diagonal rates only; the diagonal is recomputed.
    pub fn from_off_diagonal(mut m: Mat) -> Result<Self, ModelError> {
        let n = m.n();
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                if i != j {
                    if m.get(i, j) < 0.0 {
                        return Err(ModelError::NegativeRate { row: i, col: j, value: m.get(i, j) });
                    }
                    sum += m.get(i, j);
                }
            }
            m.set(i, i, -sum);
        }
        Ok(DenseGenerator { rates: m })
    }

    pub fn n_states(&self) -> usize {
        self.rates.n()
    }

    /// Transition rate q(i,j); the diagonal holds -lambda(i).
    #[inline]
    pub fn q(&self, i: usize, j: usize) -> f64 {
        self.rates.get(i, j)
    }

    /// Total rate lambda(i) = sum of off-diagonal entries of row i.
    pub fn total_rate(&self, i: usize) -> f64 {
        -self.rates.get(i, i)
    }

    pub fn matrix(&self) -> &Mat {
        &self.rates
    }

    /// Entrywise sum of two generators (L = L1 + L2).
    pub fn add(&self, other: &DenseGenerator) -> Result<DenseGenerator, ModelError> {
        if self.n_states() != other.n_states() {
            return Err(ModelError::DimensionMismatch(self.n_states(), other.n_states()));
        }
        let mut m = self.rates.clone();
        m.add_scaled(&other.rates, 1.0);
        Ok(DenseGenerator { rates: m })
    }

    /// All off-diagonal pairs with strictly positive rate.
    pub fn positive_pairs(&self) -> BTreeSet<(usize, usize)> {
        let n = self.n_states();
        let mut set = BTreeSet::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && self.q(i, j) > 0.0 {
                    set.insert((i, j));
                }
            }
        }
        set
    }
}

/// Group label of a checkerboard component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    G1,
    G2,
}

impl Group {
    pub fn other(self) -> Group {
        match self {
            Group::G1 => Group::G2,
            Group::G2 => Group::G1,
        }
    }
}

/// Which state pairs (dense chains) or lattice sites a restriction keeps.
#[derive(Clone, Debug)]
pub enum RestrictionSpec {
    /// Ordered state pairs A in S x S kept by the restriction.
    Pairs(BTreeSet<(usize, usize)>),
    /// Group label per lattice site; the restriction keeps flips of sites
    /// in the named group.
    SiteGroups { groups: Vec<Group>, keep: Group },
}

/// Restriction L|_A per the characteristic-function definition: kept
/// off-diagonal entries are unchanged, everything else is zeroed and the
/// diagonal recomputed.
pub fn restrict(gen: &DenseGenerator, mask: &BTreeSet<(usize, usize)>) -> DenseGenerator {
    let n = gen.n_states();
    let mut m = Mat::zeros(n);
    for &(i, j) in mask {
        if i < n && j < n && i != j {
            m.set(i, j, gen.q(i, j));
        }
    }
    DenseGenerator::from_off_diagonal(m).expect("restriction preserves generator invariants")
}

/// All off-diagonal pairs not in `mask` (the complementary restriction).
pub fn complement_pairs(n: usize, mask: &BTreeSet<(usize, usize)>) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && !mask.contains(&(i, j)) {
                out.insert((i, j));
            }
        }
    }
    out
}

/// Splitting identity with its local-error order and substep schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Lie,
    Strang,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    /// Local-error order: 2 for Lie, 3 for Strang.
    pub p: u32,
    /// Ordered substeps as (group, fraction of dt).
    pub schedule: Vec<(Group, f64)>,
}

impl SchemeSpec {
    pub fn lie() -> Self {
        SchemeSpec { kind: SchemeKind::Lie, p: 2, schedule: vec![(Group::G1, 1.0), (Group::G2, 1.0)] }
    }

    pub fn strang() -> Self {
        SchemeSpec {
            kind: SchemeKind::Strang,
            p: 3,
            schedule: vec![(Group::G1, 0.5), (Group::G2, 1.0), (Group::G1, 0.5)],
        }
    }

    pub fn new(kind: SchemeKind) -> Self {
        match kind {
            SchemeKind::Lie => Self::lie(),
            SchemeKind::Strang => Self::strang(),
        }
    }
}

/// Dense generator of the lattice chain over all 2^N enumerated states,
/// optionally restricted to flips of sites in one group.
pub fn lattice_generator(
    dims: LatticeDims,
    params: &ArrheniusRates,
    groups: Option<(&[Group], Group)>,
) -> Result<DenseGenerator, ModelError> {
    params.validate()?;
    let n_sites = dims.n_sites();
    if n_sites >= 64 || (1usize << n_sites) > STATE_SPACE_CAP {
        return Err(ModelError::StateSpaceTooLarge {
            states: 1usize.checked_shl(n_sites.min(63) as u32).unwrap_or(usize::MAX),
            cap: STATE_SPACE_CAP,
        });
    }
    let n_states = 1usize << n_sites;
    let mut m = Mat::zeros(n_states);
    for s in 0..n_states {
        let sigma = SpinConfiguration::from_bits(dims, s as u64);
        for x in 0..n_sites {
            if let Some((site_groups, keep)) = groups {
                if site_groups[x] != keep {
                    continue;
                }
            }
            let target = s ^ (1 << x);
            m.set(s, target, arrhenius_rate(x, &sigma, params));
        }
    }
    DenseGenerator::from_off_diagonal(m)
}
