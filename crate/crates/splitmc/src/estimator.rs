//! Online estimators of the leading RER coefficients from simulation
//! samples.
//!
//! For a sampled configuration, every admissible site tuple (adjacent
//! cross-group pair for Lie, connected group-spanning triple for
//! Strang) contributes a closed-form term F built from two local
//! dt^p Taylor coefficients: `c`, the coefficient of (Po - Pb) at the
//! multi-flip target, and `lq`, the coefficient of Pb itself. Both are
//! computed from rate calls on a local patch only, so the work per
//! sample scales with the boundary size, not the state space.

use serde::Serialize;
use thiserror::Error;

use crate::kmc::Decomposition;
use crate::model::{arrhenius_rate, ArrheniusRates, Group, SchemeKind, SchemeSpec, SpinConfiguration};

/// Batch size for the batch-means standard error.
pub const BATCH: u64 = 100;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("empty accumulator")]
    Empty,
    #[error("invalid input: {0}")]
    BadInput(String),
}

/// Substep-assignment weight of one flip-order pattern.
///
/// A length-r permutation of flips with group pattern g contributes to
/// the dt^r coefficient of the scheme matrix with weight
/// `sum over substep splits consistent with g of prod (fraction^count / count!)`.
/// For Lie (substeps G1 then G2, full dt each) the splits are
/// `(1^i, 2^j)`; for Strang (G1 half, G2 full, G1 half) they are
/// `(1^i, 2^j, 1^k)` with weight `(1/2)^{i+k} / (i! j! k!)`.
///
/// The conservative Strang variant drops splits with i > 0 and k > 0
/// (flips of the leading group spread over both half substeps), which
/// can only lower the Pb coefficient and therefore over-estimates F.
fn pattern_weight(pattern: &[Group], scheme: SchemeKind, conservative: bool) -> f64 {
    let r = pattern.len();
    let fact = |n: usize| -> f64 { (1..=n).product::<usize>() as f64 };
    let matches = |i: usize, j: usize, k: usize| -> bool {
        pattern[..i].iter().all(|&g| g == Group::G1)
            && pattern[i..i + j].iter().all(|&g| g == Group::G2)
            && pattern[i + j..].iter().all(|&g| g == Group::G1)
            && i + j + k == r
    };
    let mut w = 0.0;
    match scheme {
        SchemeKind::Lie => {
            for i in 0..=r {
                let j = r - i;
                if matches(i, j, 0) {
                    w += 1.0 / (fact(i) * fact(j));
                }
            }
        }
        SchemeKind::Strang => {
            for i in 0..=r {
                for j in 0..=r - i {
                    let k = r - i - j;
                    if conservative && i > 0 && k > 0 {
                        continue;
                    }
                    if matches(i, j, k) {
                        w += 0.5f64.powi((i + k) as i32) / (fact(i) * fact(j) * fact(k));
                    }
                }
            }
        }
    }
    w
}

/// Product of rates along one flip order, reading each rate from the
/// configuration with the previous flips applied.
fn path_product(
    sigma: &SpinConfiguration,
    order: &[usize],
    params: &ArrheniusRates,
) -> f64 {
    let mut work = sigma.clone();
    let mut prod = 1.0;
    for &site in order {
        prod *= arrhenius_rate(site, &work, params);
        if prod == 0.0 {
            return 0.0;
        }
        work.flip(site);
    }
    prod
}

fn permutations(sites: &[usize]) -> Vec<Vec<usize>> {
    match sites.len() {
        2 => vec![vec![sites[0], sites[1]], vec![sites[1], sites[0]]],
        3 => {
            let (a, b, c) = (sites[0], sites[1], sites[2]);
            vec![
                vec![a, b, c],
                vec![a, c, b],
                vec![b, a, c],
                vec![b, c, a],
                vec![c, a, b],
                vec![c, b, a],
            ]
        }
        _ => panic!("only pairs and triples are supported"),
    }
}

/// True if the site tuple spans both groups and is connected through
/// nearest-neighbor adjacency; tuples failing this carry no commutator
/// weight and are skipped.
fn admissible(sites: &[usize], decomp: &Decomposition) -> bool {
    let g0 = decomp.site_group[sites[0]];
    if sites.iter().all(|&s| decomp.site_group[s] == g0) {
        return false;
    }
    let dims = decomp.dims;
    match sites.len() {
        2 => dims.adjacent(sites[0], sites[1]),
        3 => {
            // Connected means one site is adjacent to both others, or
            // two disjoint adjacencies chain the three together.
            let adj01 = dims.adjacent(sites[0], sites[1]);
            let adj02 = dims.adjacent(sites[0], sites[2]);
            let adj12 = dims.adjacent(sites[1], sites[2]);
            adj01 as u8 + adj02 as u8 + adj12 as u8 >= 2
        }
        _ => false,
    }
}

/// dt^p Taylor coefficient of the exact skeleton at the multi-flip
/// target: (1/p!) sum over flip orders of the rate-path product.
fn exact_coefficient(
    sigma: &SpinConfiguration,
    sites: &[usize],
    params: &ArrheniusRates,
) -> f64 {
    let perms = permutations(sites);
    let fact = perms.len() as f64;
    perms.iter().map(|ord| path_product(sigma, ord, params)).sum::<f64>() / fact
}

/// dt^p Taylor coefficient of the scheme matrix Pb at the multi-flip
/// target sigma^{sites}: weighted sum of rate-path products over flip
/// orders, with substep-assignment weights for the scheme.
pub fn local_scheme_coefficient(
    sigma: &SpinConfiguration,
    sites: &[usize],
    decomp: &Decomposition,
    params: &ArrheniusRates,
    scheme: &SchemeSpec,
    conservative: bool,
) -> f64 {
    permutations(sites)
        .iter()
        .map(|ord| {
            let pattern: Vec<Group> = ord.iter().map(|&s| decomp.site_group[s]).collect();
            let w = pattern_weight(&pattern, scheme.kind, conservative);
            if w == 0.0 {
                0.0
            } else {
                w * path_product(sigma, ord, params)
            }
        })
        .sum()
}

/// dt^p Taylor coefficient of (Po - Pb) at the multi-flip target:
/// exact coefficient minus the (non-conservative) scheme coefficient.
/// Returns 0 immediately for same-group or disconnected tuples.
pub fn local_commutator(
    sigma: &SpinConfiguration,
    sites: &[usize],
    decomp: &Decomposition,
    params: &ArrheniusRates,
    scheme: &SchemeSpec,
) -> f64 {
    if !admissible(sites, decomp) {
        return 0.0;
    }
    exact_coefficient(sigma, sites, params)
        - local_scheme_coefficient(sigma, sites, decomp, params, scheme, false)
}

/// Per-tuple contribution to the leading RER coefficient:
/// `F = c - 2 lq atanh(c / (2 lq + c))`, which is non-negative,
/// vanishes at c = 0, and decreases in lq. Returns Err(()) for the
/// singular denominator (flagged and excluded by the accumulator;
/// impossible for strictly positive rates).
pub fn f_term_from(c: f64, lq: f64) -> Result<f64, ()> {
    if c == 0.0 {
        return Ok(0.0);
    }
    let denom = 2.0 * lq + c;
    if lq <= 0.0 || denom <= 0.0 {
        return Err(());
    }
    let m = c / denom;
    if m.abs() >= 1.0 {
        return Err(());
    }
    Ok(c - 2.0 * lq * m.atanh())
}

/// F evaluated from local rate calls for one site tuple.
pub fn f_term(
    sigma: &SpinConfiguration,
    sites: &[usize],
    decomp: &Decomposition,
    params: &ArrheniusRates,
    scheme: &SchemeSpec,
    conservative: bool,
) -> Result<f64, ()> {
    let c = local_commutator(sigma, sites, decomp, params, scheme);
    if c == 0.0 {
        return Ok(0.0);
    }
    let lq = local_scheme_coefficient(sigma, sites, decomp, params, scheme, conservative);
    f_term_from(c, lq)
}

/// Admissible site tuples of a decomposition, precomputed once.
#[derive(Clone, Debug)]
pub struct TupleSet {
    /// Adjacent cross-group unordered pairs (x < y).
    pub pairs: Vec<(usize, usize)>,
    /// Connected group-spanning triples, sorted ascending.
    pub triples: Vec<[usize; 3]>,
}

impl TupleSet {
    pub fn new(decomp: &Decomposition) -> Self {
        let n = decomp.dims.n_sites();
        let mut nb = [0usize; 4];
        let mut pairs = Vec::new();
        for x in 0..n {
            let k = decomp.dims.neighbors(x, &mut nb);
            for &y in &nb[..k] {
                if x < y && decomp.site_group[x] != decomp.site_group[y] {
                    pairs.push((x, y));
                }
            }
        }
        let mut triple_set = std::collections::BTreeSet::new();
        for &(x, y) in &pairs {
            for &anchor in &[x, y] {
                let k = decomp.dims.neighbors(anchor, &mut nb);
                for &z in &nb[..k] {
                    if z != x && z != y {
                        let mut t = [x, y, z];
                        t.sort_unstable();
                        triple_set.insert(t);
                    }
                }
            }
        }
        TupleSet { pairs, triples: triple_set.into_iter().collect() }
    }

    /// Rate evaluations implied by one accumulate call; linear in the
    /// boundary size.
    pub fn work_per_sample(&self, scheme: SchemeKind) -> u64 {
        match scheme {
            // 2 permutations x 2 rate calls, for exact and scheme terms.
            SchemeKind::Lie => self.pairs.len() as u64 * 8,
            // 6 permutations x 3 rate calls, twice.
            SchemeKind::Strang => self.triples.len() as u64 * 36,
        }
    }
}

/// Mergeable running estimate of a leading RER coefficient.
#[derive(Clone, Debug, Serialize)]
pub struct RerAccumulator {
    pub scheme: SchemeKind,
    /// Exponent of dt the estimated coefficient multiplies in the
    /// normalized RER (1 for Lie, 2 for Strang on lattices).
    pub order: u32,
    pub sum: f64,
    pub count: u64,
    pub sum_sq: f64,
    /// Completed batch sums (BATCH samples each) for the batch-means
    /// standard error.
    batch_sums: Vec<f64>,
    batch_partial: f64,
    batch_fill: u64,
    /// Samples excluded because of a singular F denominator; must stay
    /// zero for strictly positive rates.
    pub excluded: u64,
    /// Whether the Strang denominator uses the conservative variant.
    pub conservative: bool,
}

impl RerAccumulator {
    pub fn new(scheme: SchemeKind, conservative: bool) -> Self {
        let order = match scheme {
            SchemeKind::Lie => 1,
            SchemeKind::Strang => 2,
        };
        RerAccumulator {
            scheme,
            order,
            sum: 0.0,
            count: 0,
            sum_sq: 0.0,
            batch_sums: Vec::new(),
            batch_partial: 0.0,
            batch_fill: 0,
            excluded: 0,
            conservative,
        }
    }

    fn push(&mut self, value: f64) {
        self.sum += value;
        self.sum_sq += value * value;
        self.count += 1;
        self.batch_partial += value;
        self.batch_fill += 1;
        if self.batch_fill == BATCH {
            self.batch_sums.push(self.batch_partial);
            self.batch_partial = 0.0;
            self.batch_fill = 0;
        }
    }

    pub fn estimate(&self) -> Result<f64, EstimatorError> {
        if self.count == 0 {
            return Err(EstimatorError::Empty);
        }
        Ok(self.sum / self.count as f64)
    }

    /// Standard error of the estimate from non-overlapping batch
    /// means; falls back to the naive i.i.d. error when fewer than two
    /// batches completed.
    pub fn stderr(&self) -> Result<f64, EstimatorError> {
        if self.count == 0 {
            return Err(EstimatorError::Empty);
        }
        let nb = self.batch_sums.len();
        if nb >= 2 {
            let means: Vec<f64> = self.batch_sums.iter().map(|s| s / BATCH as f64).collect();
            let mean: f64 = means.iter().sum::<f64>() / nb as f64;
            let var: f64 =
                means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (nb as f64 - 1.0);
            Ok((var / nb as f64).sqrt())
        } else {
            let n = self.count as f64;
            let mean = self.sum / n;
            let var = (self.sum_sq / n - mean * mean).max(0.0);
            Ok((var / n).sqrt())
        }
    }

    /// Adds one sampled configuration: sums F over all admissible
    /// tuples of the decomposition.
    pub fn accumulate(
        &mut self,
        sigma: &SpinConfiguration,
        tuples: &TupleSet,
        decomp: &Decomposition,
        params: &ArrheniusRates,
    ) {
        let scheme = SchemeSpec::new(self.scheme);
        let mut total = 0.0;
        match self.scheme {
            SchemeKind::Lie => {
                for &(x, y) in &tuples.pairs {
                    match f_term(sigma, &[x, y], decomp, params, &scheme, false) {
                        Ok(f) => total += f,
                        Err(()) => self.excluded += 1,
                    }
                }
            }
            SchemeKind::Strang => {
                for t in &tuples.triples {
                    match f_term(sigma, t, decomp, params, &scheme, self.conservative) {
                        Ok(f) => total += f,
                        Err(()) => self.excluded += 1,
                    }
                }
            }
        }
        self.push(total);
    }

    /// Combines two accumulators (associative and commutative in the
    /// totals; batch lists concatenate in call order).
    pub fn merge(&mut self, other: &RerAccumulator) {
        assert_eq!(self.scheme, other.scheme, "cannot merge across schemes");
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.count += other.count;
        self.excluded += other.excluded;
        self.batch_sums.extend_from_slice(&other.batch_sums);
        // Fold the partial batches together; spill full batches.
        self.batch_partial += other.batch_partial;
        self.batch_fill += other.batch_fill;
        if self.batch_fill >= BATCH {
            // Partial batches carry no per-sample breakdown, so the
            // combined remainder spills as one batch once full.
            self.batch_sums.push(self.batch_partial);
            self.batch_partial = 0.0;
            self.batch_fill -= BATCH;
        }
    }
}

/// Per-particle RER at the run's dt: estimate * dt^order / N.
pub fn pp_rer(acc: &RerAccumulator, n_sites: usize, dt: f64) -> Result<f64, EstimatorError> {
    Ok(acc.estimate()? * dt.powi(acc.order as i32) / n_sites as f64)
}

/// Largest dt meeting a normalized-RER tolerance: (tol/coeff)^(1/order),
/// capped at 1.
pub fn dt_for_tolerance(coeff: f64, order: u32, tol: f64) -> Result<f64, EstimatorError> {
    if !(coeff > 0.0 && tol > 0.0) {
        return Err(EstimatorError::BadInput(format!(
            "coeff={coeff}, tol={tol} must be positive"
        )));
    }
    Ok((tol / coeff).powf(1.0 / order as f64).min(1.0))
}

/// RER information criterion between two schemes at dt:
/// A1 dt^p1 - A2 dt^p2.
pub fn info_criterion(dt: f64, scheme1: (f64, u32), scheme2: (f64, u32)) -> f64 {
    scheme1.0 * dt.powi(scheme1.1 as i32) - scheme2.0 * dt.powi(scheme2.1 as i32)
}
