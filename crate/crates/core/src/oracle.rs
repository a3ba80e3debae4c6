//! Exact computations on tiny tori.
//!
//! Everything here is brute force: the Gibbs measure by listing all `N!`
//! permutations, the Metropolis and reversal kernels as explicit matrices
//! over that list, and the open-path and nearest-neighbor loop ensembles by
//! direct enumeration. These serve as ground truth for the sampler and the
//! estimators.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{LatticeKind, LatticeSpec, SiteIndex};
use crate::permutation::{JumpEnergy, ZeroJump};

/// Largest torus enumerated as a full ensemble.
pub const MAX_ENSEMBLE_SITES: usize = 9;
/// Largest torus for which explicit kernels are built.
pub const MAX_KERNEL_SITES: usize = 6;
/// Largest number of free sites in an open-path ensemble.
pub const MAX_FREE_SITES: usize = 8;

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// Rearranges `p` into the next permutation in lexicographic order.
fn next_permutation(p: &mut [u8]) -> bool {
    let Some(i) = p.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = p.iter().rposition(|&v| v > p[i]).expect("a larger element exists after i");
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

/// Position of `p` in the lexicographic list of permutations of `0..n`.
fn lex_rank(p: &[u8]) -> usize {
    let n = p.len();
    let mut rank = 0;
    for i in 0..n {
        let smaller_later = p[i + 1..].iter().filter(|&&v| v < p[i]).count();
        rank += smaller_later * factorial(n - 1 - i);
    }
    rank
}

fn cycle_len_at(fwd: &[u8], x: usize) -> usize {
    let mut len = 1;
    let mut y = fwd[x] as usize;
    while y != x {
        y = fwd[y] as usize;
        len += 1;
    }
    len
}

fn jump_energy(lattice: &LatticeSpec, energy: &JumpEnergy, from: usize, to: usize) -> f64 {
    energy.value(lattice, lattice.diff(SiteIndex(to as u32), SiteIndex(from as u32)))
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        self.carry += if self.sum.abs() >= v.abs() { (self.sum - t) + v } else { (v - t) + self.sum };
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.carry
    }
}

fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Compensated::default();
    values.into_iter().for_each(|v| acc.add(v));
    acc.value()
}

fn boltzmann(alpha: f64, h: f64) -> f64 {
    if h.is_finite() {
        (-alpha * h).exp()
    } else {
        0.0
    }
}

/// The Gibbs measure on all permutations of a tiny torus.
#[derive(Debug, Clone)]
pub struct ExactEnsemble {
    lattice: LatticeSpec,
    alpha: f64,
    energy: JumpEnergy,
    n: usize,
    /// Images of every permutation, `n` bytes each, in lexicographic order.
    states: Vec<u8>,
    energies: Vec<f64>,
    probs: Vec<f64>,
    z: f64,
}

impl ExactEnsemble {
    /// Enumerate all `N!` permutations. Refuses tori with more than
    /// [`MAX_ENSEMBLE_SITES`] sites.
    pub fn enumerate(lattice: &LatticeSpec, alpha: f64, energy: &JumpEnergy) -> Result<Self> {
        let n = lattice.n_sites();
        if n > MAX_ENSEMBLE_SITES {
            return Err(Error::Budget(format!(
                "{n} sites exceed the enumeration limit of {MAX_ENSEMBLE_SITES}"
            )));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha must be finite and >= 0, got {alpha}")));
        }
        let xi: Vec<Vec<f64>> = (0..n)
            .map(|from| (0..n).map(|to| jump_energy(lattice, energy, from, to)).collect())
            .collect();
        // One block per image of site 0; blocks concatenate in lexicographic order.
        let blocks: Vec<(Vec<u8>, Vec<f64>)> = (0..n as u8)
            .into_par_iter()
            .map(|first| {
                let mut rest: Vec<u8> = (0..n as u8).filter(|&v| v != first).collect();
                let mut states = Vec::with_capacity(factorial(n - 1) * n);
                let mut energies = Vec::with_capacity(factorial(n - 1));
                loop {
                    states.push(first);
                    states.extend_from_slice(&rest);
                    let h = xi[0][first as usize]
                        + rest.iter().enumerate().map(|(i, &t)| xi[i + 1][t as usize]).sum::<f64>();
                    energies.push(h);
                    if !next_permutation(&mut rest) {
                        break;
                    }
                }
                (states, energies)
            })
            .collect();
        let mut states = Vec::with_capacity(factorial(n) * n);
        let mut energies = Vec::with_capacity(factorial(n));
        for (s, e) in blocks {
            states.extend(s);
            energies.extend(e);
        }
        let h_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
        if !h_min.is_finite() {
            return Err(Error::InvalidConfig("every permutation has infinite energy".into()));
        }
        let shifted: Vec<f64> = energies.iter().map(|&h| boltzmann(alpha, h - h_min)).collect();
        let total = exact_sum(shifted.iter().copied());
        let probs = shifted.iter().map(|w| w / total).collect();
        Ok(ExactEnsemble {
            lattice: lattice.clone(),
            alpha,
            energy: energy.clone(),
            n,
            states,
            energies,
            probs,
            z: total * (-alpha * h_min).exp(),
        })
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn energy_fn(&self) -> &JumpEnergy {
        &self.energy
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// The partition function `Z = sum exp(-alpha H)`.
    pub fn partition_function(&self) -> f64 {
        self.z
    }

    pub fn state(&self, i: usize) -> &[u8] {
        &self.states[i * self.n..(i + 1) * self.n]
    }

    pub fn states(&self) -> impl Iterator<Item = &[u8]> + '_ {
        self.states.chunks_exact(self.n)
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Index of a permutation given by its images.
    pub fn index_of(&self, fwd: &[u8]) -> usize {
        lex_rank(fwd)
    }

    /// `E[f(pi)]`.
    pub fn expectation(&self, f: impl Fn(&[u8]) -> f64) -> f64 {
        exact_sum(self.states().zip(&self.probs).filter(|(_, &p)| p > 0.0).map(|(s, &p)| p * f(s)))
    }

    /// `P(pi(x) - x = k)` for every reachable `k`.
    pub fn jump_law(&self, x: SiteIndex) -> BTreeMap<[i32; 2], f64> {
        self.orbit_jump_law(x, 1)
    }

    /// Law of the `m`-th jump along the orbit of `x`, `pi^m(x) - pi^(m-1)(x)`.
    pub fn orbit_jump_law(&self, x: SiteIndex, m: usize) -> BTreeMap<[i32; 2], f64> {
        let mut law: BTreeMap<[i32; 2], Compensated> = BTreeMap::new();
        for (s, &p) in self.states().zip(&self.probs) {
            let mut from = x.index();
            for _ in 1..m {
                from = s[from] as usize;
            }
            let to = s[from] as usize;
            let dz = self.lattice.diff(SiteIndex(to as u32), SiteIndex(from as u32));
            law.entry(dz).or_default().add(p);
        }
        law.into_iter().map(|(k, v)| (k, v.value())).collect()
    }

    /// `P(l_x = k)` at index `k`, for `k` in `0..=N` (index 0 is always 0).
    pub fn cycle_length_law(&self, x: SiteIndex) -> Vec<f64> {
        let mut law = vec![Compensated::default(); self.n + 1];
        for (s, &p) in self.states().zip(&self.probs) {
            law[cycle_len_at(s, x.index())].add(p);
        }
        law.into_iter().map(Compensated::value).collect()
    }

    /// `nu(K) = P(l_x > K)` at index `K`, for `K` in `0..=N`.
    pub fn nu(&self, x: SiteIndex) -> Vec<f64> {
        let law = self.cycle_length_law(x);
        (0..=self.n).map(|k| law[k + 1..].iter().sum()).collect()
    }

    /// `mu(x, y)`, the probability that `x` and `y` share a cycle.
    pub fn mu(&self, x: SiteIndex, y: SiteIndex) -> f64 {
        self.expectation(|s| {
            let mut z = s[x.index()] as usize;
            loop {
                if z == y.index() {
                    return 1.0;
                }
                if z == x.index() {
                    return 0.0;
                }
                z = s[z] as usize;
            }
        })
    }
}

/// A row-stochastic matrix over the states of an [`ExactEnsemble`], stored by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactKernel {
    rows: Vec<Vec<(usize, f64)>>,
}

impl ExactKernel {
    fn identity(n: usize) -> Self {
        ExactKernel { rows: (0..n).map(|i| vec![(i, 1.0)]).collect() }
    }

    fn from_dense_rows(rows: Vec<BTreeMap<usize, f64>>) -> Self {
        ExactKernel {
            rows: rows
                .into_iter()
                .map(|r| r.into_iter().filter(|&(_, v)| v != 0.0).collect())
                .collect(),
        }
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i].iter().find(|&&(k, _)| k == j).map_or(0.0, |&(_, v)| v)
    }

    /// `self * other`.
    pub fn compose(&self, other: &ExactKernel) -> ExactKernel {
        let n = self.n_states();
        let rows = self
            .rows
            .par_iter()
            .map(|row| {
                let mut acc = vec![0.0; n];
                for &(k, a) in row {
                    for &(j, b) in &other.rows[k] {
                        acc[j] += a * b;
                    }
                }
                acc.into_iter().enumerate().filter(|&(_, v)| v != 0.0).collect()
            })
            .collect();
        ExactKernel { rows }
    }

    pub fn power(&self, exponent: usize) -> ExactKernel {
        let mut result = ExactKernel::identity(self.n_states());
        let mut base = self.clone();
        let mut e = exponent;
        while e > 0 {
            if e & 1 == 1 {
                result = result.compose(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.compose(&base);
            }
        }
        result
    }

    /// `max_i |sum_j P(i, j) - 1|`.
    pub fn row_sum_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.iter().map(|&(_, v)| v).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `max |p(i) P(i, j) - p(j) P(j, i)|`.
    pub fn detailed_balance_error(&self, probs: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                worst = worst.max((probs[i] * v - probs[j] * self.entry(j, i)).abs());
            }
        }
        worst
    }

    /// `|| p P - p ||_inf`.
    pub fn stationarity_error(&self, probs: &[f64]) -> f64 {
        let mut image = vec![0.0; probs.len()];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                image[j] += probs[i] * v;
            }
        }
        image.iter().zip(probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Whether every state of positive probability reaches every other one.
    pub fn is_irreducible(&self, probs: &[f64]) -> bool {
        let support: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.0).collect();
        let Some(&start) = support.first() else {
            return false;
        };
        let reach = |forward: bool| {
            let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.n_states()];
            for (i, row) in self.rows.iter().enumerate() {
                for &(j, v) in row {
                    if v > 0.0 {
                        if forward {
                            adj[i].push(j);
                        } else {
                            adj[j].push(i);
                        }
                    }
                }
            }
            let mut seen = vec![false; self.n_states()];
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(i) = queue.pop_front() {
                for &j in &adj[i] {
                    if !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
            seen
        };
        let (fwd, bwd) = (reach(true), reach(false));
        support.iter().all(|&i| fwd[i] && bwd[i])
    }

    /// Some state of positive probability can stay put in one step, which
    /// makes an irreducible chain aperiodic.
    pub fn has_holding_state(&self, probs: &[f64]) -> bool {
        (0..self.n_states()).any(|i| probs[i] > 0.0 && self.entry(i, i) > 0.0)
    }
}

/// How to build the exact kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelOptions {
    pub reversals: bool,
    pub reversal_count: usize,
    /// Multiplies the exponent of the acceptance rule; anything but 1 is a
    /// deliberately broken sampler.
    pub acceptance_scale: f64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions { reversals: true, reversal_count: crate::mcmc::DEFAULT_REVERSAL_COUNT, acceptance_scale: 1.0 }
    }
}

fn neighbor_pairs_by_offsets(lattice: &LatticeSpec) -> Vec<(usize, usize)> {
    let mut pairs = BTreeSet::new();
    for x in 0..lattice.n_sites() {
        let z = lattice.coords(SiteIndex(x as u32));
        for e in lattice.neighbor_offsets() {
            let y = lattice.site([z[0] + e[0] as i64, z[1] + e[1] as i64]).index();
            if y != x {
                pairs.insert((x.min(y), x.max(y)));
            }
        }
    }
    pairs.into_iter().collect()
}

fn check_kernel_budget(ensemble: &ExactEnsemble) -> Result<()> {
    if ensemble.n_sites() > MAX_KERNEL_SITES {
        return Err(Error::Budget(format!(
            "{} sites exceed the kernel limit of {MAX_KERNEL_SITES}",
            ensemble.n_sites()
        )));
    }
    Ok(())
}

/// One Metropolis step: pick a nearest-neighbor pair uniformly (plus a null
/// proposal when `alpha = 0`) and swap the targets with probability
/// `min(1, exp(-scale * alpha * dH))`.
pub fn exact_step_kernel(ensemble: &ExactEnsemble, acceptance_scale: f64) -> Result<ExactKernel> {
    check_kernel_budget(ensemble)?;
    let pairs = neighbor_pairs_by_offsets(ensemble.lattice());
    let alpha = ensemble.alpha();
    let proposals = pairs.len() + usize::from(alpha == 0.0);
    let q = 1.0 / proposals as f64;
    let rows = (0..ensemble.len())
        .map(|i| {
            let s = ensemble.state(i);
            let h = ensemble.energies()[i];
            let mut row = BTreeMap::new();
            let mut stay = 1.0;
            for &(x, y) in &pairs {
                let mut t = s.to_vec();
                t.swap(x, y);
                let j = ensemble.index_of(&t);
                let h_new = ensemble.energies()[j];
                let accept = if !h_new.is_finite() {
                    0.0
                } else if !h.is_finite() {
                    1.0
                } else {
                    (-acceptance_scale * alpha * (h_new - h)).exp().min(1.0)
                };
                if accept > 0.0 && j != i {
                    *row.entry(j).or_insert(0.0) += q * accept;
                    stay -= q * accept;
                }
            }
            row.insert(i, stay);
            row
        })
        .collect();
    Ok(ExactKernel::from_dense_rows(rows))
}

/// One reversal pass: the `count` longest cycles of length at least 3
/// (longest first, ties to the smaller minimal site) are each reversed with
/// probability 1/2. The identity when the jump energy is asymmetric.
pub fn exact_reversal_kernel(ensemble: &ExactEnsemble, count: usize) -> Result<ExactKernel> {
    check_kernel_budget(ensemble)?;
    if !ensemble.energy_fn().is_symmetric(ensemble.lattice()) {
        return Ok(ExactKernel::identity(ensemble.len()));
    }
    let n = ensemble.n_sites();
    let rows = (0..ensemble.len())
        .map(|i| {
            let s = ensemble.state(i);
            let mut seen = vec![false; n];
            let mut cycles: Vec<Vec<usize>> = Vec::new();
            for x in 0..n {
                if !seen[x] {
                    let mut c = vec![x];
                    seen[x] = true;
                    let mut y = s[x] as usize;
                    while y != x {
                        seen[y] = true;
                        c.push(y);
                        y = s[y] as usize;
                    }
                    cycles.push(c);
                }
            }
            // `x` ascends, so cycles are already ordered by minimal site.
            let mut long: Vec<Vec<usize>> = cycles.into_iter().filter(|c| c.len() >= 3).collect();
            long.sort_by_key(|c| std::cmp::Reverse(c.len()));
            long.truncate(count);
            let weight = 0.5f64.powi(long.len() as i32);
            let mut row = BTreeMap::new();
            for mask in 0u32..(1 << long.len()) {
                let mut t = s.to_vec();
                for (b, c) in long.iter().enumerate() {
                    if mask >> b & 1 == 1 {
                        for &z in c {
                            t[s[z] as usize] = z as u8;
                        }
                    }
                }
                *row.entry(ensemble.index_of(&t)).or_insert(0.0) += weight;
            }
            row
        })
        .collect();
    Ok(ExactKernel::from_dense_rows(rows))
}

/// Exact kernels of the sampler on a tiny torus.
#[derive(Debug, Clone)]
pub struct KernelSet {
    pub step: ExactKernel,
    pub reversal: Option<ExactKernel>,
    /// `N` steps followed by one reversal pass when enabled.
    pub sweep: ExactKernel,
}

pub fn exact_kernel(ensemble: &ExactEnsemble, options: KernelOptions) -> Result<KernelSet> {
    let step = exact_step_kernel(ensemble, options.acceptance_scale)?;
    let metropolis_sweep = step.power(ensemble.n_sites());
    let reversal = options
        .reversals
        .then(|| exact_reversal_kernel(ensemble, options.reversal_count))
        .transpose()?;
    let sweep = match &reversal {
        Some(r) => metropolis_sweep.compose(r),
        None => metropolis_sweep,
    };
    Ok(KernelSet { step, reversal, sweep })
}

/// Outcome of the kernel checks on one ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelReport {
    pub row_sum_error: f64,
    pub detailed_balance_error: f64,
    pub step_stationarity_error: f64,
    pub sweep_stationarity_error: f64,
    pub irreducible: bool,
    pub aperiodic: bool,
}

pub fn check_kernel(ensemble: &ExactEnsemble, options: KernelOptions) -> Result<KernelReport> {
    let kernels = exact_kernel(ensemble, options)?;
    let p = ensemble.probs();
    let irreducible = kernels.sweep.is_irreducible(p);
    Ok(KernelReport {
        row_sum_error: kernels.step.row_sum_error().max(kernels.sweep.row_sum_error()),
        detailed_balance_error: kernels.step.detailed_balance_error(p),
        step_stationarity_error: kernels.step.stationarity_error(p),
        sweep_stationarity_error: kernels.sweep.stationarity_error(p),
        irreducible,
        aperiodic: irreducible && kernels.sweep.has_holding_state(p),
    })
}

/// Largest discrepancies in the two translation identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaReport {
    /// `max |P(pi(x) - x = k) - P(pi^m(x) - pi^(m-1)(x) = k)|` over `x`, `k`, `m`.
    pub orbit_jump_discrepancy: f64,
    /// `max |P(|pi(x) - x| > D) - E[R_{x,D}]|` over `x` and `D`.
    pub long_jump_discrepancy: f64,
}

impl LemmaReport {
    pub fn max(&self) -> f64 {
        self.orbit_jump_discrepancy.max(self.long_jump_discrepancy)
    }
}

/// Checks that the `m`-th jump along an orbit has the law of the first jump
/// (for `m <= m_max`), and that `P(|pi(x) - x| > D)` equals the expected
/// fraction of long jumps on the cycle of `x`, for every site and every `D`.
pub fn check_translation_lemmas(ensemble: &ExactEnsemble, m_max: usize, distances: &[f64]) -> LemmaReport {
    let lattice = ensemble.lattice();
    let n = ensemble.n_sites();
    let mut orbit: f64 = 0.0;
    let mut long: f64 = 0.0;
    let jump_len2 = |from: usize, to: usize| lattice.len2(lattice.diff(SiteIndex(to as u32), SiteIndex(from as u32)));
    for x in 0..n {
        let first = ensemble.jump_law(SiteIndex(x as u32));
        for m in 2..=m_max {
            let law = ensemble.orbit_jump_law(SiteIndex(x as u32), m);
            for k in first.keys().chain(law.keys()) {
                let d = (first.get(k).unwrap_or(&0.0) - law.get(k).unwrap_or(&0.0)).abs();
                orbit = orbit.max(d);
            }
        }
        for &d in distances {
            let d2 = d * d;
            let direct = ensemble.expectation(|s| f64::from(u8::from(jump_len2(x, s[x] as usize) > d2)));
            let fraction = ensemble.expectation(|s| {
                let (mut y, mut len, mut hits) = (x, 0usize, 0usize);
                loop {
                    let next = s[y] as usize;
                    len += 1;
                    hits += usize::from(jump_len2(y, next) > d2);
                    y = next;
                    if y == x {
                        return hits as f64 / len as f64;
                    }
                }
            });
            long = long.max((direct - fraction).abs());
        }
    }
    LemmaReport { orbit_jump_discrepancy: orbit, long_jump_discrepancy: long }
}

/// `s = sum_{x != 0} exp(-alpha |x|^2)` over the infinite lattice, with the
/// tail bound `P(l_x > K) <= s^K / (1 - s)` when `s < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricBound {
    pub s: f64,
    /// Certified bound on the part of the lattice sum left out.
    pub truncation_error: f64,
    /// Half-width of the coordinate box that was summed.
    pub radius: i64,
    pub k_max: usize,
}

impl GeometricBound {
    pub fn is_valid(&self) -> bool {
        self.s < 1.0
    }

    /// `s^K / (1 - s)`, or `None` if `s >= 1` or `K > k_max`.
    pub fn bound(&self, k: usize) -> Option<f64> {
        (self.is_valid() && k <= self.k_max).then(|| self.s.powi(k as i32) / (1.0 - self.s))
    }
}

const BOUND_TAIL_TOLERANCE: f64 = 1e-12;

/// Sums the quadratic jump weights of the infinite square or triangular
/// lattice over growing coordinate boxes until the certified remainder is
/// below `1e-12`.
pub fn geometric_bound(kind: LatticeKind, alpha: f64, k_max: usize) -> Result<GeometricBound> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidConfig(format!("the lattice sum needs alpha > 0, got {alpha}")));
    }
    // |x|^2 = scale * Q(a, b) with Q(a, b) >= q_min * (a^2 + b^2).
    let (scale, form, q_min): (f64, [i64; 3], f64) = match kind {
        LatticeKind::Square => (1.0, [1, 0, 1], 1.0),
        LatticeKind::Triangular => {
            let s = crate::lattice::triangular_spacing();
            (s * s, [1, 1, 1], 0.5)
        }
    };
    let g = alpha * scale * q_min;
    // Outside the box max(|a|, |b|) <= R every term is at most
    // exp(-g (a^2 + b^2)); split the remainder into |a| > R or |b| > R.
    let tail = |r: i64| {
        let lead = (-g * ((r + 1) * (r + 1)) as f64).exp();
        let one_axis = 2.0 * lead / (1.0 - (-g * (2 * r + 3) as f64).exp());
        let full_axis = 1.0 + 2.0 * (-g).exp() / (1.0 - (-g).exp());
        2.0 * one_axis * full_axis
    };
    let mut radius = 1;
    while tail(radius) > BOUND_TAIL_TOLERANCE {
        radius += 1;
    }
    let mut terms: Vec<f64> = Vec::new();
    for a in -radius..=radius {
        for b in -radius..=radius {
            if (a, b) != (0, 0) {
                let q = form[0] * a * a + form[1] * a * b + form[2] * b * b;
                terms.push((-alpha * scale * q as f64).exp());
            }
        }
    }
    terms.sort_by(f64::total_cmp);
    Ok(GeometricBound { s: terms.iter().sum(), truncation_error: tail(radius), radius, k_max })
}

/// `max_K (P(l_x > K) - s^K/(1-s))` over `K <= min(N, k_max)`; nonpositive
/// when the bound holds.
pub fn tail_bound_violation(ensemble: &ExactEnsemble, bound: &GeometricBound, x: SiteIndex) -> Option<f64> {
    let nu = ensemble.nu(x);
    (0..nu.len())
        .filter_map(|k| bound.bound(k).map(|b| nu[k] - b))
        .reduce(f64::max)
}

/// The open-path ensemble: maps from the free sites plus the start `x` onto
/// the free sites plus one endpoint `y`, weighted by `exp(-alpha H)`. The
/// free sites are the complement of the explored set `A`, and `x` is in `A`.
#[derive(Debug, Clone)]
pub struct OpenPathEnsemble {
    pub start: usize,
    pub free: Vec<usize>,
    pub ends: Vec<usize>,
    /// Path from `start` to its endpoint, with its probability.
    paths: BTreeMap<Vec<usize>, f64>,
}

impl OpenPathEnsemble {
    pub fn enumerate(
        lattice: &LatticeSpec,
        alpha: f64,
        energy: &JumpEnergy,
        start: usize,
        free: &[usize],
        ends: &[usize],
    ) -> Result<Self> {
        if free.len() > MAX_FREE_SITES {
            return Err(Error::Budget(format!("{} free sites exceed the limit of {MAX_FREE_SITES}", free.len())));
        }
        if free.contains(&start) || ends.contains(&start) || ends.iter().any(|y| free.contains(y)) {
            return Err(Error::InvalidConfig("start, free sites and endpoints must be disjoint".into()));
        }
        let mut domain = vec![start];
        domain.extend_from_slice(free);
        let mut weights: BTreeMap<Vec<usize>, Compensated> = BTreeMap::new();
        for &y in ends {
            let mut image: Vec<usize> = free.to_vec();
            image.push(y);
            let mut order: Vec<u8> = (0..image.len() as u8).collect();
            loop {
                let target = |i: usize| image[order[i] as usize];
                let h: f64 = (0..domain.len()).map(|i| jump_energy(lattice, energy, domain[i], target(i))).sum();
                let w = boltzmann(alpha, h);
                if w > 0.0 {
                    let mut path = vec![start];
                    let mut at = 0;
                    loop {
                        let next = target(at);
                        path.push(next);
                        if next == y {
                            break;
                        }
                        at = domain.iter().position(|&d| d == next).expect("free site is in the domain");
                    }
                    weights.entry(path).or_default().add(w);
                }
                if !next_permutation(&mut order) {
                    break;
                }
            }
        }
        let total = exact_sum(weights.values().map(|w| w.value()));
        if weights.is_empty() || !(total > 0.0) {
            return Err(Error::InvalidConfig("no open path of finite energy exists".into()));
        }
        let paths = weights.into_iter().map(|(p, w)| (p, w.value() / total)).collect();
        Ok(OpenPathEnsemble { start, free: free.to_vec(), ends: ends.to_vec(), paths })
    }

    /// Law of the whole open path, start and endpoint included.
    pub fn path_law(&self) -> &BTreeMap<Vec<usize>, f64> {
        &self.paths
    }

    /// Law of the path after `prefix` (which begins at the start), given that
    /// the path begins with `prefix`. The returned paths begin at the last
    /// prefix site.
    pub fn conditional_continuation(&self, prefix: &[usize]) -> Option<BTreeMap<Vec<usize>, f64>> {
        let matching: Vec<(&Vec<usize>, f64)> = self
            .paths
            .iter()
            .filter(|(p, _)| p.len() > prefix.len() && p.starts_with(prefix))
            .map(|(p, &w)| (p, w))
            .collect();
        let total = exact_sum(matching.iter().map(|&(_, w)| w));
        (total > 0.0).then(|| {
            matching
                .into_iter()
                .map(|(p, w)| (p[prefix.len() - 1..].to_vec(), w / total))
                .collect()
        })
    }
}

/// Outcome of the domain Markov check for one explored set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainMarkovReport {
    /// Prefixes of positive probability that were checked.
    pub prefixes: usize,
    pub max_discrepancy: f64,
}

fn max_law_difference(a: &BTreeMap<Vec<usize>, f64>, b: &BTreeMap<Vec<usize>, f64>) -> f64 {
    a.keys()
        .chain(b.keys())
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .fold(0.0, f64::max)
}

/// For every path prefix of up to `prefix_len` steps inside the free sites,
/// compares the conditional law of the rest of the path with the open-path
/// law started from the last prefix site, with the prefix sites removed from
/// the free set. The endpoints stay `A \ {x}`: a self-avoiding path cannot
/// end on a site it already visited.
pub fn check_domain_markov(
    lattice: &LatticeSpec,
    explored: &[usize],
    start: usize,
    alpha: f64,
    energy: &JumpEnergy,
    prefix_len: usize,
) -> Result<DomainMarkovReport> {
    if !explored.contains(&start) {
        return Err(Error::InvalidConfig("the start must lie in the explored set".into()));
    }
    let n = lattice.n_sites();
    let free: Vec<usize> = (0..n).filter(|z| !explored.contains(z)).collect();
    let ends: Vec<usize> = explored.iter().copied().filter(|&z| z != start).collect();
    if ends.is_empty() {
        return Err(Error::InvalidConfig("the explored set needs a site besides the start".into()));
    }
    let full = OpenPathEnsemble::enumerate(lattice, alpha, energy, start, &free, &ends)?;
    let mut report = DomainMarkovReport { prefixes: 0, max_discrepancy: 0.0 };
    let mut frontier: Vec<Vec<usize>> = vec![vec![start]];
    for _ in 0..=prefix_len {
        let mut next_frontier = Vec::new();
        for prefix in &frontier {
            let Some(conditional) = full.conditional_continuation(prefix) else {
                continue;
            };
            let last = *prefix.last().expect("prefix is nonempty");
            let rest: Vec<usize> = free.iter().copied().filter(|z| !prefix.contains(z)).collect();
            let restarted = OpenPathEnsemble::enumerate(lattice, alpha, energy, last, &rest, &ends)?;
            report.prefixes += 1;
            report.max_discrepancy = report.max_discrepancy.max(max_law_difference(&conditional, restarted.path_law()));
            for &z in &rest {
                let mut longer = prefix.clone();
                longer.push(z);
                next_frontier.push(longer);
            }
        }
        frontier = next_frontier;
    }
    Ok(report)
}

/// Cycles of a permutation as undirected loops, in canonical form.
fn undirected_loops(fwd: &[u8]) -> (BTreeSet<Vec<(u8, u8)>>, u32) {
    let n = fwd.len();
    let mut seen = vec![false; n];
    let mut loops = BTreeSet::new();
    let mut long = 0;
    for x in 0..n {
        if seen[x] {
            continue;
        }
        let mut edges = Vec::new();
        let mut y = x;
        loop {
            seen[y] = true;
            let z = fwd[y] as usize;
            edges.push(((y.min(z)) as u8, (y.max(z)) as u8));
            y = z;
            if y == x {
                break;
            }
        }
        if edges.len() >= 3 {
            long += 1;
        }
        edges.sort_unstable();
        edges.dedup();
        loops.insert(edges);
    }
    (loops, long)
}

/// Nearest-neighbor loop configurations and their permutation counts.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleDimerReport {
    pub allowed_permutations: usize,
    pub configurations: usize,
    /// Configurations whose multiplicity is not `2^k`.
    pub mismatches: usize,
    /// Configuration count by number of loops of length at least 3.
    pub by_long_loops: BTreeMap<u32, usize>,
}

/// Enumerates the permutations where every site jumps to a nearest neighbor,
/// groups them by their undirected loops and checks that a configuration
/// with `k` loops longer than 2 arises from exactly `2^k` permutations.
pub fn double_dimer_projection(lattice: &LatticeSpec) -> Result<DoubleDimerReport> {
    let energy = JumpEnergy::NearestNeighborOnly(ZeroJump::Forbidden);
    let ensemble = match ExactEnsemble::enumerate(lattice, 1.0, &energy) {
        Ok(ensemble) => ensemble,
        // No permutation of finite energy: an empty report, not a failure.
        Err(Error::InvalidConfig(_)) => {
            return Ok(DoubleDimerReport {
                allowed_permutations: 0,
                configurations: 0,
                mismatches: 0,
                by_long_loops: BTreeMap::new(),
            })
        }
        Err(e) => return Err(e),
    };
    let mut counts: BTreeMap<BTreeSet<Vec<(u8, u8)>>, (usize, u32)> = BTreeMap::new();
    let mut allowed = 0;
    for (s, &h) in ensemble.states().zip(ensemble.energies()) {
        if h.is_finite() {
            allowed += 1;
            let (loops, k) = undirected_loops(s);
            counts.entry(loops).or_insert((0, k)).0 += 1;
        }
    }
    let mut by_long_loops = BTreeMap::new();
    let mut mismatches = 0;
    for &(mult, k) in counts.values() {
        *by_long_loops.entry(k).or_insert(0) += 1;
        mismatches += usize::from(mult != 1 << k);
    }
    Ok(DoubleDimerReport { allowed_permutations: allowed, configurations: counts.len(), mismatches, by_long_loops })
}

/// Exact `P(l_x = k)` as CSV with a provenance comment line.
pub fn cycle_length_csv(ensemble: &ExactEnsemble, x: SiteIndex) -> String {
    let [l0, l1] = ensemble.lattice().extents();
    let mut out = format!(
        "# lattice={} extents={l0}x{l1} alpha={} xi={} site={} version={}\nk,probability\n",
        ensemble.lattice().kind(),
        ensemble.alpha(),
        ensemble.energy_fn().name(),
        x.0,
        env!("CARGO_PKG_VERSION"),
    );
    for (k, p) in ensemble.cycle_length_law(x).iter().enumerate().skip(1) {
        out.push_str(&format!("{k},{p:.16e}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ens(l0: usize, l1: usize, alpha: f64) -> ExactEnsemble {
        let lattice = LatticeSpec::rectangular(LatticeKind::Square, l0, l1).unwrap();
        ExactEnsemble::enumerate(&lattice, alpha, &JumpEnergy::Quadratic).unwrap()
    }

    #[test]
    fn permutation_helpers() {
        let mut p = [0u8, 1, 2];
        let mut all = vec![p.to_vec()];
        while next_permutation(&mut p) {
            all.push(p.to_vec());
        }
        assert_eq!(all.len(), 6);
        for (i, q) in all.iter().enumerate() {
            assert_eq!(lex_rank(q), i);
        }
        assert_eq!(cycle_len_at(&[1, 2, 0, 3], 0), 3);
        assert_eq!(cycle_len_at(&[1, 2, 0, 3], 3), 1);
    }

    #[test]
    fn uniform_and_frozen_ensembles() {
        let e = ens(2, 2, 0.0);
        assert_eq!(e.len(), 24);
        assert!(e.probs().iter().all(|&p| (p - 1.0 / 24.0).abs() < 1e-15));
        assert_eq!(e.partition_function(), 24.0);

        let cold = ens(2, 2, 50.0);
        let id = cold.index_of(&[0, 1, 2, 3]);
        assert_eq!(id, 0);
        assert!(cold.probs()[id] >= 1.0 - 24.0 * (-100f64).exp());
        assert!(cold.energies().iter().enumerate().all(|(i, &h)| i == id || h >= 2.0));
    }

    #[test]
    fn ensemble_is_normalized_and_ordered() {
        let e = ens(2, 3, 1.0);
        assert_eq!(e.len(), 720);
        assert!((e.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (i, s) in e.states().enumerate().step_by(37) {
            assert_eq!(e.index_of(s), i);
        }
        let law = e.cycle_length_law(SiteIndex(0));
        assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let nu = e.nu(SiteIndex(0));
        assert!((nu[0] - 1.0).abs() < 1e-12 && nu[6].abs() < 1e-15);
        assert!(ExactEnsemble::enumerate(&LatticeSpec::rectangular(LatticeKind::Square, 2, 5).unwrap(), 1.0, &JumpEnergy::Quadratic).is_err());
    }

    #[test]
    fn uniform_cycle_law_and_mu() {
        let e = ens(2, 3, 0.0);
        for p in &e.cycle_length_law(SiteIndex(2))[1..] {
            assert!((p - 1.0 / 6.0).abs() < 1e-14);
        }
        // Uniform permutations: x and y share a cycle with probability 1/2.
        assert!((e.mu(SiteIndex(0), SiteIndex(4)) - 0.5).abs() < 1e-14);
        assert!((e.mu(SiteIndex(3), SiteIndex(3)) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn partition_function_decreases_in_alpha() {
        let zs: Vec<f64> = [0.0, 0.25, 0.5, 1.0, 2.0].iter().map(|&a| ens(2, 2, a).partition_function()).collect();
        assert!(zs.windows(2).all(|w| w[0] > w[1]), "{zs:?}");
    }

    #[test]
    fn kernels_on_two_by_two() {
        for alpha in [0.0, 0.5, 1.0, 2.0] {
            let e = ens(2, 2, alpha);
            let r = check_kernel(&e, KernelOptions::default()).unwrap();
            assert!(r.row_sum_error < 1e-14, "{r:?}");
            assert!(r.detailed_balance_error < 1e-12, "{r:?}");
            assert!(r.step_stationarity_error < 1e-12 && r.sweep_stationarity_error < 1e-12, "{r:?}");
            assert!(r.irreducible && r.aperiodic, "alpha {alpha}: {r:?}");
        }
    }

    #[test]
    fn broken_acceptance_violates_detailed_balance() {
        let e = ens(2, 2, 1.0);
        let opts = KernelOptions { acceptance_scale: 1.01, ..KernelOptions::default() };
        let r = check_kernel(&e, opts).unwrap();
        assert!(r.detailed_balance_error > 1e-6, "{r:?}");
        assert!(r.sweep_stationarity_error > 1e-6, "{r:?}");
    }

    #[test]
    fn null_proposal_keeps_uniform_chain_aperiodic() {
        let e = ens(2, 2, 0.0);
        let step = exact_step_kernel(&e, 1.0).unwrap();
        assert!((step.entry(0, 0) - 1.0 / 5.0).abs() < 1e-15);
        let cold = ens(2, 2, 1.0);
        assert!(exact_step_kernel(&cold, 1.0).unwrap().entry(0, 0) > 0.0);
    }

    #[test]
    fn reversal_kernel_pairs_a_cycle_with_its_reverse() {
        let e = ens(2, 2, 1.0);
        let r = exact_reversal_kernel(&e, 10).unwrap();
        let i = e.index_of(&[1, 3, 0, 2]);
        let j = e.index_of(&[2, 0, 3, 1]);
        assert_eq!(r.entry(i, i), 0.5);
        assert_eq!(r.entry(i, j), 0.5);
        assert_eq!(r.entry(0, 0), 1.0);
        assert!(exact_kernel(&ens(3, 3, 1.0).clone(), KernelOptions::default()).is_err());
    }

    #[test]
    fn lemma_identities() {
        for (l0, l1, alpha) in [(2, 2, 1.0), (2, 3, 0.5), (2, 3, 0.0), (3, 3, 0.7)] {
            let e = ens(l0, l1, alpha);
            let r = check_translation_lemmas(&e, 3, &[0.5, 1.0, 1.5]);
            assert!(r.max() <= 1e-13, "{l0}x{l1} alpha {alpha}: {r:?}");
        }
    }

    fn theta_minus_one(alpha: f64) -> f64 {
        let theta: f64 = 1.0 + 2.0 * (1..50).map(|n| (-alpha * (n * n) as f64).exp()).sum::<f64>();
        theta * theta - 1.0
    }

    #[test]
    fn geometric_bound_values() {
        let b = geometric_bound(LatticeKind::Square, 2.0, 20).unwrap();
        assert!((b.s - theta_minus_one(2.0)).abs() < 1e-12, "{}", b.s);
        assert!((b.s - 0.616_309_3).abs() < 1e-6, "{}", b.s);
        assert!(b.truncation_error <= 1e-12);
        assert!(b.is_valid());
        for k in 0..20 {
            assert!(b.bound(k + 1).unwrap() < b.bound(k).unwrap());
        }
        assert!(b.bound(21).is_none());

        let weak = geometric_bound(LatticeKind::Square, 0.1, 10).unwrap();
        assert!(!weak.is_valid() && weak.bound(1).is_none());

        let tri = geometric_bound(LatticeKind::Triangular, 2.0, 10).unwrap();
        let s2 = crate::lattice::triangular_spacing().powi(2);
        let first_shell = 6.0 * (-2.0 * s2).exp();
        assert!(tri.s > first_shell && tri.s < first_shell * 1.05);
        assert!(geometric_bound(LatticeKind::Square, 0.0, 1).is_err());
    }

    #[test]
    fn exact_tails_obey_the_geometric_bound() {
        let b = geometric_bound(LatticeKind::Square, 2.0, 9).unwrap();
        for (l0, l1) in [(2, 2), (2, 3), (3, 3)] {
            let e = ens(l0, l1, 2.0);
            let v = tail_bound_violation(&e, &b, SiteIndex(0)).unwrap();
            assert!(v <= 0.0, "{l0}x{l1}: {v}");
        }
    }

    #[test]
    fn domain_markov_on_three_by_three() {
        let lattice = LatticeSpec::square(3).unwrap();
        let explored = [0usize, 1, 2, 3, 6];
        for alpha in [0.5, 1.0] {
            let r = check_domain_markov(&lattice, &explored, 0, alpha, &JumpEnergy::Quadratic, 2).unwrap();
            assert!(r.prefixes > 1);
            assert!(r.max_discrepancy <= 1e-13, "{r:?}");
        }
        let r = check_domain_markov(&lattice, &explored, 0, 1.0, &JumpEnergy::Quadratic, 0).unwrap();
        assert_eq!(r.prefixes, 1);
        assert!(r.max_discrepancy <= 1e-15);
        assert!(check_domain_markov(&lattice, &[0], 0, 1.0, &JumpEnergy::Quadratic, 1).is_err());
        assert!(check_domain_markov(&lattice, &[1, 2], 0, 1.0, &JumpEnergy::Quadratic, 1).is_err());
    }

    #[test]
    fn restart_that_may_end_on_the_path_is_not_the_conditional_law() {
        let lattice = LatticeSpec::square(3).unwrap();
        let free = [4usize, 5, 7, 8];
        let ends = [1usize, 2, 3, 6];
        let full = OpenPathEnsemble::enumerate(&lattice, 1.0, &JumpEnergy::Quadratic, 0, &free, &ends).unwrap();
        let conditional = full.conditional_continuation(&[0, 4]).unwrap();
        let mut ends_with_start = ends.to_vec();
        ends_with_start.push(0);
        let loose = OpenPathEnsemble::enumerate(&lattice, 1.0, &JumpEnergy::Quadratic, 4, &[5, 7, 8], &ends_with_start).unwrap();
        assert!(max_law_difference(&conditional, loose.path_law()) > 1e-3);
    }

    #[test]
    fn stepwise_and_joint_conditioning_agree() {
        let lattice = LatticeSpec::square(3).unwrap();
        let free = [4usize, 5, 7, 8];
        let ends = [1usize, 2, 3, 6];
        let full = OpenPathEnsemble::enumerate(&lattice, 0.8, &JumpEnergy::Quadratic, 0, &free, &ends).unwrap();
        let joint = full.conditional_continuation(&[0, 4, 8]).unwrap();
        let step = OpenPathEnsemble::enumerate(&lattice, 0.8, &JumpEnergy::Quadratic, 4, &[5, 7, 8], &ends).unwrap();
        let stepwise = step.conditional_continuation(&[4, 8]).unwrap();
        assert!(max_law_difference(&joint, &stepwise) <= 1e-13);
    }

    #[test]
    fn double_dimer_multiplicities() {
        let r = double_dimer_projection(&LatticeSpec::square(2).unwrap()).unwrap();
        assert_eq!(r.mismatches, 0);
        assert!(r.allowed_permutations > 0);
        assert!(r.by_long_loops.keys().all(|&k| k <= 1));
        assert!(r.by_long_loops[&0] >= 1);
        for (l0, l1) in [(2, 4), (2, 3)] {
            let lattice = LatticeSpec::rectangular(LatticeKind::Square, l0, l1).unwrap();
            let r = double_dimer_projection(&lattice).unwrap();
            assert_eq!(r.mismatches, 0, "{l0}x{l1}: {r:?}");
            assert!(r.configurations > 0);
        }
        let tri = double_dimer_projection(&LatticeSpec::triangular(2).unwrap()).unwrap();
        assert_eq!(tri.mismatches, 0);
    }

    #[test]
    fn loops_of_two_cycles_count_once() {
        let (loops, k) = undirected_loops(&[1, 0, 3, 2]);
        assert_eq!(k, 0);
        assert_eq!(loops.len(), 2);
        let (a, _) = undirected_loops(&[1, 3, 0, 2]);
        let (b, _) = undirected_loops(&[2, 0, 3, 1]);
        assert_eq!(a, b);
    }

    #[test]
    fn golden_csv_has_header() {
        let csv = cycle_length_csv(&ens(2, 3, 1.0), SiteIndex(0));
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("# lattice=square extents=2x3 alpha=1 xi=quadratic"));
        assert_eq!(lines.next(), Some("k,probability"));
        assert_eq!(lines.count(), 6);
    }
}
