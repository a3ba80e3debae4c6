//! Cycle and jump observables measured on permutation samples.

use crate::error::{Error, Result};
use crate::lattice::SiteIndex;
use crate::permutation::{CycleDecomposition, PermutationState};

/// Estimated tail `nu(K) = P(l_x > K)` of the cycle-length distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct NuCurve {
    /// Ascending thresholds `K`.
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
    /// Standard error of each value across samples.
    pub stderr: Vec<f64>,
    pub sample_count: usize,
    /// Exponents `gamma` when the thresholds are `N^gamma`.
    pub gamma_grid: Option<Vec<f64>>,
}

impl NuCurve {
    /// `(K, nu)` pairs.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.thresholds.iter().copied().zip(self.values.iter().copied())
    }
}

/// Integer thresholds `1, 2, ..., k_max`.
pub fn linear_thresholds(k_max: usize) -> Vec<f64> {
    (1..=k_max).map(|k| k as f64).collect()
}

/// Exponents `k/100` for `1 <= k < 100` and thresholds `N^gamma`.
pub fn gamma_thresholds(n_sites: usize) -> (Vec<f64>, Vec<f64>) {
    let gammas: Vec<f64> = (1..100).map(|k| k as f64 / 100.0).collect();
    let ks = gammas.iter().map(|g| (n_sites as f64).powf(*g)).collect();
    (gammas, ks)
}

fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::EmptyInput("no thresholds".into()));
    }
    if thresholds.windows(2).any(|w| w[1] < w[0]) || thresholds.iter().any(|k| !k.is_finite()) {
        return Err(Error::InvalidConfig("thresholds must be finite and ascending".into()));
    }
    Ok(())
}

/// Streaming estimator of `nu(K)` over many samples.
#[derive(Debug, Clone)]
pub struct NuAccumulator {
    thresholds: Vec<f64>,
    gamma_grid: Option<Vec<f64>>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    count: usize,
    scratch: Vec<usize>,
}

impl NuAccumulator {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        check_thresholds(&thresholds)?;
        let n = thresholds.len();
        Ok(NuAccumulator {
            thresholds,
            gamma_grid: None,
            sum: vec![0.0; n],
            sum_sq: vec![0.0; n],
            count: 0,
            scratch: Vec::new(),
        })
    }

    pub fn with_gamma_grid(mut self, gammas: Vec<f64>) -> Self {
        self.gamma_grid = Some(gammas);
        self
    }

    /// Add one sample: the fraction of sites in cycles longer than each `K`.
    pub fn push(&mut self, decomposition: &CycleDecomposition) {
        let n = decomposition.n_sites() as f64;
        self.scratch.clear();
        self.scratch.extend((0..decomposition.len()).map(|i| decomposition.cycle_len(i)));
        self.scratch.sort_unstable();
        // suffix sums of sorted lengths, walked alongside ascending thresholds
        let mut idx = self.scratch.len();
        let mut tail: usize = 0;
        let mut fractions = vec![0.0; self.thresholds.len()];
        for (j, &k) in self.thresholds.iter().enumerate().rev() {
            while idx > 0 && (self.scratch[idx - 1] as f64) > k {
                idx -= 1;
                tail += self.scratch[idx];
            }
            fractions[j] = tail as f64 / n;
        }
        for (j, f) in fractions.into_iter().enumerate() {
            self.sum[j] += f;
            self.sum_sq[j] += f * f;
        }
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(&self) -> Result<NuCurve> {
        if self.count == 0 {
            return Err(Error::EmptyInput("no samples for nu(K)".into()));
        }
        let n = self.count as f64;
        let values: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let stderr = self
            .sum_sq
            .iter()
            .zip(&values)
            .map(|(sq, m)| {
                if self.count < 2 {
                    0.0
                } else {
                    let var = ((sq - n * m * m) / (n - 1.0)).max(0.0);
                    (var / n).sqrt()
                }
            })
            .collect();
        Ok(NuCurve {
            thresholds: self.thresholds.clone(),
            values,
            stderr,
            sample_count: self.count,
            gamma_grid: self.gamma_grid.clone(),
        })
    }
}

/// `nu(K)` averaged over the given samples.
pub fn nu_curve(samples: &[CycleDecomposition], thresholds: &[f64]) -> Result<NuCurve> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no samples for nu(K)".into()));
    }
    let mut acc = NuAccumulator::new(thresholds.to_vec())?;
    for s in samples {
        acc.push(s);
    }
    acc.finish()
}

/// Fraction of jumps longer than `d` (strictly) in the cycle through `x`.
pub fn long_jump_fraction(state: &PermutationState, x: SiteIndex, d: f64) -> f64 {
    let mut len = 0usize;
    let mut long = 0usize;
    let mut y = x;
    loop {
        if state.jump_at(y).len() > d {
            long += 1;
        }
        len += 1;
        y = state.target(y);
        if y == x {
            break;
        }
    }
    long as f64 / len as f64
}

/// Winding vector and absolute winding of a permutation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindingRecord {
    pub w: [i64; 2],
    /// Sum over cycles of the Euclidean norm of each cycle's winding vector.
    pub w_abs: f64,
}

pub fn winding(state: &PermutationState) -> Result<WindingRecord> {
    winding_with(state, &state.decompose())
}

/// Winding computed from an existing decomposition of `state`.
pub fn winding_with(state: &PermutationState, decomposition: &CycleDecomposition) -> Result<WindingRecord> {
    let ext = state.lattice().extents();
    let ext = [ext[0] as i64, ext[1] as i64];
    let mut total = [0i64; 2];
    let mut w_abs = 0.0;
    for cycle in decomposition.cycles() {
        if cycle.len() == 1 {
            continue;
        }
        let mut s = [0i64; 2];
        for &x in cycle {
            let dz = state.jump_at(SiteIndex(x)).dz;
            s[0] += dz[0] as i64;
            s[1] += dz[1] as i64;
        }
        if s[0] % ext[0] != 0 || s[1] % ext[1] != 0 {
            return Err(Error::Consistency(format!(
                "cycle displacement {s:?} is not a multiple of the torus extents"
            )));
        }
        let w = [(s[0] / ext[0]) as f64, (s[1] / ext[1]) as f64];
        w_abs += w[0].hypot(w[1]);
        total[0] += s[0];
        total[1] += s[1];
    }
    Ok(WindingRecord { w: [total[0] / ext[0], total[1] / ext[1]], w_abs })
}

/// Per-state aggregates used for thermalization traces and samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarRecord {
    /// `(1/N) sum_x |pi(x) - x|`.
    pub avg_jump_len: f64,
    /// `H(pi) / N`, summed from scratch.
    pub energy_per_site: f64,
    pub max_cycle_len: usize,
    /// Sum of Euclidean jump lengths along the longest cycle.
    pub max_cycle_arc_length: f64,
}

pub fn scalar_observables(state: &PermutationState) -> ScalarRecord {
    scalar_observables_with(state, &state.decompose())
}

pub fn scalar_observables_with(state: &PermutationState, decomposition: &CycleDecomposition) -> ScalarRecord {
    let n = state.n_sites() as f64;
    let lattice = state.lattice();
    let xi = state.energy_fn();
    let mut len_sum = 0.0;
    let mut energy = 0.0;
    for x in 0..state.n_sites() {
        let j = state.jump_at(SiteIndex(x as u32));
        len_sum += j.len();
        energy += xi.value(lattice, j.dz);
    }
    let longest = decomposition.longest();
    let arc = decomposition
        .cycle(longest)
        .iter()
        .map(|&x| state.jump_at(SiteIndex(x)).len())
        .sum();
    ScalarRecord {
        avg_jump_len: len_sum / n,
        energy_per_site: energy / n,
        max_cycle_len: decomposition.cycle_len(longest),
        max_cycle_arc_length: arc,
    }
}

/// `C/N = -alpha^2 d/dalpha E(|pi(x) - x|^2)` from a tabulated mean energy.
///
/// Interior points use the three-point derivative for uneven spacing; the
/// endpoints use the one-sided three-point formulas. All are second order.
pub fn specific_heat_proxy(series: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    if series.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "specific heat needs at least 3 alpha points, got {}",
            series.len()
        )));
    }
    if series.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidConfig("alpha values must be strictly ascending".into()));
    }
    let n = series.len();
    let x: Vec<f64> = series.iter().map(|p| p.0).collect();
    let f: Vec<f64> = series.iter().map(|p| p.1).collect();
    let derivative = |i: usize| -> f64 {
        if i == 0 {
            let (h1, h2) = (x[1] - x[0], x[2] - x[1]);
            -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * f[0] + (h1 + h2) / (h1 * h2) * f[1]
                - h1 / (h2 * (h1 + h2)) * f[2]
        } else if i == n - 1 {
            let (h1, h2) = (x[n - 2] - x[n - 3], x[n - 1] - x[n - 2]);
            h2 / (h1 * (h1 + h2)) * f[n - 3] - (h1 + h2) / (h1 * h2) * f[n - 2]
                + (2.0 * h2 + h1) / (h2 * (h1 + h2)) * f[n - 1]
        } else {
            let (hm, hp) = (x[i] - x[i - 1], x[i + 1] - x[i]);
            (hm * hm * f[i + 1] - hp * hp * f[i - 1] + (hp * hp - hm * hm) * f[i]) / (hm * hp * (hm + hp))
        }
    };
    Ok((0..n).map(|i| (x[i], -x[i] * x[i] * derivative(i))).collect())
}

/// Empirical probability that `x` and `y` lie in the same cycle.
pub fn pair_correlation(samples: &[CycleDecomposition], x: SiteIndex, y: SiteIndex) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no samples for pair correlation".into()));
    }
    let hits = samples.iter().filter(|d| d.cycle_of(x) == d.cycle_of(y)).count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Which observables to record while sampling.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservableSet {
    /// Thresholds for `nu(K)`; `None` disables the curve.
    pub nu_thresholds: Option<Vec<f64>>,
    pub gamma_grid: Option<Vec<f64>>,
    pub scalars: bool,
    pub winding: bool,
    /// Cycle length and jump of site 0 at every sample.
    pub origin: bool,
    /// Site pairs for `mu(x, y)`.
    pub pairs: Vec<(SiteIndex, SiteIndex)>,
    /// Per-sweep thermalization diagnostics.
    pub trace: bool,
}

impl ObservableSet {
    /// `nu(N^gamma)` on the exponent grid `k/100`.
    pub fn with_gamma_nu(mut self, n_sites: usize) -> Self {
        let (g, k) = gamma_thresholds(n_sites);
        self.gamma_grid = Some(g);
        self.nu_thresholds = Some(k);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OriginRecord {
    pub cycle_len: usize,
    pub jump: [i32; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub sweep: u64,
    pub accepted: u64,
    pub avg_jump_len: f64,
    pub longest_arc_length: f64,
    pub energy_per_site: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCorrelation {
    pub x: SiteIndex,
    pub y: SiteIndex,
    pub value: f64,
}

/// Everything recorded by one chain.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservableSeries {
    /// Sweep number of each sample.
    pub sample_sweeps: Vec<u64>,
    pub scalars: Vec<ScalarRecord>,
    pub windings: Vec<WindingRecord>,
    pub origin: Vec<OriginRecord>,
    pub nu: Option<NuCurve>,
    pub pair_correlations: Vec<PairCorrelation>,
    pub trace: Vec<TraceRecord>,
}

/// Collects an [`ObservableSeries`] sample by sample.
#[derive(Debug, Clone)]
pub struct SeriesRecorder {
    set: ObservableSet,
    nu: Option<NuAccumulator>,
    pair_hits: Vec<u64>,
    series: ObservableSeries,
}

impl SeriesRecorder {
    pub fn new(set: ObservableSet) -> Result<Self> {
        let nu = match &set.nu_thresholds {
            Some(t) => {
                let acc = NuAccumulator::new(t.clone())?;
                Some(match &set.gamma_grid {
                    Some(g) => acc.with_gamma_grid(g.clone()),
                    None => acc,
                })
            }
            None => None,
        };
        Ok(SeriesRecorder { pair_hits: vec![0; set.pairs.len()], set, nu, series: ObservableSeries::default() })
    }

    /// Dispatch a chain event; samples are decomposed here.
    pub fn record(&mut self, event: crate::mcmc::ChainEvent<'_>) -> Result<()> {
        match event {
            crate::mcmc::ChainEvent::Sweep { sweep, accepted, state } => {
                self.record_sweep(sweep, accepted, state);
                Ok(())
            }
            crate::mcmc::ChainEvent::Sample { sweep, state } => {
                let d = state.decompose();
                self.record_sample(sweep, state, &d)
            }
        }
    }

    pub fn record_sweep(&mut self, sweep: u64, accepted: u64, state: &PermutationState) {
        if !self.set.trace {
            return;
        }
        let s = scalar_observables(state);
        self.series.trace.push(TraceRecord {
            sweep,
            accepted,
            avg_jump_len: s.avg_jump_len,
            longest_arc_length: s.max_cycle_arc_length,
            energy_per_site: s.energy_per_site,
        });
    }

    pub fn record_sample(&mut self, sweep: u64, state: &PermutationState, decomposition: &CycleDecomposition) -> Result<()> {
        self.series.sample_sweeps.push(sweep);
        if self.set.scalars {
            self.series.scalars.push(scalar_observables_with(state, decomposition));
        }
        if self.set.winding {
            self.series.windings.push(winding_with(state, decomposition)?);
        }
        if self.set.origin {
            let o = SiteIndex(0);
            self.series.origin.push(OriginRecord {
                cycle_len: decomposition.cycle_len_of(o),
                jump: state.jump_at(o).dz,
            });
        }
        if let Some(acc) = self.nu.as_mut() {
            acc.push(decomposition);
        }
        for (hits, (x, y)) in self.pair_hits.iter_mut().zip(&self.set.pairs) {
            if decomposition.cycle_of(*x) == decomposition.cycle_of(*y) {
                *hits += 1;
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<ObservableSeries> {
        let n = self.series.sample_sweeps.len();
        if let Some(acc) = &self.nu {
            if acc.count() > 0 {
                self.series.nu = Some(acc.finish()?);
            }
        }
        if n > 0 {
            self.series.pair_correlations = self
                .set
                .pairs
                .iter()
                .zip(&self.pair_hits)
                .map(|(&(x, y), &h)| PairCorrelation { x, y, value: h as f64 / n as f64 })
                .collect();
        }
        Ok(self.series)
    }
}
