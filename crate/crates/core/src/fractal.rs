//! Box-counting dimension of point sets and of the longest cycle.
//!
//! The domain `[0, L)^2` is tiled by `n x n` equal boxes with `n` an integer,
//! so boxes at the boundary are the same size as in the bulk. Box counts are
//! taken on a ladder `n_j = round(n0 * c^j)` and the dimension is the slope
//! of `ln N(r_j)` against `ln(1 / r_j)`.
//!
//! Triangular-lattice cycles are counted in lattice coordinates. The map to
//! Euclidean space is affine, which leaves box-counting dimensions unchanged.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mcmc::{Chain, ChainConfig, ChainEvent};
use crate::lattice::{LatticeSpec, SiteIndex};
use crate::permutation::{CycleDecomposition, PermutationState};

pub const DEFAULT_LADDER_RATIO: f64 = 0.95;
pub const DEFAULT_LADDER_RUNGS: usize = 21;
pub const DEFAULT_MIN_BOX_SIDE: f64 = 8.0;

/// Logarithmically equidistant box counts `n_j`, strictly decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxLadder {
    side: f64,
    n0: usize,
    ratio: f64,
    rungs: Vec<usize>,
}

impl BoxLadder {
    /// `m` rungs `round(n0 * c^j)`; rounding collisions collapse to one rung
    /// and rungs below 1 are dropped.
    pub fn new(side: f64, n0: usize, ratio: f64, m: usize) -> Result<Self> {
        if !(side > 0.0 && side.is_finite()) {
            return Err(Error::InvalidConfig(format!("domain side must be positive, got {side}")));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidConfig(format!("ladder ratio must lie in (0, 1), got {ratio}")));
        }
        if n0 == 0 || m == 0 {
            return Err(Error::InvalidConfig("ladder needs n0 >= 1 and at least one rung".into()));
        }
        let mut rungs: Vec<usize> = Vec::with_capacity(m);
        for j in 0..m {
            let n = (n0 as f64 * ratio.powi(j as i32)).round() as usize;
            if n >= 1 && rungs.last() != Some(&n) {
                rungs.push(n);
            }
        }
        Ok(BoxLadder { side, n0, ratio, rungs })
    }

    /// The default ladder for a torus of side `side` whose smallest boxes
    /// have side at least `min_box_side`.
    pub fn for_min_box_side(side: usize, min_box_side: f64) -> Result<Self> {
        if !(min_box_side > 0.0) {
            return Err(Error::InvalidConfig(format!("minimal box side must be positive, got {min_box_side}")));
        }
        let n0 = (side as f64 / min_box_side).floor() as usize;
        Self::new(side as f64, n0.max(1), DEFAULT_LADDER_RATIO, DEFAULT_LADDER_RUNGS)
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// The box counts per axis, `n_j`.
    pub fn rungs(&self) -> &[usize] {
        &self.rungs
    }

    /// Box sides `r_j = L / n_j`.
    pub fn box_sides(&self) -> Vec<f64> {
        self.rungs.iter().map(|&n| self.side / n as f64).collect()
    }
}

/// Range of per-axis box counts used in the regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxWindow {
    pub n_min: usize,
    pub n_max: usize,
}

impl BoxWindow {
    pub const ALL: BoxWindow = BoxWindow { n_min: 1, n_max: usize::MAX };

    pub fn new(n_min: usize, n_max: usize) -> Self {
        BoxWindow { n_min, n_max }
    }

    /// `n_max ~ L/10` and `n_min ~ n_max/3`.
    pub fn default_for(side: usize) -> Self {
        let n_max = (side as f64 / 10.0).round().max(1.0) as usize;
        BoxWindow { n_min: (n_max as f64 / 3.0).round().max(1.0) as usize, n_max }
    }

    pub fn contains(&self, n: usize) -> bool {
        (self.n_min..=self.n_max).contains(&n)
    }
}

/// Box counts on a ladder with the windowed regression line.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxCountCurve {
    /// `(n_j, N(r_j))` for every rung.
    pub counts: Vec<(usize, u64)>,
    /// `(ln(1/r_j), ln N(r_j))` for every rung.
    pub points: Vec<(f64, f64)>,
    /// Indices into `points` used for the fit.
    pub window: std::ops::Range<usize>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_err: f64,
    /// More than half the windowed rungs have every box occupied.
    pub saturated: bool,
}

fn cell(v: f64, n: usize, side: f64) -> usize {
    // Exact for integer coordinates: v*n is exact and the division rounds
    // correctly, so cell boundaries never shift.
    ((v * n as f64 / side).floor() as usize).min(n - 1)
}

fn check_points(points: &[[f64; 2]], side: f64) -> Result<()> {
    match points.iter().find(|p| !(p[0] >= 0.0 && p[0] < side && p[1] >= 0.0 && p[1] < side)) {
        Some(p) => Err(Error::OutOfDomain { x: p[0], y: p[1], side }),
        None => Ok(()),
    }
}

fn count_cells(points: &[[f64; 2]], n: usize, side: f64) -> u64 {
    let mut bits = vec![0u64; (n * n).div_ceil(64)];
    let mut occupied = 0;
    for p in points {
        let k = cell(p[0], n, side) + n * cell(p[1], n, side);
        let (word, bit) = (k / 64, 1u64 << (k % 64));
        if bits[word] & bit == 0 {
            bits[word] |= bit;
            occupied += 1;
        }
    }
    occupied
}

/// Occupied cells of the `n x n` tiling of `[0, side)^2`.
pub fn box_count(points: &[[f64; 2]], n: usize, side: f64) -> Result<u64> {
    if n == 0 {
        return Err(Error::InvalidConfig("box count needs n >= 1".into()));
    }
    check_points(points, side)?;
    Ok(count_cells(points, n, side))
}

/// Ordinary least squares `y = a + b x`; returns `(b, a, stderr(b))`.
pub(crate) fn ols(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(Error::InsufficientData(format!("linear regression needs at least 2 points, got {n}")));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::Degenerate("all abscissae coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if n > 2 {
        let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((slope, intercept, stderr))
}

/// Box counts of `points` on every rung and the regression over `window`.
pub fn boxdim(points: &[[f64; 2]], ladder: &BoxLadder, window: BoxWindow) -> Result<BoxCountCurve> {
    if points.is_empty() {
        return Err(Error::EmptyInput("box counting needs at least one point".into()));
    }
    let side = ladder.side();
    check_points(points, side)?;
    let counts: Vec<(usize, u64)> = ladder
        .rungs()
        .par_iter()
        .map(|&n| (n, count_cells(points, n, side)))
        .collect();
    let curve: Vec<(f64, f64)> = counts
        .iter()
        .map(|&(n, c)| ((n as f64 / side).ln(), (c as f64).ln()))
        .collect();
    let inside: Vec<usize> = (0..counts.len()).filter(|&i| window.contains(counts[i].0)).collect();
    let (Some(&first), Some(&last)) = (inside.first(), inside.last()) else {
        return Err(Error::Degenerate(format!(
            "no ladder rung lies in the window [{}, {}]",
            window.n_min, window.n_max
        )));
    };
    if inside.len() < 2 {
        return Err(Error::Degenerate("the window holds fewer than 2 ladder rungs".into()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = curve[first..=last].iter().copied().unzip();
    let (slope, intercept, slope_std_err) = ols(&xs, &ys)?;
    let full = counts[first..=last].iter().filter(|&&(n, c)| c == (n * n) as u64).count();
    Ok(BoxCountCurve {
        counts,
        points: curve,
        window: first..last + 1,
        slope,
        intercept,
        slope_std_err,
        saturated: 2 * full > inside.len(),
    })
}

/// Lattice coordinates of the sites on one cycle, as points of `[0, L0) x [0, L1)`.
pub fn cycle_points(lattice: &LatticeSpec, cycle: &[u32]) -> Vec<[f64; 2]> {
    cycle
        .iter()
        .map(|&s| {
            let [a, b] = lattice.coords(SiteIndex(s));
            [a as f64, b as f64]
        })
        .collect()
}

/// Box-counting estimate for the longest cycle of `state`.
pub fn longest_cycle_dimension(
    state: &PermutationState,
    decomposition: &CycleDecomposition,
    ladder: &BoxLadder,
    window: BoxWindow,
) -> Result<BoxCountCurve> {
    let lattice = state.lattice();
    if lattice.side().is_none() {
        return Err(Error::InvalidLattice("box counting needs an L x L torus".into()));
    }
    boxdim(&cycle_points(lattice, decomposition.cycle(decomposition.longest())), ladder, window)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionSample {
    pub sweep: u64,
    pub slope: f64,
    pub std_err: f64,
    pub saturated: bool,
}

/// Longest-cycle dimension statistics at one `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionEstimate {
    pub alpha: f64,
    /// Mean over unsaturated samples; NaN if every sample saturated.
    pub mean: f64,
    /// Sample standard deviation over unsaturated samples.
    pub std_dev: f64,
    pub samples: Vec<DimensionSample>,
}

impl DimensionEstimate {
    pub fn used(&self) -> usize {
        self.samples.iter().filter(|s| !s.saturated).count()
    }
}

fn summarize(alpha: f64, samples: Vec<DimensionSample>) -> DimensionEstimate {
    let used: Vec<f64> = samples.iter().filter(|s| !s.saturated).map(|s| s.slope).collect();
    let n = used.len() as f64;
    let mean = used.iter().sum::<f64>() / n;
    let std_dev = if used.len() > 1 {
        (used.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    DimensionEstimate { alpha, mean, std_dev, samples }
}

/// Run one chain per `alpha` (in parallel) from `template` and measure the
/// longest cycle's dimension at each of `samples_per_alpha` samples.
///
/// Chain `i` uses stream `template.stream + i`. The initial condition comes
/// from the template; use a forced winding cycle where long cycles are rare.
pub fn dimension_scan(
    alphas: &[f64],
    template: &ChainConfig,
    lattice: &LatticeSpec,
    samples_per_alpha: usize,
    min_box_side: f64,
) -> Result<Vec<DimensionEstimate>> {
    let side = lattice
        .side()
        .ok_or_else(|| Error::InvalidLattice("box counting needs an L x L torus".into()))?;
    let ladder = BoxLadder::for_min_box_side(side, min_box_side)?;
    alphas
        .par_iter()
        .enumerate()
        .map(|(i, &alpha)| {
            let config = ChainConfig { alpha, stream: template.stream.wrapping_add(i as u64), ..template.clone() };
            let mut chain = Chain::new(lattice.clone(), config)?;
            let target = chain.sample_target(samples_per_alpha as u64);
            let mut samples = Vec::with_capacity(samples_per_alpha);
            chain.run_until(target, |event| {
                if let ChainEvent::Sample { sweep, state } = event {
                    let curve = longest_cycle_dimension(state, &state.decompose(), &ladder, BoxWindow::ALL)?;
                    samples.push(DimensionSample {
                        sweep,
                        slope: curve.slope,
                        std_err: curve.slope_std_err,
                        saturated: curve.saturated,
                    });
                }
                Ok(())
            })?;
            Ok(summarize(alpha, samples))
        })
        .collect()
}

/// Every integer point of `[0, l)^2`.
pub fn full_grid(l: usize) -> Vec<[f64; 2]> {
    (0..l).flat_map(|y| (0..l).map(move |x| [x as f64, y as f64])).collect()
}

/// `l` consecutive integer points on the first axis.
pub fn straight_line(l: usize) -> Vec<[f64; 2]> {
    (0..l).map(|x| [x as f64, 0.0]).collect()
}

/// The discrete Sierpinski triangle `{(i, j) : i & j = 0}` in `[0, 2^depth)^2`.
pub fn sierpinski_triangle(depth: u32) -> Vec<[f64; 2]> {
    let l = 1usize << depth;
    (0..l)
        .flat_map(|j| (0..l).filter(move |i| i & j == 0).map(move |i| [i as f64, j as f64]))
        .collect()
}

/// Ladder `2^depth, 2^(depth-1), ..., 2` on a domain of side `2^depth`.
///
/// Boxes aligned with the halving of [`sierpinski_triangle`]; off-dyadic
/// tilings cut through its holes and overcount at finite depth.
pub fn dyadic_ladder(depth: u32) -> Result<BoxLadder> {
    let l = 1usize << depth;
    BoxLadder::new(l as f64, l, 0.5, depth as usize)
}
