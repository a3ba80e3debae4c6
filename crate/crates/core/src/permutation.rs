//! Permutation state on a lattice, its total energy and its cycles.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lattice::{JumpVector, LatticeSpec, SiteIndex};

/// Accepted moves between from-scratch energy resynchronizations.
pub const ENERGY_RESYNC_INTERVAL: u64 = 1_000_000;

/// Treatment of the zero jump under [`JumpEnergy::NearestNeighborOnly`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ZeroJump {
    /// `xi(0) = +inf`: every site must move.
    Forbidden,
    /// `xi(0) = 0`: fixed points are allowed.
    Free,
}

/// Energy table for arbitrary (possibly asymmetric) jump energies.
///
/// Keys are reduced lattice-coordinate displacements; missing keys cost `+inf`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JumpTable {
    values: BTreeMap<[i32; 2], f64>,
}

impl JumpTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, dz: [i32; 2], value: f64) -> &mut Self {
        self.values.insert(dz, value);
        self
    }

    pub fn get(&self, dz: [i32; 2]) -> f64 {
        self.values.get(&dz).copied().unwrap_or(f64::INFINITY)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[i32; 2], &f64)> {
        self.values.iter()
    }
}

/// The per-jump cost `xi`.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpEnergy {
    /// `xi(x) = |x|^2` with the periodic distance.
    Quadratic,
    /// `|x|^2` on nearest-neighbor jumps, `+inf` on every other nonzero jump.
    NearestNeighborOnly(ZeroJump),
    Tabulated(JumpTable),
}

impl JumpEnergy {
    pub fn name(&self) -> &'static str {
        match self {
            JumpEnergy::Quadratic => "quadratic",
            JumpEnergy::NearestNeighborOnly(ZeroJump::Forbidden) => "nearest-neighbor",
            JumpEnergy::NearestNeighborOnly(ZeroJump::Free) => "nearest-neighbor-free-zero",
            JumpEnergy::Tabulated(_) => "tabulated",
        }
    }

    #[inline]
    pub fn value(&self, lattice: &LatticeSpec, dz: [i32; 2]) -> f64 {
        match self {
            JumpEnergy::Quadratic => lattice.len2(dz),
            JumpEnergy::NearestNeighborOnly(zero) => {
                if dz == [0, 0] {
                    match zero {
                        ZeroJump::Forbidden => f64::INFINITY,
                        ZeroJump::Free => 0.0,
                    }
                } else if lattice.is_neighbor_jump(dz) {
                    lattice.len2(dz)
                } else {
                    f64::INFINITY
                }
            }
            JumpEnergy::Tabulated(table) => table.get(dz),
        }
    }

    /// Whether `xi(dz) = xi(-dz)` for every displacement of the lattice.
    pub fn is_symmetric(&self, lattice: &LatticeSpec) -> bool {
        match self {
            JumpEnergy::Quadratic | JumpEnergy::NearestNeighborOnly(_) => true,
            JumpEnergy::Tabulated(table) => {
                let origin = lattice.site([0, 0]);
                table.iter().all(|(dz, v)| {
                    let there = lattice.site([dz[0] as i64, dz[1] as i64]);
                    let back = lattice.diff(origin, there);
                    table.get(back) == *v
                })
            }
        }
    }
}

/// A permutation of the lattice sites with its inverse and cached energy.
///
/// `fwd[x]` is the image `pi(x)`. The energy is maintained incrementally and
/// resynchronized from scratch every [`ENERGY_RESYNC_INTERVAL`] accepted swaps.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationState {
    lattice: LatticeSpec,
    energy_fn: JumpEnergy,
    fwd: Vec<u32>,
    inv: Vec<u32>,
    energy: f64,
    generation: u64,
    swaps_since_sync: u64,
}

impl PermutationState {
    /// The identity permutation. Fails when `xi(0)` is infinite.
    pub fn identity(lattice: LatticeSpec, energy_fn: JumpEnergy) -> Result<Self> {
        let xi0 = energy_fn.value(&lattice, [0, 0]);
        if !xi0.is_finite() {
            return Err(Error::InvalidInitialState(format!(
                "identity has infinite energy under {} jump energy",
                energy_fn.name()
            )));
        }
        let n = lattice.n_sites();
        let fwd: Vec<u32> = (0..n as u32).collect();
        Ok(PermutationState {
            inv: fwd.clone(),
            fwd,
            energy: n as f64 * xi0,
            lattice,
            energy_fn,
            generation: 0,
            swaps_since_sync: 0,
        })
    }

    /// A state with the given images. Fails unless `targets` is a bijection
    /// of finite energy.
    pub fn from_targets(lattice: LatticeSpec, energy_fn: JumpEnergy, targets: Vec<u32>) -> Result<Self> {
        let n = lattice.n_sites();
        if targets.len() != n {
            return Err(Error::InvalidInitialState(format!(
                "expected {n} targets, got {}",
                targets.len()
            )));
        }
        let mut inv = vec![u32::MAX; n];
        for (x, &t) in targets.iter().enumerate() {
            let t = t as usize;
            if t >= n || inv[t] != u32::MAX {
                return Err(Error::InvalidInitialState(format!("targets are not a bijection at site {x}")));
            }
            inv[t] = x as u32;
        }
        let mut state = PermutationState {
            lattice,
            energy_fn,
            fwd: targets,
            inv,
            energy: 0.0,
            generation: 0,
            swaps_since_sync: 0,
        };
        state.energy = state.recompute_energy();
        if !state.energy.is_finite() {
            return Err(Error::InvalidInitialState("state has infinite energy".into()));
        }
        Ok(state)
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn energy_fn(&self) -> &JumpEnergy {
        &self.energy_fn
    }

    pub fn n_sites(&self) -> usize {
        self.fwd.len()
    }

    #[inline]
    pub fn target(&self, x: SiteIndex) -> SiteIndex {
        SiteIndex(self.fwd[x.index()])
    }

    #[inline]
    pub fn preimage(&self, y: SiteIndex) -> SiteIndex {
        SiteIndex(self.inv[y.index()])
    }

    /// The image array, `targets()[x] = pi(x)`.
    pub fn targets(&self) -> &[u32] {
        &self.fwd
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Mutation counter; bumped by every swap and reversal.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// The jump `pi(x) - x`.
    pub fn jump_at(&self, x: SiteIndex) -> JumpVector {
        self.lattice.jump(self.target(x), x)
    }

    #[inline]
    fn site_energy(&self, from: u32, to: u32) -> f64 {
        let dz = self.lattice.diff(SiteIndex(to), SiteIndex(from));
        self.energy_fn.value(&self.lattice, dz)
    }

    /// `H(pi) = sum_x xi(pi(x) - x)` summed from scratch.
    pub fn recompute_energy(&self) -> f64 {
        self.fwd
            .iter()
            .enumerate()
            .map(|(x, &t)| self.site_energy(x as u32, t))
            .sum()
    }

    /// Energy change from exchanging the targets of `x` and `y`.
    #[inline]
    pub fn swap_delta(&self, x: SiteIndex, y: SiteIndex) -> f64 {
        let l = &self.lattice;
        let (px, py) = (SiteIndex(self.fwd[x.index()]), SiteIndex(self.fwd[y.index()]));
        let (cx, cy) = (l.coords_u32(x), l.coords_u32(y));
        let (cpx, cpy) = (l.coords_u32(px), l.coords_u32(py));
        let xi = |to, from| self.energy_fn.value(l, l.diff_coords(to, from));
        xi(cpy, cx) + xi(cpx, cy) - xi(cpx, cx) - xi(cpy, cy)
    }

    /// Exchange the targets of `x` and `y`: `pi'(x) = pi(y)`, `pi'(y) = pi(x)`.
    /// A no-op when `x == y`.
    pub fn apply_swap(&mut self, x: SiteIndex, y: SiteIndex) {
        if x == y {
            return;
        }
        let delta = self.swap_delta(x, y);
        self.apply_swap_with_delta(x, y, delta);
    }

    #[inline]
    pub(crate) fn apply_swap_with_delta(&mut self, x: SiteIndex, y: SiteIndex, delta: f64) {
        let (xi, yi) = (x.index(), y.index());
        let (px, py) = (self.fwd[xi], self.fwd[yi]);
        self.fwd[xi] = py;
        self.fwd[yi] = px;
        self.inv[py as usize] = x.0;
        self.inv[px as usize] = y.0;
        self.generation += 1;
        self.swaps_since_sync += 1;
        if self.swaps_since_sync >= ENERGY_RESYNC_INTERVAL || !self.energy.is_finite() || !delta.is_finite() {
            self.resync_energy();
        } else {
            self.energy += delta;
        }
    }

    /// Replace the cached energy with a from-scratch sum.
    pub fn resync_energy(&mut self) {
        self.energy = self.recompute_energy();
        self.swaps_since_sync = 0;
    }

    /// Full cycle decomposition in `O(N)`.
    pub fn decompose(&self) -> CycleDecomposition {
        CycleDecomposition::of(self)
    }

    /// Reverse the cycle `id` of a decomposition taken at the current generation.
    pub fn reverse_cycle(&mut self, decomposition: &CycleDecomposition, id: usize) -> Result<()> {
        if decomposition.generation != self.generation {
            return Err(Error::StaleCycleId { decomposed: decomposition.generation, current: self.generation });
        }
        if id >= decomposition.len() {
            return Err(Error::UnknownCycle { id, count: decomposition.len() });
        }
        self.reverse_cycle_sites(decomposition.cycle(id));
        Ok(())
    }

    /// Reverse the cycle whose sites are given in traversal order.
    pub(crate) fn reverse_cycle_sites(&mut self, cycle: &[u32]) {
        let k = cycle.len();
        if k <= 2 {
            return;
        }
        let symmetric = self.energy_fn.is_symmetric(&self.lattice);
        let before = if symmetric { 0.0 } else { self.cycle_energy(cycle) };
        for j in 0..k {
            let (a, b) = (cycle[j], cycle[(j + 1) % k]);
            self.fwd[b as usize] = a;
            self.inv[a as usize] = b;
        }
        if !symmetric {
            let after = self.cycle_energy(cycle);
            self.energy += after - before;
            if !self.energy.is_finite() {
                self.resync_energy();
            }
        }
        self.generation += 1;
    }

    fn cycle_energy(&self, cycle: &[u32]) -> f64 {
        cycle.iter().map(|&x| self.site_energy(x, self.fwd[x as usize])).sum()
    }

    /// Check the bijection and energy bookkeeping invariants.
    pub fn check_invariants(&self) -> Result<()> {
        for (x, &t) in self.fwd.iter().enumerate() {
            if self.inv[t as usize] as usize != x {
                return Err(Error::Consistency(format!("inverse mismatch at site {x}")));
            }
        }
        let fresh = self.recompute_energy();
        let tol = 1e-9 * self.n_sites() as f64;
        if (fresh - self.energy).abs() > tol.max(1e-9) {
            return Err(Error::Consistency(format!(
                "cached energy {} differs from recomputed {}",
                self.energy, fresh
            )));
        }
        Ok(())
    }

    /// Rebuild from raw parts, e.g. when loading a checkpoint. The cached
    /// energy is taken verbatim so that resumed runs are bit-identical.
    pub fn from_parts(
        lattice: LatticeSpec,
        energy_fn: JumpEnergy,
        targets: Vec<u32>,
        energy: f64,
        swaps_since_sync: u64,
    ) -> Result<Self> {
        let mut state = Self::from_targets(lattice, energy_fn, targets)?;
        state.energy = energy;
        state.swaps_since_sync = swaps_since_sync;
        Ok(state)
    }

    pub fn swaps_since_sync(&self) -> u64 {
        self.swaps_since_sync
    }
}

/// Cycles of a permutation, ordered by their minimal site.
///
/// Each cycle is stored in traversal order starting at its minimal site.
/// Valid only for the state generation it was taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleDecomposition {
    order: Vec<u32>,
    starts: Vec<u32>,
    cycle_of: Vec<u32>,
    generation: u64,
}

impl CycleDecomposition {
    fn of(state: &PermutationState) -> Self {
        Self::from_targets(&state.fwd, state.generation)
    }

    /// Decompose a bare image array (must be a bijection).
    pub fn from_targets(fwd: &[u32], generation: u64) -> Self {
        let n = fwd.len();
        let mut cycle_of = vec![u32::MAX; n];
        let mut order = Vec::with_capacity(n);
        let mut starts = vec![0u32];
        for start in 0..n {
            if cycle_of[start] != u32::MAX {
                continue;
            }
            let id = (starts.len() - 1) as u32;
            let mut x = start;
            loop {
                cycle_of[x] = id;
                order.push(x as u32);
                x = fwd[x] as usize;
                if x == start {
                    break;
                }
            }
            starts.push(order.len() as u32);
        }
        CycleDecomposition { order, starts, cycle_of, generation }
    }

    /// Number of cycles.
    pub fn len(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_sites(&self) -> usize {
        self.cycle_of.len()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Sites of cycle `id`, with `pi(c[j]) = c[j+1 mod len]`.
    pub fn cycle(&self, id: usize) -> &[u32] {
        &self.order[self.starts[id] as usize..self.starts[id + 1] as usize]
    }

    pub fn cycle_len(&self, id: usize) -> usize {
        (self.starts[id + 1] - self.starts[id]) as usize
    }

    pub fn cycles(&self) -> impl Iterator<Item = &[u32]> + '_ {
        (0..self.len()).map(move |i| self.cycle(i))
    }

    pub fn lengths(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.cycle_len(i)).collect()
    }

    /// Id of the cycle containing `site`.
    pub fn cycle_of(&self, site: SiteIndex) -> usize {
        self.cycle_of[site.index()] as usize
    }

    /// Length `l_x` of the cycle containing `site`.
    pub fn cycle_len_of(&self, site: SiteIndex) -> usize {
        self.cycle_len(self.cycle_of(site))
    }

    /// The longest cycle; ties go to the one with the smallest minimal site.
    pub fn longest(&self) -> usize {
        let mut best = 0;
        for id in 1..self.len() {
            if self.cycle_len(id) > self.cycle_len(best) {
                best = id;
            }
        }
        best
    }

    /// Up to `count` cycles of length at least `min_len`, ordered by length
    /// descending, then by minimal site ascending.
    pub fn longest_cycles(&self, count: usize, min_len: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..self.len()).filter(|&i| self.cycle_len(i) >= min_len).collect();
        // ids are already ordered by minimal site, so a stable sort keeps the tie order.
        ids.sort_by_key(|&i| std::cmp::Reverse(self.cycle_len(i)));
        ids.truncate(count);
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(l: usize, seed: u64) -> PermutationState {
        let lattice = LatticeSpec::square(l).unwrap();
        let mut fwd: Vec<u32> = (0..lattice.n_sites() as u32).collect();
        fwd.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        PermutationState::from_targets(lattice, JumpEnergy::Quadratic, fwd).unwrap()
    }

    #[test]
    fn identity_energies() {
        let s = PermutationState::identity(LatticeSpec::square(4).unwrap(), JumpEnergy::Quadratic).unwrap();
        assert_eq!(s.energy(), 0.0);
        assert_eq!(s.decompose().len(), 16);
        let t = PermutationState::identity(LatticeSpec::triangular(4).unwrap(), JumpEnergy::Quadratic).unwrap();
        assert_eq!(t.energy(), 0.0);
        let e = PermutationState::identity(
            LatticeSpec::square(4).unwrap(),
            JumpEnergy::NearestNeighborOnly(ZeroJump::Forbidden),
        );
        assert!(matches!(e, Err(Error::InvalidInitialState(_))));
    }

    #[test]
    fn swap_adjacent_from_identity() {
        let lattice = LatticeSpec::square(4).unwrap();
        let mut s = PermutationState::identity(lattice.clone(), JumpEnergy::Quadratic).unwrap();
        let (x, y) = (lattice.site([1, 1]), lattice.site([2, 1]));
        s.apply_swap(x, y);
        assert_eq!(s.target(x), y);
        assert_eq!(s.target(y), x);
        assert_eq!(s.energy(), 2.0);
        s.apply_swap(x, y);
        assert_eq!(s.targets(), PermutationState::identity(lattice, JumpEnergy::Quadratic).unwrap().targets());
        assert_eq!(s.energy(), 0.0);
    }

    #[test]
    fn swap_with_itself_is_noop() {
        let mut s = random_state(4, 3);
        let before = s.clone();
        s.apply_swap(SiteIndex(5), SiteIndex(5));
        assert_eq!(s, before);
    }

    #[test]
    fn swap_energy_matches_recomputation() {
        let mut s = random_state(8, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let x = SiteIndex(rng.random_range(0..64));
            let y = SiteIndex(rng.random_range(0..64));
            s.apply_swap(x, y);
            assert!((s.energy() - s.recompute_energy()).abs() < 1e-9);
        }
        s.check_invariants().unwrap();
    }

    #[test]
    fn double_swap_is_involution() {
        let mut s = random_state(8, 2);
        let before = s.clone();
        s.apply_swap(SiteIndex(3), SiteIndex(40));
        s.apply_swap(SiteIndex(3), SiteIndex(40));
        assert_eq!(s.targets(), before.targets());
        assert!((s.energy() - before.energy()).abs() <= 1e-12);
    }

    #[test]
    fn energy_drift_over_many_swaps() {
        let mut s = random_state(16, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100_000 {
            let x = SiteIndex(rng.random_range(0..256));
            let y = SiteIndex(rng.random_range(0..256));
            s.apply_swap(x, y);
        }
        assert!((s.energy() - s.recompute_energy()).abs() <= 1e-6);
        s.check_invariants().unwrap();
    }

    #[test]
    fn decomposition_matches_naive_traversal() {
        let lattice = LatticeSpec::rectangular(crate::lattice::LatticeKind::Square, 2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let mut fwd: Vec<u32> = (0..6).collect();
            fwd.shuffle(&mut rng);
            let s = PermutationState::from_targets(lattice.clone(), JumpEnergy::Quadratic, fwd.clone()).unwrap();
            let d = s.decompose();
            for x in 0..6u32 {
                // naive: iterate pi until returning to x
                let mut k = 1;
                let mut y = fwd[x as usize];
                while y != x {
                    y = fwd[y as usize];
                    k += 1;
                }
                assert_eq!(d.cycle_len_of(SiteIndex(x)), k);
            }
            assert_eq!(d.lengths().iter().sum::<usize>(), 6);
            for c in d.cycles() {
                for j in 0..c.len() {
                    assert_eq!(fwd[c[j] as usize], c[(j + 1) % c.len()]);
                }
                assert_eq!(c[0], *c.iter().min().unwrap());
            }
        }
    }

    #[test]
    fn reverse_short_cycles_is_noop() {
        let lattice = LatticeSpec::square(4).unwrap();
        let mut s = PermutationState::identity(lattice.clone(), JumpEnergy::Quadratic).unwrap();
        s.apply_swap(lattice.site([0, 0]), lattice.site([1, 0]));
        let before = s.targets().to_vec();
        let count = s.decompose().len();
        for id in 0..count {
            let d = s.decompose();
            s.reverse_cycle(&d, id).unwrap();
        }
        assert_eq!(s.targets(), &before[..]);
    }

    #[test]
    fn stale_decomposition_rejected() {
        let mut s = random_state(4, 1);
        let d = s.decompose();
        s.apply_swap(SiteIndex(0), SiteIndex(1));
        assert!(matches!(s.reverse_cycle(&d, 0), Err(Error::StaleCycleId { .. })));
        let d = s.decompose();
        assert!(matches!(s.reverse_cycle(&d, d.len()), Err(Error::UnknownCycle { .. })));
    }

    #[test]
    fn reversal_is_involution_and_preserves_quadratic_energy() {
        let mut s = random_state(6, 21);
        let original = s.clone();
        let d = s.decompose();
        let id = d.longest();
        s.reverse_cycle(&d, id).unwrap();
        assert!((s.energy() - s.recompute_energy()).abs() < 1e-9);
        assert_eq!(s.energy(), original.energy());
        let d2 = s.decompose();
        s.reverse_cycle(&d2, d2.cycle_of(SiteIndex(d.cycle(id)[0]))).unwrap();
        assert_eq!(s.targets(), original.targets());
        s.check_invariants().unwrap();
    }

    #[test]
    fn asymmetric_reversal_updates_energy() {
        let lattice = LatticeSpec::square(5).unwrap();
        let mut table = JumpTable::new();
        table.insert([0, 0], 0.0).insert([1, 0], 1.0).insert([-1, 0], 3.0);
        let energy_fn = JumpEnergy::Tabulated(table);
        assert!(!energy_fn.is_symmetric(&lattice));
        // a row cycle moving +1 along axis 0
        let mut fwd: Vec<u32> = (0..25).collect();
        for z in 0..5i64 {
            fwd[lattice.site([z, 0]).index()] = lattice.site([z + 1, 0]).0;
        }
        let mut s = PermutationState::from_targets(lattice, energy_fn, fwd).unwrap();
        assert_eq!(s.energy(), 5.0);
        let d = s.decompose();
        s.reverse_cycle(&d, d.longest()).unwrap();
        assert_eq!(s.energy(), 15.0);
        s.check_invariants().unwrap();
    }

    #[test]
    fn from_targets_rejects_non_bijection() {
        let lattice = LatticeSpec::square(2).unwrap();
        assert!(PermutationState::from_targets(lattice.clone(), JumpEnergy::Quadratic, vec![0, 0, 1, 2]).is_err());
        assert!(PermutationState::from_targets(lattice, JumpEnergy::Quadratic, vec![0, 1, 2]).is_err());
    }

    #[test]
    fn longest_cycles_ordering() {
        // cycles: (0 1 2) (3 4 5) (6 7) (8)
        let fwd = vec![1, 2, 0, 4, 5, 3, 7, 6, 8];
        let d = CycleDecomposition::from_targets(&fwd, 0);
        assert_eq!(d.longest(), 0);
        assert_eq!(d.longest_cycles(10, 3), vec![0, 1]);
        assert_eq!(d.longest_cycles(1, 1), vec![0]);
        assert_eq!(d.longest_cycles(10, 1), vec![0, 1, 2, 3]);
    }
}
