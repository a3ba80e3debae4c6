//! Periodic two-dimensional lattices.
//!
//! Sites live on the torus `Z_{L0} x Z_{L1}` in lattice coordinates. A site
//! `(z0, z1)` with `0 <= zi < Li` has index `z0 + L0 * z1`. Differences are
//! taken componentwise with representatives in `[-Li/2, Li/2)` and only then
//! mapped through the basis, so for the triangular lattice a long jump is not
//! necessarily the shortest Euclidean image.

use std::fmt;

use crate::error::{Error, Result};

/// Nearest-neighbor spacing of the triangular lattice with unit point density.
pub fn triangular_spacing() -> f64 {
    (4.0f64 / 3.0).powf(0.25)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LatticeKind {
    Square,
    Triangular,
}

impl LatticeKind {
    pub fn name(self) -> &'static str {
        match self {
            LatticeKind::Square => "square",
            LatticeKind::Triangular => "triangular",
        }
    }

    /// Number of nearest neighbors of a site on a large enough torus.
    pub fn coordination(self) -> usize {
        match self {
            LatticeKind::Square => 4,
            LatticeKind::Triangular => 6,
        }
    }
}

impl fmt::Display for LatticeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LatticeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(LatticeKind::Square),
            "triangular" => Ok(LatticeKind::Triangular),
            other => Err(Error::InvalidLattice(format!("unknown lattice kind '{other}'"))),
        }
    }
}

/// Index of a lattice site in `[0, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(transparent)]
pub struct SiteIndex(pub u32);

impl SiteIndex {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for SiteIndex {
    fn from(i: usize) -> Self {
        SiteIndex(i as u32)
    }
}

/// Periodic difference between two sites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpVector {
    /// Lattice-coordinate representative, each component in `[-Li/2, Li/2)`.
    pub dz: [i32; 2],
    /// Euclidean vector `dz0 * v0 + dz1 * v1`.
    pub r: [f64; 2],
    /// Squared Euclidean length of `r`.
    pub len2: f64,
}

impl JumpVector {
    pub fn len(&self) -> f64 {
        self.len2.sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.dz == [0, 0]
    }
}

/// `(z - w)_per` for a single axis of length `l`.
///
/// Inputs may be any integers; they are reduced modulo `l` first. The result
/// lies in `[-l/2, l/2)`, so for even `l` the value `-l/2` is its own negative.
pub fn periodic_diff(z: i64, w: i64, l: i64) -> Result<i64> {
    if l <= 0 {
        return Err(Error::InvalidLattice(format!("side length must be positive, got {l}")));
    }
    Ok(reduce(z - w, l))
}

#[inline]
fn reduce(d: i64, l: i64) -> i64 {
    let r = d.rem_euclid(l);
    if 2 * r >= l {
        r - l
    } else {
        r
    }
}

const SQUARE_OFFSETS: [[i32; 2]; 2] = [[1, 0], [0, 1]];
const TRIANGULAR_OFFSETS: [[i32; 2]; 3] = [[1, 0], [0, 1], [1, -1]];

/// Geometry of a periodic square or triangular lattice.
///
/// Immutable after construction; cheap to clone.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSpec {
    kind: LatticeKind,
    extents: [u32; 2],
    basis: [[f64; 2]; 2],
    /// `len2 = scale * (a*dz0^2 + b*dz0*dz1 + c*dz1^2)` with integer form `[a, b, c]`.
    len2_scale: f64,
    form: [i64; 3],
    /// `floor(2^64 / L0) + 1`, for division-free coordinate decoding.
    div_magic: u64,
}

impl LatticeSpec {
    /// An `L x L` torus.
    pub fn new(kind: LatticeKind, side: usize) -> Result<Self> {
        Self::rectangular(kind, side, side)
    }

    pub fn square(side: usize) -> Result<Self> {
        Self::new(LatticeKind::Square, side)
    }

    pub fn triangular(side: usize) -> Result<Self> {
        Self::new(LatticeKind::Triangular, side)
    }

    /// An `L0 x L1` torus. Both extents must be at least 2.
    pub fn rectangular(kind: LatticeKind, l0: usize, l1: usize) -> Result<Self> {
        for l in [l0, l1] {
            if l < 2 {
                return Err(Error::InvalidLattice(format!("side length must be at least 2, got {l}")));
            }
        }
        if (l0 as u64) * (l1 as u64) > (i32::MAX / 2) as u64 {
            return Err(Error::InvalidLattice(format!("{l0}x{l1} torus has too many sites")));
        }
        let (basis, len2_scale, form) = match kind {
            LatticeKind::Square => ([[1.0, 0.0], [0.0, 1.0]], 1.0, [1, 0, 1]),
            LatticeKind::Triangular => {
                let s = triangular_spacing();
                (
                    [[s, 0.0], [s / 2.0, s * 3f64.sqrt() / 2.0]],
                    s * s,
                    [1, 1, 1],
                )
            }
        };
        Ok(LatticeSpec {
            kind,
            extents: [l0 as u32, l1 as u32],
            basis,
            len2_scale,
            form,
            div_magic: u64::MAX / l0 as u64 + 1,
        })
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    pub fn extents(&self) -> [usize; 2] {
        [self.extents[0] as usize, self.extents[1] as usize]
    }

    /// Side length when the torus is `L x L`.
    pub fn side(&self) -> Option<usize> {
        (self.extents[0] == self.extents[1]).then_some(self.extents[0] as usize)
    }

    pub fn n_sites(&self) -> usize {
        self.extents[0] as usize * self.extents[1] as usize
    }

    pub fn basis(&self) -> [[f64; 2]; 2] {
        self.basis
    }

    /// Euclidean distance between nearest neighbors.
    pub fn spacing(&self) -> f64 {
        self.len2_scale.sqrt()
    }

    /// Lattice coordinates of a site, each in `[0, Li)`.
    #[inline]
    pub fn coords(&self, site: SiteIndex) -> [i64; 2] {
        let [a, b] = self.coords_u32(site);
        [a as i64, b as i64]
    }

    #[inline]
    pub(crate) fn coords_u32(&self, site: SiteIndex) -> [u32; 2] {
        let l0 = self.extents[0];
        let q = if l0.is_power_of_two() {
            site.0 >> l0.trailing_zeros()
        } else {
            ((self.div_magic as u128 * site.0 as u128) >> 64) as u32
        };
        [site.0 - q * l0, q]
    }

    /// Periodic difference of two coordinate pairs already in `[0, Li)`.
    #[inline]
    pub(crate) fn diff_coords(&self, a: [u32; 2], b: [u32; 2]) -> [i32; 2] {
        #[inline(always)]
        fn wrap(d: i32, l: i32) -> i32 {
            let d = if d < 0 { d + l } else { d };
            if 2 * d >= l {
                d - l
            } else {
                d
            }
        }
        [
            wrap(a[0] as i32 - b[0] as i32, self.extents[0] as i32),
            wrap(a[1] as i32 - b[1] as i32, self.extents[1] as i32),
        ]
    }

    /// Site with the given lattice coordinates, reduced modulo the extents.
    #[inline]
    pub fn site(&self, z: [i64; 2]) -> SiteIndex {
        let l0 = self.extents[0] as i64;
        let l1 = self.extents[1] as i64;
        let a = z[0].rem_euclid(l0);
        let b = z[1].rem_euclid(l1);
        SiteIndex((a + l0 * b) as u32)
    }

    pub fn check_site(&self, site: SiteIndex) -> Result<()> {
        if site.index() < self.n_sites() {
            Ok(())
        } else {
            Err(Error::SiteOutOfRange { index: site.index(), sites: self.n_sites() })
        }
    }

    /// Componentwise periodic difference `(x - y)_per` in lattice coordinates.
    #[inline]
    pub fn diff(&self, x: SiteIndex, y: SiteIndex) -> [i32; 2] {
        self.diff_coords(self.coords_u32(x), self.coords_u32(y))
    }

    /// Squared Euclidean length of a lattice-coordinate displacement.
    #[inline]
    pub fn len2(&self, dz: [i32; 2]) -> f64 {
        let (a, b) = (dz[0] as i64, dz[1] as i64);
        let q = self.form[0] * a * a + self.form[1] * a * b + self.form[2] * b * b;
        self.len2_scale * q as f64
    }

    pub fn vector(&self, dz: [i32; 2]) -> [f64; 2] {
        let (a, b) = (dz[0] as f64, dz[1] as f64);
        [
            a * self.basis[0][0] + b * self.basis[1][0],
            a * self.basis[0][1] + b * self.basis[1][1],
        ]
    }

    /// The jump `(x - y)_per`.
    pub fn jump(&self, x: SiteIndex, y: SiteIndex) -> JumpVector {
        let dz = self.diff(x, y);
        JumpVector { dz, r: self.vector(dz), len2: self.len2(dz) }
    }

    /// Euclidean position of a site inside the fundamental cell.
    pub fn position(&self, site: SiteIndex) -> [f64; 2] {
        let z = self.coords(site);
        self.vector([z[0] as i32, z[1] as i32])
    }

    /// One representative per neighbor direction; the others are their negatives.
    pub fn neighbor_offsets(&self) -> &'static [[i32; 2]] {
        match self.kind {
            LatticeKind::Square => &SQUARE_OFFSETS,
            LatticeKind::Triangular => &TRIANGULAR_OFFSETS,
        }
    }

    /// Whether a (reduced) displacement connects nearest neighbors.
    pub fn is_neighbor_jump(&self, dz: [i32; 2]) -> bool {
        let l = [self.extents[0] as i64, self.extents[1] as i64];
        self.neighbor_offsets().iter().any(|o| {
            [1i64, -1].iter().any(|&sign| {
                let r = [
                    reduce(sign * o[0] as i64, l[0]) as i32,
                    reduce(sign * o[1] as i64, l[1]) as i32,
                ];
                r == dz
            })
        })
    }

    /// All neighbors of a site, one per direction. On extent-2 axes the
    /// forward and backward neighbor coincide and appear twice.
    pub fn neighbors(&self, site: SiteIndex) -> Vec<SiteIndex> {
        let z = self.coords(site);
        let mut out = Vec::with_capacity(2 * self.neighbor_offsets().len());
        for o in self.neighbor_offsets() {
            for sign in [1i64, -1] {
                out.push(self.site([z[0] + sign * o[0] as i64, z[1] + sign * o[1] as i64]));
            }
        }
        out
    }

    /// Distinct unordered nearest-neighbor pairs, each as `(min, max)`, sorted.
    ///
    /// On tori with every extent at least 3 there are `2N` (square) or `3N`
    /// (triangular) pairs. Coinciding multi-edges on extent-2 axes collapse.
    pub fn neighbor_pairs(&self) -> Vec<(SiteIndex, SiteIndex)> {
        let n = self.n_sites();
        let mut pairs = Vec::with_capacity(n * self.neighbor_offsets().len());
        for i in 0..n {
            let x = SiteIndex(i as u32);
            let z = self.coords(x);
            for o in self.neighbor_offsets() {
                let y = self.site([z[0] + o[0] as i64, z[1] + o[1] as i64]);
                if x != y {
                    pairs.push((x.min(y), x.max(y)));
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_diff_examples() {
        assert_eq!(periodic_diff(4, -3, 10).unwrap(), -3);
        assert_eq!(periodic_diff(0, 0, 10).unwrap(), 0);
        assert!(periodic_diff(1, 0, 0).is_err());
        assert!(periodic_diff(1, 0, -4).is_err());
    }

    #[test]
    fn periodic_diff_exhaustive_small_sides() {
        for l in 2i64..=9 {
            for z in -l..l {
                for w in -l..l {
                    let d = periodic_diff(z, w, l).unwrap();
                    assert_eq!((d - (z - w)).rem_euclid(l), 0);
                    assert!(2 * d >= -l && 2 * d < l, "l={l} z={z} w={w} d={d}");
                }
            }
        }
    }

    #[test]
    fn antisymmetry_away_from_boundary() {
        for l in 2i64..=9 {
            for z in 0..l {
                for w in 0..l {
                    let d = periodic_diff(z, w, l).unwrap();
                    if 2 * d != -l {
                        assert_eq!(d, -periodic_diff(w, z, l).unwrap());
                    } else {
                        // the boundary representative is its own negative
                        assert_eq!(periodic_diff(w, z, l).unwrap(), d);
                    }
                }
            }
        }
    }

    #[test]
    fn jump_examples() {
        let sq = LatticeSpec::square(10).unwrap();
        let j = sq.jump(sq.site([0, 0]), sq.site([1, 0]));
        assert_eq!(j.dz, [-1, 0]);
        assert_eq!(j.len2, 1.0);
        let j = sq.jump(sq.site([0, 0]), sq.site([9, 0]));
        assert_eq!(j.dz, [1, 0]);
        assert_eq!(j.len2, 1.0);

        let tri = LatticeSpec::triangular(10).unwrap();
        let j = tri.jump(tri.site([0, 0]), tri.site([1, 0]));
        assert!((j.len2 - (4.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((j.len2 - 1.154700).abs() < 1e-6);
    }

    #[test]
    fn triangular_basis_has_unit_density() {
        let tri = LatticeSpec::triangular(4).unwrap();
        let [v0, v1] = tri.basis();
        let area = (v0[0] * v1[1] - v0[1] * v1[0]).abs();
        assert!((area - 1.0).abs() < 1e-14);
    }

    #[test]
    fn neighbor_pair_counts() {
        assert_eq!(LatticeSpec::square(4).unwrap().neighbor_pairs().len(), 32);
        assert_eq!(LatticeSpec::triangular(4).unwrap().neighbor_pairs().len(), 48);
        // forward and backward neighbors coincide at L = 2
        assert_eq!(LatticeSpec::square(2).unwrap().neighbor_pairs().len(), 4);
        // on the 2x2 triangular torus every pair of sites is adjacent
        assert_eq!(LatticeSpec::triangular(2).unwrap().neighbor_pairs().len(), 6);
        let r = LatticeSpec::rectangular(LatticeKind::Square, 2, 3).unwrap();
        assert_eq!(r.neighbor_pairs().len(), 9);
    }

    #[test]
    fn neighbor_pairs_are_unit_distance() {
        for spec in [LatticeSpec::square(5).unwrap(), LatticeSpec::triangular(5).unwrap()] {
            for (x, y) in spec.neighbor_pairs() {
                let j = spec.jump(x, y);
                assert!((j.len() - spec.spacing()).abs() < 1e-12);
                assert!(spec.is_neighbor_jump(j.dz));
            }
        }
    }

    #[test]
    fn neighbor_vectors_sum_to_zero() {
        for spec in [LatticeSpec::square(6).unwrap(), LatticeSpec::triangular(7).unwrap()] {
            for i in 0..spec.n_sites() {
                let x = SiteIndex(i as u32);
                let nb = spec.neighbors(x);
                assert_eq!(nb.len(), spec.kind().coordination());
                let mut s = [0.0, 0.0];
                for y in nb {
                    let j = spec.jump(y, x);
                    s[0] += j.r[0];
                    s[1] += j.r[1];
                }
                assert!(s[0].abs() < 1e-12 && s[1].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn encode_decode_bijection() {
        for l in 2..=16 {
            for kind in [LatticeKind::Square, LatticeKind::Triangular] {
                let spec = LatticeSpec::new(kind, l).unwrap();
                let mut seen = vec![false; spec.n_sites()];
                for i in 0..spec.n_sites() {
                    let z = spec.coords(SiteIndex(i as u32));
                    assert!(z[0] >= 0 && z[0] < l as i64 && z[1] >= 0 && z[1] < l as i64);
                    let back = spec.site(z);
                    assert_eq!(back.index(), i);
                    assert!(!seen[i]);
                    seen[i] = true;
                }
            }
        }
    }

    #[test]
    fn fast_coords_match_division() {
        for (l0, l1) in [(3usize, 5usize), (7, 2), (1000, 1000), (999, 4), (64, 3)] {
            let spec = LatticeSpec::rectangular(LatticeKind::Square, l0, l1).unwrap();
            for i in (0..spec.n_sites()).step_by(1 + spec.n_sites() / 5000) {
                let i = i as u32;
                assert_eq!(spec.coords_u32(SiteIndex(i)), [i % l0 as u32, i / l0 as u32]);
            }
        }
    }

    #[test]
    fn rejects_small_sides() {
        assert!(LatticeSpec::square(1).is_err());
        assert!(LatticeSpec::square(0).is_err());
        assert!(LatticeSpec::rectangular(LatticeKind::Square, 3, 1).is_err());
    }

    #[test]
    fn len2_symmetric_for_odd_sides() {
        let spec = LatticeSpec::triangular(7).unwrap();
        for i in 0..spec.n_sites() {
            for j in 0..spec.n_sites() {
                let (x, y) = (SiteIndex(i as u32), SiteIndex(j as u32));
                assert_eq!(spec.jump(x, y).len2, spec.jump(y, x).len2);
            }
        }
    }
}
