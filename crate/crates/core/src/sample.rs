//! Deterministic sampling utilities.
//!
//! All randomized procedures in the crate draw from a seeded ChaCha8
//! stream through these helpers. The uniform and Gaussian constructions
//! are fixed here rather than delegated to a distributions crate so that
//! artifacts remain byte-identical across dependency upgrades.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Seeded deterministic RNG used throughout the toolkit.
pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn seed(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Derive an independent stream for a sub-task.
    pub fn derive(&self, stream: u64) -> Self {
        let mut r = ChaCha8Rng::from_seed(self.0.get_seed());
        r.set_stream(stream);
        Rng(r)
    }

    /// Uniform in `[0, 1)` with 53-bit resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi]`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box-Muller.
    pub fn gaussian(&mut self) -> f64 {
        // guard against ln(0)
        let u1 = ((self.0.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform();
        crate::math::sqrt(-2.0 * crate::math::ln(u1))
            * crate::math::cos(2.0 * core::f64::consts::PI * u2)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Fisher-Yates shuffle of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = (self.0.next_u64() % (i as u64 + 1)) as usize;
            idx.swap(i, j);
        }
        idx
    }
}

/// Axis-aligned box in arbitrary dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Box_ {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Box_ {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        assert!(
            lower
                .iter()
                .zip(&upper)
                .all(|(l, u)| l.is_finite() && u.is_finite() && l <= u),
            "box bounds must be finite with lower <= upper"
        );
        Box_ { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .enumerate()
                .all(|(i, &v)| self.lower[i] <= v && v <= self.upper[i])
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| rng.range(l, u))
            .collect()
    }

    /// Concatenate two boxes.
    pub fn concat(&self, other: &Box_) -> Box_ {
        let mut lower = self.lower.clone();
        lower.extend_from_slice(&other.lower);
        let mut upper = self.upper.clone();
        upper.extend_from_slice(&other.upper);
        Box_ { lower, upper }
    }
}

/// Latin hypercube sample of `n` points in the box: each axis is split
/// into `n` strata and every stratum is hit exactly once.
pub fn latin_hypercube(bx: &Box_, n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let d = bx.dim();
    if n == 0 || d == 0 {
        return Vec::new();
    }
    let mut points = vec![vec![0.0; d]; n];
    for axis in 0..d {
        let perm = rng.permutation(n);
        let (lo, hi) = (bx.lower[axis], bx.upper[axis]);
        let width = (hi - lo) / n as f64;
        for (i, &stratum) in perm.iter().enumerate() {
            let jitter = rng.uniform();
            points[i][axis] = lo + (stratum as f64 + jitter) * width;
        }
    }
    points
}

/// Iterate a full grid with `per_axis` points per axis (inclusive
/// endpoints), lexicographic order. Calls `f` for each point.
pub fn grid_foreach(bx: &Box_, per_axis: usize, mut f: impl FnMut(&[f64])) {
    let d = bx.dim();
    assert!(per_axis >= 1);
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0; d];
    let coord = |axis: usize, i: usize| {
        if per_axis == 1 {
            0.5 * (bx.lower[axis] + bx.upper[axis])
        } else {
            bx.lower[axis]
                + (bx.upper[axis] - bx.lower[axis]) * i as f64 / (per_axis - 1) as f64
        }
    };
    loop {
        for a in 0..d {
            point[a] = coord(a, idx[a]);
        }
        f(&point);
        // odometer increment
        let mut a = d;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < per_axis {
                break;
            }
            idx[a] = 0;
        }
    }
}

/// Iterate all `2^d` vertices of the box, lexicographic in axis bits.
pub fn vertices_foreach(bx: &Box_, mut f: impl FnMut(&[f64])) {
    let d = bx.dim();
    assert!(d <= 30, "vertex enumeration limited to 30 axes");
    let mut point = vec![0.0; d];
    for mask in 0..(1u64 << d) {
        for a in 0..d {
            point[a] = if mask >> a & 1 == 1 {
                bx.upper[a]
            } else {
                bx.lower[a]
            };
        }
        f(&point);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_streams() {
        let mut a = Rng::seed(7);
        let mut b = Rng::seed(7);
        for _ in 0..100 {
            assert_eq!(a.uniform(), b.uniform());
        }
    }

    #[test]
    fn lhs_stratification() {
        let bx = Box_::new(vec![0.0, -1.0], vec![1.0, 1.0]);
        let mut rng = Rng::seed(3);
        let pts = latin_hypercube(&bx, 8, &mut rng);
        assert_eq!(pts.len(), 8);
        // every stratum of axis 0 hit exactly once
        let mut seen = [false; 8];
        for p in &pts {
            assert!(bx.contains(p));
            let s = (p[0] * 8.0) as usize;
            assert!(!seen[s.min(7)]);
            seen[s.min(7)] = true;
        }
    }

    #[test]
    fn grid_and_vertices_counts() {
        let bx = Box_::new(vec![0.0, 0.0], vec![1.0, 2.0]);
        let mut n = 0;
        grid_foreach(&bx, 5, |_| n += 1);
        assert_eq!(n, 25);
        let mut v = 0;
        vertices_foreach(&bx, |p| {
            assert!(bx.contains(p));
            v += 1;
        });
        assert_eq!(v, 4);
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = Rng::seed(11);
        let n = 20000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z = rng.gaussian();
            s += z;
            s2 += z * z;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
