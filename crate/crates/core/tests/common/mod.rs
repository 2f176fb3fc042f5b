//! Helpers shared by the integration tests.

#![allow(dead_code)]

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// `W dt` of the reference grids: a multiple of pi, at least 20.
pub const W_DT: f64 = 7.0 * std::f64::consts::PI;

/// Bogoliubov map `(C, S)` of `a = C b + S b^dagger`.
pub type Map = (Array2<C64>, Array2<C64>);

fn identity(n: usize) -> Map {
    (Array2::from_diag(&ndarray::Array1::from_elem(n, C64::new(1.0, 0.0))), Array2::zeros((n, n)))
}

/// `outer` after `inner`: `a'' = C2 a' + S2 a'^dagger` with `a' = C1 b + S1 b^dagger`.
pub fn compose(outer: &Map, inner: &Map) -> Map {
    let (c2, s2) = outer;
    let (c1, s1) = inner;
    let c1c = c1.mapv(|z| z.conj());
    let s1c = s1.mapv(|z| z.conj());
    (c2.dot(c1) + s2.dot(&s1c), c2.dot(s1) + s2.dot(&c1c))
}

/// Random Gaussian unitary on `n` modes: beamsplitters with phases and
/// two-mode squeezers on random pairs.
pub fn random_map(n: usize, layers: usize, seed: u64) -> Map {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut map = identity(n);
    for _ in 0..layers {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let (mut c, mut s) = identity(n);
        let phase = C64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU));
        if rng.gen_bool(0.5) {
            let t: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            c[[i, i]] = C64::new(t.cos(), 0.0);
            c[[i, j]] = phase * t.sin();
            c[[j, i]] = -phase.conj() * t.sin();
            c[[j, j]] = C64::new(t.cos(), 0.0);
        } else {
            let r: f64 = rng.gen_range(0.0..0.8);
            c[[i, i]] = C64::new(r.cosh(), 0.0);
            c[[j, j]] = C64::new(r.cosh(), 0.0);
            s[[i, j]] = phase * r.sinh();
            s[[j, i]] = phase * r.sinh();
        }
        map = compose(&(c, s), &map);
    }
    map
}

/// Truncated Fock space of `modes` modes with `levels` levels each.
pub struct Fock {
    pub modes: usize,
    pub levels: usize,
}

impl Fock {
    pub fn dim(&self) -> usize {
        self.levels.pow(self.modes as u32)
    }

    fn digit(&self, idx: usize, mode: usize) -> usize {
        (idx / self.levels.pow(mode as u32)) % self.levels
    }

    pub fn vacuum(&self) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); self.dim()];
        v[0] = C64::new(1.0, 0.0);
        v
    }

    fn lower(&self, v: &[C64], mode: usize) -> Vec<C64> {
        let step = self.levels.pow(mode as u32);
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        for (idx, &amp) in v.iter().enumerate() {
            let n = self.digit(idx, mode);
            if n > 0 && amp != C64::new(0.0, 0.0) {
                out[idx - step] += amp * (n as f64).sqrt();
            }
        }
        out
    }

    fn raise(&self, v: &[C64], mode: usize) -> Vec<C64> {
        let step = self.levels.pow(mode as u32);
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        for (idx, &amp) in v.iter().enumerate() {
            let n = self.digit(idx, mode);
            if amp != C64::new(0.0, 0.0) {
                assert!(n + 1 < self.levels, "truncation reached");
                out[idx + step] += amp * ((n + 1) as f64).sqrt();
            }
        }
        out
    }

    /// Applies output annihilator `a_i = sum_l C_il b_l + S_il b_l^dagger`.
    pub fn apply_output(&self, map: &Map, i: usize, v: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        for l in 0..self.modes {
            let (c, s) = (map.0[[i, l]], map.1[[i, l]]);
            for (o, x) in out.iter_mut().zip(self.lower(v, l)) {
                *o += c * x;
            }
            for (o, x) in out.iter_mut().zip(self.raise(v, l)) {
                *o += s * x;
            }
        }
        out
    }

    /// `<0| a_i^dagger a_j^dagger a_j a_i |0>` by explicit state vectors.
    pub fn normally_ordered_pair(&self, map: &Map, i: usize, j: usize) -> f64 {
        let psi = self.apply_output(map, j, &self.apply_output(map, i, &self.vacuum()));
        psi.iter().map(|z| z.norm_sqr()).sum()
    }
}
