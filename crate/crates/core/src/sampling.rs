//! Seeded sampling of indices, points and directions.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conjugacy::SolutionSample;
use crate::lin_sys::Window;

#[derive(Debug, Clone)]
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn index(&mut self, w: Window) -> i64 {
        self.rng.gen_range(w.n_min..=w.n_max)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..=hi)
    }

    /// Uniform in `[−radius, radius]^d`.
    pub fn vector(&mut self, d: usize, radius: f64) -> DVector<f64> {
        DVector::from_fn(d, |_, _| self.rng.gen_range(-radius..=radius))
    }

    pub fn points(&mut self, count: usize, w: Window, d: usize, radius: f64) -> Vec<(i64, DVector<f64>)> {
        (0..count).map(|_| (self.index(w), self.vector(d, radius))).collect()
    }

    pub fn solutions(&mut self, count: usize, w: Window, d: usize, radius: f64, span: i64) -> Vec<SolutionSample> {
        (0..count).map(|_| SolutionSample { m: self.index(w), start: self.vector(d, radius), span }).collect()
    }

    /// Triples `(n, m, ξ)` with `|n − m| ≤ max_offset` and both in `w`.
    pub fn flow_samples(
        &mut self,
        count: usize,
        w: Window,
        d: usize,
        radius: f64,
        max_offset: i64,
    ) -> Vec<(i64, i64, DVector<f64>)> {
        (0..count)
            .map(|_| {
                let m = self.index(w);
                let lo = (m - max_offset).max(w.n_min);
                let hi = (m + max_offset).min(w.n_max);
                let n = self.rng.gen_range(lo..=hi);
                (n, m, self.vector(d, radius))
            })
            .collect()
    }

    /// Nonzero directions, not normalized.
    pub fn directions(&mut self, count: usize, d: usize) -> Vec<DVector<f64>> {
        (0..count)
            .map(|_| loop {
                let v = self.vector(d, 1.0);
                if v.amax() > 1e-3 {
                    break v;
                }
            })
            .collect()
    }

    /// A forcing table over `w` with entries in `[−amplitude, amplitude]`.
    pub fn forcing(&mut self, w: Window, d: usize, amplitude: f64) -> Vec<DVector<f64>> {
        w.indices().map(|_| self.vector(d, amplitude)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let w = Window::new(-5, 5).unwrap();
        let a = Sampler::new(3).points(4, w, 2, 1.0);
        let b = Sampler::new(3).points(4, w, 2, 1.0);
        assert_eq!(a, b);
        assert_ne!(a, Sampler::new(4).points(4, w, 2, 1.0));
        for (n, m, _) in Sampler::new(1).flow_samples(50, w, 2, 1.0, 2) {
            assert!(w.contains(n) && w.contains(m) && (n - m).abs() <= 2);
        }
    }
}
