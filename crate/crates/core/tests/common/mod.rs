#![allow(dead_code)]

pub mod oracle;

use fracspde::sparse::CscMatrix;

/// Deterministic uniform stream for test fixtures.
pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407))
    }

    pub fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64) / ((1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next()
    }
}

/// Random sparse SPD: symmetric random off-diagonals plus a dominant diagonal.
pub fn random_spd(n: usize, density: f64, seed: u64) -> CscMatrix {
    let mut rng = Lcg::new(seed);
    let mut t = Vec::new();
    let mut rowsum = vec![0.0; n];
    for j in 0..n {
        for i in (j + 1)..n {
            if rng.next() < density {
                let v = rng.next() * 2.0 - 1.0;
                t.push((i, j, v));
                t.push((j, i, v));
                rowsum[i] += v.abs();
                rowsum[j] += v.abs();
            }
        }
    }
    for i in 0..n {
        t.push((i, i, rowsum[i] + 0.1 + rng.next()));
    }
    CscMatrix::from_triplets(n, n, &t).unwrap()
}

/// Random sparse matrix with the given shape and density.
pub fn random_sparse(nrows: usize, ncols: usize, density: f64, seed: u64) -> CscMatrix {
    let mut rng = Lcg::new(seed);
    let mut t = Vec::new();
    for j in 0..ncols {
        for i in 0..nrows {
            if rng.next() < density {
                t.push((i, j, rng.range(-1.0, 1.0)));
            }
        }
    }
    CscMatrix::from_triplets(nrows, ncols, &t).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Central differences of `f` at `x` with relative step `h`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let step = h * x[i].abs().max(1.0);
        xp[i] = x[i] + step;
        let fp = f(&xp);
        xp[i] = x[i] - step;
        let fm = f(&xp);
        xp[i] = x[i];
        g.push((fp - fm) / (2.0 * step));
    }
    g
}
