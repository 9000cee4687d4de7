//! Small dense and banded linear solvers.

/// Square banded matrix with `kl` sub- and `ku` super-diagonals, with room
/// for the fill that row interchanges create.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn idx(&self, r: usize, c: usize) -> usize {
        debug_assert!(c + self.kl >= r && c <= r + self.kl + self.ku);
        r * self.width + (c + self.kl - r)
    }

    /// Adds `v` at `(r, c)`; panics outside the band.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        assert!(
            c + self.kl >= r && c <= r + self.ku,
            "entry ({r}, {c}) outside the band"
        );
        let i = self.idx(r, c);
        self.data[i] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        if c + self.kl < r || c > r + self.kl + self.ku {
            0.0
        } else {
            self.data[self.idx(r, c)]
        }
    }

    /// LU factorization with partial pivoting. Returns `None` on a zero pivot.
    pub fn factor(mut self) -> Option<BandedLu> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut piv = vec![0usize; n];
        for i in 0..n {
            let last = (i + kl).min(n - 1);
            let mut p = i;
            let mut best = self.get(i, i).abs();
            for r in i + 1..=last {
                let v = self.get(r, i).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return None;
            }
            piv[i] = p;
            let cend = (i + kl + ku).min(n - 1);
            if p != i {
                for c in i..=cend {
                    let (a, b) = (self.idx(i, c), self.idx(p, c));
                    self.data.swap(a, b);
                }
            }
            let d = self.data[self.idx(i, i)];
            for r in i + 1..=last {
                let ri = self.idx(r, i);
                let f = self.data[ri] / d;
                self.data[ri] = f;
                if f == 0.0 {
                    continue;
                }
                for c in i + 1..=cend {
                    let u = self.data[self.idx(i, c)];
                    let rc = self.idx(r, c);
                    self.data[rc] -= f * u;
                }
            }
        }
        Some(BandedLu { m: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    m: BandedMatrix,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn solve(&self, b: &mut [f64]) {
        let m = &self.m;
        let n = m.n;
        assert_eq!(b.len(), n);
        for i in 0..n {
            b.swap(i, self.piv[i]);
            let bi = b[i];
            if bi != 0.0 {
                for r in i + 1..=(i + m.kl).min(n - 1) {
                    b[r] -= m.data[m.idx(r, i)] * bi;
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for c in i + 1..=(i + m.kl + m.ku).min(n - 1) {
                s -= m.data[m.idx(i, c)] * b[c];
            }
            b[i] = s / m.data[m.idx(i, i)];
        }
    }
}

/// Solves a small dense system `a x = b` (row-major `a`) by Gaussian
/// elimination with row and column scaling and partial pivoting. `None` if singular to
/// working precision.
pub fn solve_dense(n: usize, a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    // Equilibrate rows so pivoting compares like with like.
    for r in 0..n {
        let s = m[r * n..(r + 1) * n].iter().fold(0.0f64, |s, v| s.max(v.abs()));
        if s == 0.0 {
            return None;
        }
        m[r * n..(r + 1) * n].iter_mut().for_each(|v| *v /= s);
        x[r] /= s;
    }
    // Column scaling too: unknowns may live on very different scales.
    let mut cs = vec![0.0f64; n];
    for c in 0..n {
        cs[c] = (0..n).fold(0.0f64, |s, r| s.max(m[r * n + c].abs()));
        if cs[c] == 0.0 {
            return None;
        }
        (0..n).for_each(|r| m[r * n + c] /= cs[c]);
    }
    for i in 0..n {
        let p = (i..n)
            .max_by(|&r, &s| m[r * n + i].abs().total_cmp(&m[s * n + i].abs()))
            .unwrap();
        if m[p * n + i].abs() < 1e-14 {
            return None;
        }
        if p != i {
            for c in 0..n {
                m.swap(i * n + c, p * n + c);
            }
            x.swap(i, p);
        }
        for r in i + 1..n {
            let f = m[r * n + i] / m[i * n + i];
            for c in i..n {
                m[r * n + c] -= f * m[i * n + c];
            }
            x[r] -= f * x[i];
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for c in i + 1..n {
            s -= m[i * n + c] * x[c];
        }
        x[i] = s / m[i * n + i];
    }
    x.iter_mut().zip(&cs).for_each(|(v, s)| *v /= s);
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det3(m: &[f64]) -> f64 {
        m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
            + m[2] * (m[3] * m[7] - m[4] * m[6])
    }

    #[test]
    fn dense_matches_cramer() {
        let a = [2.0, -1.0, 0.5, 1e-3, 3.0, -2.0, 4.0, 0.25, 1.0];
        let b = [1.0, -2.0, 0.5];
        let x = solve_dense(3, &a, &b).unwrap();
        let d = det3(&a);
        for j in 0..3 {
            let mut aj = a;
            for r in 0..3 {
                aj[r * 3 + j] = b[r];
            }
            assert!((x[j] - det3(&aj) / d).abs() < 1e-13);
        }
    }

    #[test]
    fn dense_detects_singular() {
        let a = [1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0];
        assert!(solve_dense(3, &a, &[1.0, 2.0, 3.0]).is_none());
    }

    #[test]
    fn banded_matches_dense() {
        let n = 12;
        let (kl, ku) = (3, 2);
        let mut bm = BandedMatrix::zeros(n, kl, ku);
        let mut dense = vec![0.0; n * n];
        let mut seed = 7u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for r in 0..n {
            for c in r.saturating_sub(kl)..=(r + ku).min(n - 1) {
                // Small diagonal forces row interchanges.
                let v = if r == c { 0.01 * next() } else { next() };
                bm.add(r, c, v);
                dense[r * n + c] = v;
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let expect = solve_dense(n, &dense, &b).unwrap();
        let lu = bm.factor().unwrap();
        let mut x = b.clone();
        lu.solve(&mut x);
        for i in 0..n {
            assert!((x[i] - expect[i]).abs() < 1e-10, "{i}: {} vs {}", x[i], expect[i]);
        }
    }
}
