//! Complex linear solvers for the implicit time step: a banded LU with
//! partial pivoting and a restarted, matrix-free GMRES.

use crate::error::{Error, Result};
use crate::prelude::*;

/// A square band matrix with `kl` sub- and `ku` super-diagonals, factored in
/// place. Row `i` stores columns `i−kl ..= i+kl+ku` so the fill created by row
/// interchanges fits.
#[derive(Debug, Clone)]
pub(crate) struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl BandMatrix {
    pub(crate) fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![ZERO; n * width],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    /// Adds `v` at `(i, j)`; `j` must lie in the original band.
    pub(crate) fn add(&mut self, i: usize, j: usize, v: Complex64) {
        debug_assert!(j + self.kl >= i && j <= i + self.ku);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// `y = A x` for the unfactored matrix.
    #[cfg(test)]
    pub(crate) fn mul(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.idx(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// LU factorization with row partial pivoting.
    pub(crate) fn factor(mut self) -> Result<BandLu> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut pivots = vec![0usize; n];
        let mut lower = vec![ZERO; n * kl.max(1)];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].norm();
            for i in k + 1..=last {
                let v = self.data[self.idx(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::SingularMatrix(k));
            }
            pivots[k] = p;
            let right = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=right {
                    let (a, b) = (self.idx(k, j), self.idx(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            for i in k + 1..=last {
                let ik = self.idx(i, k);
                let factor = self.data[ik] / pivot;
                self.data[ik] = ZERO;
                lower[k * kl + (i - k - 1)] = factor;
                if factor == ZERO {
                    continue;
                }
                for j in k + 1..=right {
                    let kj = self.data[self.idx(k, j)];
                    let ij = self.idx(i, j);
                    self.data[ij] -= factor * kj;
                }
            }
        }
        Ok(BandLu {
            band: self,
            lower,
            pivots,
        })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BandLu {
    band: BandMatrix,
    lower: Vec<Complex64>,
    pivots: Vec<usize>,
}

impl BandLu {
    pub(crate) fn solve_in_place(&self, b: &mut [Complex64]) {
        let BandMatrix { n, kl, ku, .. } = self.band;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk == ZERO {
                continue;
            }
            for i in k + 1..=(k + kl).min(n - 1) {
                b[i] -= self.lower[k * kl + (i - k - 1)] * bk;
            }
        }
        for k in (0..n).rev() {
            let right = (k + kl + ku).min(n - 1);
            let mut acc = b[k];
            for j in k + 1..=right {
                acc -= self.band.data[self.band.idx(k, j)] * b[j];
            }
            b[k] = acc / self.band.data[self.band.idx(k, k)];
        }
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct GmresOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Restarted GMRES for `A x = b` from the initial guess in `x`.
pub(crate) fn gmres(
    apply: &mut dyn FnMut(&[Complex64], &mut [Complex64]),
    b: &[Complex64],
    x: &mut [Complex64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<GmresOutcome> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = ZERO);
        return Ok(GmresOutcome {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut work = vec![ZERO; n];
    let mut total = 0usize;
    let mut residual;
    loop {
        apply(x, &mut work);
        let r: Vec<Complex64> = b.iter().zip(&work).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        residual = beta / bnorm;
        if residual <= tol {
            return Ok(GmresOutcome {
                iterations: total,
                relative_residual: residual,
            });
        }
        if total >= max_iter {
            return Err(Error::SolverDiverged {
                iterations: total,
                residual,
            });
        }
        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(restart + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        // Hessenberg columns after rotation, stored column-wise.
        let mut h: Vec<Vec<Complex64>> = Vec::with_capacity(restart);
        let mut cs: Vec<f64> = Vec::with_capacity(restart);
        let mut sn: Vec<Complex64> = Vec::with_capacity(restart);
        let mut g = vec![ZERO; restart + 1];
        g[0] = Complex64::new(beta, 0.0);
        let mut steps = 0;
        for j in 0..restart {
            apply(&basis[j], &mut work);
            let mut w = work.clone();
            let mut col = vec![ZERO; j + 2];
            for pass in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(v, &w);
                    col[i] += c;
                    for (wk, vk) in w.iter_mut().zip(v) {
                        *wk -= c * vk;
                    }
                }
                if pass == 0 && norm(&w) > 0.5 * norm(&work) {
                    break;
                }
            }
            let hn = norm(&w);
            col[j + 1] = Complex64::new(hn, 0.0);
            for i in 0..j {
                let (a, b2) = (col[i], col[i + 1]);
                col[i] = cs[i] * a + sn[i] * b2;
                col[i + 1] = -sn[i].conj() * a + cs[i] * b2;
            }
            let (a, b2) = (col[j], col[j + 1]);
            let nu = (a.norm_sqr() + b2.norm_sqr()).sqrt();
            let (c, s) = if a.norm() == 0.0 {
                (0.0, Complex64::new(1.0, 0.0))
            } else {
                (a.norm() / nu, (a / a.norm()) * b2.conj() / nu)
            };
            col[j] = c * a + s * b2;
            col[j + 1] = ZERO;
            cs.push(c);
            sn.push(s);
            g[j + 1] = -s.conj() * g[j];
            g[j] *= c;
            h.push(col);
            steps = j + 1;
            total += 1;
            let est = g[j + 1].norm() / bnorm;
            if est <= tol * 0.5 || hn == 0.0 || total >= max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        let mut yv = vec![ZERO; steps];
        for i in (0..steps).rev() {
            let mut acc = g[i];
            for k in i + 1..steps {
                acc -= h[k][i] * yv[k];
            }
            yv[i] = acc / h[i][i];
        }
        for (k, coef) in yv.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&basis[k]) {
                *xi += coef * vi;
            }
        }
    }
}
