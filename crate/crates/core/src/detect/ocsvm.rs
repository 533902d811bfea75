use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// RBF one-class SVM in the ν parameterization.
///
/// The dual is `min ½ αᵀKα` subject to `0 ≤ α_i ≤ 1/(νn)` and `Σα = 1`;
/// only rows with `α_i > 0` are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcSvmModel {
    pub gamma: f64,
    pub nu: f64,
    pub support: Array2<f64>,
    pub coef: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    /// Maximal KKT violation at termination, in the units of
    /// [`SmoOptions::tolerance`].
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoOptions {
    /// Largest KKT violation accepted at termination, measured with the
    /// duals rescaled to sum to `νn`, which keeps it independent of `n`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SmoOptions {
    fn default() -> Self {
        SmoOptions { tolerance: 1e-4, max_iterations: 1_000_000 }
    }
}

/// `1 / (F · var)` over every entry of `x`; 1/F when the entries are constant.
pub fn default_gamma(x: ArrayView2<f64>) -> f64 {
    let f = x.ncols().max(1) as f64;
    let var = x.var(0.0);
    if var > 0.0 && var.is_finite() { 1.0 / (f * var) } else { 1.0 / f }
}

fn rbf(a: ArrayView1<f64>, b: ArrayView1<f64>, gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

pub fn fit_ocsvm(x: ArrayView2<f64>, nu: f64, gamma: f64, opts: SmoOptions) -> Result<OcSvmModel> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::config(format!("nu must lie in (0, 1], got {nu}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::config(format!("gamma must be positive, got {gamma}")));
    }
    let n = x.nrows();
    if n < 8 {
        return Err(Error::shape(format!("one-class SVM needs at least 8 training points, got {n}")));
    }
    let k = Array2::from_shape_fn((n, n), |(i, j)| rbf(x.row(i), x.row(j), gamma));
    let (alpha, rho, iterations, residual) = solve_dual(&k, nu, opts)?;
    let keep: Vec<usize> = (0..n).filter(|&i| alpha[i] > 0.0).collect();
    Ok(OcSvmModel {
        gamma,
        nu,
        support: x.select(Axis(0), &keep),
        coef: keep.iter().map(|&i| alpha[i]).collect(),
        rho,
        iterations,
        residual,
    })
}

/// SMO on a precomputed kernel matrix with second-order working-set
/// selection. Returns `(α, ρ, iterations, residual)`.
pub fn solve_dual(k: &Array2<f64>, nu: f64, opts: SmoOptions) -> Result<(Vec<f64>, f64, usize, f64)> {
    let n = k.nrows();
    let c = 1.0 / (nu * n as f64);
    let scale = nu * n as f64;
    let mut alpha = vec![0.0; n];
    let mut remaining = 1.0;
    for a in alpha.iter_mut() {
        if remaining <= 0.0 {
            break;
        }
        *a = c.min(remaining);
        remaining -= *a;
    }
    let mut g: Array1<f64> = k.dot(&Array1::from(alpha.clone()));
    let at_upper = |a: f64| a >= c * (1.0 - 1e-12);
    let mut iterations = 0;
    let residual = loop {
        // i: steepest descent candidate that can still grow.
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        for t in 0..n {
            if !at_upper(alpha[t]) && -g[t] > gmax {
                gmax = -g[t];
                i = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if alpha[t] <= 0.0 {
                continue;
            }
            gmin = gmin.min(-g[t]);
            if i == usize::MAX {
                continue;
            }
            let b = gmax + g[t];
            if b > 0.0 {
                let a = (k[[i, i]] + k[[t, t]] - 2.0 * k[[i, t]]).max(1e-12);
                let obj = -(b * b) / a;
                if obj < best {
                    best = obj;
                    j = t;
                }
            }
        }
        let gap = (gmax - gmin) * scale;
        if i == usize::MAX || j == usize::MAX || gap < opts.tolerance {
            break gap.max(0.0);
        }
        if iterations >= opts.max_iterations {
            return Err(Error::NoConvergence { iterations, residual: gap });
        }
        iterations += 1;
        let a = (k[[i, i]] + k[[j, j]] - 2.0 * k[[i, j]]).max(1e-12);
        let mut delta = (g[j] - g[i]) / a;
        delta = delta.min(c - alpha[i]).min(alpha[j]);
        alpha[i] += delta;
        alpha[j] -= delta;
        if at_upper(alpha[i]) {
            alpha[i] = c;
        }
        if alpha[j] <= c * 1e-12 {
            alpha[j] = 0.0;
        }
        for t in 0..n {
            g[t] += delta * (k[[t, i]] - k[[t, j]]);
        }
    };
    let free: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0 && !at_upper(alpha[t])).collect();
    let rho = if free.is_empty() {
        let upper = (0..n).filter(|&t| at_upper(alpha[t])).map(|t| g[t]).fold(f64::NEG_INFINITY, f64::max);
        let lower = (0..n).filter(|&t| alpha[t] <= 0.0).map(|t| g[t]).fold(f64::INFINITY, f64::min);
        match (upper.is_finite(), lower.is_finite()) {
            (true, true) => (upper + lower) / 2.0,
            (true, false) => upper,
            _ => lower,
        }
    } else {
        free.iter().map(|&t| g[t]).sum::<f64>() / free.len() as f64
    };
    Ok((alpha, rho, iterations, residual))
}

impl OcSvmModel {
    /// `Σ coef·k(x_i, x) − ρ`; non-negative inside the boundary.
    pub fn decision(&self, x: ArrayView1<f64>) -> f64 {
        let s: f64 = self.support.rows().into_iter().zip(&self.coef).map(|(sv, a)| a * rbf(sv, x, self.gamma)).sum();
        s - self.rho
    }

    pub fn score(&self, x: ArrayView1<f64>) -> f64 {
        -self.decision(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut r = rng::seeded(seed);
        Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut r))
    }

    /// Exhaustive active-set search: every α is at 0, at C or free; free
    /// values come from the equality-constrained KKT system.
    fn dense_qp(k: &Array2<f64>, c: f64) -> Vec<f64> {
        let n = k.nrows();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for code in 0..3usize.pow(n as u32) {
            let state: Vec<usize> = (0..n).map(|i| code / 3usize.pow(i as u32) % 3).collect();
            let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
            let mut alpha: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
            let fixed_sum: f64 = alpha.iter().sum();
            if free.is_empty() {
                if (fixed_sum - 1.0).abs() > 1e-12 {
                    continue;
                }
            } else {
                let m = free.len() + 1;
                let mut a = vec![vec![0.0; m + 1]; m];
                for (r, &i) in free.iter().enumerate() {
                    for (s, &j) in free.iter().enumerate() {
                        a[r][s] = k[[i, j]];
                    }
                    a[r][m - 1] = -1.0;
                    a[r][m] = -(0..n).filter(|&j| state[j] == 1).map(|j| k[[i, j]] * c).sum::<f64>();
                }
                for s in 0..free.len() {
                    a[m - 1][s] = 1.0;
                }
                a[m - 1][m] = 1.0 - fixed_sum;
                let Some(sol) = gauss(a) else { continue };
                for (s, &i) in free.iter().enumerate() {
                    alpha[i] = sol[s];
                }
                if free.iter().any(|&i| alpha[i] < -1e-12 || alpha[i] > c + 1e-12) {
                    continue;
                }
            }
            let ka: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[[i, j]] * alpha[j]).sum()).collect();
            let obj: f64 = 0.5 * (0..n).map(|i| alpha[i] * ka[i]).sum::<f64>();
            if best.as_ref().is_none_or(|(b, _)| obj < *b - 1e-15) {
                best = Some((obj, alpha));
            }
        }
        best.unwrap().1
    }

    fn gauss(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
        let m = a.len();
        for col in 0..m {
            let piv = (col..m).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
            if a[piv][col].abs() < 1e-14 {
                return None;
            }
            a.swap(col, piv);
            for r in 0..m {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for cc in col..=m {
                        a[r][cc] -= f * a[col][cc];
                    }
                }
            }
        }
        Some((0..m).map(|r| a[r][m] / a[r][r]).collect())
    }

    #[test]
    fn tiny_instances_match_dense_qp() {
        for seed in 0..20 {
            let x = gaussian(4, 2, seed);
            for nu in [0.3, 0.5, 0.8, 1.0] {
                let k = Array2::from_shape_fn((4, 4), |(i, j)| rbf(x.row(i), x.row(j), 0.7));
                let (alpha, _, _, _) = solve_dual(&k, nu, SmoOptions { tolerance: 1e-13, max_iterations: 100_000 }).unwrap();
                let oracle = dense_qp(&k, 1.0 / (nu * 4.0));
                for (a, o) in alpha.iter().zip(&oracle) {
                    assert!((a - o).abs() < 1e-6, "seed {seed} nu {nu}: {alpha:?} vs {oracle:?}");
                }
            }
        }
    }

    #[test]
    fn dual_feasibility_and_nu_bound() {
        let x = gaussian(1000, 2, 4);
        let nu = 0.05;
        let m = fit_ocsvm(x.view(), nu, default_gamma(x.view()), SmoOptions::default()).unwrap();
        let c = 1.0 / (nu * 1000.0);
        assert!((m.coef.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        assert!(m.coef.iter().all(|&a| a > 0.0 && a <= c + 1e-12));
        let outside = x.rows().into_iter().filter(|r| m.score(*r) > 0.0).count();
        assert!(outside as f64 / 1000.0 <= nu + 0.02, "{outside}");
        assert!(m.residual < 1e-4);
    }

    #[test]
    fn identical_points_are_inside() {
        let x = Array2::from_elem((10, 3), 0.5);
        let m = fit_ocsvm(x.view(), 0.1, 1.0, SmoOptions::default()).unwrap();
        assert!(m.score(x.row(0)) <= 1e-12);
    }

    #[test]
    fn argument_checks() {
        let x = gaussian(20, 2, 1);
        assert!(fit_ocsvm(x.view(), 0.0, 1.0, SmoOptions::default()).is_err());
        assert!(fit_ocsvm(x.view(), 1.5, 1.0, SmoOptions::default()).is_err());
        assert!(fit_ocsvm(x.slice(ndarray::s![..5, ..]), 0.5, 1.0, SmoOptions::default()).is_err());
        let err = fit_ocsvm(x.view(), 0.5, 1.0, SmoOptions { tolerance: 1e-12, max_iterations: 1 }).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { .. }));
    }
}
