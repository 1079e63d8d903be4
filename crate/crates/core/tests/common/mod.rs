//! Reference implementations used as oracles by the integration tests and
//! the acceptance suite. Nothing here calls into the library's numerics.
#![allow(dead_code)]

use catalytic::{Dataset, RngStream};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    RngStream::new(seed).rng()
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

/// `n × p` design whose first column is the intercept.
pub fn design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, j| if j == 0 { 1.0 } else { normal(rng) })
}

pub fn names(p: usize) -> Vec<String> {
    (0..p)
        .map(|j| if j == 0 { catalytic::INTERCEPT.to_owned() } else { format!("x{j}") })
        .collect()
}

pub fn ref_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn ref_log1pexp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

pub fn bernoulli_data(rng: &mut ChaCha8Rng, n: usize, p: usize, beta: &[f64]) -> Dataset {
    let x = design(rng, n, p);
    let y = DVector::from_fn(n, |i, _| {
        let eta: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum();
        if rng.random::<f64>() < ref_sigmoid(eta) { 1.0 } else { 0.0 }
    });
    Dataset::new(x, y, names(p)).unwrap()
}

/// Rows of `(x, y, w)` gathered from one or more datasets.
pub struct Rows {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
}

impl Rows {
    pub fn from(sets: &[&Dataset]) -> Self {
        let mut r = Rows { x: vec![], y: vec![], w: vec![] };
        for d in sets {
            for i in 0..d.n() {
                r.x.push(d.covariates().row(i).iter().copied().collect());
                r.y.push(d.response()[i]);
                r.w.push(d.weights()[i]);
            }
        }
        r
    }

    fn eta(&self, i: usize, b: &[f64]) -> f64 {
        self.x[i].iter().zip(b).map(|(a, c)| a * c).sum()
    }

    /// Weighted gaussian log density (up to a constant) and its gradient.
    pub fn gaussian(&self, b: &[f64], sigma: f64) -> (f64, Vec<f64>) {
        let mut f = 0.0;
        let mut g = vec![0.0; b.len()];
        for i in 0..self.y.len() {
            let r = self.y[i] - self.eta(i, b);
            f -= self.w[i] * r * r / (2.0 * sigma * sigma);
            for j in 0..b.len() {
                g[j] += self.w[i] * r * self.x[i][j] / (sigma * sigma);
            }
        }
        (f, g)
    }

    /// Weighted logistic log-likelihood and its gradient.
    pub fn logistic(&self, b: &[f64]) -> (f64, Vec<f64>) {
        let mut f = 0.0;
        let mut g = vec![0.0; b.len()];
        for i in 0..self.y.len() {
            let e = self.eta(i, b);
            f += self.w[i] * (self.y[i] * e - ref_log1pexp(e));
            let r = self.y[i] - ref_sigmoid(e);
            for j in 0..b.len() {
                g[j] += self.w[i] * r * self.x[i][j];
            }
        }
        (f, g)
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// BFGS maximization with Armijo backtracking. `fg` returns the objective
/// and its gradient.
pub fn bfgs_max(fg: impl Fn(&[f64]) -> (f64, Vec<f64>), x0: &[f64], gtol: f64, max_iter: usize) -> Vec<f64> {
    let p = x0.len();
    let mut x = x0.to_vec();
    let (mut f, mut g) = fg(&x);
    let mut h = vec![vec![0.0; p]; p];
    for (i, row) in h.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let mut first = true;
    for _ in 0..max_iter {
        if norm(&g) <= gtol {
            break;
        }
        // ascent direction d = H g
        let d: Vec<f64> = (0..p).map(|i| (0..p).map(|j| h[i][j] * g[j]).sum()).collect();
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        let (d, slope) = if slope <= 0.0 {
            for (i, row) in h.iter_mut().enumerate() {
                row.iter_mut().for_each(|v| *v = 0.0);
                row[i] = 1.0;
            }
            first = true;
            (g.clone(), g.iter().map(|v| v * v).sum())
        } else {
            (d, slope)
        };
        let mut t = 1.0;
        let (mut xn, mut fnew, mut gn);
        loop {
            xn = x.iter().zip(&d).map(|(a, b)| a + t * b).collect::<Vec<_>>();
            let r = fg(&xn);
            fnew = r.0;
            gn = r.1;
            if fnew.is_finite() && fnew >= f + 1e-4 * t * slope {
                break;
            }
            t *= 0.5;
            if t < 1e-20 {
                return x;
            }
        }
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        // for maximization use y = -(g_new - g)
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| b - a).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        if sy > 1e-300 && first {
            // rescale the initial inverse Hessian once curvature is known
            let yy: f64 = yv.iter().map(|v| v * v).sum();
            for (i, row) in h.iter_mut().enumerate() {
                row.iter_mut().for_each(|v| *v = 0.0);
                row[i] = sy / yy;
            }
            first = false;
        }
        if sy > 1e-300 {
            let hy: Vec<f64> = (0..p).map(|i| (0..p).map(|j| h[i][j] * yv[j]).sum()).collect();
            let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..p {
                for j in 0..p {
                    h[i][j] += (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        let tiny = s.iter().zip(&x).all(|(d, a)| d.abs() <= 1e-15 * (1.0 + a.abs()));
        x = xn;
        f = fnew;
        g = gn;
        if tiny {
            break;
        }
    }
    // Newton polish on a numerical Hessian of the gradient
    for _ in 0..3 {
        let gnorm = norm(&g);
        if gnorm <= gtol * 1e-3 {
            break;
        }
        let h = fd_hessian(|b| fg(b).1, &x, 1e-4);
        let neg: Vec<Vec<f64>> = h.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
        let step = solve(&neg, &g);
        let xn: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
        let (fnew, gn) = fg(&xn);
        if !fnew.is_finite() || norm(&gn) >= gnorm {
            break;
        }
        x = xn;
        g = gn;
    }
    x
}

/// Central-difference Jacobian of a gradient, symmetrized.
pub fn fd_hessian(grad: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let p = x.len();
    let mut out = vec![vec![0.0; p]; p];
    for j in 0..p {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let (gp, gm) = (grad(&xp), grad(&xm));
        for i in 0..p {
            out[i][j] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    for i in 0..p {
        for j in 0..i {
            let a = 0.5 * (out[i][j] + out[j][i]);
            out[i][j] = a;
            out[j][i] = a;
        }
    }
    out
}

pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            (f(&xp) - f(&xm)) / (2.0 * h)
        })
        .collect()
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))
            .unwrap();
        m.swap(c, piv);
        let d = m[c][c];
        assert!(d.abs() > 1e-300, "singular matrix in oracle");
        for v in m[c].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let factor = m[r][c];
                if factor != 0.0 {
                    let pivot_row = m[c].clone();
                    for (v, pv) in m[r].iter_mut().zip(pivot_row) {
                        *v -= factor * pv;
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let inv = gauss_jordan_inverse(a);
    inv.iter().map(|r| r.iter().zip(b).map(|(x, y)| x * y).sum()).collect()
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Minimize a scalar function over a uniform grid `lo, lo + step, …, hi`.
pub fn grid_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> (f64, f64) {
    let k = ((hi - lo) / step).round() as usize;
    (0..=k)
        .map(|i| lo + i as f64 * step)
        .map(|s| (s, f(s)))
        .fold((f64::NAN, f64::INFINITY), |best, (s, v)| if v < best.1 { (s, v) } else { best })
}

/// Golden-section refinement of a unimodal function on `[a, b]`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    for _ in 0..iters {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    0.5 * (a + b)
}

/// Completely separated logistic data: the sign of `x1` decides `y`.
pub fn separated_data(n: usize, p: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let x = DMatrix::from_fn(n, p, |i, j| match j {
        0 => 1.0,
        1 => {
            let mag = 0.005 + 0.01 * r.random::<f64>();
            if i % 2 == 0 { mag } else { -mag }
        }
        _ => normal(&mut r),
    });
    let y = DVector::from_fn(n, |i, _| if x[(i, 1)] > 0.0 { 1.0 } else { 0.0 });
    Dataset::new(x, y, names(p)).unwrap()
}
