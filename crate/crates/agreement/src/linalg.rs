//! Dense symmetric eigensolver (Householder tridiagonalization + implicit QL) and
//! deflated power iteration.

use rand::Rng;
use thiserror::Error;

use crate::rng::rng_from;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("power iteration stopped after {iterations} iterations with residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("matrix is empty")]
    Empty,
}

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> DenseMatrix {
        DenseMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.n + j] = x;
    }

    pub fn add(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.n + j] += x;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Eigenvalues in decreasing order; `vectors[k]` is a unit eigenvector for `values[k]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl SymmetricEigen {
    pub fn residual(&self, a: &DenseMatrix, k: usize) -> f64 {
        let v = &self.vectors[k];
        let mut y = vec![0.0; v.len()];
        a.mul_vec(v, &mut y);
        y.iter()
            .zip(v)
            .map(|(yi, vi)| (yi - self.values[k] * vi).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Full eigendecomposition of a symmetric matrix (only the lower triangle is read).
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<SymmetricEigen, LinalgError> {
    let n = a.dim();
    if n == 0 {
        return Err(LinalgError::Empty);
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            v[i * n + j] = a.get(i, j);
            v[j * n + i] = a.get(i, j);
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut v, &mut d, &mut e);
    ql_implicit(n, &mut v, &mut d, &mut e);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| d[y].total_cmp(&d[x]));
    let values = order.iter().map(|&k| d[k]).collect();
    let vectors = order
        .iter()
        .map(|&k| (0..n).map(|r| v[r * n + k]).collect())
        .collect();
    Ok(SymmetricEigen { values, vectors })
}

fn tridiagonalize(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |r: usize, c: usize| r * n + c;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in j + 1..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

fn ql_implicit(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |r: usize, c: usize| r * n + c;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            loop {
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[at(k, i + 1)];
                        v[at(k, i + 1)] = s * v[at(k, i)] + c * h;
                        v[at(k, i)] = c * v[at(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> PowerOptions {
        PowerOptions {
            max_iterations: 200_000,
            tolerance: 1e-9,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PowerResult {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// What the deflated iteration converges to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// Largest eigenvalue below the top one, for spectra inside [-1, 1].
    Second,
    /// Largest absolute eigenvalue below the top one.
    SecondAbsolute,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn deflate(x: &mut [f64], top: &[f64]) {
    let c = dot(x, top);
    for (xi, ti) in x.iter_mut().zip(top) {
        *xi -= c * ti;
    }
}

fn normalize(x: &mut [f64]) -> f64 {
    let norm = dot(x, x).sqrt();
    if norm > 0.0 {
        for xi in x.iter_mut() {
            *xi /= norm;
        }
    }
    norm
}

/// Power iteration for a symmetric operator with known unit top eigenvector `top`.
pub fn deflated_power<F>(
    dim: usize,
    apply: F,
    top: &[f64],
    target: Target,
    opts: PowerOptions,
) -> Result<PowerResult, LinalgError>
where
    F: Fn(&[f64], &mut [f64]),
{
    if dim == 0 {
        return Err(LinalgError::Empty);
    }
    let mut rng = rng_from(opts.seed);
    let mut x: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
    deflate(&mut x, top);
    if normalize(&mut x) == 0.0 {
        return Ok(PowerResult {
            value: 0.0,
            vector: x,
            residual: 0.0,
            iterations: 0,
        });
    }
    let mut sx = vec![0.0; dim];
    let mut ssx = vec![0.0; dim];
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        apply(&x, &mut sx);
        deflate(&mut sx, top);
        let lambda = dot(&x, &sx);
        let next = match target {
            Target::Second => {
                residual = sx
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - lambda * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if residual <= opts.tolerance {
                    return Ok(PowerResult {
                        value: lambda,
                        vector: x,
                        residual,
                        iterations: it,
                    });
                }
                sx.iter().zip(&x).map(|(a, b)| 0.5 * (a + b)).collect::<Vec<f64>>()
            }
            Target::SecondAbsolute => {
                apply(&sx, &mut ssx);
                deflate(&mut ssx, top);
                let mu = dot(&x, &ssx);
                residual = ssx
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - mu * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if residual <= opts.tolerance {
                    return Ok(PowerResult {
                        value: mu.max(0.0).sqrt(),
                        vector: x,
                        residual,
                        iterations: it,
                    });
                }
                ssx.clone()
            }
        };
        x = next;
        deflate(&mut x, top);
        if normalize(&mut x) == 0.0 {
            return Ok(PowerResult {
                value: 0.0,
                vector: x,
                residual: 0.0,
                iterations: it,
            });
        }
    }
    Err(LinalgError::NoConvergence {
        iterations: opts.max_iterations,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_and_2x2() {
        let a = DenseMatrix::from_fn(3, |i, j| if i == j { [2.0, -1.0, 5.0][i] } else { 0.0 });
        let e = symmetric_eigen(&a).unwrap();
        assert_eq!(e.values, vec![5.0, 2.0, -1.0]);
        let b = DenseMatrix::from_fn(2, |i, j| if i == j { 2.0 } else { 1.0 });
        let e = symmetric_eigen(&b).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        assert!(e.residual(&b, 0) < 1e-14);
    }

    #[test]
    fn cycle_spectrum() {
        // normalized adjacency of C_n: eigenvalues cos(2 pi k / n)
        let n = 9;
        let a = DenseMatrix::from_fn(n, |i, j| {
            if (i + 1) % n == j || (j + 1) % n == i {
                0.5
            } else {
                0.0
            }
        });
        let e = symmetric_eigen(&a).unwrap();
        let mut want: Vec<f64> = (0..n)
            .map(|k| (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
            .collect();
        want.sort_by(|x, y| y.total_cmp(x));
        for (g, w) in e.values.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
        for k in 0..n {
            assert!(e.residual(&a, k) < 1e-12);
        }
    }

    #[test]
    fn power_matches_dense_on_cycle() {
        let n = 8;
        let a = DenseMatrix::from_fn(n, |i, j| {
            if (i + 1) % n == j || (j + 1) % n == i {
                0.5
            } else {
                0.0
            }
        });
        let top = vec![1.0 / (n as f64).sqrt(); n];
        let second = deflated_power(n, |x, y| a.mul_vec(x, y), &top, Target::Second, PowerOptions::default()).unwrap();
        assert!((second.value - (2.0 * std::f64::consts::PI / 8.0).cos()).abs() < 1e-8);
        let abs = deflated_power(n, |x, y| a.mul_vec(x, y), &top, Target::SecondAbsolute, PowerOptions::default()).unwrap();
        assert!((abs.value - 1.0).abs() < 1e-8);
    }
}
