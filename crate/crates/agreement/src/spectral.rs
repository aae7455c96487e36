//! Spectral audits: link expansion, down-up walks, expander mixing and sampling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{ComplexError, SimplicialComplex};
use crate::face::{binomial, binomial_f64, Face};
use crate::linalg::{deflated_power, symmetric_eigen, DenseMatrix, LinalgError, PowerOptions, Target};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("need j <= i, got i={i}, j={j}")]
    Levels { i: usize, j: usize },
    #[error("{size} faces exceed the dense cap {cap} and power iteration is disabled")]
    TooLarge { size: usize, cap: usize },
}

/// Numeric knobs shared by every spectral audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralTolerances {
    pub residual: f64,
    pub dense_cap: usize,
    pub allow_power: bool,
    pub power_max_iterations: usize,
    /// Slack when comparing a walk eigenvalue against j/i.
    pub bound_slack: f64,
    /// Upper bound on the total work spent building links before switching to sampling.
    pub link_work_cap: u64,
    pub link_samples: usize,
    pub seed: u64,
}

impl Default for SpectralTolerances {
    fn default() -> SpectralTolerances {
        SpectralTolerances {
            residual: 1e-8,
            dense_cap: 4000,
            allow_power: true,
            power_max_iterations: 200_000,
            bound_slack: 1e-9,
            link_work_cap: 50_000_000,
            link_samples: 2_000,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DenseSymmetricEig,
    PowerIteration,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::DenseSymmetricEig => "dense_symmetric_eig",
            Method::PowerIteration => "power_iteration",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub level_i: usize,
    pub level_j: usize,
    pub second_eigenvalue: f64,
    pub second_singular: f64,
    pub method: Method,
    pub iterations: usize,
    pub residual: f64,
    pub smallest_eigenvalue: Option<f64>,
    /// j / i
    pub alpha: f64,
    /// second_eigenvalue - alpha
    pub gap: f64,
    pub within_alpha: bool,
}

impl SpectralReport {
    pub const CSV_HEADER: &'static str = "level_i,level_j,lambda2,sigma2,method,residual";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:e}",
            self.level_i,
            self.level_j,
            self.second_eigenvalue,
            self.second_singular,
            self.method.name(),
            self.residual
        )
    }
}

/// Row-stochastic walk on a level with its stationary distribution.
#[derive(Debug, Clone)]
pub struct WalkMatrix {
    pub faces: Vec<Face>,
    pub matrix: DenseMatrix,
    pub stationary: Vec<f64>,
}

impl WalkMatrix {
    pub fn max_row_error(&self) -> f64 {
        (0..self.faces.len())
            .map(|r| (self.matrix.row(r).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_detailed_balance_error(&self) -> f64 {
        let n = self.faces.len();
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..a {
                let lhs = self.stationary[a] * self.matrix.get(a, b);
                let rhs = self.stationary[b] * self.matrix.get(b, a);
                worst = worst.max((lhs - rhs).abs());
            }
        }
        worst
    }

    /// `W^{1/2} M W^{-1/2}`.
    pub fn symmetrized(&self) -> DenseMatrix {
        let s: Vec<f64> = self.stationary.iter().map(|w| w.sqrt()).collect();
        DenseMatrix::from_fn(self.faces.len(), |a, b| {
            if s[b] == 0.0 {
                0.0
            } else {
                s[a] * self.matrix.get(a, b) / s[b]
            }
        })
    }
}

/// Sparse up/down structure between levels i and j.
struct Containment {
    faces_i: Vec<Face>,
    weights_i: Vec<f64>,
    subs: Vec<Vec<u32>>,
    sups: Vec<Vec<u32>>,
    sup_weight: Vec<f64>,
    per_face: f64,
}

impl Containment {
    fn new(x: &SimplicialComplex, i: usize, j: usize) -> Result<Containment, SpectralError> {
        let li = x.level(i)?;
        let lj = x.level(j)?;
        let mut subs = Vec::with_capacity(li.len());
        let mut sups = vec![Vec::new(); lj.len()];
        let mut sup_weight = vec![0.0; lj.len()];
        for (a, (&face, &w)) in li.faces.iter().zip(li.weights()).enumerate() {
            let list: Vec<u32> = face
                .subsets(j)
                .map(|s| lj.index_of(s).expect("downward closed") as u32)
                .collect();
            for &s in &list {
                sups[s as usize].push(a as u32);
                sup_weight[s as usize] += w;
            }
            subs.push(list);
        }
        Ok(Containment {
            faces_i: li.faces.clone(),
            weights_i: li.weights().to_vec(),
            subs,
            sups,
            sup_weight,
            per_face: binomial_f64(i, j),
        })
    }

    /// One step of the down-up walk applied to a function on level i.
    fn apply(&self, f: &[f64], out: &mut [f64]) {
        let g: Vec<f64> = self
            .sups
            .iter()
            .zip(&self.sup_weight)
            .map(|(list, &tot)| {
                list.iter()
                    .map(|&a| self.weights_i[a as usize] * f[a as usize])
                    .sum::<f64>()
                    / tot
            })
            .collect();
        for (o, list) in out.iter_mut().zip(&self.subs) {
            *o = list.iter().map(|&s| g[s as usize]).sum::<f64>() / self.per_face;
        }
    }

    fn dense(&self) -> WalkMatrix {
        let n = self.faces_i.len();
        let mut m = DenseMatrix::zeros(n);
        for a in 0..n {
            for &s in &self.subs[a] {
                let tot = self.sup_weight[s as usize];
                for &b in &self.sups[s as usize] {
                    m.add(a, b as usize, self.weights_i[b as usize] / tot / self.per_face);
                }
            }
        }
        WalkMatrix {
            faces: self.faces_i.clone(),
            matrix: m,
            stationary: self.weights_i.clone(),
        }
    }
}

/// The walk that moves from an i-face down to a uniform j-subset and back up.
pub fn down_up_walk(x: &SimplicialComplex, i: usize, j: usize) -> Result<WalkMatrix, SpectralError> {
    if j > i {
        return Err(SpectralError::Levels { i, j });
    }
    Ok(Containment::new(x, i, j)?.dense())
}

pub fn down_up_spectrum(
    x: &SimplicialComplex,
    i: usize,
    j: usize,
    tol: &SpectralTolerances,
) -> Result<SpectralReport, SpectralError> {
    if j > i || i == 0 {
        return Err(SpectralError::Levels { i, j });
    }
    let c = Containment::new(x, i, j)?;
    let n = c.faces_i.len();
    let alpha = j as f64 / i as f64;
    let finish = |l2: f64, s2: f64, method, iterations, residual, smallest| {
        let gap = l2 - alpha;
        SpectralReport {
            level_i: i,
            level_j: j,
            second_eigenvalue: l2,
            second_singular: s2,
            method,
            iterations,
            residual,
            smallest_eigenvalue: smallest,
            alpha,
            gap,
            within_alpha: gap <= tol.bound_slack,
        }
    };
    if n < 2 {
        return Ok(finish(0.0, 0.0, Method::DenseSymmetricEig, 0, 0.0, None));
    }
    if n <= tol.dense_cap {
        let walk = c.dense();
        let s = walk.symmetrized();
        let eig = symmetric_eigen(&s)?;
        let l2 = eig.values[1];
        let smallest = eig.values[n - 1];
        let residual = eig.residual(&s, 1);
        return Ok(finish(
            l2,
            l2.abs().max(smallest.abs()),
            Method::DenseSymmetricEig,
            1,
            residual,
            Some(smallest),
        ));
    }
    if !tol.allow_power {
        return Err(SpectralError::TooLarge {
            size: n,
            cap: tol.dense_cap,
        });
    }
    let sqrt_w: Vec<f64> = c.weights_i.iter().map(|w| w.sqrt()).collect();
    let apply = |v: &[f64], out: &mut [f64]| {
        let f: Vec<f64> = v.iter().zip(&sqrt_w).map(|(a, s)| a / s).collect();
        c.apply(&f, out);
        for (o, s) in out.iter_mut().zip(&sqrt_w) {
            *o *= s;
        }
    };
    let opts = PowerOptions {
        max_iterations: tol.power_max_iterations,
        tolerance: tol.residual,
        seed: tol.seed,
    };
    let r = deflated_power(n, apply, &sqrt_w, Target::Second, opts)?;
    Ok(finish(
        r.value,
        r.value.abs(),
        Method::PowerIteration,
        r.iterations,
        r.residual,
        None,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    OneSided,
    TwoSided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpectrum {
    pub face: Face,
    pub vertices: usize,
    pub lambda2: f64,
    pub lambda_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkExpansionReport {
    pub gamma: f64,
    pub worst_link: Face,
    pub sidedness: Sidedness,
    pub sampled_links_only: bool,
    pub links: Vec<LinkSpectrum>,
}

/// Spectrum of the normalized adjacency of the 1-skeleton of the link of `face`.
pub fn link_spectrum(x: &SimplicialComplex, face: Face) -> Result<LinkSpectrum, SpectralError> {
    let mut weights: Vec<[f64; 64]> = Vec::new();
    let mut slot = [usize::MAX; 64];
    let mut verts = Vec::new();
    let mut any = false;
    for facet in x.facets_containing(face) {
        any = true;
        let rest = facet.difference(face);
        for v in rest.vertices() {
            if slot[v] == usize::MAX {
                slot[v] = verts.len();
                verts.push(v);
                weights.push([0.0; 64]);
            }
        }
        for a in rest.vertices() {
            for b in rest.vertices() {
                if a != b {
                    weights[slot[a]][b] += 1.0;
                }
            }
        }
    }
    if !any {
        return Err(ComplexError::NotAFace(face).into());
    }
    let m = verts.len();
    let deg: Vec<f64> = (0..m)
        .map(|a| verts.iter().map(|&b| weights[a][b]).sum())
        .collect();
    let s = DenseMatrix::from_fn(m, |a, b| {
        let w = weights[a][verts[b]];
        if w == 0.0 {
            0.0
        } else {
            w / (deg[a] * deg[b]).sqrt()
        }
    });
    let eig = symmetric_eigen(&s)?;
    Ok(LinkSpectrum {
        face,
        vertices: m,
        lambda2: if m > 1 { eig.values[1] } else { 0.0 },
        lambda_min: eig.values[m - 1],
    })
}

/// Worst link expansion over faces of size at most d-2.
pub fn link_expansion(
    x: &SimplicialComplex,
    sidedness: Sidedness,
    tol: &SpectralTolerances,
) -> Result<LinkExpansionReport, SpectralError> {
    let d = x.d();
    let top = d.saturating_sub(2);
    let mut work: u128 = 0;
    for i in 0..=top {
        work += x.level_size_hint(i) * binomial(x.d(), i).max(1) * binomial(d - i, 2);
    }
    let sampled = work > tol.link_work_cap as u128;
    let mut faces = Vec::new();
    if sampled {
        let mut rng = crate::rng::rng_from(tol.seed);
        faces.push(Face::EMPTY);
        for i in 1..=top {
            for _ in 0..tol.link_samples {
                faces.push(x.sample_face(i, &mut rng));
            }
        }
        faces.sort();
        faces.dedup();
    } else {
        for i in 0..=top {
            faces.extend(x.level(i)?.faces.iter().copied());
        }
    }
    let links: Result<Vec<LinkSpectrum>, SpectralError> =
        faces.par_iter().map(|&f| link_spectrum(x, f)).collect();
    let links = links?;
    let score = |l: &LinkSpectrum| match sidedness {
        Sidedness::OneSided => l.lambda2,
        Sidedness::TwoSided => {
            if l.vertices > 1 {
                l.lambda2.abs().max(l.lambda_min.abs())
            } else {
                0.0
            }
        }
    };
    let mut gamma = f64::NEG_INFINITY;
    let mut worst = Face::EMPTY;
    for l in &links {
        let s = score(l);
        if s > gamma {
            gamma = s;
            worst = l.face;
        }
    }
    Ok(LinkExpansionReport {
        gamma,
        worst_link: worst,
        sidedness,
        sampled_links_only: sampled,
        links,
    })
}

/// Weighted bipartite graph; edge weights sum to 1 and define both marginals.
#[derive(Debug, Clone)]
pub struct BipartiteGraph {
    pub left: usize,
    pub right: usize,
    pub edges: Vec<(u32, u32, f64)>,
}

impl BipartiteGraph {
    /// Level i against level j of a complex, joined by containment.
    pub fn containment(x: &SimplicialComplex, i: usize, j: usize) -> Result<BipartiteGraph, SpectralError> {
        if j > i {
            return Err(SpectralError::Levels { i, j });
        }
        let li = x.level(i)?;
        let lj = x.level(j)?;
        let per = binomial_f64(i, j);
        let mut edges = Vec::new();
        for (a, (&face, &w)) in li.faces.iter().zip(li.weights()).enumerate() {
            for s in face.subsets(j) {
                edges.push((a as u32, lj.index_of(s).unwrap() as u32, w / per));
            }
        }
        Ok(BipartiteGraph {
            left: li.len(),
            right: lj.len(),
            edges,
        })
    }

    pub fn left_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.left];
        for &(a, _, x) in &self.edges {
            w[a as usize] += x;
        }
        w
    }

    pub fn right_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.right];
        for &(_, b, x) in &self.edges {
            w[b as usize] += x;
        }
        w
    }

    /// Second singular value of the normalized biadjacency matrix.
    pub fn second_singular(&self) -> Result<f64, SpectralError> {
        let lw = self.left_weights();
        let rw = self.right_weights();
        // Gram matrix on the smaller side.
        let (small_w, big_w, small_is_left) = if self.left <= self.right {
            (&lw, &rw, true)
        } else {
            (&rw, &lw, false)
        };
        let ns = small_w.len();
        let mut by_big: Vec<Vec<(usize, f64)>> = vec![Vec::new(); big_w.len()];
        for &(a, b, x) in &self.edges {
            let (s, g) = if small_is_left { (a as usize, b as usize) } else { (b as usize, a as usize) };
            if small_w[s] > 0.0 && big_w[g] > 0.0 {
                by_big[g].push((s, x / (small_w[s] * big_w[g]).sqrt()));
            }
        }
        let mut gram = DenseMatrix::zeros(ns);
        for list in &by_big {
            for &(s1, x1) in list {
                for &(s2, x2) in list {
                    gram.add(s1, s2, x1 * x2);
                }
            }
        }
        let eig = symmetric_eigen(&gram)?;
        Ok(eig.values.get(1).copied().unwrap_or(0.0).max(0.0).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingAudit {
    pub lhs: f64,
    pub bound: f64,
    pub holds: bool,
}

/// `|Pr[u in A, v in B] - mu(A) mu(B)|` against `lambda sqrt(mu(A)(1-mu(A)) mu(B)(1-mu(B)))`.
pub fn mixing_audit(g: &BipartiteGraph, lambda: f64, a: &[bool], b: &[bool]) -> MixingAudit {
    let lw = g.left_weights();
    let rw = g.right_weights();
    let ma: f64 = lw.iter().zip(a).filter(|(_, &s)| s).map(|(w, _)| w).sum();
    let mb: f64 = rw.iter().zip(b).filter(|(_, &s)| s).map(|(w, _)| w).sum();
    let joint: f64 = g
        .edges
        .iter()
        .filter(|&&(u, v, _)| a[u as usize] && b[v as usize])
        .map(|e| e.2)
        .sum();
    let lhs = (joint - ma * mb).abs();
    let bound = lambda * (ma * (1.0 - ma) * mb * (1.0 - mb)).max(0.0).sqrt();
    MixingAudit {
        lhs,
        bound,
        holds: lhs <= bound + 1e-9,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingAudit {
    pub density: f64,
    pub bad_mass: f64,
    pub bound: f64,
    pub unbounded: bool,
    pub holds: bool,
}

/// Mass of right vertices whose neighbourhood over-samples the left set `b` by more than `eps`,
/// against `lambda^2 delta / eps^2`.
pub fn sampling_audit(g: &BipartiteGraph, lambda: f64, b: &[bool], eps: f64) -> SamplingAudit {
    let lw = g.left_weights();
    let rw = g.right_weights();
    let delta: f64 = lw.iter().zip(b).filter(|(_, &s)| s).map(|(w, _)| w).sum();
    let mut hit = vec![0.0; g.right];
    for &(u, v, x) in &g.edges {
        if b[u as usize] {
            hit[v as usize] += x;
        }
    }
    let bad_mass: f64 = (0..g.right)
        .filter(|&v| rw[v] > 0.0 && hit[v] / rw[v] > delta + eps)
        .map(|v| rw[v])
        .sum();
    let unbounded = eps <= 1e-12;
    let bound = if unbounded {
        f64::INFINITY
    } else {
        lambda * lambda * delta / (eps * eps)
    };
    SamplingAudit {
        density: delta,
        bad_mass,
        bound,
        unbounded,
        holds: bad_mass <= bound + 1e-9,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::builtin;

    #[test]
    fn complete_links_are_complete_graphs() {
        let x = SimplicialComplex::complete(10, 4).unwrap();
        let r = link_expansion(&x, Sidedness::OneSided, &SpectralTolerances::default()).unwrap();
        assert!(!r.sampled_links_only);
        assert_eq!(r.links.len(), 1 + 10 + 45);
        for l in &r.links {
            let m = l.vertices as f64;
            assert!((l.lambda2 + 1.0 / (m - 1.0)).abs() < 1e-12);
        }
        assert!((r.gamma + 1.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn hexagon_link() {
        let x = builtin::hexagon_cone();
        let l = link_spectrum(&x, Face::singleton(6)).unwrap();
        assert_eq!(l.vertices, 6);
        assert!((l.lambda2 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_facet_links() {
        let x = SimplicialComplex::complete(5, 5).unwrap();
        let r = link_expansion(&x, Sidedness::TwoSided, &SpectralTolerances::default()).unwrap();
        for l in &r.links {
            let m = l.vertices as f64;
            assert!((l.lambda2 + 1.0 / (m - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn trivial_walks() {
        let x = SimplicialComplex::complete(8, 4).unwrap();
        let tol = SpectralTolerances::default();
        let id = down_up_spectrum(&x, 3, 3, &tol).unwrap();
        assert!((id.second_eigenvalue - 1.0).abs() < 1e-12);
        let collapse = down_up_spectrum(&x, 3, 0, &tol).unwrap();
        assert!(collapse.second_eigenvalue.abs() < 1e-12);
        let w = down_up_walk(&x, 4, 2).unwrap();
        assert!(w.max_row_error() < 1e-10);
        assert!(w.max_detailed_balance_error() < 1e-9);
    }

    #[test]
    fn power_path_matches_dense() {
        let x = SimplicialComplex::complete(10, 4).unwrap();
        let dense = down_up_spectrum(&x, 4, 2, &SpectralTolerances::default()).unwrap();
        let tol = SpectralTolerances {
            dense_cap: 10,
            ..SpectralTolerances::default()
        };
        let power = down_up_spectrum(&x, 4, 2, &tol).unwrap();
        assert_eq!(power.method, Method::PowerIteration);
        assert!((dense.second_eigenvalue - power.second_eigenvalue).abs() < 1e-7);
        assert!(power.residual <= 1e-8);
    }

    #[test]
    fn mixing_trivial_set() {
        let x = SimplicialComplex::complete(8, 4).unwrap();
        let g = BipartiteGraph::containment(&x, 4, 2).unwrap();
        let lambda = g.second_singular().unwrap();
        let a = vec![true; g.left];
        let b: Vec<bool> = (0..g.right).map(|i| i % 3 == 0).collect();
        let m = mixing_audit(&g, lambda, &a, &b);
        assert!(m.lhs < 1e-15 && m.holds);
        let s = sampling_audit(&g, lambda, &vec![false; g.left], 0.1);
        assert_eq!(s.bad_mass, 0.0);
        let s = sampling_audit(&g, lambda, &a, 0.0);
        assert!(s.unbounded && s.bound.is_infinite());
    }

    #[test]
    fn disconnected_bipartite_is_vacuous() {
        let g = BipartiteGraph {
            left: 2,
            right: 2,
            edges: vec![(0, 0, 0.5), (1, 1, 0.5)],
        };
        let lambda = g.second_singular().unwrap();
        assert!((lambda - 1.0).abs() < 1e-12);
        let m = mixing_audit(&g, lambda, &[true, false], &[true, false]);
        assert!(m.holds);
    }
}
