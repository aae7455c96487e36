//! The two-query direct product tester, its localized form and the list-agreement test.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{distance_on, Assignment, FunctionList, GlobalFunction};
use crate::complex::{ComplexError, SimplicialComplex};
use crate::face::{binomial, Face};
use crate::rng::{random_subset, stream};
use crate::stats::{Mode, TestReport};

/// Largest number of `(D, I, A, A')` tuples enumerated in exact mode.
pub const EXACT_TUPLE_CAP: u128 = 10_000_000;

const CHUNK: u64 = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpError {
    #[error("need s <= k <= d, got s={s}, k={k}, d={d}")]
    Sizes { s: usize, k: usize, d: usize },
    #[error("assignment is on {found}-faces, test asks for k={expected}")]
    WrongLevel { found: usize, expected: usize },
    #[error("exact mode needs {tuples} tuples, above the cap {cap}")]
    ExactTooLarge { tuples: u128, cap: u128 },
    #[error("assignment has no entry for {0}")]
    MissingFace(Face),
    #[error("monte carlo mode needs at least one trial")]
    NoTrials,
    #[error(transparent)]
    Complex(#[from] ComplexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpParams {
    pub k: usize,
    pub s: usize,
    pub mode: Mode,
    pub trials: u64,
    pub seed: u64,
}

impl DpParams {
    pub fn exact(k: usize, s: usize) -> DpParams {
        DpParams {
            k,
            s,
            mode: Mode::Exact,
            trials: 0,
            seed: 0,
        }
    }

    pub fn monte_carlo(k: usize, s: usize, trials: u64, seed: u64) -> DpParams {
        DpParams {
            k,
            s,
            mode: Mode::MonteCarlo,
            trials,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpReport {
    pub report: TestReport,
    /// Probability (exact) or frequency (sampled) of drawing `A = A'`.
    pub same_face_rate: f64,
    /// Entry `j` is the probability or frequency of `|A ∩ A'| = j`.
    pub overlap: Vec<f64>,
}

fn check_sizes(x: &SimplicialComplex, f: &dyn Assignment, p: &DpParams) -> Result<(), DpError> {
    if p.s > p.k || p.k > x.d() {
        return Err(DpError::Sizes {
            s: p.s,
            k: p.k,
            d: x.d(),
        });
    }
    if f.k() != p.k {
        return Err(DpError::WrongLevel {
            found: f.k(),
            expected: p.k,
        });
    }
    Ok(())
}

/// Hypergeometric law of `|A ∩ A'|` when `A, A'` are independent `k`-sets with
/// `I ⊆ A, A' ⊆ D`, `|I| = s`, `|D| = d`.
pub fn overlap_law(d: usize, k: usize, s: usize) -> Vec<f64> {
    let free = d - s;
    let pick = k - s;
    let total = binomial(free, pick) as f64;
    let mut law = vec![0.0; k + 1];
    for common in 0..=pick {
        let ways = binomial(pick, common) * binomial(free - pick, pick - common);
        law[s + common] = ways as f64 / total;
    }
    law
}

/// Probability that `F[A]|_I = F[A']|_I` under the tester's distribution.
pub fn run_dp_test(
    x: &SimplicialComplex,
    f: &dyn Assignment,
    p: &DpParams,
) -> Result<DpReport, DpError> {
    check_sizes(x, f, p)?;
    match p.mode {
        Mode::Exact => exact(x, f, p),
        Mode::MonteCarlo => sampled(x, f, p),
    }
}

/// The same test with `D` fixed, i.e. on the Johnson scheme inside `domain`.
pub fn localized_pass(
    f: &dyn Assignment,
    domain: Face,
    p: &DpParams,
) -> Result<DpReport, DpError> {
    let n = domain.max_vertex().map_or(1, |v| v + 1);
    let x = SimplicialComplex::from_facets(n, &[domain])?;
    run_dp_test(&x, f, p)
}

fn exact(x: &SimplicialComplex, f: &dyn Assignment, p: &DpParams) -> Result<DpReport, DpError> {
    let d = x.d();
    let per_sub = binomial(d - p.s, p.k - p.s);
    let tuples = x.facets().len() as u128 * binomial(d, p.s) * per_sub * per_sub;
    if tuples > EXACT_TUPLE_CAP {
        return Err(DpError::ExactTooLarge {
            tuples,
            cap: EXACT_TUPLE_CAP,
        });
    }
    let passes: Result<Vec<u64>, DpError> = x
        .facets()
        .par_iter()
        .map(|&top| {
            let mut passes = 0u64;
            let mut keys = Vec::with_capacity(per_sub as usize);
            for i in top.subsets(p.s) {
                keys.clear();
                for rest in top.difference(i).subsets(p.k - p.s) {
                    let a = i.union(rest);
                    let v = f.get(a).ok_or(DpError::MissingFace(a))?;
                    keys.push(v & i.bits());
                }
                keys.sort_unstable();
                for run in keys.chunk_by(|a, b| a == b) {
                    passes += (run.len() * run.len()) as u64;
                }
            }
            Ok(passes)
        })
        .collect();
    let passes: u64 = passes?.iter().sum();
    let trials = tuples as u64;
    let estimate = passes as f64 / trials as f64;
    Ok(DpReport {
        report: TestReport::exact(passes, trials, estimate, p.seed),
        same_face_rate: 1.0 / per_sub as f64,
        overlap: overlap_law(d, p.k, p.s),
    })
}

struct Tally {
    passes: u64,
    same: u64,
    overlap: Vec<u64>,
}

fn sampled(x: &SimplicialComplex, f: &dyn Assignment, p: &DpParams) -> Result<DpReport, DpError> {
    if p.trials == 0 {
        return Err(DpError::NoTrials);
    }
    let chunks = p.trials.div_ceil(CHUNK);
    let tallies: Result<Vec<Tally>, DpError> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut t = Tally {
                passes: 0,
                same: 0,
                overlap: vec![0; p.k + 1],
            };
            for j in c * CHUNK..((c + 1) * CHUNK).min(p.trials) {
                let mut rng = stream(p.seed, j);
                let top = x.sample_facet(&mut rng);
                let i = random_subset(top, p.s, &mut rng);
                let rest = top.difference(i);
                let a = i.union(random_subset(rest, p.k - p.s, &mut rng));
                let b = i.union(random_subset(rest, p.k - p.s, &mut rng));
                let va = f.get(a).ok_or(DpError::MissingFace(a))?;
                let vb = f.get(b).ok_or(DpError::MissingFace(b))?;
                if (va ^ vb) & i.bits() == 0 {
                    t.passes += 1;
                }
                if a == b {
                    t.same += 1;
                }
                t.overlap[a.intersection(b).len()] += 1;
            }
            Ok(t)
        })
        .collect();
    let mut passes = 0;
    let mut same = 0;
    let mut overlap = vec![0u64; p.k + 1];
    for t in tallies? {
        passes += t.passes;
        same += t.same;
        for (o, c) in overlap.iter_mut().zip(t.overlap) {
            *o += c;
        }
    }
    let n = p.trials as f64;
    Ok(DpReport {
        report: TestReport::monte_carlo(passes, p.trials, p.seed),
        same_face_rate: same as f64 / n,
        overlap: overlap.into_iter().map(|c| c as f64 / n).collect(),
    })
}

/// Count Monte-Carlo successes of `event` over `trials` independent streams.
pub fn monte_carlo<E>(trials: u64, seed: u64, event: E) -> TestReport
where
    E: Fn(&mut crate::rng::TrialRng) -> bool + Sync,
{
    let passes: u64 = (0..trials.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            (c * CHUNK..((c + 1) * CHUNK).min(trials))
                .filter(|&j| event(&mut stream(seed, j)))
                .count() as u64
        })
        .sum();
    TestReport::monte_carlo(passes, trials, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub distance: f64,
    /// `Pr[Δ_A(f,g) > 2R]`
    pub above: TestReport,
    /// `Pr[Δ_A(f,g) < R/2]`
    pub below: TestReport,
}

/// Tails of the restricted distance over uniform `k`-subsets of the common domain.
pub fn restriction_distance_tail(
    f: &GlobalFunction,
    g: &GlobalFunction,
    k: usize,
    trials: u64,
    seed: u64,
) -> Result<TailReport, crate::assignment::AssignmentError> {
    let r = f.hamming(g)?;
    let domain = f.domain;
    let draw = |rng: &mut crate::rng::TrialRng| {
        let a = random_subset(domain, k, rng);
        distance_on(a, f.bits, g.bits)
    };
    let above = if r == 0.0 {
        TestReport::exact(0, trials, 0.0, seed)
    } else {
        monte_carlo(trials, seed, |rng| draw(rng) > 2.0 * r + 1e-12)
    };
    let below = if r == 0.0 {
        TestReport::exact(0, trials, 0.0, seed)
    } else {
        monte_carlo(trials, seed ^ 1, |rng| draw(rng) < r / 2.0 - 1e-12)
    };
    Ok(TailReport {
        distance: r,
        above,
        below,
    })
}

/// Sampled estimate of the measure of `Agr_nu(f, F)`.
pub fn agr_measure_sampled(
    x: &SimplicialComplex,
    table: &dyn Assignment,
    f: &GlobalFunction,
    nu: f64,
    trials: u64,
    seed: u64,
) -> TestReport {
    let k = table.k();
    monte_carlo(trials, seed, |rng| {
        let a = x.sample_face(k, rng);
        table
            .get(a)
            .is_some_and(|v| distance_on(a, f.bits, v) <= nu + 1e-12)
    })
}

/// `Pr_{A ⊆_k D}[A ∈ Agr_nu(f,F) ∩ Agr_nu(g,F)]`.
pub fn joint_agreement(
    table: &dyn Assignment,
    domain: Face,
    f: &GlobalFunction,
    g: &GlobalFunction,
    nu: f64,
    trials: u64,
    seed: u64,
) -> TestReport {
    let k = table.k();
    monte_carlo(trials, seed, |rng| {
        let a = random_subset(domain, k, rng);
        table.get(a).is_some_and(|v| {
            distance_on(a, f.bits, v) <= nu + 1e-12 && distance_on(a, g.bits, v) <= nu + 1e-12
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListAgreementReport {
    pub report: TestReport,
    /// Size of the shared face `B`.
    pub half: usize,
    pub rounded_down: bool,
    pub empty: u64,
    pub size_mismatch: u64,
    pub ambiguous: u64,
    pub unmatched: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ListVerdict {
    Accept,
    Empty,
    SizeMismatch,
    Ambiguous,
    Unmatched,
}

/// Match every function of `left` to the unique function of `right` within `eta` on `on`.
pub fn match_lists(left: &FunctionList, right: &FunctionList, on: Face, eta: f64) -> ListVerdict {
    if left.is_empty() || right.is_empty() {
        return ListVerdict::Empty;
    }
    if left.len() != right.len() {
        return ListVerdict::SizeMismatch;
    }
    let mut used = vec![false; right.len()];
    for &f in left.functions() {
        let mut found = None;
        for (j, &g) in right.functions().iter().enumerate() {
            if distance_on(on, f, g) <= eta + 1e-12 {
                if found.is_some() {
                    return ListVerdict::Ambiguous;
                }
                found = Some(j);
            }
        }
        match found {
            None => return ListVerdict::Unmatched,
            Some(j) if used[j] => return ListVerdict::Ambiguous,
            Some(j) => used[j] = true,
        }
    }
    ListVerdict::Accept
}

/// Draw `B ∼ μ_{d/2}` and `A, A' ⊇ B` independently; accept when the lists match on `B`.
pub fn run_list_agreement_test<P>(
    x: &SimplicialComplex,
    lists: P,
    eta: f64,
    trials: u64,
    seed: u64,
) -> ListAgreementReport
where
    P: Fn(Face) -> FunctionList + Sync,
{
    let d = x.d();
    let half = d / 2;
    let counts: [u64; 5] = (0..trials.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut tally = [0u64; 5];
            for j in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                let mut rng = stream(seed, j);
                let b = x.sample_face(half, &mut rng);
                let a1 = x.sample_superset(b, d, &mut rng).expect("b is a face");
                let a2 = x.sample_superset(b, d, &mut rng).expect("b is a face");
                let v = match_lists(&lists(a1), &lists(a2), b, eta);
                tally[v as usize] += 1;
            }
            tally
        })
        .reduce(|| [0; 5], |a, b| std::array::from_fn(|i| a[i] + b[i]));
    ListAgreementReport {
        report: TestReport::monte_carlo(counts[ListVerdict::Accept as usize], trials, seed),
        half,
        rounded_down: d % 2 == 1,
        empty: counts[ListVerdict::Empty as usize],
        size_mismatch: counts[ListVerdict::SizeMismatch as usize],
        ambiguous: counts[ListVerdict::Ambiguous as usize],
        unmatched: counts[ListVerdict::Unmatched as usize],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::LocalAssignment;
    use crate::rng::rng_from;

    #[test]
    fn direct_products_always_pass() {
        let x = SimplicialComplex::complete(8, 5).unwrap();
        let f = GlobalFunction::random(Face::range(8), &mut rng_from(3));
        let table = LocalAssignment::direct_product(&x, 3, &f).unwrap();
        let r = run_dp_test(&x, &table, &DpParams::exact(3, 2)).unwrap();
        assert_eq!(r.report.passes, r.report.trials);
        assert_eq!(r.report.estimate, 1.0);
        let r = run_dp_test(&x, &table, &DpParams::monte_carlo(3, 2, 1000, 1)).unwrap();
        assert_eq!(r.report.passes, 1000);
    }

    #[test]
    fn overlap_law_sums_to_one() {
        let law = overlap_law(16, 8, 2);
        assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(law[0], 0.0);
        assert!((law[8] - 1.0 / 3003.0).abs() < 1e-15);
    }

    #[test]
    fn sizes_checked() {
        let x = SimplicialComplex::complete(6, 3).unwrap();
        let table = LocalAssignment::random(&x, 2, 1).unwrap();
        assert!(matches!(
            run_dp_test(&x, &table, &DpParams::exact(2, 3)),
            Err(DpError::Sizes { .. })
        ));
        assert!(matches!(
            run_dp_test(&x, &table, &DpParams::exact(3, 1)),
            Err(DpError::WrongLevel { .. })
        ));
    }

    #[test]
    fn sampled_is_deterministic() {
        let x = SimplicialComplex::complete(10, 6).unwrap();
        let table = LocalAssignment::random(&x, 4, 9).unwrap();
        let p = DpParams::monte_carlo(4, 2, 10_000, 77);
        let a = run_dp_test(&x, &table, &p).unwrap();
        let b = run_dp_test(&x, &table, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn matching_rules() {
        let d = Face::range(6);
        let b = Face::range(3);
        let l = FunctionList::new(d, vec![0b000_000, 0b000_111]).unwrap();
        let r = FunctionList::new(d, vec![0b111_111, 0b111_000]).unwrap();
        assert_eq!(match_lists(&l, &r, b, 0.0), ListVerdict::Accept);
        let single = FunctionList::new(d, vec![0]).unwrap();
        assert_eq!(match_lists(&l, &single, b, 0.0), ListVerdict::SizeMismatch);
        assert_eq!(match_lists(&l, &r, b, 1.0), ListVerdict::Ambiguous);
        assert_eq!(
            match_lists(&FunctionList::empty(d), &FunctionList::empty(d), b, 0.0),
            ListVerdict::Empty
        );
    }
}
