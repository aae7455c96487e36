//! Per-face short lists, local decoding, and recovery of a global function from lists.
//!
//! Plurality votes break ties toward 0 throughout.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::assignment::{
    bit_string, distance_on, Assignment, AssignmentError, FunctionList, GlobalFunction,
    LocalAssignment, EXHAUSTIVE_MAX_VERTICES,
};
use crate::complex::{ComplexError, SimplicialComplex};
use crate::dp_test::{localized_pass, run_dp_test, run_list_agreement_test, DpError, DpParams, EXACT_TUPLE_CAP};
use crate::face::{binomial, Face, FaceMap};
use crate::graph::{constraint_graph, ConstraintGraph, GraphError};
use crate::perm::Perm;
use crate::rng::{mix, random_bits, random_subset, stream};
use crate::stats::{Mode, TestReport};
use crate::ug::{coboundary_audit, AuditOptions, SearchOptions, UgError, UgInstance};

/// Work allowed for one exhaustive agreement table: `faces * 2^k + n * 2^n`.
pub const EXHAUSTIVE_WORK_CAP: u128 = 1 << 30;
const LOCAL_STARTS: u64 = 3;
const LOCAL_TRIALS: u64 = 2000;
const TIE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecoderError {
    #[error("empty domain")]
    EmptyDomain,
    #[error("pair sizes |A0| = {a0}, |B0| = {b0}: need 1 <= |A0| <= |B0| and disjoint parts")]
    PairSizes { a0: usize, b0: usize },
    #[error("no entry for face {0}")]
    MissingFace(Face),
    #[error("cannot fill a list of {ell} distinct strings on {face}")]
    ListTooLong { face: Face, ell: usize },
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Ug(#[from] UgError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
}

/// The table of `f` on every `k`-subset of `domain`, uniformly weighted.
pub fn local_table(f: &dyn Assignment, domain: Face) -> Result<LocalAssignment, DecoderError> {
    let k = f.k();
    let faces: Vec<Face> = domain.subsets(k).collect();
    let values = faces
        .iter()
        .map(|&a| f.get(a).ok_or(DecoderError::MissingFace(a)))
        .collect::<Result<Vec<u64>, _>>()?;
    Ok(LocalAssignment::from_parts(k, faces, values)?)
}

fn radius(nu: f64, k: usize) -> u32 {
    (nu * k as f64 + 1e-9).floor().max(0.0) as u32
}

/// Weighted fraction of the faces inside `domain` where `bits` is within `nu` of the entry.
fn agreement_in(g: &LocalAssignment, domain: Face, bits: u64, nu: f64) -> f64 {
    let r = radius(nu, g.k());
    let mut hit = 0.0;
    let mut total = 0.0;
    for (i, (&a, &v)) in g.faces().iter().zip(g.values()).enumerate() {
        if !a.is_subset_of(domain) {
            continue;
        }
        let w = g.weight(i);
        total += w;
        if ((bits ^ v) & a.bits()).count_ones() <= r {
            hit += w;
        }
    }
    if total > 0.0 {
        hit / total
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementSearch {
    /// Exhaustive when the domain and work are small enough, heuristic otherwise.
    Auto,
    Exhaustive,
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    Exhaustive,
    Plurality,
    LocalDecode,
    Ascent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestFunction {
    pub function: GlobalFunction,
    /// Exact `agr_ν` on the table.
    pub agreement: f64,
    pub source: CandidateSource,
    /// Whether every function on the domain was compared.
    pub exhaustive: bool,
}

/// The function on `domain` with the largest `agr_ν` found against `g`.
pub fn best_agreeing_function(
    g: &LocalAssignment,
    domain: Face,
    nu: f64,
    method: AgreementSearch,
    seed: u64,
) -> Result<BestFunction, DecoderError> {
    if domain.is_empty() {
        return Err(DecoderError::EmptyDomain);
    }
    let n = domain.len();
    let work = g.len() as u128 * (1u128 << g.k().min(64)) + n as u128 * (1u128 << n.min(100));
    let exhaustive = match method {
        AgreementSearch::Exhaustive => true,
        AgreementSearch::Heuristic => false,
        AgreementSearch::Auto => n <= EXHAUSTIVE_MAX_VERTICES && work <= EXHAUSTIVE_WORK_CAP,
    };
    let plurality = g.plurality(domain);
    let mut best = BestFunction {
        function: plurality,
        agreement: agreement_in(g, domain, plurality.bits, nu),
        source: CandidateSource::Plurality,
        exhaustive,
    };
    let mut consider = |bits: u64, source: CandidateSource| {
        let a = agreement_in(g, domain, bits, nu);
        if a > best.agreement + TIE {
            best.function = GlobalFunction::new(domain, bits);
            best.agreement = a;
            best.source = source;
        }
    };
    if exhaustive {
        let table = g.agreement_table(domain, nu)?;
        let mut arg = 0;
        for (j, &v) in table.iter().enumerate() {
            if v > table[arg] + TIE {
                arg = j;
            }
        }
        consider(domain.expand(arg as u64), CandidateSource::Exhaustive);
        return Ok(best);
    }
    let mut starts = vec![plurality.bits];
    let inside: Vec<usize> = (0..g.len()).filter(|&i| g.faces()[i].is_subset_of(domain)).collect();
    let k = g.k();
    if k >= 2 && !inside.is_empty() {
        let a0_size = (k / 4).max(1);
        for j in 0..LOCAL_STARTS {
            use rand::Rng;
            let mut rng = stream(seed, j);
            let i = inside[rng.gen_range(0..inside.len())];
            let face = g.faces()[i];
            let a0 = random_subset(face, a0_size, &mut rng);
            let b0 = face.difference(a0);
            let decode = local_decode(g, domain, a0, b0, LOCAL_TRIALS, mix(seed, 100 + j))?;
            let bits = decode.function.bits | (g.values()[i] & a0.bits());
            consider(bits, CandidateSource::LocalDecode);
            starts.push(bits);
        }
    }
    for s in starts {
        consider(ascend(g, domain, s, nu), CandidateSource::Ascent);
    }
    Ok(best)
}

/// Greedy single-bit flips while `agr_ν` strictly improves.
fn ascend(g: &LocalAssignment, domain: Face, start: u64, nu: f64) -> u64 {
    let r = radius(nu, g.k()) as i64;
    let mut incidence: Vec<Vec<u32>> = vec![Vec::new(); 64];
    let mut dist = vec![0i64; g.len()];
    for (i, &a) in g.faces().iter().enumerate() {
        if !a.is_subset_of(domain) {
            continue;
        }
        for v in a.vertices() {
            incidence[v].push(i as u32);
        }
        dist[i] = ((start ^ g.values()[i]) & a.bits()).count_ones() as i64;
    }
    let mut cur = start;
    for _ in 0..4 * domain.len() {
        let mut best = (0.0, usize::MAX);
        for v in domain.vertices() {
            let mut gain = 0.0;
            for &i in &incidence[v] {
                let i = i as usize;
                let step = if (cur ^ g.values()[i]) >> v & 1 == 1 { -1 } else { 1 };
                let before = dist[i] <= r;
                let after = dist[i] + step <= r;
                if before != after {
                    gain += if after { g.weight(i) } else { -g.weight(i) };
                }
            }
            if gain > best.0 + TIE {
                best = (gain, v);
            }
        }
        let v = best.1;
        if v == usize::MAX {
            break;
        }
        for &i in &incidence[v] {
            let i = i as usize;
            dist[i] += if (cur ^ g.values()[i]) >> v & 1 == 1 { -1 } else { 1 };
        }
        cur ^= 1 << v;
    }
    cur
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShortListParams {
    /// Starting agreement threshold.
    pub delta: f64,
    pub rounds: usize,
    /// Threshold drop per round; `None` means `delta / 16`.
    pub decrement: Option<f64>,
    pub nu: f64,
    /// Rounds before this index are discarded.
    pub first_round: usize,
    /// Survivors are pairwise at distance at least this.
    pub eta: f64,
    pub method: AgreementSearch,
    pub seed: u64,
}

impl ShortListParams {
    pub fn new(delta: f64) -> ShortListParams {
        ShortListParams {
            delta,
            rounds: 8,
            decrement: None,
            nu: 0.0,
            first_round: 0,
            eta: 0.1,
            method: AgreementSearch::Auto,
            seed: 0,
        }
    }

    pub fn step(&self) -> f64 {
        self.decrement.unwrap_or(self.delta / 16.0)
    }

    /// The list-size bound `2/δ`.
    pub fn bound(&self) -> f64 {
        2.0 / self.delta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub threshold: f64,
    pub function: String,
    #[serde(skip)]
    pub bits: u64,
    pub agreement: f64,
    pub source: CandidateSource,
    pub randomized_faces: usize,
    pub randomized_mass: f64,
}

/// The accepted rounds before any dropping or pruning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortListRounds {
    #[serde(skip)]
    pub domain: Face,
    pub accepted: Vec<RoundTrace>,
    /// Thresholds in the order tried, including the one that stopped the loop.
    pub schedule: Vec<f64>,
    /// Best agreement in the round that stopped the loop.
    pub stop_agreement: Option<f64>,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneEvent {
    pub round: usize,
    pub blocked_by: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortListOutput {
    #[serde(flatten)]
    pub rounds: ShortListRounds,
    pub first_round: usize,
    pub eta: f64,
    /// `(round, function)` for every survivor.
    #[serde(skip)]
    pub survivors: Vec<(usize, GlobalFunction)>,
    pub survivor_rounds: Vec<usize>,
    pub pruned: Vec<PruneEvent>,
    /// Nothing passed the first threshold.
    pub empty: bool,
}

impl ShortListOutput {
    pub fn list(&self) -> FunctionList {
        FunctionList::new(
            self.rounds.domain,
            self.survivors.iter().map(|(_, f)| f.bits).collect(),
        )
        .expect("survivors are distinct")
    }

    pub fn len(&self) -> usize {
        self.survivors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.survivors.is_empty()
    }

    pub fn within_bound(&self) -> bool {
        self.rounds.accepted.len() as f64 <= self.rounds.bound + TIE
    }
}

/// Find a function above the current threshold, re-randomize its agreement set, lower
/// the threshold, repeat.
pub fn short_list_rounds(
    g: &LocalAssignment,
    domain: Face,
    p: &ShortListParams,
) -> Result<ShortListRounds, DecoderError> {
    if domain.is_empty() {
        return Err(DecoderError::EmptyDomain);
    }
    let mut work = g.restrict_to(domain);
    let r = radius(p.nu, g.k());
    let mut accepted = Vec::new();
    let mut schedule = Vec::new();
    let mut stop_agreement = None;
    for i in 0..p.rounds {
        let threshold = p.delta - i as f64 * p.step();
        schedule.push(threshold);
        let best = best_agreeing_function(&work, domain, p.nu, p.method, mix(p.seed, 2 * i as u64))?;
        if best.agreement <= threshold {
            stop_agreement = Some(best.agreement);
            break;
        }
        let salt = mix(p.seed, 2 * i as u64 + 1);
        let mut hits = Vec::new();
        for (j, (&a, &v)) in work.faces().iter().zip(work.values()).enumerate() {
            if ((best.function.bits ^ v) & a.bits()).count_ones() <= r {
                hits.push((j, a));
            }
        }
        let mut mass = 0.0;
        for &(j, a) in &hits {
            mass += work.weight(j);
            work.set(a, random_bits(a, &mut stream(salt, j as u64)))?;
        }
        accepted.push(RoundTrace {
            round: i,
            threshold,
            function: bit_string(domain, best.function.bits),
            bits: best.function.bits,
            agreement: best.agreement,
            source: best.source,
            randomized_faces: hits.len(),
            randomized_mass: mass,
        });
    }
    Ok(ShortListRounds {
        domain,
        accepted,
        schedule,
        stop_agreement,
        bound: p.bound(),
    })
}

/// Drop rounds before `first_round`, then keep a maximal set at pairwise distance `>= eta`
/// in round order.
pub fn prune_rounds(rounds: &ShortListRounds, first_round: usize, eta: f64) -> ShortListOutput {
    let domain = rounds.domain;
    let mut survivors: Vec<(usize, GlobalFunction)> = Vec::new();
    let mut pruned = Vec::new();
    for tr in rounds.accepted.iter().filter(|t| t.round >= first_round) {
        let blocker = survivors.iter().find_map(|(r, f)| {
            let d = distance_on(domain, f.bits, tr.bits);
            (d < eta - TIE || d == 0.0).then_some((*r, d))
        });
        match blocker {
            Some((blocked_by, distance)) => pruned.push(PruneEvent {
                round: tr.round,
                blocked_by,
                distance,
            }),
            None => survivors.push((tr.round, GlobalFunction::new(domain, tr.bits))),
        }
    }
    ShortListOutput {
        rounds: rounds.clone(),
        first_round,
        eta,
        survivor_rounds: survivors.iter().map(|(r, _)| *r).collect(),
        survivors,
        pruned,
        empty: rounds.accepted.is_empty(),
    }
}

pub fn short_list(
    g: &LocalAssignment,
    domain: Face,
    p: &ShortListParams,
) -> Result<ShortListOutput, DecoderError> {
    let rounds = short_list_rounds(g, domain, p)?;
    Ok(prune_rounds(&rounds, p.first_round, p.eta))
}

/// Greedy cover by decreasing agreement: keep a candidate iff it is farther than `eta`
/// from everything kept.
pub fn eta_cover(domain: Face, candidates: &[(u64, f64)], eta: f64) -> FunctionList {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidates[b].1.total_cmp(&candidates[a].1).then(a.cmp(&b)));
    let mut kept: Vec<u64> = Vec::new();
    for i in order {
        let f = candidates[i].0 & domain.bits();
        if kept.iter().all(|&g| distance_on(domain, f, g) > eta + TIE) {
            kept.push(f);
        }
    }
    FunctionList::new(domain, kept).expect("kept functions are distinct")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairParams {
    /// A pair is good when its consistency set has measure at least `eps / 2`.
    pub eps: f64,
    /// Largest defect probability for an excellent pair.
    pub defect: f64,
    /// Disagreements on the shared part above this count as a defect.
    pub h: usize,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairGrade {
    Bad,
    Good,
    Excellent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalDecode {
    /// Defined off the anchor part.
    pub function: GlobalFunction,
    pub consistent_samples: u64,
    /// Vertices that no consistent sample covered; their bits default to 0.
    pub uncovered: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairClass {
    pub a0: Face,
    pub b0: Face,
    pub cons_measure: f64,
    /// Estimated defect probability, measured for good pairs only.
    pub defect: Option<f64>,
    pub grade: PairGrade,
    pub decode: Option<LocalDecode>,
}

fn check_pair(domain: Face, a0: Face, b0: Face) -> Result<(), DecoderError> {
    if a0.is_empty() || a0.len() > b0.len() || !a0.is_disjoint(b0) || !a0.union(b0).is_subset_of(domain) {
        return Err(DecoderError::PairSizes {
            a0: a0.len(),
            b0: b0.len(),
        });
    }
    Ok(())
}

fn entry(f: &dyn Assignment, a: Face) -> Result<u64, DecoderError> {
    f.get(a).ok_or(DecoderError::MissingFace(a))
}

/// Whether `F[A0 ∪ B]` agrees with the reference on `A0`.
fn consistent(f: &dyn Assignment, a0: Face, b: Face, reference: u64) -> Result<bool, DecoderError> {
    Ok((entry(f, a0.union(b))? ^ reference) & a0.bits() == 0)
}

/// Estimate the consistency measure of `(A0, B0)` and, for good pairs, the defect over
/// pairs of extensions sharing a part of size `|A0|`.
pub fn classify_pair(
    f: &dyn Assignment,
    domain: Face,
    a0: Face,
    b0: Face,
    p: &PairParams,
) -> Result<PairClass, DecoderError> {
    check_pair(domain, a0, b0)?;
    let reference = entry(f, a0.union(b0))?;
    let rest = domain.difference(a0);
    let mut hits = 0u64;
    for j in 0..p.trials {
        let b = random_subset(rest, b0.len(), &mut stream(p.seed, j));
        if consistent(f, a0, b, reference)? {
            hits += 1;
        }
    }
    let cons_measure = hits as f64 / p.trials.max(1) as f64;
    if cons_measure < p.eps / 2.0 {
        return Ok(PairClass {
            a0,
            b0,
            cons_measure,
            defect: None,
            grade: PairGrade::Bad,
            decode: None,
        });
    }
    let shared = a0.len();
    let own = b0.len() - shared;
    let salt = mix(p.seed, 1);
    let mut defects = 0u64;
    for j in 0..p.trials {
        let mut rng = stream(salt, j);
        let e = random_subset(rest, shared, &mut rng);
        let d1 = random_subset(rest.difference(e), own, &mut rng);
        let d2 = random_subset(rest.difference(e), own, &mut rng);
        let (b1, b2) = (d1.union(e), d2.union(e));
        if !consistent(f, a0, b1, reference)? || !consistent(f, a0, b2, reference)? {
            continue;
        }
        let diff = (entry(f, a0.union(b1))? ^ entry(f, a0.union(b2))?) & e.bits();
        if diff.count_ones() as usize > p.h {
            defects += 1;
        }
    }
    let defect = defects as f64 / p.trials.max(1) as f64;
    let decode = local_decode(f, domain, a0, b0, p.trials, mix(p.seed, 2))?;
    Ok(PairClass {
        a0,
        b0,
        cons_measure,
        defect: Some(defect),
        grade: if defect <= p.defect {
            PairGrade::Excellent
        } else {
            PairGrade::Good
        },
        decode: Some(decode),
    })
}

/// Per-vertex plurality of `F[A0 ∪ B]` over sampled `B` in the consistency set of `(A0, B0)`.
pub fn local_decode(
    f: &dyn Assignment,
    domain: Face,
    a0: Face,
    b0: Face,
    trials: u64,
    seed: u64,
) -> Result<LocalDecode, DecoderError> {
    check_pair(domain, a0, b0)?;
    let reference = entry(f, a0.union(b0))?;
    let rest = domain.difference(a0);
    let mut score = [0i64; 64];
    let mut seen = 0u64;
    let mut consistent_samples = 0;
    for j in 0..trials {
        let b = random_subset(rest, b0.len(), &mut stream(seed, j));
        let value = entry(f, a0.union(b))?;
        if (value ^ reference) & a0.bits() != 0 {
            continue;
        }
        consistent_samples += 1;
        seen |= b.bits();
        for x in b.vertices() {
            score[x] += if value >> x & 1 == 1 { 1 } else { -1 };
        }
    }
    let bits = rest.vertices().filter(|&x| score[x] > 0).fold(0u64, |b, x| b | 1 << x);
    Ok(LocalDecode {
        function: GlobalFunction::new(rest, bits),
        consistent_samples,
        uncovered: rest.difference(Face::from_bits(seen)).to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub level: usize,
    pub faces: usize,
    /// Faces with no list in the pool above them.
    pub skipped: usize,
    pub threshold: f64,
    /// Fraction of covered faces whose majority mass is at least `1 - threshold`.
    pub stable_fraction: f64,
    pub mean_mass: f64,
    pub min_mass: f64,
    /// The most common list size.
    pub ell: usize,
    /// List size to number of faces.
    pub census: BTreeMap<usize, usize>,
    /// Faces whose list size differs from `ell`.
    pub off_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Sorted distinct restrictions for every covered face.
    pub lists: FaceMap<Vec<u64>>,
    pub mass: FaceMap<f64>,
    pub report: ProjectionReport,
}

fn restricted_key(list: &[u64], b: Face) -> Vec<u64> {
    let mut key: Vec<u64> = list.iter().map(|f| f & b.bits()).collect();
    key.sort_unstable();
    key.dedup();
    key
}

/// `L[B]` = the most frequent `L[D]|_B` over pool entries `D ⊇ B`.
///
/// Pool entries are draws from the top-level measure, so equal counts are the
/// conditional weights.
pub fn majority_project(
    x: &SimplicialComplex,
    pool: &[(Face, Vec<u64>)],
    level: usize,
    threshold: f64,
) -> Result<Projection, DecoderError> {
    let faces = x.level(level)?;
    let mut votes: FaceMap<Vec<Vec<u64>>> = FaceMap::default();
    for (d, list) in pool {
        for b in d.subsets(level) {
            votes.entry(b).or_default().push(restricted_key(list, b));
        }
    }
    let mut lists = FaceMap::default();
    let mut mass = FaceMap::default();
    let mut census = BTreeMap::new();
    let mut skipped = 0;
    let mut masses = Vec::new();
    for &b in &faces.faces {
        let Some(keys) = votes.get_mut(&b) else {
            skipped += 1;
            continue;
        };
        keys.sort_unstable();
        let mut best: (usize, &[u64]) = (0, &[]);
        for run in keys.chunk_by(|a, c| a == c) {
            if run.len() > best.0 {
                best = (run.len(), &run[0]);
            }
        }
        let m = best.0 as f64 / keys.len() as f64;
        *census.entry(best.1.len()).or_insert(0) += 1;
        lists.insert(b, best.1.to_vec());
        mass.insert(b, m);
        masses.push(m);
    }
    let covered = masses.len();
    let ell = census
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map_or(0, |(&s, _)| s);
    let report = ProjectionReport {
        level,
        faces: faces.len(),
        skipped,
        threshold,
        stable_fraction: if covered == 0 {
            0.0
        } else {
            masses.iter().filter(|&&m| m >= 1.0 - threshold - TIE).count() as f64 / covered as f64
        },
        mean_mass: if covered == 0 {
            0.0
        } else {
            masses.iter().sum::<f64>() / covered as f64
        },
        min_mass: masses.iter().copied().fold(f64::INFINITY, f64::min).min(1.0),
        ell,
        off_size: census.iter().filter(|(&s, _)| s != ell).map(|(_, &c)| c).sum(),
        census,
    };
    Ok(Projection { lists, mass, report })
}

/// Keep the first `ell` distinct entries and fill up with the smallest unused strings.
fn pad_list(face: Face, list: Option<&Vec<u64>>, ell: usize) -> Result<(Vec<u64>, bool), DecoderError> {
    let mut out: Vec<u64> = Vec::with_capacity(ell);
    for &s in list.map(|l| l.as_slice()).unwrap_or(&[]) {
        let s = s & face.bits();
        if out.len() < ell && !out.contains(&s) {
            out.push(s);
        }
    }
    let changed = list.is_none_or(|l| l.len() != ell || out.len() != ell);
    let mut j = 0u64;
    while out.len() < ell {
        if face.len() < 64 && j >> face.len() != 0 {
            return Err(DecoderError::ListTooLong { face, ell });
        }
        let s = face.expand(j);
        if !out.contains(&s) {
            out.push(s);
        }
        j += 1;
    }
    Ok((out, changed))
}

#[derive(Debug, Clone)]
pub struct ListInstance {
    pub instance: UgInstance,
    pub ell: usize,
    /// Vertices whose list had to be repaired to size `ell`.
    pub padded_vertices: usize,
    /// Top-level lists that had to be repaired.
    pub padded_top: usize,
    /// Edges left with an identity placeholder.
    pub arbitrary_edges: usize,
}

/// The UG instance whose edge `(u, v)` reindexes `L[u]` into `L[v]` through `L[u ∪ v]`.
/// Edges where the lists do not fit together carry the identity and are flagged.
pub fn build_ug_from_lists(
    graph: Arc<ConstraintGraph>,
    lists_t: &FaceMap<Vec<u64>>,
    lists_2t: &FaceMap<Vec<u64>>,
    lists_3t: Option<&FaceMap<Vec<u64>>>,
) -> Result<ListInstance, DecoderError> {
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for u in graph.vertices() {
        if let Some(l) = lists_t.get(u) {
            *sizes.entry(l.len()).or_insert(0) += 1;
        }
    }
    let ell = sizes
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map_or(1, |(&s, _)| s.max(1));
    let mut padded_vertices = 0;
    let mut lists = Vec::with_capacity(graph.vertex_count());
    for &u in graph.vertices() {
        let (l, changed) = pad_list(u, lists_t.get(&u), ell)?;
        padded_vertices += changed as usize;
        lists.push(l);
    }
    let id = Perm::identity(ell);
    let mut arbitrary = Vec::new();
    let mut perms = Vec::with_capacity(graph.edges().len());
    for (e, edge) in graph.edges().iter().enumerate() {
        let (u, v) = (edge.u as usize, edge.v as usize);
        let (fu, fv) = (graph.vertices()[u], graph.vertices()[v]);
        match reindex(&lists[u], &lists[v], fu, fv, lists_2t.get(&fu.union(fv)), ell) {
            Some(p) => perms.push(p),
            None => {
                perms.push(id);
                arbitrary.push(e);
            }
        }
    }
    let mut instance = UgInstance::new(graph.clone(), ell, perms)?;
    for &e in &arbitrary {
        instance.mark_arbitrary(e);
    }
    let mut padded_top = 0;
    let mut top = FaceMap::default();
    if let Some(x) = graph.complex() {
        let level = x.level(3 * graph.t())?;
        for &big in &level.faces {
            let (l, changed) = pad_list(big, lists_3t.and_then(|m| m.get(&big)), ell)?;
            padded_top += changed as usize;
            top.insert(big, l);
        }
    }
    let instance = instance.with_lists(lists, Some(top))?;
    Ok(ListInstance {
        instance,
        ell,
        padded_vertices,
        padded_top,
        arbitrary_edges: arbitrary.len(),
    })
}

fn reindex(lu: &[u64], lv: &[u64], fu: Face, fv: Face, joint: Option<&Vec<u64>>, ell: usize) -> Option<Perm> {
    let joint = joint?;
    if joint.len() != ell {
        return None;
    }
    let mut images = vec![usize::MAX; ell];
    let mut used = vec![false; ell];
    for &s in joint {
        let i = lu.iter().position(|&a| a == s & fu.bits())?;
        let j = lv.iter().position(|&b| b == s & fv.bits())?;
        if images[i] != usize::MAX || used[j] {
            return None;
        }
        images[i] = j;
        used[j] = true;
    }
    Perm::from_images(&images).ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Global label whose preimages under `g` pick the entries.
    pub label: usize,
    /// `R(u)` for every graph vertex.
    pub assignment: Vec<u64>,
    pub function: GlobalFunction,
    /// `agr_ν(function, F)` on the full table.
    pub agreement: f64,
    /// Agreement reached by each global label.
    pub candidates: Vec<f64>,
    /// Non-placeholder edges explained by `g`.
    pub explained_edges: usize,
    /// Explained edges where `R(u) ∪ R(v)` is not in `L[u ∪ v]`.
    pub violations: usize,
    /// Direct-product test on `R` as a table on level `t`.
    pub r_pass: TestReport,
}

/// Pick `R(u) = L[u]_{h(u)}` with `h(u) = g(u)^{-1}(c)` for the best global label `c`, then
/// decode by per-vertex plurality of `R`.
#[allow(clippy::too_many_arguments)]
pub fn select_and_decode(
    x: &SimplicialComplex,
    inst: &UgInstance,
    lists_2t: &FaceMap<Vec<u64>>,
    g: &[Perm],
    table: &LocalAssignment,
    nu: f64,
    r_trials: u64,
    seed: u64,
) -> Result<Selection, DecoderError> {
    let graph = inst.graph();
    let lists = inst.lists().ok_or(UgError::NoLists)?;
    let t = graph.t();
    let m = inst.m();
    let mut best: Option<(usize, Vec<u64>, GlobalFunction, f64)> = None;
    let mut candidates = Vec::with_capacity(m);
    for c in 0..m {
        let r: Vec<u64> = (0..graph.vertex_count())
            .map(|u| lists[u][g[u].inverse().apply(c)])
            .collect();
        let rt = LocalAssignment::from_fn(x, t, |_, face| {
            graph.vertex_index(face).map_or(0, |u| r[u])
        })?;
        let function = rt.plurality(x.vertex_set());
        let agreement = table.agr_set(&function, nu).measure;
        candidates.push(agreement);
        if best.as_ref().is_none_or(|b| agreement > b.3 + TIE) {
            best = Some((c, r, function, agreement));
        }
    }
    let (label, assignment, function, agreement) = best.expect("alphabet is non-empty");
    let mut explained_edges = 0;
    let mut violations = 0;
    for (e, edge) in graph.edges().iter().enumerate() {
        if inst.arbitrary()[e] || !inst.edge_explained(e, g) {
            continue;
        }
        explained_edges += 1;
        let (u, v) = (edge.u as usize, edge.v as usize);
        let joint = graph.vertices()[u].union(graph.vertices()[v]);
        let s = assignment[u] | assignment[v];
        if !lists_2t.get(&joint).is_some_and(|l| l.contains(&s)) {
            violations += 1;
        }
    }
    let rt = LocalAssignment::from_fn(x, t, |_, face| {
        graph.vertex_index(face).map_or(0, |u| assignment[u])
    })?;
    let s = ((t as f64).sqrt().floor() as usize).max(1);
    let r_pass = run_dp_test(x, &rt, &DpParams::monte_carlo(t, s, r_trials, seed))?.report;
    Ok(Selection {
        label,
        assignment,
        function,
        agreement,
        candidates,
        explained_edges,
        violations,
        r_pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    pub k: usize,
    pub s: usize,
    pub nu: f64,
    /// Top faces sampled for the localized census.
    pub local_faces: usize,
    /// Monte-Carlo trials per face when exact enumeration is too large.
    pub local_trials: u64,
    /// A face is good when its localized pass rate reaches this.
    pub local_threshold: f64,
    pub min_good_fraction: f64,
    pub delta: f64,
    pub rounds: usize,
    pub decrement: Option<f64>,
    /// Discarded-round counts scanned: `0..round_grid`.
    pub round_grid: usize,
    /// Smallest prune radius; the grid multiplies it by 4 per step and stops below 1/2.
    pub eta: f64,
    pub radius_steps: usize,
    pub scan_trials: u64,
    /// Size of the sub-faces in the consistency audit; `None` means `max(d/2, min(d, k+2))`.
    pub sub_face: Option<usize>,
    pub subfaces_per_face: usize,
    pub johnson_threshold: f64,
    pub list_trials: u64,
    pub list_threshold: f64,
    pub t: usize,
    pub pool: usize,
    pub min_support: usize,
    pub majority_threshold: f64,
    pub stability_min: f64,
    pub arbitrary_max: f64,
    pub c_threshold: f64,
    pub audit_trials: u64,
    pub r_trials: u64,
    /// Not part of the serialized form; callers derive it from their own seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for PipelineParams {
    fn default() -> PipelineParams {
        PipelineParams {
            k: 6,
            s: 2,
            nu: 0.0,
            local_faces: 16,
            local_trials: 20_000,
            local_threshold: 0.4,
            min_good_fraction: 0.5,
            delta: 0.3,
            rounds: 8,
            decrement: None,
            round_grid: 2,
            eta: 0.05,
            radius_steps: 3,
            scan_trials: 100,
            sub_face: None,
            subfaces_per_face: 4,
            johnson_threshold: 0.9,
            list_trials: 300,
            list_threshold: 0.8,
            t: 2,
            pool: 2000,
            min_support: 3,
            majority_threshold: 0.1,
            stability_min: 0.9,
            arbitrary_max: 0.1,
            c_threshold: 0.1,
            audit_trials: 100_000,
            r_trials: 20_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub status: StageStatus,
    pub metrics: Value,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub function: Option<GlobalFunction>,
    pub stages: Vec<StageReport>,
    pub halted_at: Option<String>,
}

impl DecodeOutcome {
    pub fn succeeded(&self) -> bool {
        self.halted_at.is_none() && self.function.is_some()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "function": self.function.map(|f| f.to_string()),
            "halted_at": self.halted_at,
            "stages": self.stages,
        })
    }
}

/// Memoized short-list rounds per domain, each seeded from the domain itself.
struct ListCache<'a> {
    table: &'a dyn Assignment,
    params: ShortListParams,
    rounds: Mutex<FaceMap<Arc<ShortListRounds>>>,
}

impl<'a> ListCache<'a> {
    fn new(table: &'a dyn Assignment, params: ShortListParams) -> ListCache<'a> {
        ListCache {
            table,
            params,
            rounds: Mutex::new(FaceMap::default()),
        }
    }

    fn rounds(&self, domain: Face) -> Result<Arc<ShortListRounds>, DecoderError> {
        if let Some(r) = self.rounds.lock().expect("cache lock").get(&domain) {
            return Ok(r.clone());
        }
        let local = local_table(self.table, domain)?;
        let p = ShortListParams {
            seed: mix(self.params.seed, domain.bits()),
            ..self.params
        };
        let r = Arc::new(short_list_rounds(&local, domain, &p)?);
        self.rounds.lock().expect("cache lock").insert(domain, r.clone());
        Ok(r)
    }

    fn output(&self, domain: Face, first_round: usize, eta: f64) -> Result<ShortListOutput, DecoderError> {
        let rounds = self.rounds(domain)?;
        Ok(prune_rounds(&rounds, first_round, eta))
    }

    fn list(&self, domain: Face, first_round: usize, eta: f64) -> FunctionList {
        self.output(domain, first_round, eta)
            .map(|o| o.list())
            .unwrap_or_else(|_| FunctionList::empty(domain))
    }
}

struct Stages {
    seed: u64,
    reports: Vec<StageReport>,
}

impl Stages {
    fn seed(&self) -> u64 {
        mix(self.seed, self.reports.len() as u64)
    }

    fn push(&mut self, stage: &str, pass: bool, metrics: Value) -> bool {
        let seed = self.seed();
        self.reports.push(StageReport {
            stage: stage.to_string(),
            status: if pass { StageStatus::Pass } else { StageStatus::Fail },
            metrics,
            seed,
        });
        pass
    }

    fn halt(self) -> DecodeOutcome {
        let halted_at = self.reports.last().map(|r| r.stage.clone());
        DecodeOutcome {
            function: None,
            stages: self.reports,
            halted_at,
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Run the list-decoding pipeline on `table` (a table on level `k` of `x`) and return the
/// recovered function with one report per stage. Stops at the first failing stage.
pub fn decode_global(
    x: &Arc<SimplicialComplex>,
    table: &LocalAssignment,
    p: &PipelineParams,
) -> Result<DecodeOutcome, DecoderError> {
    let d = x.d();
    let mut stages = Stages {
        seed: p.seed,
        reports: Vec::new(),
    };

    // Localized census.
    let seed = stages.seed();
    let sampled: Vec<Face> = (0..p.local_faces as u64)
        .map(|j| x.sample_facet(&mut stream(seed, j)))
        .collect();
    let tuples = binomial(d, p.s) * binomial(d - p.s, p.k - p.s).pow(2);
    let local = if tuples <= EXACT_TUPLE_CAP {
        DpParams::exact(p.k, p.s)
    } else {
        DpParams::monte_carlo(p.k, p.s, p.local_trials, seed)
    };
    let rates = sampled
        .par_iter()
        .map(|&face| localized_pass(table, face, &local).map(|r| r.report.estimate))
        .collect::<Result<Vec<f64>, DpError>>()?;
    let good: Vec<Face> = sampled
        .iter()
        .zip(&rates)
        .filter(|(_, &r)| r >= p.local_threshold)
        .map(|(&f, _)| f)
        .collect();
    let good_fraction = good.len() as f64 / sampled.len().max(1) as f64;
    let pass = stages.push(
        "local_pass",
        !good.is_empty() && good_fraction >= p.min_good_fraction,
        json!({
            "sampled": sampled.len(),
            "good": good.len(),
            "good_fraction": good_fraction,
            "threshold": p.local_threshold,
            "mean_pass": mean(&rates),
            "min_pass": rates.iter().copied().fold(1.0, f64::min),
            "max_pass": rates.iter().copied().fold(0.0, f64::max),
            "mode": local.mode,
        }),
    );
    if !pass {
        return Ok(stages.halt());
    }

    // Short lists, with the (first round, radius) pair chosen by a list-agreement scan.
    let seed = stages.seed();
    let base = ShortListParams {
        delta: p.delta,
        rounds: p.rounds,
        decrement: p.decrement,
        nu: p.nu,
        first_round: 0,
        eta: p.eta,
        method: AgreementSearch::Auto,
        seed,
    };
    let cache = ListCache::new(table, base);
    let mut grid = Vec::new();
    let mut chosen = (0, p.eta, -1.0);
    for r in 0..p.round_grid.max(1) {
        for i in 0..p.radius_steps.max(1) {
            let eta = p.eta * 4f64.powi(i as i32);
            if i > 0 && eta >= 0.5 {
                break;
            }
            let rep = run_list_agreement_test(x, |a| cache.list(a, r, eta), eta, p.scan_trials, seed);
            let rate = rep.report.estimate;
            grid.push(json!({"first_round": r, "eta": eta, "pass_rate": rate}));
            if rate > chosen.2 + TIE {
                chosen = (r, eta, rate);
            }
        }
    }
    let (first_round, eta, _) = chosen;
    let outputs = good
        .par_iter()
        .map(|&face| cache.output(face, first_round, eta))
        .collect::<Result<Vec<ShortListOutput>, DecoderError>>()?;
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for o in &outputs {
        *sizes.entry(o.len()).or_insert(0) += 1;
    }
    let empty = outputs.iter().filter(|o| o.is_empty()).count();
    let over = outputs.iter().filter(|o| !o.within_bound()).count();
    let pass = stages.push(
        "short_list",
        empty == 0 && over == 0,
        json!({
            "grid": grid,
            "first_round": first_round,
            "eta": eta,
            "faces": outputs.len(),
            "size_census": sizes,
            "empty": empty,
            "over_bound": over,
            "bound": p.delta.recip() * 2.0,
            "max_rounds_accepted": outputs.iter().map(|o| o.rounds.accepted.len()).max().unwrap_or(0),
        }),
    );
    if !pass {
        return Ok(stages.halt());
    }

    // Downward and upward consistency on sub-faces.
    let seed = stages.seed();
    let b_size = p.sub_face.unwrap_or((d / 2).max(d.min(p.k + 2))).min(d);
    let checks = outputs
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, o)| (0..p.subfaces_per_face).map(move |j| (i, j, o)))
        .map(|(i, j, o)| {
            let domain = o.rounds.domain;
            let b = random_subset(domain, b_size, &mut stream(seed, (i * p.subfaces_per_face + j) as u64));
            let sub = cache.output(b, first_round, eta)?;
            let top = o.list();
            let low = sub.list();
            let close = |f: u64, list: &FunctionList| {
                list.functions().iter().any(|&g| distance_on(b, f, g) <= eta + TIE)
            };
            let down = !low.is_empty() && top.functions().iter().all(|&f| close(f, &low));
            let up = low.functions().iter().all(|&g| close(g, &top));
            let best = |r: &ShortListRounds| {
                r.accepted.first().map_or(r.stop_agreement.unwrap_or(0.0), |t| t.agreement)
            };
            let jump = (best(&sub.rounds) - best(&o.rounds)).abs();
            Ok((down, up, jump))
        })
        .collect::<Result<Vec<(bool, bool, f64)>, DecoderError>>()?;
    let n = checks.len().max(1) as f64;
    let down = checks.iter().filter(|c| c.0).count() as f64 / n;
    let up = checks.iter().filter(|c| c.1).count() as f64 / n;
    let jumps: Vec<f64> = checks.iter().map(|c| c.2).collect();
    let pass = stages.push(
        "sub_face_consistency",
        down >= p.johnson_threshold && up >= p.johnson_threshold,
        json!({
            "sub_face": b_size,
            "checks": checks.len(),
            "downward": down,
            "upward": up,
            "threshold": p.johnson_threshold,
            "agreement_jump_mean": mean(&jumps),
            "agreement_jump_max": jumps.iter().copied().fold(0.0, f64::max),
        }),
    );
    if !pass {
        return Ok(stages.halt());
    }

    // List-agreement census.
    let seed = stages.seed();
    let census = run_list_agreement_test(x, |a| cache.list(a, first_round, eta), eta, p.list_trials, seed);
    let pass = stages.push(
        "list_agreement",
        census.report.estimate >= p.list_threshold,
        json!({
            "report": census.report,
            "half": census.half,
            "rounded_down": census.rounded_down,
            "empty": census.empty,
            "size_mismatch": census.size_mismatch,
            "ambiguous": census.ambiguous,
            "unmatched": census.unmatched,
            "threshold": p.list_threshold,
        }),
    );
    if !pass {
        return Ok(stages.halt());
    }

    // Majority projection to levels t, 2t and 3t.
    let seed = stages.seed();
    let t = p.t;
    let levels = [3 * t, 2 * t, t];
    let mut facets: Vec<Face> = (0..p.pool as u64)
        .map(|j| x.sample_facet(&mut stream(seed, j)))
        .collect();
    let mut topped_up = 0;
    for (li, &level) in levels.iter().enumerate() {
        let mut support: FaceMap<usize> = FaceMap::default();
        for f in &facets {
            for b in f.subsets(level) {
                *support.entry(b).or_insert(0) += 1;
            }
        }
        let faces = x.level(level)?;
        let salt = mix(seed, 1 + li as u64);
        for (fi, &b) in faces.faces.iter().enumerate() {
            let have = support.get(&b).copied().unwrap_or(0);
            for j in have..p.min_support {
                let mut rng = stream(salt, (fi * p.min_support + j) as u64);
                if let Some(top) = x.sample_superset(b, d, &mut rng) {
                    facets.push(top);
                    topped_up += 1;
                }
            }
        }
    }
    let pool = facets
        .par_iter()
        .map(|&f| cache.output(f, first_round, eta).map(|o| (f, o.list().functions().to_vec())))
        .collect::<Result<Vec<(Face, Vec<u64>)>, DecoderError>>()?;
    let projections = levels
        .iter()
        .map(|&level| majority_project(x, &pool, level, p.majority_threshold))
        .collect::<Result<Vec<Projection>, DecoderError>>()?;
    let [p3, p2, p1] = <[Projection; 3]>::try_from(projections).expect("three levels");
    let stable = |r: &ProjectionReport| r.skipped == 0 && r.stable_fraction >= p.stability_min;
    let pass = stages.push(
        "majority_project",
        stable(&p1.report) && stable(&p2.report),
        json!({
            "pool": pool.len(),
            "topped_up": topped_up,
            "levels": [p1.report, p2.report, p3.report],
            "stability_min": p.stability_min,
        }),
    );
    if !pass {
        return Ok(stages.halt());
    }

    // UG instance from the projected lists.
    let graph = Arc::new(constraint_graph(x, t)?);
    let built = build_ug_from_lists(graph, &p1.lists, &p2.lists, Some(&p3.lists))?;
    let arbitrary_mass = built.instance.arbitrary_mass();
    let pass = stages.push(
        "build_ug",
        arbitrary_mass <= p.arbitrary_max,
        json!({
            "t": t,
            "vertices": built.instance.graph().vertex_count(),
            "edges": built.instance.graph().edges().len(),
            "ell": built.ell,
            "padded_vertices": built.padded_vertices,
            "padded_top": built.padded_top,
            "arbitrary_edges": built.arbitrary_edges,
            "arbitrary_mass": arbitrary_mass,
            "threshold": p.arbitrary_max,
        }),
    );
    if !pass {
        return Ok(stages.halt());
    }

    // Coboundary audit.
    let seed = stages.seed();
    let audit = coboundary_audit(
        &built.instance,
        &AuditOptions {
            search: SearchOptions {
                seed,
                ..SearchOptions::default()
            },
            mode: Mode::Exact,
            trials: p.audit_trials,
        },
    )?;
    let pass = stages.push(
        "coboundary_audit",
        audit.c_hat <= p.c_threshold,
        json!({
            "xi_hat": audit.xi_hat,
            "strong_xi_hat": audit.strong_xi_hat,
            "consistency_mode": audit.consistency.mode,
            "best_value": audit.best_value,
            "value_method": audit.value_method,
            "c_hat": audit.c_hat,
            "g_method": audit.g_method,
            "threshold": p.c_threshold,
        }),
    );
    if !pass {
        return Ok(stages.halt());
    }

    // Selection and global decoding.
    let seed = stages.seed();
    let g: Vec<Perm> = audit
        .best_g
        .iter()
        .map(|images| Perm::from_images(images).expect("audit returns permutations"))
        .collect();
    let sel = select_and_decode(x, &built.instance, &p2.lists, &g, table, p.nu, p.r_trials, seed)?;
    let pass = stages.push(
        "select_and_decode",
        sel.violations == 0 && sel.agreement >= p.delta,
        json!({
            "label": sel.label,
            "function": sel.function.to_string(),
            "agreement": sel.agreement,
            "candidates": sel.candidates,
            "explained_edges": sel.explained_edges,
            "violations": sel.violations,
            "r_pass": sel.r_pass,
            "threshold": p.delta,
        }),
    );
    if !pass {
        return Ok(stages.halt());
    }
    Ok(DecodeOutcome {
        function: Some(sel.function),
        stages: stages.reports,
        halted_at: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng;

    fn on_range(n: usize, k: usize, value: impl FnMut(usize, Face) -> u64) -> LocalAssignment {
        let x = SimplicialComplex::complete(n, k).unwrap();
        LocalAssignment::from_fn(&x, k, value).unwrap()
    }

    #[test]
    fn direct_product_is_found() {
        let d = Face::range(12);
        let f = GlobalFunction::random(d, &mut rng_from(1));
        let g = on_range(12, 5, |_, a| f.bits & a.bits());
        for method in [AgreementSearch::Exhaustive, AgreementSearch::Heuristic] {
            let best = best_agreeing_function(&g, d, 0.0, method, 3).unwrap();
            assert_eq!(best.function, f);
            assert!((best.agreement - 1.0).abs() < 1e-12);
        }
        assert!(matches!(
            best_agreeing_function(&g, Face::EMPTY, 0.0, AgreementSearch::Auto, 0),
            Err(DecoderError::EmptyDomain)
        ));
    }

    #[test]
    fn single_function_gives_singleton_list() {
        let d = Face::range(10);
        let f = GlobalFunction::random(d, &mut rng_from(4));
        let g = on_range(10, 4, |_, a| f.bits & a.bits());
        let out = short_list(&g, d, &ShortListParams::new(0.3)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.survivors[0].1, f);
        assert!(out.within_bound());
    }

    #[test]
    fn close_pair_is_pruned_to_one() {
        let d = Face::range(12);
        let f1 = GlobalFunction::random(d, &mut rng_from(5));
        let f2 = f1.flip(Face::singleton(3));
        let mut rng = rng_from(6);
        let g = on_range(12, 6, |_, a| if rng.gen::<bool>() { f1.bits } else { f2.bits } & a.bits());
        let mut p = ShortListParams::new(0.2);
        p.eta = 0.1;
        let out = short_list(&g, d, &p).unwrap();
        assert!(out.rounds.accepted.len() >= 2);
        assert_eq!(out.len(), 1);
        assert_eq!(out.pruned.len(), out.rounds.accepted.len() - 1);
    }

    #[test]
    fn random_table_gives_empty_list() {
        let d = Face::range(10);
        let g = on_range(10, 5, {
            let mut rng = rng_from(2);
            move |_, a| random_bits(a, &mut rng)
        });
        let out = short_list(&g, d, &ShortListParams::new(0.3)).unwrap();
        assert!(out.empty);
    }

    #[test]
    fn cover_on_a_line() {
        // Points 0, 1, 2, 3, 4 bits along a prefix; distance between i and j is |i-j|/16.
        let d = Face::range(16);
        let pts: Vec<(u64, f64)> = (0..5).map(|i| ((1u64 << i) - 1, 1.0 - i as f64 * 0.01)).collect();
        let eta = 2.0 / 16.0;
        let cover = eta_cover(d, &pts, eta);
        assert!(cover.len() <= 3);
        for &(f, _) in &pts {
            assert!(cover.functions().iter().any(|&g| distance_on(d, f, g) <= eta + 1e-12));
        }
        assert_eq!(eta_cover(d, &[(7, 0.5), (7, 0.4)], 0.0).len(), 1);
        assert!(eta_cover(d, &[], 0.1).is_empty());
    }

    #[test]
    fn direct_product_pairs_are_excellent() {
        let d = Face::range(14);
        let f = GlobalFunction::random(d, &mut rng_from(8));
        let g = on_range(14, 8, |_, a| f.bits & a.bits());
        let a0 = Face::from_vertices(&[0, 1]).unwrap();
        let b0 = Face::from_vertices(&[2, 3, 4, 5, 6, 7]).unwrap();
        let p = PairParams {
            eps: 0.5,
            defect: 0.01,
            h: 0,
            trials: 500,
            seed: 1,
        };
        let c = classify_pair(&g, d, a0, b0, &p).unwrap();
        assert_eq!(c.grade, PairGrade::Excellent);
        assert_eq!(c.cons_measure, 1.0);
        assert_eq!(c.defect, Some(0.0));
        let dec = c.decode.unwrap();
        assert_eq!(dec.function.bits, f.bits & !a0.bits());
        assert!(dec.uncovered.is_empty());
        assert!(matches!(
            classify_pair(&g, d, Face::EMPTY, b0, &p),
            Err(DecoderError::PairSizes { .. })
        ));
    }

    #[test]
    fn projection_of_one_list_is_exact() {
        let x = SimplicialComplex::complete(8, 4).unwrap();
        let fs = [0b1010_1010u64, 0b0110_0110];
        let pool: Vec<(Face, Vec<u64>)> = x.facets().iter().map(|&d| (d, fs.map(|f| f & d.bits()).to_vec())).collect();
        let proj = majority_project(&x, &pool, 2, 0.1).unwrap();
        assert_eq!(proj.report.skipped, 0);
        assert_eq!(proj.report.min_mass, 1.0);
        for (b, l) in &proj.lists {
            assert_eq!(l, &restricted_key(&fs, *b));
        }
        // The two functions coincide on some pairs, so the census sees sizes 1 and 2.
        assert!(proj.report.census.len() == 2);
    }

    #[test]
    fn reordered_lists_build_a_coboundary() {
        let x = Arc::new(SimplicialComplex::complete(9, 6).unwrap());
        let graph = Arc::new(constraint_graph(&x, 1).unwrap());
        let f = 0b1_0110_1001u64;
        let fs = [f, !f & 0x1FF];
        let mut rng = rng_from(3);
        let mut lt = FaceMap::default();
        let mut sigma = Vec::new();
        for &u in graph.vertices() {
            let s = Perm::random(2, &mut rng);
            let mut l = vec![0; 2];
            for i in 0..2 {
                l[s.apply(i)] = fs[i] & u.bits();
            }
            sigma.push(s.inverse());
            lt.insert(u, l);
        }
        let lift = |level: usize| -> FaceMap<Vec<u64>> {
            x.level(level)
                .unwrap()
                .faces
                .iter()
                .map(|&b| (b, fs.iter().map(|f| f & b.bits()).collect()))
                .collect()
        };
        let mut l2 = lift(2);
        let built = build_ug_from_lists(graph.clone(), &lt, &l2, Some(&lift(3))).unwrap();
        assert_eq!((built.ell, built.padded_vertices, built.arbitrary_edges), (2, 0, 0));
        assert!((built.instance.explained(&sigma) - 1.0).abs() < 1e-12);
        let audit = coboundary_audit(&built.instance, &AuditOptions::default()).unwrap();
        assert!(audit.c_hat < 1e-9);
        assert!(audit.strong_xi_hat.unwrap() < 1e-9);

        // Breaking one joint list flags exactly the edge through it.
        let joint = Face::from_vertices(&[0, 1]).unwrap();
        l2.insert(joint, vec![0, 1, 2]);
        let broken = build_ug_from_lists(graph, &lt, &l2, None).unwrap();
        assert_eq!(broken.arbitrary_edges, 1);
    }
}
