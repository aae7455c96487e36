//! Unique-Games instances on constraint graphs.
//!
//! Each stored edge `(u, v)` with `u < v` carries `π(u, v)`, read as "label `i` at `u`
//! corresponds to label `π(u, v)(i)` at `v`". Reading the edge backwards gives the inverse.
//! A permutation labeling `g` explains the edge when `g(u) = π(u, v).then(g(v))`.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{bit_string, parse_bit_string};
use crate::face::{Face, FaceMap};
use crate::graph::{ConstraintGraph, GraphError};
use crate::perm::{Perm, PermError, MAX_ALPHABET};
use crate::rng::stream;
use crate::stats::{Mode, TestReport};

pub const VALUE_EXACT_CAP: u128 = 10_000_000;
pub const COBOUNDARY_EXACT_CAP: u128 = 1_000_000;
const TIE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UgError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Perm(#[from] PermError),
    #[error("alphabet size {0} outside 1..={MAX_ALPHABET}")]
    Alphabet(usize),
    #[error("expected {expected} edge permutations, got {found}")]
    PermCount { expected: usize, found: usize },
    #[error("permutation on edge {edge} acts on {found} letters, expected {expected}")]
    PermSize { edge: usize, found: usize, expected: usize },
    #[error("instance has no lists")]
    NoLists,
    #[error("no top list for {0}")]
    MissingTopList(Face),
    #[error("list at {face} has {found} entries, expected {expected}")]
    ListSize { face: Face, found: usize, expected: usize },
    #[error("list at {0} repeats an entry")]
    ListRepeat(Face),
    #[error("search space {size} exceeds the exact cap {cap}; use propagation")]
    TooLarge { size: u128, cap: u128 },
    #[error("the star assignment needs a graph built on a complete complex")]
    NotComplete,
    #[error("preprocessing ran {0} rounds, more than the alphabet allows")]
    RoundCap(usize),
    #[error("instance file line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone)]
pub struct UgInstance {
    graph: Arc<ConstraintGraph>,
    m: usize,
    perms: Vec<Perm>,
    arbitrary: Vec<bool>,
    lists: Option<Vec<Vec<u64>>>,
    top_lists: Option<FaceMap<Vec<u64>>>,
}

fn check_list(face: Face, list: &[u64], m: usize) -> Result<(), UgError> {
    if list.len() != m {
        return Err(UgError::ListSize {
            face,
            found: list.len(),
            expected: m,
        });
    }
    for (i, a) in list.iter().enumerate() {
        if list[..i].contains(a) {
            return Err(UgError::ListRepeat(face));
        }
    }
    Ok(())
}

impl UgInstance {
    pub fn new(graph: Arc<ConstraintGraph>, m: usize, perms: Vec<Perm>) -> Result<UgInstance, UgError> {
        if !(1..=MAX_ALPHABET).contains(&m) {
            return Err(UgError::Alphabet(m));
        }
        if perms.len() != graph.edges().len() {
            return Err(UgError::PermCount {
                expected: graph.edges().len(),
                found: perms.len(),
            });
        }
        if let Some((edge, p)) = perms.iter().enumerate().find(|(_, p)| p.m() != m) {
            return Err(UgError::PermSize {
                edge,
                found: p.m(),
                expected: m,
            });
        }
        let arbitrary = vec![false; perms.len()];
        Ok(UgInstance {
            graph,
            m,
            perms,
            arbitrary,
            lists: None,
            top_lists: None,
        })
    }

    /// `f(u, v)` gives `π(u, v)` for each stored edge `u < v`.
    pub fn from_fn(
        graph: Arc<ConstraintGraph>,
        m: usize,
        mut f: impl FnMut(usize, usize) -> Perm,
    ) -> Result<UgInstance, UgError> {
        let perms = graph
            .edges()
            .iter()
            .map(|e| f(e.u as usize, e.v as usize))
            .collect();
        UgInstance::new(graph, m, perms)
    }

    pub fn identity(graph: Arc<ConstraintGraph>, m: usize) -> Result<UgInstance, UgError> {
        UgInstance::from_fn(graph, m, |_, _| Perm::identity(m))
    }

    /// The instance explained exactly by `g`.
    pub fn coboundary(graph: Arc<ConstraintGraph>, g: &[Perm]) -> Result<UgInstance, UgError> {
        let m = g.first().map_or(1, |p| p.m());
        UgInstance::from_fn(graph, m, |u, v| g[u].then(g[v].inverse()))
    }

    /// Identity constraints with lists cut from the given global functions.
    pub fn planted(graph: Arc<ConstraintGraph>, functions: &[u64]) -> Result<UgInstance, UgError> {
        let m = functions.len();
        let lists: Vec<Vec<u64>> = graph
            .vertices()
            .iter()
            .map(|u| functions.iter().map(|f| f & u.bits()).collect())
            .collect();
        let mut top = FaceMap::default();
        if let Some(x) = graph.complex() {
            if x.d() >= 3 * graph.t() {
                let level = x.level(3 * graph.t()).map_err(GraphError::from)?;
                for &big in &level.faces {
                    top.insert(big, functions.iter().map(|f| f & big.bits()).collect());
                }
            }
        }
        UgInstance::identity(graph, m)?.with_lists(lists, Some(top))
    }

    pub fn with_lists(
        mut self,
        lists: Vec<Vec<u64>>,
        top_lists: Option<FaceMap<Vec<u64>>>,
    ) -> Result<UgInstance, UgError> {
        if lists.len() != self.graph.vertex_count() {
            return Err(UgError::PermCount {
                expected: self.graph.vertex_count(),
                found: lists.len(),
            });
        }
        for (u, list) in self.graph.vertices().iter().zip(&lists) {
            check_list(*u, list, self.m)?;
        }
        if let Some(top) = &top_lists {
            for (face, list) in top {
                check_list(*face, list, self.m)?;
            }
        }
        self.lists = Some(lists);
        self.top_lists = top_lists;
        Ok(self)
    }

    pub fn graph(&self) -> &Arc<ConstraintGraph> {
        &self.graph
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn perms(&self) -> &[Perm] {
        &self.perms
    }

    pub fn set_perm(&mut self, edge: usize, p: Perm) {
        assert_eq!(p.m(), self.m);
        self.perms[edge] = p;
    }

    /// `π(a, b)` if `{a, b}` is an edge.
    pub fn pi(&self, a: usize, b: usize) -> Option<Perm> {
        let e = self.graph.edge_between(a, b)?;
        Some(self.pi_from(e, a))
    }

    /// The permutation of edge `e` read from endpoint `from`.
    pub fn pi_from(&self, e: usize, from: usize) -> Perm {
        if self.graph.edges()[e].u as usize == from {
            self.perms[e]
        } else {
            self.perms[e].inverse()
        }
    }

    pub fn lists(&self) -> Option<&[Vec<u64>]> {
        self.lists.as_deref()
    }

    pub fn top_lists(&self) -> Option<&FaceMap<Vec<u64>>> {
        self.top_lists.as_ref()
    }

    pub fn has_lists(&self) -> bool {
        self.lists.is_some() && self.top_lists.is_some()
    }

    pub fn arbitrary(&self) -> &[bool] {
        &self.arbitrary
    }

    pub fn mark_arbitrary(&mut self, edge: usize) {
        self.arbitrary[edge] = true;
    }

    /// Total weight of edges carrying a placeholder constraint.
    pub fn arbitrary_mass(&self) -> f64 {
        self.graph
            .edges()
            .iter()
            .zip(&self.arbitrary)
            .filter(|(_, &a)| a)
            .fold(0.0, |acc, (e, _)| acc + e.weight)
    }

    pub fn edge_satisfied(&self, e: usize, labels: &[u8]) -> bool {
        let edge = self.graph.edges()[e];
        self.perms[e].apply(labels[edge.u as usize] as usize) == labels[edge.v as usize] as usize
    }

    pub fn edge_explained(&self, e: usize, g: &[Perm]) -> bool {
        let edge = self.graph.edges()[e];
        g[edge.u as usize] == self.perms[e].then(g[edge.v as usize])
    }

    /// Weight of edges satisfied by a labeling.
    pub fn value(&self, labels: &[u8]) -> f64 {
        (0..self.perms.len())
            .filter(|&e| self.edge_satisfied(e, labels))
            .map(|e| self.graph.edges()[e].weight)
            .sum()
    }

    /// Weight of edges with `π(u, v) = g(u) g(v)^{-1}`.
    pub fn explained(&self, g: &[Perm]) -> f64 {
        (0..self.perms.len())
            .filter(|&e| self.edge_explained(e, g))
            .map(|e| self.graph.edges()[e].weight)
            .sum()
    }

    pub fn triangle_consistent(&self, [a, b, c]: [usize; 3]) -> bool {
        match (self.pi(a, b), self.pi(b, c), self.pi(a, c)) {
            (Some(ab), Some(bc), Some(ac)) => ab.then(bc) == ac,
            _ => false,
        }
    }

    /// Whether the top list of `u ∪ v ∪ w` is the interleaving of the lists along the
    /// matching anchored at `u`.
    pub fn strongly_consistent(&self, [u, v, w]: [usize; 3]) -> Result<bool, UgError> {
        let lists = self.lists.as_ref().ok_or(UgError::NoLists)?;
        let top_lists = self.top_lists.as_ref().ok_or(UgError::NoLists)?;
        let faces = self.graph.vertices();
        let big = faces[u].union(faces[v]).union(faces[w]);
        let top = top_lists.get(&big).ok_or(UgError::MissingTopList(big))?;
        let (Some(uv), Some(uw)) = (self.pi(u, v), self.pi(u, w)) else {
            return Ok(false);
        };
        let mut built: Vec<u64> = (0..self.m)
            .map(|i| lists[u][i] | lists[v][uv.apply(i)] | lists[w][uw.apply(i)])
            .collect();
        let mut want = top.clone();
        built.sort_unstable();
        want.sort_unstable();
        Ok(built == want)
    }

    /// Probability that `π` composes consistently on a random triangle.
    pub fn triangle_consistency(&self, mode: Mode, trials: u64, seed: u64) -> Result<TestReport, UgError> {
        match mode {
            Mode::Exact => {
                let tris = self.graph.triangles()?;
                if tris.is_empty() {
                    return Err(GraphError::NoTriangles.into());
                }
                let hits: Vec<bool> = tris
                    .par_iter()
                    .map(|t| self.triangle_consistent(t.parts.map(|p| p as usize)))
                    .collect();
                let (passes, mass) = tris
                    .iter()
                    .zip(hits)
                    .filter(|(_, hit)| *hit)
                    .fold((0u64, 0.0), |a, (t, _)| (a.0 + 1, a.1 + t.weight));
                Ok(TestReport::exact(passes, tris.len() as u64, mass, seed))
            }
            Mode::MonteCarlo => {
                self.graph.sample_triangle(&mut stream(seed, 0))?;
                let passes = sampled_count(trials, |j| {
                    let parts = self.graph.sample_triangle(&mut stream(seed, j)).expect("checked");
                    Ok(self.triangle_consistent(parts))
                })?;
                Ok(TestReport::monte_carlo(passes, trials, seed))
            }
        }
    }

    /// Probability of strong consistency on a random anchored triangle.
    pub fn strong_consistency(&self, mode: Mode, trials: u64, seed: u64) -> Result<TestReport, UgError> {
        if !self.has_lists() {
            return Err(UgError::NoLists);
        }
        match mode {
            Mode::Exact => {
                let tris = self.graph.triangles()?;
                if tris.is_empty() {
                    return Err(GraphError::NoTriangles.into());
                }
                let per: Result<Vec<(u64, f64)>, UgError> = tris
                    .par_iter()
                    .map(|t| {
                        let [a, b, c] = t.parts.map(|p| p as usize);
                        let mut hits = 0;
                        for anchored in [[a, b, c], [b, a, c], [c, a, b]] {
                            if self.strongly_consistent(anchored)? {
                                hits += 1;
                            }
                        }
                        Ok((hits, t.weight * hits as f64 / 3.0))
                    })
                    .collect();
                let (passes, mass) = per?
                    .into_iter()
                    .fold((0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
                Ok(TestReport::exact(passes, 3 * tris.len() as u64, mass, seed))
            }
            Mode::MonteCarlo => {
                self.graph.sample_triangle(&mut stream(seed, 0))?;
                let passes = sampled_count(trials, |j| {
                    let parts = self.graph.sample_triangle(&mut stream(seed, j)).expect("checked");
                    self.strongly_consistent(parts)
                })?;
                Ok(TestReport::monte_carlo(passes, trials, seed))
            }
        }
    }

    /// Exhaustive optimum over all labelings, by branch and bound.
    pub fn value_exact(&self, cap: u128) -> Result<Labeling, UgError> {
        let n = self.graph.vertex_count();
        let size = (self.m as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        if size > cap {
            return Err(UgError::TooLarge { size, cap });
        }
        let letters: Vec<u8> = (0..self.m as u8).collect();
        let candidates = vec![letters; n];
        let (value, labels) = branch_and_bound(&self.graph, &candidates, |e, a: u8, b: u8| {
            self.perms[e].apply(a as usize) == b as usize
        });
        Ok(Labeling { value, labels })
    }

    /// Best labeling found by spanning-tree propagation from random roots followed by
    /// greedy single-vertex repair. The value is a lower bound on the optimum.
    pub fn value_propagate(&self, opts: &SearchOptions) -> PropagationResult {
        let comps = self.graph.components();
        let n = self.graph.vertex_count();
        let mut labels = vec![0u8; n];
        let mut contradictions = 0;
        let mut satisfying = Vec::new();
        for (ci, comp) in comps.iter().enumerate() {
            let roots = pick_roots(comp, opts.restarts, opts.seed, ci as u64);
            let runs: Vec<(f64, Vec<u8>, u64)> = roots
                .par_iter()
                .flat_map_iter(|&root| (0..self.m as u8).map(move |a| (root, a)))
                .map(|(root, a)| {
                    let (lab, bad) = propagate(
                        &self.graph,
                        comp,
                        root,
                        a,
                        |e, from, x: u8| self.pi_from(e, from).apply(x as usize) as u8,
                        |e, x: u8, y: u8| self.perms[e].apply(x as usize) == y as usize,
                    );
                    let value = comp_value(&self.graph, comp, |e| {
                        let edge = self.graph.edges()[e];
                        self.perms[e].apply(lab[edge.u as usize] as usize) == lab[edge.v as usize] as usize
                    });
                    (value, comp.iter().map(|&v| lab[v]).collect(), bad)
                })
                .collect();
            let comp_total: f64 = comp_value(&self.graph, comp, |_| true);
            let mut best: Option<&(f64, Vec<u8>, u64)> = None;
            for run in &runs {
                contradictions += run.2;
                if comps.len() == 1 && (run.0 - comp_total).abs() <= TIE && !satisfying.contains(&run.1) {
                    satisfying.push(run.1.clone());
                }
                best = match best {
                    Some(b) if b.0 > run.0 + TIE || (b.0 >= run.0 - TIE && b.1 <= run.1) => Some(b),
                    _ => Some(run),
                };
            }
            if let Some(b) = best {
                for (&v, &x) in comp.iter().zip(&b.1) {
                    labels[v] = x;
                }
            }
        }
        satisfying.sort();
        let letters: Vec<u8> = (0..self.m as u8).collect();
        greedy_repair(
            &self.graph,
            &mut labels,
            opts.repair_passes,
            |_, _| letters.clone(),
            |e, a, b| self.perms[e].apply(a as usize) == b as usize,
        );
        PropagationResult {
            value: self.value(&labels),
            labels,
            satisfying,
            contradictions,
        }
    }

    /// Exact search when the cap allows, propagation otherwise.
    pub fn best_labeling(&self, opts: &SearchOptions) -> (Labeling, SearchMethod) {
        match self.value_exact(opts.exact_cap) {
            Ok(l) => (l, SearchMethod::Exact),
            Err(_) => {
                let r = self.value_propagate(opts);
                (
                    Labeling {
                        value: r.value,
                        labels: r.labels,
                    },
                    SearchMethod::Propagation,
                )
            }
        }
    }

    /// Best permutation labeling `g`, exact over `S_m^V` (gauge fixed per component)
    /// when `m!^|V|` is within the cap, propagation with repair otherwise.
    pub fn best_explanation(&self, opts: &SearchOptions) -> (f64, Vec<Perm>, SearchMethod) {
        let n = self.graph.vertex_count();
        let group = Perm::all(self.m);
        let size = (group.len() as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        let id = Perm::identity(self.m);
        let sat = |e: usize, a: Perm, b: Perm| a == self.perms[e].then(b);
        if size <= opts.coboundary_cap {
            let mut candidates = vec![group.clone(); n];
            for comp in self.graph.components() {
                candidates[comp[0]] = vec![id];
            }
            let (value, g) = branch_and_bound(&self.graph, &candidates, sat);
            return (value, g, SearchMethod::Exact);
        }
        let mut g = vec![id; n];
        for (ci, comp) in self.graph.components().iter().enumerate() {
            let roots = pick_roots(comp, opts.restarts, opts.seed, ci as u64);
            let best = roots
                .par_iter()
                .map(|&root| {
                    let (lab, _) = propagate(
                        &self.graph,
                        comp,
                        root,
                        id,
                        |e, from, x: Perm| self.pi_from(e, from).inverse().then(x),
                        sat,
                    );
                    let value = comp_value(&self.graph, comp, |e| {
                        let edge = self.graph.edges()[e];
                        sat(e, lab[edge.u as usize], lab[edge.v as usize])
                    });
                    (value, root, lab)
                })
                .reduce_with(|a, b| if b.0 > a.0 + TIE || (b.0 >= a.0 - TIE && b.1 < a.1) { b } else { a });
            if let Some((_, _, lab)) = best {
                for &v in comp {
                    g[v] = lab[v];
                }
            }
        }
        greedy_repair(
            &self.graph,
            &mut g,
            opts.repair_passes,
            |v, g: &[Perm]| {
                let mut c: Vec<Perm> = self
                    .graph
                    .neighbors(v)
                    .iter()
                    .map(|&(u, e)| self.pi_from(e as usize, v).then(g[u as usize]))
                    .collect();
                c.sort();
                c.dedup();
                c
            },
            sat,
        );
        (self.explained(&g), g, SearchMethod::Propagation)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.m, self.graph.t());
        for (e, p) in self.graph.edges().iter().zip(&self.perms) {
            let faces = self.graph.vertices();
            let _ = writeln!(out, "{} ; {} ; {}", faces[e.u as usize].ids(), faces[e.v as usize].ids(), p);
        }
        out
    }

    /// Read permutations for the edges of `graph`; edges not listed get the identity.
    pub fn parse(graph: Arc<ConstraintGraph>, text: &str) -> Result<UgInstance, UgError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let err = |line: usize, message: &str| UgError::Parse {
            line: line + 1,
            message: message.to_string(),
        };
        let (hl, header) = lines.next().ok_or_else(|| err(0, "missing header"))?;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| err(hl, "bad header")))
            .collect::<Result<_, _>>()?;
        let [m, t] = nums[..] else {
            return Err(err(hl, "header must be `m t`"));
        };
        if t != graph.t() {
            return Err(err(hl, "t does not match the graph"));
        }
        let mut inst = UgInstance::identity(graph.clone(), m)?;
        for (ln, line) in lines {
            let parts: Vec<&str> = line.split(';').map(str::trim).collect();
            let [us, vs, img] = parts[..] else {
                return Err(err(ln, "expected `u ; v ; images`"));
            };
            let face = |s: &str| Face::parse_ids(s).map_err(|e| err(ln, &e.to_string()));
            let (u, v) = (face(us)?, face(vs)?);
            let (Some(a), Some(b)) = (graph.vertex_index(u), graph.vertex_index(v)) else {
                return Err(err(ln, "unknown vertex"));
            };
            let e = graph.edge_between(a, b).ok_or_else(|| err(ln, "not an edge"))?;
            let images: Vec<usize> = img
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| err(ln, "bad image")))
                .collect::<Result<_, _>>()?;
            let p = Perm::from_images(&images)?;
            if p.m() != m {
                return Err(err(ln, "wrong permutation length"));
            }
            inst.perms[e] = if a < b { p } else { p.inverse() };
        }
        Ok(inst)
    }

    pub fn lists_to_text(&self) -> Option<String> {
        let lists = self.lists.as_ref()?;
        let mut out = String::new();
        let mut write = |face: Face, list: &[u64]| {
            let words: Vec<String> = list.iter().map(|&x| bit_string(face, x)).collect();
            let _ = writeln!(out, "{} ; {}", face.ids(), words.join(" "));
        };
        for (u, list) in self.graph.vertices().iter().zip(lists) {
            write(*u, list);
        }
        if let Some(top) = &self.top_lists {
            let mut faces: Vec<&Face> = top.keys().collect();
            faces.sort();
            for f in faces {
                write(*f, &top[f]);
            }
        }
        Some(out)
    }

    /// Attach lists read from text; faces of size `t` go to vertices, size `3t` to the top.
    pub fn parse_lists(self, text: &str) -> Result<UgInstance, UgError> {
        let t = self.graph.t();
        let mut lists = vec![Vec::new(); self.graph.vertex_count()];
        let mut top = FaceMap::default();
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let err = |message: &str| UgError::Parse {
                line: ln + 1,
                message: message.to_string(),
            };
            let (ids, words) = line.split_once(';').ok_or_else(|| err("missing `;`"))?;
            let face = Face::parse_ids(ids.trim()).map_err(|e| err(&e.to_string()))?;
            let list: Vec<u64> = words
                .split_whitespace()
                .map(|w| parse_bit_string(face, w).ok_or_else(|| err("bad bit string")))
                .collect::<Result<_, _>>()?;
            if face.len() == t {
                let v = self.graph.vertex_index(face).ok_or_else(|| err("unknown vertex"))?;
                lists[v] = list;
            } else if face.len() == 3 * t {
                top.insert(face, list);
            } else {
                return Err(err("face size is neither t nor 3t"));
            }
        }
        self.with_lists(lists, Some(top))
    }
}

fn sampled_count(trials: u64, f: impl Fn(u64) -> Result<bool, UgError> + Sync) -> Result<u64, UgError> {
    (0..trials)
        .into_par_iter()
        .map(|j| f(j).map(u64::from))
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labeling {
    pub value: f64,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    Exact,
    Propagation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub restarts: usize,
    pub seed: u64,
    pub repair_passes: usize,
    pub exact_cap: u128,
    pub coboundary_cap: u128,
}

impl Default for SearchOptions {
    fn default() -> SearchOptions {
        SearchOptions {
            restarts: 32,
            seed: 0,
            repair_passes: 50,
            exact_cap: VALUE_EXACT_CAP,
            coboundary_cap: COBOUNDARY_EXACT_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationResult {
    pub value: f64,
    pub labels: Vec<u8>,
    /// Distinct labelings satisfying every edge reached directly by propagation
    /// (connected graphs only).
    pub satisfying: Vec<Vec<u8>>,
    /// Edges found violated while propagating, summed over all runs.
    pub contradictions: u64,
}

fn pick_roots(comp: &[usize], restarts: usize, seed: u64, salt: u64) -> Vec<usize> {
    use rand::Rng;
    if comp.len() <= restarts {
        return comp.to_vec();
    }
    let mut rng = stream(seed, salt);
    let mut roots: Vec<usize> = (0..restarts).map(|_| comp[rng.gen_range(0..comp.len())]).collect();
    roots.sort_unstable();
    roots.dedup();
    roots
}

fn comp_value(g: &ConstraintGraph, comp: &[usize], sat: impl Fn(usize) -> bool) -> f64 {
    let mut total = 0.0;
    for &u in comp {
        for &(v, e) in g.neighbors(u) {
            if (u as u32) < v && sat(e as usize) {
                total += g.edges()[e as usize].weight;
            }
        }
    }
    total
}

/// BFS from `root`, labelling each new vertex by transporting its parent's label.
/// Returns the labels (meaningful on `comp`) and the number of violated edges met.
fn propagate<L: Copy + PartialEq + Default>(
    g: &ConstraintGraph,
    comp: &[usize],
    root: usize,
    root_label: L,
    step: impl Fn(usize, usize, L) -> L,
    sat: impl Fn(usize, L, L) -> bool,
) -> (Vec<L>, u64) {
    let n = g.vertex_count();
    let mut labels = vec![L::default(); n];
    let mut seen = vec![false; n];
    labels[root] = root_label;
    seen[root] = true;
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &(v, e) in g.neighbors(u) {
            let v = v as usize;
            if !seen[v] {
                seen[v] = true;
                labels[v] = step(e as usize, u, labels[u]);
                queue.push_back(v);
            }
        }
    }
    let mut bad = 0;
    for &u in comp {
        for &(v, e) in g.neighbors(u) {
            let edge = g.edges()[e as usize];
            if (u as u32) < v && !sat(e as usize, labels[edge.u as usize], labels[edge.v as usize]) {
                bad += 1;
            }
        }
    }
    (labels, bad)
}

/// Move single vertices to their best candidate label until nothing improves.
fn greedy_repair<L: Copy + PartialEq>(
    g: &ConstraintGraph,
    labels: &mut [L],
    passes: usize,
    candidates: impl Fn(usize, &[L]) -> Vec<L>,
    sat: impl Fn(usize, L, L) -> bool,
) {
    let local = |v: usize, x: L, labels: &[L]| -> f64 {
        g.neighbors(v)
            .iter()
            .filter(|&&(u, e)| {
                let edge = g.edges()[e as usize];
                if edge.u as usize == v {
                    sat(e as usize, x, labels[u as usize])
                } else {
                    sat(e as usize, labels[u as usize], x)
                }
            })
            .map(|&(_, e)| g.edges()[e as usize].weight)
            .sum()
    };
    for _ in 0..passes {
        let mut changed = false;
        for v in 0..labels.len() {
            let mut best = local(v, labels[v], labels);
            for x in candidates(v, labels) {
                let score = local(v, x, labels);
                if score > best + TIE {
                    best = score;
                    labels[v] = x;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// Maximum satisfied weight over labelings drawn from per-vertex candidate lists.
/// Vertices are fixed in index order; the first optimum found wins ties.
fn branch_and_bound<L: Copy + Default + Send + Sync>(
    g: &ConstraintGraph,
    candidates: &[Vec<L>],
    sat: impl Fn(usize, L, L) -> bool + Sync,
) -> (f64, Vec<L>) {
    let n = g.vertex_count();
    let mut back: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n];
    for (e, edge) in g.edges().iter().enumerate() {
        back[edge.v as usize].push((edge.u as usize, e, edge.weight));
    }
    let mut remaining = vec![0.0; n + 1];
    for v in (0..n).rev() {
        remaining[v] = remaining[v + 1] + back[v].iter().map(|b| b.2).sum::<f64>();
    }
    struct Search<'a, L, S> {
        candidates: &'a [Vec<L>],
        back: &'a [Vec<(usize, usize, f64)>],
        remaining: &'a [f64],
        sat: S,
        labels: Vec<L>,
        best: f64,
        best_labels: Vec<L>,
    }
    impl<L: Copy, S: Fn(usize, L, L) -> bool> Search<'_, L, S> {
        fn go(&mut self, v: usize, cur: f64) {
            if v == self.labels.len() {
                if cur > self.best + TIE {
                    self.best = cur;
                    self.best_labels.copy_from_slice(&self.labels);
                }
                return;
            }
            if cur + self.remaining[v] <= self.best + TIE {
                return;
            }
            for i in 0..self.candidates[v].len() {
                let x = self.candidates[v][i];
                self.labels[v] = x;
                let gain: f64 = self.back[v]
                    .iter()
                    .filter(|&&(u, e, _)| (self.sat)(e, self.labels[u], x))
                    .map(|b| b.2)
                    .sum();
                self.go(v + 1, cur + gain);
            }
        }
    }
    let mut s = Search {
        candidates,
        back: &back,
        remaining: &remaining,
        sat,
        labels: vec![L::default(); n],
        best: -1.0,
        best_labels: vec![L::default(); n],
    };
    s.go(0, 0.0);
    (s.best.max(0.0), s.best_labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarReport {
    pub fraction: f64,
    pub bound: f64,
    /// Inconsistency among triangles through the centre.
    pub local_inconsistency: f64,
    /// Set when `r^2 > n/2`, where the bound says nothing.
    pub degenerate: bool,
    #[serde(skip)]
    pub assignment: Vec<Perm>,
}

/// Explain every edge through `centre` by `g(centre) = id`, `g(V) = π(V, centre)` on
/// neighbours and the identity elsewhere.
pub fn star_solution(inst: &UgInstance, centre: usize) -> Result<StarReport, UgError> {
    let graph = inst.graph();
    let x = graph.complex().ok_or(UgError::NotComplete)?;
    if !x.is_complete() {
        return Err(UgError::NotComplete);
    }
    let id = Perm::identity(inst.m());
    let mut g = vec![id; graph.vertex_count()];
    for &(v, e) in graph.neighbors(centre) {
        g[v as usize] = inst.pi_from(e as usize, v as usize);
    }
    let tris = graph.triangles()?;
    let (mut through, mut bad) = (0.0, 0.0);
    for t in tris.iter().filter(|t| t.parts.contains(&(centre as u32))) {
        through += t.weight;
        if !inst.triangle_consistent(t.parts.map(|p| p as usize)) {
            bad += t.weight;
        }
    }
    let local = if through > 0.0 { bad / through } else { 0.0 };
    let r = graph.t() as f64;
    let n = x.n() as f64;
    Ok(StarReport {
        fraction: inst.explained(&g),
        bound: (1.0 - local) * (1.0 - 2.0 * r * r / n),
        local_inconsistency: local,
        degenerate: r * r > n / 2.0,
        assignment: g,
    })
}

#[derive(Debug, Clone)]
pub enum PreprocessOutcome {
    /// No labeling reaches the threshold any more.
    Shrunk {
        instance: UgInstance,
        rounds: usize,
        value: f64,
    },
    /// A good labeling existed with only two letters left.
    Coboundary { rounds: usize, value: f64 },
}

/// Peel off labelings of value at least `1 - c/m`, one letter per round.
pub fn preprocess(inst: &UgInstance, c: f64, opts: &SearchOptions) -> Result<PreprocessOutcome, UgError> {
    let start_m = inst.m();
    let mut cur = inst.clone();
    let mut rounds = 0;
    loop {
        let (best, _) = cur.best_labeling(opts);
        if best.value < 1.0 - c / cur.m() as f64 - TIE {
            return Ok(PreprocessOutcome::Shrunk {
                instance: cur,
                rounds,
                value: best.value,
            });
        }
        if cur.m() <= 2 {
            return Ok(PreprocessOutcome::Coboundary {
                rounds,
                value: best.value,
            });
        }
        cur = remove_labeling(&cur, &best.labels);
        rounds += 1;
        if rounds > start_m {
            return Err(UgError::RoundCap(rounds));
        }
    }
}

/// Delete the letter `labels[u]` at every vertex, splicing edge permutations and
/// dropping the matching entries from the lists.
pub fn remove_labeling(inst: &UgInstance, labels: &[u8]) -> UgInstance {
    let graph = inst.graph().clone();
    let perms: Vec<Perm> = graph
        .edges()
        .iter()
        .zip(inst.perms())
        .map(|(e, p)| p.splice(labels[e.u as usize] as usize, labels[e.v as usize] as usize))
        .collect();
    let mut out = UgInstance::new(graph.clone(), inst.m() - 1, perms).expect("sizes agree");
    out.arbitrary = inst.arbitrary.clone();
    if let Some(lists) = inst.lists() {
        let lists: Vec<Vec<u64>> = lists
            .iter()
            .zip(labels)
            .map(|(l, &a)| {
                let mut l = l.clone();
                l.remove(a as usize);
                l
            })
            .collect();
        let top = inst.top_lists().map(|top| {
            top.iter()
                .map(|(&big, list)| {
                    let mut votes = vec![0usize; list.len()];
                    for part in big.subsets(graph.t()) {
                        if let Some(u) = graph.vertex_index(part) {
                            let removed = inst.lists().unwrap()[u][labels[u] as usize];
                            for (j, &entry) in list.iter().enumerate() {
                                if entry & part.bits() == removed {
                                    votes[j] += 1;
                                }
                            }
                        }
                    }
                    let drop = (0..votes.len()).max_by_key(|&j| (votes[j], usize::MAX - j)).unwrap();
                    let mut list = list.clone();
                    list.remove(drop);
                    (big, list)
                })
                .collect()
        });
        out.lists = Some(lists);
        out.top_lists = top;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    pub search: SearchOptions,
    /// Triangle-consistency mode; exact falls back to sampling when triangles are too many.
    pub mode: Mode,
    pub trials: u64,
}

impl Default for AuditOptions {
    fn default() -> AuditOptions {
        AuditOptions {
            search: SearchOptions::default(),
            mode: Mode::Exact,
            trials: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoboundaryReport {
    pub xi_hat: f64,
    pub consistency: TestReport,
    pub strong_xi_hat: Option<f64>,
    pub strong_consistency: Option<TestReport>,
    pub best_value: f64,
    pub best_assignment: Vec<u8>,
    pub value_method: SearchMethod,
    pub best_g: Vec<Vec<usize>>,
    pub c_hat: f64,
    pub g_method: SearchMethod,
    /// Weight of edges with placeholder constraints.
    pub arbitrary_mass: f64,
}

fn consistency_with_fallback(
    inst: &UgInstance,
    opts: &AuditOptions,
    strong: bool,
) -> Result<TestReport, UgError> {
    let run = |mode| {
        if strong {
            inst.strong_consistency(mode, opts.trials, opts.search.seed)
        } else {
            inst.triangle_consistency(mode, opts.trials, opts.search.seed)
        }
    };
    match run(opts.mode) {
        Err(UgError::Graph(GraphError::TooManyTriangles(_)))
        | Err(UgError::Graph(GraphError::Complex(_))) => run(Mode::MonteCarlo),
        other => other,
    }
}

pub fn coboundary_audit(inst: &UgInstance, opts: &AuditOptions) -> Result<CoboundaryReport, UgError> {
    let consistency = consistency_with_fallback(inst, opts, false)?;
    let strong = if inst.has_lists() {
        Some(consistency_with_fallback(inst, opts, true)?)
    } else {
        None
    };
    let (best, value_method) = inst.best_labeling(&opts.search);
    let (explained, g, g_method) = inst.best_explanation(&opts.search);
    Ok(CoboundaryReport {
        xi_hat: 1.0 - consistency.estimate,
        consistency,
        strong_xi_hat: strong.as_ref().map(|r| 1.0 - r.estimate),
        strong_consistency: strong,
        best_value: best.value,
        best_assignment: best.labels,
        value_method,
        best_g: g.iter().map(|p| p.images()).collect(),
        c_hat: (1.0 - explained).max(0.0),
        g_method,
        arbitrary_mass: inst.arbitrary_mass(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::SimplicialComplex;
    use crate::graph::{constraint_graph, kneser_graph};
    use crate::rng::rng_from;

    fn k6() -> Arc<ConstraintGraph> {
        let x = Arc::new(SimplicialComplex::complete(6, 3).unwrap());
        Arc::new(constraint_graph(&x, 1).unwrap())
    }

    #[test]
    fn reading_backwards_inverts() {
        let g = k6();
        let mut rng = rng_from(5);
        let inst = UgInstance::from_fn(g.clone(), 4, |_, _| Perm::random(4, &mut rng)).unwrap();
        for e in g.edges() {
            let (u, v) = (e.u as usize, e.v as usize);
            assert_eq!(inst.pi(u, v).unwrap().inverse(), inst.pi(v, u).unwrap());
        }
    }

    #[test]
    fn coboundaries_are_consistent_and_explained() {
        let g = k6();
        let mut rng = rng_from(8);
        let gs: Vec<Perm> = (0..6).map(|_| Perm::random(3, &mut rng)).collect();
        let inst = UgInstance::coboundary(g, &gs).unwrap();
        let r = inst.triangle_consistency(Mode::Exact, 0, 0).unwrap();
        assert_eq!(r.passes, r.trials);
        assert!((inst.explained(&gs) - 1.0).abs() < 1e-12);
        let v = inst.value_exact(VALUE_EXACT_CAP).unwrap();
        assert!((v.value - 1.0).abs() < 1e-12);
        let (ex, _, method) = inst.best_explanation(&SearchOptions::default());
        assert_eq!(method, SearchMethod::Exact);
        assert!((ex - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kneser_propagation_finds_every_solution() {
        let g = Arc::new(kneser_graph(Face::range(10), 2).unwrap());
        let mut rng = rng_from(2);
        let gs: Vec<Perm> = (0..g.vertex_count()).map(|_| Perm::random(3, &mut rng)).collect();
        let inst = UgInstance::coboundary(g, &gs).unwrap();
        let r = inst.value_propagate(&SearchOptions::default());
        assert!((r.value - 1.0).abs() < 1e-12);
        assert_eq!(r.contradictions, 0);
        assert_eq!(r.satisfying.len(), 3);
    }

    #[test]
    fn remove_labeling_keeps_satisfied_edges() {
        let g = k6();
        let inst = UgInstance::identity(g, 3).unwrap();
        let labels = vec![1u8; 6];
        let out = remove_labeling(&inst, &labels);
        assert_eq!(out.m(), 2);
        assert!(out.perms().iter().all(|p| p.is_identity()));
    }

    #[test]
    fn text_round_trip() {
        let g = k6();
        let mut rng = rng_from(3);
        let inst = UgInstance::from_fn(g.clone(), 3, |_, _| Perm::random(3, &mut rng)).unwrap();
        let back = UgInstance::parse(g, &inst.to_text()).unwrap();
        assert_eq!(back.perms(), inst.perms());
    }
}
