//! Adversarial assignments from consistent-but-unsolvable list instances.
//!
//! Lists on `t`-faces are lifted to every `k`-face by propagation on the Kneser graph
//! inside the face; the adversary then answers each `k`-face with a random entry of
//! its lifted list.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{bit_string, AssignmentError, GlobalFunction, LocalAssignment};
use crate::complex::{ComplexError, SimplicialComplex};
use crate::face::Face;
use crate::graph::GraphError;
use crate::rng::stream;
use crate::ug::{UgError, UgInstance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdversaryError {
    #[error("lifting needs 5t <= k <= d, got t={t}, k={k}, d={d}")]
    Sizes { t: usize, k: usize, d: usize },
    #[error("the instance has no lists on its vertices")]
    NoLists,
    #[error("the instance graph is not built on a complex")]
    NoComplex,
    #[error("lists at {face} do not assemble although every triangle is consistent")]
    InternalInvariant { face: Face },
    #[error(transparent)]
    Ug(#[from] UgError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
}

/// The Kneser graph `K([k], t)` on positions `0..k`, reused for every `k`-face.
struct KneserPattern {
    vertices: Vec<u64>,
    adjacency: Vec<Vec<usize>>,
    triangles: Vec<[usize; 3]>,
}

impl KneserPattern {
    fn new(k: usize, t: usize) -> KneserPattern {
        let vertices: Vec<u64> = Face::range(k).subsets(t).map(|f| f.bits()).collect();
        let n = vertices.len();
        let mut adjacency = vec![Vec::new(); n];
        for a in 0..n {
            for b in a + 1..n {
                if vertices[a] & vertices[b] == 0 {
                    adjacency[a].push(b);
                    adjacency[b].push(a);
                }
            }
        }
        let mut triangles = Vec::new();
        for a in 0..n {
            for &b in adjacency[a].iter().filter(|&&b| b > a) {
                for &c in adjacency[b].iter().filter(|&&c| c > b) {
                    if vertices[a] & vertices[c] == 0 {
                        triangles.push([a, b, c]);
                    }
                }
            }
        }
        KneserPattern {
            vertices,
            adjacency,
            triangles,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedLists {
    pub k: usize,
    pub t: usize,
    pub m: usize,
    pub faces: Vec<Face>,
    /// `None` marks an inconsistent face.
    pub lists: Vec<Option<Vec<u64>>>,
    pub weights: Vec<f64>,
    pub fraction_consistent: f64,
    /// Whether triangles were checked against top lists as well as permutations.
    pub strong: bool,
}

impl LiftedLists {
    pub fn inconsistent_mass(&self) -> f64 {
        1.0 - self.fraction_consistent
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (face, list) in self.faces.iter().zip(&self.lists) {
            match list {
                Some(l) => {
                    let words: Vec<String> = l.iter().map(|&x| bit_string(*face, x)).collect();
                    let _ = writeln!(out, "{} ; consistent ; {}", face.ids(), words.join(" "));
                }
                None => {
                    let _ = writeln!(out, "{} ; inconsistent ;", face.ids());
                }
            }
        }
        out
    }
}

/// Lift the vertex lists of `inst` to every `k`-face of its complex.
pub fn lift_lists(inst: &UgInstance, k: usize) -> Result<LiftedLists, AdversaryError> {
    let graph = inst.graph();
    let x = graph.complex().ok_or(AdversaryError::NoComplex)?;
    let t = graph.t();
    if k < 5 * t || k > x.d() {
        return Err(AdversaryError::Sizes { t, k, d: x.d() });
    }
    let lists = inst.lists().ok_or(AdversaryError::NoLists)?;
    let strong = inst.top_lists().is_some();
    let level = x.level(k)?;
    let pattern = KneserPattern::new(k, t);
    let m = inst.m();
    let lifted: Result<Vec<Option<Vec<u64>>>, AdversaryError> = level
        .faces
        .par_iter()
        .map(|&a| lift_face(inst, lists, &pattern, a, m, strong))
        .collect();
    let lifted = lifted?;
    let fraction_consistent = lifted
        .iter()
        .zip(level.weights())
        .filter(|(l, _)| l.is_some())
        .map(|(_, w)| w)
        .sum();
    Ok(LiftedLists {
        k,
        t,
        m,
        faces: level.faces.clone(),
        lists: lifted,
        weights: level.weights().to_vec(),
        fraction_consistent,
        strong,
    })
}

fn lift_face(
    inst: &UgInstance,
    lists: &[Vec<u64>],
    pattern: &KneserPattern,
    a: Face,
    m: usize,
    strong: bool,
) -> Result<Option<Vec<u64>>, AdversaryError> {
    let graph = inst.graph();
    let ids: Vec<usize> = pattern
        .vertices
        .iter()
        .map(|&p| {
            graph
                .vertex_index(Face::from_bits(a.expand(p)))
                .expect("t-subsets of a face are vertices")
        })
        .collect();
    for &[p, q, r] in &pattern.triangles {
        let tri = [ids[p], ids[q], ids[r]];
        if !inst.triangle_consistent(tri) {
            return Ok(None);
        }
        if strong && !inst.strongly_consistent(tri)? {
            return Ok(None);
        }
    }
    // Propagate each root label over the Kneser graph.
    let n = ids.len();
    let mut out = Vec::with_capacity(m);
    for root_label in 0..m {
        let mut label = vec![usize::MAX; n];
        label[0] = root_label;
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(p) = queue.pop_front() {
            for &q in &pattern.adjacency[p] {
                let next = inst.pi(ids[p], ids[q]).expect("kneser edge").apply(label[p]);
                if label[q] == usize::MAX {
                    label[q] = next;
                    queue.push_back(q);
                } else if label[q] != next {
                    return Err(AdversaryError::InternalInvariant { face: a });
                }
            }
        }
        let mut assembled = 0u64;
        for p in 0..n {
            assembled |= lists[ids[p]][label[p]];
        }
        for p in 0..n {
            let part = a.expand(pattern.vertices[p]);
            if assembled & part != lists[ids[p]][label[p]] {
                // Permutations alone do not tie overlapping parts together.
                return if strong {
                    Err(AdversaryError::InternalInvariant { face: a })
                } else {
                    Ok(None)
                };
            }
        }
        out.push(assembled);
    }
    out.sort_by_key(|&v| bit_string(a, v));
    Ok(Some(out))
}

/// `F[A]` is a uniform entry of `L(A)`, drawn from the stream of the face's index;
/// inconsistent faces get the all-zeros string.
pub fn build_adversarial_f(
    x: &SimplicialComplex,
    lifted: &LiftedLists,
    seed: u64,
) -> Result<LocalAssignment, AdversaryError> {
    Ok(LocalAssignment::from_fn(x, lifted.k, |i, _| match &lifted.lists[i] {
        Some(l) => l[stream(seed, i as u64).gen_range(0..l.len())],
        None => 0,
    })?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidatePolicy {
    Exhaustive,
    Candidates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub source: String,
    pub function: String,
    pub agreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalAudit {
    pub policy: CandidatePolicy,
    pub best_function: String,
    pub best_agreement: f64,
    pub best_source: String,
    pub evaluated: u64,
    /// Named candidates with their agreement, in the order given.
    pub candidates: Vec<Candidate>,
}

/// Maximum over candidate global functions of `μ_k{A : Δ(F[A], f|_A) <= eps}`.
pub fn global_agreement_audit(
    table: &LocalAssignment,
    domain: Face,
    eps: f64,
    policy: CandidatePolicy,
    named: &[(String, GlobalFunction)],
) -> Result<GlobalAudit, AdversaryError> {
    let mut candidates: Vec<Candidate> = named
        .iter()
        .map(|(source, f)| Candidate {
            source: source.clone(),
            function: f.to_string(),
            agreement: table.agr_set(f, eps).measure,
        })
        .collect();
    let plural = table.plurality(domain);
    candidates.push(Candidate {
        source: "plurality".into(),
        function: plural.to_string(),
        agreement: table.agr_set(&plural, eps).measure,
    });
    let mut best = candidates
        .iter()
        .cloned()
        .reduce(|a, b| if b.agreement > a.agreement + 1e-12 { b } else { a })
        .expect("plurality is always present");
    let mut evaluated = candidates.len() as u64;
    if policy == CandidatePolicy::Exhaustive {
        let all = table.agreement_table(domain, eps)?;
        evaluated = all.len() as u64;
        let (j, &value) = all
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |acc, cur| if *cur.1 > *acc.1 + 1e-12 { cur } else { acc });
        if value > best.agreement + 1e-12 {
            best = Candidate {
                source: "exhaustive".into(),
                function: GlobalFunction::new(domain, domain.expand(j as u64)).to_string(),
                agreement: value,
            };
        }
    }
    Ok(GlobalAudit {
        policy,
        best_function: best.function,
        best_agreement: best.agreement,
        best_source: best.source,
        evaluated,
        candidates,
    })
}

/// `I[T]`: the first list index at `T` whose entry matches `f` on `T`, or 0.
/// Also returns the weight of vertices where some entry matched.
pub fn induced_labeling(inst: &UgInstance, f: u64) -> Result<(Vec<u8>, f64), AdversaryError> {
    let lists = inst.lists().ok_or(AdversaryError::NoLists)?;
    let graph = inst.graph();
    let mut matched = 0.0;
    let labels = graph
        .vertices()
        .iter()
        .zip(lists)
        .zip(graph.vertex_weights())
        .map(|((u, l), w)| match l.iter().position(|&e| e == f & u.bits()) {
            Some(i) => {
                matched += w;
                i as u8
            }
            None => 0,
        })
        .collect();
    Ok((labels, matched))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp_test::{run_dp_test, DpParams};
    use crate::graph::constraint_graph;
    use crate::rng::rng_from;
    use std::sync::Arc;

    fn planted(n: usize, d: usize, functions: &[u64]) -> (Arc<SimplicialComplex>, UgInstance) {
        let x = Arc::new(SimplicialComplex::complete(n, d).unwrap());
        let g = Arc::new(constraint_graph(&x, 1).unwrap());
        (x, UgInstance::planted(g, functions).unwrap())
    }

    #[test]
    fn planted_lists_lift_to_restrictions() {
        let f = 0b10_1101_0110u64;
        let g = !f & 0x3FF;
        let (x, inst) = planted(10, 5, &[f, g]);
        let lifted = lift_lists(&inst, 5).unwrap();
        assert!((lifted.fraction_consistent - 1.0).abs() < 1e-12);
        for (a, l) in lifted.faces.iter().zip(&lifted.lists) {
            let mut want = vec![f & a.bits(), g & a.bits()];
            want.sort_by_key(|&v| bit_string(*a, v));
            assert_eq!(l.as_ref().unwrap(), &want);
        }
        let table = build_adversarial_f(&x, &lifted, 3).unwrap();
        let again = build_adversarial_f(&x, &lifted, 3).unwrap();
        assert_eq!(table.values(), again.values());
    }

    #[test]
    fn single_list_gives_direct_product() {
        let f = GlobalFunction::random(Face::range(10), &mut rng_from(1));
        let (x, inst) = planted(10, 6, &[f.bits]);
        let lifted = lift_lists(&inst, 5).unwrap();
        let table = build_adversarial_f(&x, &lifted, 9).unwrap();
        let r = run_dp_test(&x, &table, &DpParams::exact(5, 2)).unwrap();
        assert_eq!(r.report.estimate, 1.0);
    }

    #[test]
    fn audit_finds_direct_product() {
        let f = GlobalFunction::random(Face::range(10), &mut rng_from(4));
        let x = SimplicialComplex::complete(10, 5).unwrap();
        let table = LocalAssignment::direct_product(&x, 4, &f).unwrap();
        let audit =
            global_agreement_audit(&table, Face::range(10), 0.0, CandidatePolicy::Exhaustive, &[]).unwrap();
        assert!((audit.best_agreement - 1.0).abs() < 1e-12);
        assert_eq!(audit.best_function, f.to_string());
    }

    #[test]
    fn induced_labels_from_planted_function() {
        let f = 0b1100_1010u64;
        let (_, inst) = planted(8, 3, &[f, !f & 0xFF]);
        let (labels, matched) = induced_labeling(&inst, !f & 0xFF).unwrap();
        assert!((matched - 1.0).abs() < 1e-12);
        assert!(labels.iter().all(|&l| l == 1));
        assert!((inst.value(&labels) - 1.0).abs() < 1e-12);
    }
}
