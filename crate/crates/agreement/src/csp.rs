//! Dense agreement CSPs: one constraint per `k`-set, satisfied by an exact match.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{Assignment, AssignmentError, GlobalFunction, LocalAssignment};
use crate::face::Face;
use crate::rng::{random_bits, random_subset, rng_from};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CspError {
    #[error("branch and bound visited more than {0} nodes")]
    NodeCap(u64),
    #[error("constraint arity {k} exceeds the {n} variables")]
    Arity { k: usize, n: usize },
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
}

#[derive(Debug, Clone)]
pub struct AgreementCsp {
    pub domain: Face,
    pub table: LocalAssignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CspValue {
    pub value: f64,
    pub satisfied: usize,
    pub constraints: usize,
    #[serde(skip)]
    pub assignment: u64,
    pub nodes: u64,
}

impl AgreementCsp {
    /// Every `k`-subset of `domain` carries `f|_A` with probability `planted`, a uniform
    /// string otherwise.
    pub fn planted(domain: Face, k: usize, planted: f64, seed: u64) -> Result<(AgreementCsp, GlobalFunction), CspError> {
        if k > domain.len() {
            return Err(CspError::Arity { k, n: domain.len() });
        }
        let mut rng = rng_from(seed);
        let f = GlobalFunction::random(domain, &mut rng);
        let faces: Vec<Face> = domain.subsets(k).collect();
        let values = faces
            .iter()
            .map(|&a| {
                if rng.gen::<f64>() < planted {
                    f.bits & a.bits()
                } else {
                    random_bits(a, &mut rng)
                }
            })
            .collect();
        let table = LocalAssignment::from_parts(k, faces, values)?;
        Ok((AgreementCsp { domain, table }, f))
    }

    pub fn k(&self) -> usize {
        self.table.k()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Fraction of constraints `f` satisfies.
    pub fn value(&self, f: u64) -> f64 {
        let hits = self.satisfied(f);
        hits as f64 / self.len().max(1) as f64
    }

    fn satisfied(&self, f: u64) -> usize {
        self.table
            .faces()
            .iter()
            .zip(self.table.values())
            .filter(|(a, &v)| (f ^ v) & a.bits() == 0)
            .count()
    }

    /// The constraints living inside `q`.
    pub fn restrict(&self, q: Face) -> AgreementCsp {
        AgreementCsp {
            domain: q,
            table: self.table.restrict_to(q),
        }
    }

    pub fn random_restriction<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> AgreementCsp {
        self.restrict(random_subset(self.domain, size, rng))
    }

    /// Optimum by enumerating every assignment through the agreement table.
    pub fn value_exhaustive(&self) -> Result<CspValue, CspError> {
        let table = self.table.agreement_table(self.domain, 0.0)?;
        let mut arg = 0;
        for (j, &v) in table.iter().enumerate() {
            if v > table[arg] + 1e-12 {
                arg = j;
            }
        }
        let f = self.domain.expand(arg as u64);
        let satisfied = self.satisfied(f);
        Ok(CspValue {
            value: satisfied as f64 / self.len().max(1) as f64,
            satisfied,
            constraints: self.len(),
            assignment: f,
            nodes: table.len() as u64,
        })
    }

    /// Optimum by depth-first branch and bound over the variables in increasing order.
    ///
    /// A constraint whose assigned part still matches can only be satisfied if its next
    /// unassigned variable takes the constraint's bit, so at most the larger of the two
    /// camps at each variable survives; that sum bounds every completion.
    pub fn value_exact(&self, node_cap: u64) -> Result<CspValue, CspError> {
        let vars = self.domain.to_vec();
        let n = vars.len();
        let mut pos = [usize::MAX; 64];
        for (i, &v) in vars.iter().enumerate() {
            pos[v] = i;
        }
        let faces = self.table.faces();
        let values = self.table.values();
        let mut by_first: Vec<Vec<u32>> = vec![Vec::new(); n + 1];
        let mut camps = vec![[0usize; 2]; n];
        for (c, (&a, &v)) in faces.iter().zip(values).enumerate() {
            let first = a.min_vertex().map_or(n, |u| pos[u]);
            by_first[first].push(c as u32);
            if first < n {
                camps[first][(v >> vars[first] & 1) as usize] += 1;
            }
        }
        let start = self.table.plurality(self.domain).bits;
        let mut search = Search {
            vars: &vars,
            pos: &pos,
            faces,
            values,
            waiting: by_first,
            camps,
            best: self.satisfied(start),
            best_assignment: start,
            hint: start,
            nodes: 0,
            cap: node_cap,
        };
        let empty = search.waiting[n].len();
        search.best = search.best.max(empty);
        search.descend(0, 0, empty)?;
        Ok(CspValue {
            value: search.best as f64 / self.len().max(1) as f64,
            satisfied: search.best,
            constraints: self.len(),
            assignment: search.best_assignment,
            nodes: search.nodes,
        })
    }
}

struct Search<'a> {
    vars: &'a [usize],
    pos: &'a [usize; 64],
    faces: &'a [Face],
    values: &'a [u64],
    /// Live constraints keyed by their next unassigned variable.
    waiting: Vec<Vec<u32>>,
    camps: Vec<[usize; 2]>,
    best: usize,
    best_assignment: u64,
    hint: u64,
    nodes: u64,
    cap: u64,
}

impl Search<'_> {
    fn next_position(&self, c: usize, after: usize) -> usize {
        let rest = self.faces[c].bits() & u64::MAX.checked_shl(self.vars[after] as u32 + 1).unwrap_or(0);
        Face::from_bits(rest).min_vertex().map_or(self.vars.len(), |u| self.pos[u])
    }

    fn descend(&mut self, depth: usize, assigned: u64, done: usize) -> Result<(), CspError> {
        self.nodes += 1;
        if self.nodes > self.cap {
            return Err(CspError::NodeCap(self.cap));
        }
        let n = self.vars.len();
        if depth == n {
            if done > self.best {
                self.best = done;
                self.best_assignment = assigned;
            }
            return Ok(());
        }
        let bound = done + self.camps[depth..].iter().map(|c| c[0].max(c[1])).sum::<usize>();
        if bound <= self.best {
            return Ok(());
        }
        let v = self.vars[depth];
        let preferred = (self.hint >> v & 1) as usize;
        let live = std::mem::take(&mut self.waiting[depth]);
        let camps_here = self.camps[depth];
        self.camps[depth] = [0, 0];
        for bit in [preferred, 1 - preferred] {
            let mut moved = Vec::new();
            let mut completed = 0;
            for &c in &live {
                let c = c as usize;
                if (self.values[c] >> v & 1) as usize != bit {
                    continue;
                }
                let next = self.next_position(c, depth);
                if next == n {
                    completed += 1;
                } else {
                    self.camps[next][(self.values[c] >> self.vars[next] & 1) as usize] += 1;
                    self.waiting[next].push(c as u32);
                    moved.push(next);
                }
            }
            self.descend(depth + 1, assigned | (bit as u64) << v, done + completed)?;
            for &next in moved.iter().rev() {
                let c = self.waiting[next].pop().expect("pushed above") as usize;
                self.camps[next][(self.values[c] >> self.vars[next] & 1) as usize] -= 1;
            }
        }
        self.camps[depth] = camps_here;
        self.waiting[depth] = live;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branch_and_bound_matches_enumeration() {
        for seed in 0..6 {
            let n = 10 + 2 * (seed as usize % 3);
            let (csp, _) = AgreementCsp::planted(Face::range(n), 3, 0.3, seed).unwrap();
            let a = csp.value_exhaustive().unwrap();
            let b = csp.value_exact(u64::MAX).unwrap();
            assert_eq!(a.satisfied, b.satisfied, "seed {seed}");
            assert_eq!(csp.satisfied(b.assignment), b.satisfied);
        }
    }

    #[test]
    fn planted_value_is_near_the_planted_fraction() {
        let (csp, f) = AgreementCsp::planted(Face::range(16), 4, 0.6, 3).unwrap();
        let v = csp.value_exhaustive().unwrap();
        assert!(v.value >= csp.value(f.bits));
        assert!((v.value - (0.6 + 0.4 / 16.0)).abs() < 0.05);
        let sub = csp.restrict(Face::range(8));
        assert_eq!(sub.len(), 70);
    }

    #[test]
    fn node_cap_is_reported() {
        let (csp, _) = AgreementCsp::planted(Face::range(14), 3, 0.0, 1).unwrap();
        assert!(matches!(csp.value_exact(5), Err(CspError::NodeCap(5))));
    }
}
