//! First cohomology over F2 of the 2-skeleton, and the sign-flip UG instances it yields.

use std::sync::Arc;

use crate::complex::{ComplexError, SimplicialComplex};
use crate::graph::{constraint_graph, ConstraintGraph, GraphError};
use crate::perm::Perm;
use crate::ug::{UgError, UgInstance};

#[derive(Debug, Clone, PartialEq, Eq)]
struct BitVec(Vec<u64>);

impl BitVec {
    fn zeros(n: usize) -> BitVec {
        BitVec(vec![0; n.div_ceil(64)])
    }

    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    fn flip(&mut self, i: usize) {
        self.0[i / 64] ^= 1 << (i % 64);
    }

    fn xor(&mut self, other: &BitVec) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a ^= b;
        }
    }

    fn lowest(&self) -> Option<usize> {
        self.0
            .iter()
            .enumerate()
            .find(|(_, &w)| w != 0)
            .map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
    }
}

/// Row-reduced basis keyed by pivot (lowest set bit).
#[derive(Default)]
struct Echelon {
    rows: Vec<(usize, BitVec)>,
}

impl Echelon {
    fn reduce(&self, mut v: BitVec) -> BitVec {
        for (pivot, row) in &self.rows {
            if v.get(*pivot) {
                v.xor(row);
            }
        }
        v
    }

    /// Insert `v`; returns whether it was independent.
    fn insert(&mut self, v: BitVec) -> bool {
        let v = self.reduce(v);
        match v.lowest() {
            None => false,
            Some(p) => {
                for (_, row) in &mut self.rows {
                    if row.get(p) {
                        row.xor(&v);
                    }
                }
                self.rows.push((p, v));
                true
            }
        }
    }
}

/// Basis of the kernel of a matrix over F2 given by its columns.
fn kernel(columns: &[BitVec], rows: usize) -> Vec<BitVec> {
    let n = columns.len();
    // Gaussian elimination on [A^T | I].
    let mut work: Vec<(BitVec, BitVec)> = columns
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let mut id = BitVec::zeros(n);
            id.flip(j);
            (c.clone(), id)
        })
        .collect();
    let mut used = vec![false; n];
    for r in 0..rows {
        let Some(j) = (0..n).find(|&j| !used[j] && work[j].0.get(r)) else {
            continue;
        };
        used[j] = true;
        let (pivot_col, pivot_id) = work[j].clone();
        for (k, w) in work.iter_mut().enumerate() {
            if k != j && w.0.get(r) {
                w.0.xor(&pivot_col);
                w.1.xor(&pivot_id);
            }
        }
    }
    work.into_iter()
        .enumerate()
        .filter(|(j, _)| !used[*j])
        .map(|(_, (_, id))| id)
        .collect()
}

#[derive(Debug, Clone)]
pub struct CocycleWitness {
    pub graph: Arc<ConstraintGraph>,
    /// `dim H^1`, the number of generators.
    pub h1_dimension: usize,
    /// Independent cocycles modulo coboundaries, one flag per graph edge.
    pub generators: Vec<Vec<bool>>,
}

impl CocycleWitness {
    /// The `S_2` instance that swaps the labels exactly on the flagged edges.
    pub fn instance(&self, which: usize) -> Result<UgInstance, UgError> {
        let flags = &self.generators[which];
        let swap = Perm::swap(2, 0, 1);
        let id = Perm::identity(2);
        let perms = flags.iter().map(|&f| if f { swap } else { id }).collect();
        UgInstance::new(self.graph.clone(), 2, perms)
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum CohomologyError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
}

/// Cocycles on edges of `G_1[X]` that are not coboundaries, or `None` when `H^1` vanishes.
pub fn f2_cocycle_witness(x: &Arc<SimplicialComplex>) -> Result<Option<CocycleWitness>, CohomologyError> {
    let graph = Arc::new(constraint_graph(x, 1)?);
    let witness = cohomology(x, graph)?;
    Ok((witness.h1_dimension > 0).then_some(witness))
}

fn cohomology(x: &SimplicialComplex, graph: Arc<ConstraintGraph>) -> Result<CocycleWitness, CohomologyError> {
    let edges = graph.edges();
    let triangles = x.level(3)?;
    // Columns of the edge-to-triangle coboundary map, one per edge.
    let mut columns = vec![BitVec::zeros(triangles.len()); edges.len()];
    for (ti, &tri) in triangles.faces.iter().enumerate() {
        for pair in tri.subsets(2) {
            let vs = pair.to_vec();
            let a = graph.vertex_index(crate::face::Face::singleton(vs[0])).unwrap();
            let b = graph.vertex_index(crate::face::Face::singleton(vs[1])).unwrap();
            let e = graph.edge_between(a, b).expect("edge of a triangle");
            columns[e].flip(ti);
        }
    }
    let cocycles = kernel(&columns, triangles.len());
    let mut span = Echelon::default();
    for v in 0..graph.vertex_count() {
        let mut row = BitVec::zeros(edges.len());
        for &(_, e) in graph.neighbors(v) {
            row.flip(e as usize);
        }
        span.insert(row);
    }
    let mut generators = Vec::new();
    for z in cocycles {
        if span.insert(z.clone()) {
            generators.push((0..edges.len()).map(|e| z.get(e)).collect());
        }
    }
    Ok(CocycleWitness {
        graph,
        h1_dimension: generators.len(),
        generators,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::builtin;
    use crate::stats::Mode;

    #[test]
    fn complete_complex_has_no_witness() {
        let x = Arc::new(SimplicialComplex::complete(6, 3).unwrap());
        assert!(f2_cocycle_witness(&x).unwrap().is_none());
    }

    #[test]
    fn projective_plane_has_one_class() {
        let x = Arc::new(builtin::projective_plane());
        let w = f2_cocycle_witness(&x).unwrap().unwrap();
        assert_eq!(w.h1_dimension, 1);
        let inst = w.instance(0).unwrap();
        let r = inst.triangle_consistency(Mode::Exact, 0, 0).unwrap();
        assert_eq!((r.passes, r.trials), (10, 10));
        let v = inst.value_exact(1 << 20).unwrap();
        assert!(v.value < 1.0 - 1e-9);
    }

    #[test]
    fn torus_has_two_classes() {
        let x = Arc::new(builtin::torus());
        let w = f2_cocycle_witness(&x).unwrap().unwrap();
        assert_eq!(w.h1_dimension, 2);
    }
}
