//! Constraint graphs on `t`-faces: the graphs `G_t[X]`, Kneser graphs and Grassmann graphs.

use std::sync::{Arc, OnceLock};

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::complex::{ComplexError, SimplicialComplex};
use crate::face::{binomial, Face, FaceMap, FaceSet, WordMap};

pub const TRIANGLE_CAP: usize = 5_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("triangles need 3t <= d (t={t}, d={d})")]
    Dimension { t: usize, d: usize },
    #[error("Kneser graph needs |A| >= 2t (|A|={size}, t={t})")]
    KneserTooSmall { size: usize, t: usize },
    #[error("Grassmann graph needs 2r <= n (r={r}, n={n})")]
    GrassmannDimension { r: usize, n: usize },
    #[error("q^n = {0} exceeds the vector cap of 64")]
    GrassmannTooLarge(usize),
    #[error("field size {0} unsupported, use 2, 3 or 4")]
    FieldSize(usize),
    #[error("graph has no triangles")]
    NoTriangles,
    #[error("more than {0} triangles")]
    TooManyTriangles(usize),
    #[error(transparent)]
    Complex(#[from] ComplexError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: u32,
    pub v: u32,
    pub weight: f64,
}

/// An unordered split of a `3t`-face into three vertices of the graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub parts: [u32; 3],
    pub weight: f64,
}

#[derive(Debug)]
enum TriangleSource {
    None,
    Complex,
    Subspaces { q: usize },
}

#[derive(Debug)]
pub struct ConstraintGraph {
    t: usize,
    ambient: usize,
    vertices: Vec<Face>,
    vertex_weights: Vec<f64>,
    index: FaceMap<u32>,
    edges: Vec<Edge>,
    edge_index: WordMap<u64, u32>,
    adjacency: Vec<Vec<(u32, u32)>>,
    complex: Option<Arc<SimplicialComplex>>,
    source: TriangleSource,
    triangles: OnceLock<Result<Arc<Vec<Triangle>>, GraphError>>,
}

fn edge_key(a: u32, b: u32) -> u64 {
    ((a.min(b) as u64) << 32) | a.max(b) as u64
}

/// The graph `G_t[X]` on `t`-faces with edges at disjoint pairs forming `2t`-faces.
pub fn constraint_graph(
    x: &Arc<SimplicialComplex>,
    t: usize,
) -> Result<ConstraintGraph, GraphError> {
    if t == 0 || 3 * t > x.d() {
        return Err(GraphError::Dimension { t, d: x.d() });
    }
    from_complex(x, t, true)
}

/// Kneser graph on the `t`-subsets of `a`.
pub fn kneser_graph(a: Face, t: usize) -> Result<ConstraintGraph, GraphError> {
    if t == 0 || a.len() < 2 * t {
        return Err(GraphError::KneserTooSmall { size: a.len(), t });
    }
    let n = a.max_vertex().map_or(0, |v| v + 1);
    let x = Arc::new(SimplicialComplex::from_facets(n, &[a])?);
    from_complex(&x, t, 3 * t <= a.len())
}

fn from_complex(
    x: &Arc<SimplicialComplex>,
    t: usize,
    with_triangles: bool,
) -> Result<ConstraintGraph, GraphError> {
    let level_t = x.level(t)?;
    let level_2t = x.level(2 * t)?;
    let vertices = level_t.faces.clone();
    let vertex_weights = level_t.weights().to_vec();
    let index: FaceMap<u32> = vertices
        .iter()
        .enumerate()
        .map(|(i, &f)| (f, i as u32))
        .collect();
    let splits = binomial(2 * t - 1, t - 1) as f64;
    let mut edges = Vec::new();
    for (&big, &w) in level_2t.faces.iter().zip(level_2t.weights()) {
        let lead = Face::singleton(big.min_vertex().unwrap());
        let rest = big.difference(lead);
        for tail in rest.subsets(t - 1) {
            let u = tail.union(lead);
            let v = big.difference(u);
            let (a, b) = (index[&u], index[&v]);
            edges.push(Edge {
                u: a.min(b),
                v: a.max(b),
                weight: w / splits,
            });
        }
    }
    edges.sort_by_key(|e| (e.u, e.v));
    let source = if with_triangles {
        TriangleSource::Complex
    } else {
        TriangleSource::None
    };
    Ok(ConstraintGraph::assemble(
        t,
        x.n(),
        vertices,
        vertex_weights,
        index,
        edges,
        Some(x.clone()),
        source,
    ))
}

impl ConstraintGraph {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        t: usize,
        ambient: usize,
        vertices: Vec<Face>,
        vertex_weights: Vec<f64>,
        index: FaceMap<u32>,
        edges: Vec<Edge>,
        complex: Option<Arc<SimplicialComplex>>,
        source: TriangleSource,
    ) -> ConstraintGraph {
        let mut adjacency = vec![Vec::new(); vertices.len()];
        let mut edge_index = WordMap::default();
        for (i, e) in edges.iter().enumerate() {
            adjacency[e.u as usize].push((e.v, i as u32));
            adjacency[e.v as usize].push((e.u, i as u32));
            edge_index.insert(edge_key(e.u, e.v), i as u32);
        }
        ConstraintGraph {
            t,
            ambient,
            vertices,
            vertex_weights,
            index,
            edges,
            edge_index,
            adjacency,
            complex,
            source,
            triangles: OnceLock::new(),
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Number of ambient vertices (or vectors, for Grassmann graphs).
    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn vertices(&self) -> &[Face] {
        &self.vertices
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertex_weights(&self) -> &[f64] {
        &self.vertex_weights
    }

    pub fn vertex_index(&self, face: Face) -> Option<usize> {
        self.index.get(&face).map(|&i| i as usize)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_index
            .get(&edge_key(a as u32, b as u32))
            .map(|&i| i as usize)
    }

    /// Neighbours of a vertex with the connecting edge index.
    pub fn neighbors(&self, v: usize) -> &[(u32, u32)] {
        &self.adjacency[v]
    }

    pub fn complex(&self) -> Option<&Arc<SimplicialComplex>> {
        self.complex.as_ref()
    }

    pub fn has_triangles(&self) -> bool {
        !matches!(self.source, TriangleSource::None)
    }

    /// Connected components as lists of vertex indices, each sorted, ordered by least member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.vertices.len()];
        let mut out = Vec::new();
        for start in 0..self.vertices.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut head = 0;
            while head < comp.len() {
                let x = comp[head];
                head += 1;
                for &(y, _) in &self.adjacency[x] {
                    if !seen[y as usize] {
                        seen[y as usize] = true;
                        comp.push(y as usize);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Draw an ordered edge: a `2t`-face from its level measure split uniformly.
    pub fn sample_edge<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        match (&self.complex, &self.source) {
            (Some(x), TriangleSource::Complex | TriangleSource::None) => {
                let big = x.sample_face(2 * self.t, rng);
                let u = crate::rng::random_subset(big, self.t, rng);
                let v = big.difference(u);
                (self.index[&u] as usize, self.index[&v] as usize)
            }
            _ => {
                let e = self.edges[rng.gen_range(0..self.edges.len())];
                if rng.gen::<bool>() {
                    (e.u as usize, e.v as usize)
                } else {
                    (e.v as usize, e.u as usize)
                }
            }
        }
    }

    /// Draw an ordered triangle: a `3t`-face from its level measure split uniformly.
    pub fn sample_triangle<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
    ) -> Result<[usize; 3], GraphError> {
        match (&self.complex, &self.source) {
            (_, TriangleSource::None) => Err(GraphError::NoTriangles),
            (Some(x), TriangleSource::Complex) => {
                let big = x.sample_face(3 * self.t, rng);
                let mut verts = big.to_vec();
                verts.shuffle(rng);
                let mut parts = [0usize; 3];
                for (p, chunk) in verts.chunks(self.t).enumerate() {
                    let f = Face::from_vertices(chunk).expect("distinct vertices");
                    parts[p] = self.index[&f] as usize;
                }
                Ok(parts)
            }
            _ => {
                let tris = self.triangles()?;
                if tris.is_empty() {
                    return Err(GraphError::NoTriangles);
                }
                let tri = tris[rng.gen_range(0..tris.len())];
                let mut parts = tri.parts.map(|p| p as usize);
                parts.shuffle(rng);
                Ok(parts)
            }
        }
    }

    /// All unordered triangles with their weights (summing to 1).
    pub fn triangles(&self) -> Result<Arc<Vec<Triangle>>, GraphError> {
        self.triangles
            .get_or_init(|| self.enumerate_triangles().map(Arc::new))
            .clone()
    }

    fn enumerate_triangles(&self) -> Result<Vec<Triangle>, GraphError> {
        match &self.source {
            TriangleSource::None => Err(GraphError::NoTriangles),
            TriangleSource::Complex => {
                let x = self.complex.as_ref().expect("complex-backed graph");
                let t = self.t;
                let level = x.level(3 * t)?;
                let per_face =
                    (binomial(3 * t - 1, t - 1) * binomial(2 * t - 1, t - 1)) as usize;
                if level.len().saturating_mul(per_face) > TRIANGLE_CAP {
                    return Err(GraphError::TooManyTriangles(TRIANGLE_CAP));
                }
                let mut out = Vec::with_capacity(level.len() * per_face);
                for (&big, &w) in level.faces.iter().zip(level.weights()) {
                    for [a, b, c] in splits3(big, t) {
                        out.push(Triangle {
                            parts: [self.index[&a], self.index[&b], self.index[&c]],
                            weight: w / per_face as f64,
                        });
                    }
                }
                Ok(out)
            }
            TriangleSource::Subspaces { q } => {
                let field = Field::new(*q)?;
                let mut out = Vec::new();
                for e in &self.edges {
                    let (a, b) = (e.u as usize, e.v as usize);
                    let ab = field.span_of_sets(self.vertices[a], self.vertices[b]);
                    for &(c, _) in &self.adjacency[b] {
                        let c = c as usize;
                        if c <= b || self.edge_between(a, c).is_none() {
                            continue;
                        }
                        let all = field.span_of_sets(ab, self.vertices[c]);
                        let need = field.q.pow(3 * self.t as u32) - 1;
                        if all.len() == need {
                            out.push(Triangle {
                                parts: [a as u32, b as u32, c as u32],
                                weight: 0.0,
                            });
                            if out.len() > TRIANGLE_CAP {
                                return Err(GraphError::TooManyTriangles(TRIANGLE_CAP));
                            }
                        }
                    }
                }
                let w = 1.0 / out.len().max(1) as f64;
                for tri in &mut out {
                    tri.weight = w;
                }
                Ok(out)
            }
        }
    }
}

/// Unordered splits of a `3t`-face into three `t`-faces.
pub fn splits3(big: Face, t: usize) -> Vec<[Face; 3]> {
    let mut out = Vec::new();
    let lead = Face::singleton(big.min_vertex().expect("non-empty"));
    for tail in big.difference(lead).subsets(t - 1) {
        let a = tail.union(lead);
        let rest = big.difference(a);
        let lead2 = Face::singleton(rest.min_vertex().expect("non-empty"));
        for tail2 in rest.difference(lead2).subsets(t - 1) {
            let b = tail2.union(lead2);
            out.push([a, b, rest.difference(b)]);
        }
    }
    out
}

/// Arithmetic in F_q for q in {2, 3, 4}; vectors of F_q^n are base-q integers.
#[derive(Debug, Clone)]
struct Field {
    q: usize,
    add: Vec<Vec<usize>>,
    mul: Vec<Vec<usize>>,
}

impl Field {
    fn new(q: usize) -> Result<Field, GraphError> {
        let (add, mul): (Vec<Vec<usize>>, Vec<Vec<usize>>) = match q {
            2 | 3 => (
                (0..q).map(|a| (0..q).map(|b| (a + b) % q).collect()).collect(),
                (0..q).map(|a| (0..q).map(|b| (a * b) % q).collect()).collect(),
            ),
            4 => {
                // elements 0, 1, w, w+1 with w^2 = w + 1
                let mul = vec![
                    vec![0, 0, 0, 0],
                    vec![0, 1, 2, 3],
                    vec![0, 2, 3, 1],
                    vec![0, 3, 1, 2],
                ];
                let add = (0..4).map(|a| (0..4).map(|b| a ^ b).collect()).collect();
                (add, mul)
            }
            _ => return Err(GraphError::FieldSize(q)),
        };
        Ok(Field { q, add, mul })
    }

    fn vec_op(&self, a: usize, b: usize, scalar: usize) -> usize {
        // a + scalar * b, digitwise
        let (mut a, mut b) = (a, b);
        let mut out = 0;
        let mut place = 1;
        while a > 0 || b > 0 {
            let da = a % self.q;
            let db = b % self.q;
            out += self.add[da][self.mul[scalar][db]] * place;
            place *= self.q;
            a /= self.q;
            b /= self.q;
        }
        out
    }

    /// Nonzero vectors of the span of `base` (nonzero vectors as a mask) and `extra`.
    fn span_of_sets(&self, base: Face, extra: Face) -> Face {
        let mut span: Vec<usize> = vec![0];
        span.extend(base.vertices());
        let mut bits = base.bits();
        for v in extra.vertices() {
            if bits >> v & 1 == 1 {
                continue;
            }
            let current = span.clone();
            for &s in &current {
                for c in 1..self.q {
                    let w = self.vec_op(s, v, c);
                    if w != 0 && bits >> w & 1 == 0 {
                        bits |= 1 << w;
                        span.push(w);
                    }
                }
            }
        }
        Face::from_bits(bits)
    }
}

/// Graph on `r`-dimensional subspaces of F_q^n, adjacent when they intersect trivially.
/// Each subspace is stored as the mask of its nonzero vectors.
pub fn grassmann_graph(q: usize, n: usize, r: usize) -> Result<ConstraintGraph, GraphError> {
    let field = Field::new(q)?;
    if r == 0 || 2 * r > n {
        return Err(GraphError::GrassmannDimension { r, n });
    }
    let size = q.checked_pow(n as u32).unwrap_or(usize::MAX);
    if size > 64 {
        return Err(GraphError::GrassmannTooLarge(size));
    }
    let mut layer: Vec<Face> = vec![Face::EMPTY];
    for _ in 0..r {
        let mut next: FaceSet = FaceSet::default();
        for &s in &layer {
            for v in 1..size {
                if !s.contains(v) {
                    next.insert(field.span_of_sets(s, Face::singleton(v)));
                }
            }
        }
        layer = next.into_iter().collect();
    }
    layer.sort();
    let vertices = layer;
    let index: FaceMap<u32> = vertices
        .iter()
        .enumerate()
        .map(|(i, &f)| (f, i as u32))
        .collect();
    let mut pairs = Vec::new();
    for a in 0..vertices.len() {
        for b in a + 1..vertices.len() {
            if vertices[a].is_disjoint(vertices[b]) {
                pairs.push((a as u32, b as u32));
            }
        }
    }
    let w = 1.0 / pairs.len().max(1) as f64;
    let edges = pairs
        .into_iter()
        .map(|(u, v)| Edge { u, v, weight: w })
        .collect();
    let vw = vec![1.0 / vertices.len() as f64; vertices.len()];
    let source = if 3 * r <= n {
        TriangleSource::Subspaces { q }
    } else {
        TriangleSource::None
    };
    Ok(ConstraintGraph::assemble(
        r, size, vertices, vw, index, edges, None, source,
    ))
}
