//! Incremental (quickhull) convex hull in arbitrary dimension, used for the
//! six-dimensional wrench space.
//!
//! Facets are simplices; points within `tolerance` of a facet hyperplane
//! count as inside, so coplanar inputs triangulate a flat facet instead of
//! creating slivers.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug, PartialEq)]
pub struct HullFacet {
    pub vertices: Vec<usize>,
    /// Outward unit normal.
    pub normal: DVector<f64>,
    /// `normal . x = offset` on the facet; `normal . x <= offset` inside.
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HullError {
    /// Fewer than `dim + 1` affinely independent points.
    Degenerate,
}

struct Facet {
    vertices: Vec<usize>,
    normal: DVector<f64>,
    offset: f64,
    outside: Vec<usize>,
    alive: bool,
}

type Ridge = Vec<usize>;

fn ridge_of(vertices: &[usize], skip: usize) -> Ridge {
    let mut r: Ridge = vertices
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != skip)
        .map(|(_, &v)| v)
        .collect();
    r.sort_unstable();
    r
}

/// Unit vector orthogonal to `rows` (a `(d-1) x d` matrix), via signed
/// maximal minors.
fn orthogonal_complement(rows: &DMatrix<f64>) -> Option<DVector<f64>> {
    let d = rows.ncols();
    let mut n = DVector::zeros(d);
    for k in 0..d {
        let minor = rows.clone().remove_column(k);
        let det = minor.lu().determinant();
        n[k] = if k % 2 == 0 { det } else { -det };
    }
    let norm = n.norm();
    (norm > 0.0 && norm.is_finite()).then(|| n / norm)
}

struct Builder<'a> {
    points: &'a [DVector<f64>],
    dim: usize,
    tol: f64,
    interior: DVector<f64>,
    facets: Vec<Facet>,
    ridges: HashMap<Ridge, [usize; 2]>,
}

const NONE: usize = usize::MAX;

impl<'a> Builder<'a> {
    fn make_facet(&self, vertices: Vec<usize>) -> Option<Facet> {
        let v0 = &self.points[vertices[0]];
        let mut rows = DMatrix::zeros(self.dim - 1, self.dim);
        for (r, &v) in vertices[1..].iter().enumerate() {
            rows.set_row(r, &(&self.points[v] - v0).transpose());
        }
        let mut normal = orthogonal_complement(&rows)?;
        let mut offset = normal.dot(v0);
        if normal.dot(&self.interior) > offset {
            normal = -normal;
            offset = -offset;
        }
        Some(Facet {
            vertices,
            normal,
            offset,
            outside: Vec::new(),
            alive: true,
        })
    }

    fn distance(&self, f: usize, p: usize) -> f64 {
        let facet = &self.facets[f];
        facet.normal.dot(&self.points[p]) - facet.offset
    }

    fn add_facet(&mut self, facet: Facet) -> usize {
        let id = self.facets.len();
        for k in 0..facet.vertices.len() {
            let entry = self.ridges.entry(ridge_of(&facet.vertices, k)).or_insert([NONE, NONE]);
            if entry[0] == NONE {
                entry[0] = id;
            } else {
                entry[1] = id;
            }
        }
        self.facets.push(facet);
        id
    }

    fn remove_facet(&mut self, id: usize) {
        self.facets[id].alive = false;
        for k in 0..self.facets[id].vertices.len() {
            let key = ridge_of(&self.facets[id].vertices, k);
            if let Some(entry) = self.ridges.get_mut(&key) {
                if entry[0] == id {
                    entry[0] = entry[1];
                }
                entry[1] = NONE;
                if entry[0] == NONE {
                    self.ridges.remove(&key);
                }
            }
        }
    }

    fn neighbor(&self, f: usize, ridge: &Ridge) -> usize {
        match self.ridges.get(ridge) {
            Some(&[a, b]) if a == f => b,
            Some(&[a, _]) => a,
            None => NONE,
        }
    }

    fn assign(&mut self, candidates: &[usize], new_facets: &[usize]) {
        for &p in candidates {
            let mut best = (NONE, self.tol);
            for &f in new_facets {
                let d = self.distance(f, p);
                if d > best.1 {
                    best = (f, d);
                }
            }
            if best.0 != NONE {
                self.facets[best.0].outside.push(p);
            }
        }
    }
}

/// Greedy choice of `dim + 1` affinely independent points, maximizing the
/// residual distance to the affine span chosen so far.
fn initial_simplex(points: &[DVector<f64>], dim: usize, tol: f64) -> Option<Vec<usize>> {
    let centroid = points.iter().fold(DVector::zeros(dim), |a, p| a + p) / points.len() as f64;
    let first = (0..points.len()).max_by(|&a, &b| {
        (&points[a] - &centroid)
            .norm()
            .total_cmp(&(&points[b] - &centroid).norm())
    })?;
    let mut chosen = vec![first];
    let mut basis: Vec<DVector<f64>> = Vec::new();
    while chosen.len() < dim + 1 {
        let residual = |p: &DVector<f64>| {
            let mut r = p - &points[first];
            for b in &basis {
                r -= b * b.dot(&r);
            }
            r
        };
        let (idx, r) = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, residual(p)))
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))?;
        let n = r.norm();
        if n <= tol {
            return None;
        }
        basis.push(r / n);
        chosen.push(idx);
    }
    Some(chosen)
}

/// Facets of the convex hull of `points` (all of one dimension `d >= 2`).
pub fn convex_hull(points: &[DVector<f64>], tolerance: f64) -> Result<Vec<HullFacet>, HullError> {
    let Some(dim) = points.first().map(|p| p.len()) else {
        return Err(HullError::Degenerate);
    };
    if points.len() < dim + 1 {
        return Err(HullError::Degenerate);
    }
    let simplex = initial_simplex(points, dim, tolerance).ok_or(HullError::Degenerate)?;
    let interior = simplex.iter().fold(DVector::zeros(dim), |a, &i| a + &points[i]) / (dim + 1) as f64;
    let mut b = Builder {
        points,
        dim,
        tol: tolerance,
        interior,
        facets: Vec::new(),
        ridges: HashMap::new(),
    };
    let mut initial = Vec::new();
    for skip in 0..=dim {
        let verts: Vec<usize> = simplex
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != skip)
            .map(|(_, &v)| v)
            .collect();
        let facet = b.make_facet(verts).ok_or(HullError::Degenerate)?;
        initial.push(b.add_facet(facet));
    }
    let rest: Vec<usize> = (0..points.len()).filter(|i| !simplex.contains(i)).collect();
    b.assign(&rest, &initial);

    let mut queue: Vec<usize> = initial;
    while let Some(f) = queue.pop() {
        if !b.facets[f].alive || b.facets[f].outside.is_empty() {
            continue;
        }
        let apex = *b.facets[f]
            .outside
            .iter()
            .max_by(|&&x, &&y| b.distance(f, x).total_cmp(&b.distance(f, y)))
            .expect("non-empty outside set");

        // visible region by flood fill from f
        let mut visible = vec![f];
        let mut is_visible: HashMap<usize, bool> = HashMap::from([(f, true)]);
        let mut horizon: Vec<(Ridge, usize)> = Vec::new();
        let mut k = 0;
        while k < visible.len() {
            let v = visible[k];
            k += 1;
            for s in 0..dim {
                let ridge = ridge_of(&b.facets[v].vertices, s);
                let g = b.neighbor(v, &ridge);
                if g == NONE {
                    continue;
                }
                let vis = match is_visible.get(&g) {
                    Some(&vis) => vis,
                    None => {
                        let vis = b.distance(g, apex) > b.tol;
                        is_visible.insert(g, vis);
                        if vis {
                            visible.push(g);
                        }
                        vis
                    }
                };
                if !vis {
                    horizon.push((ridge, g));
                }
            }
        }

        let mut orphans: Vec<usize> = Vec::new();
        for &v in &visible {
            orphans.extend(b.facets[v].outside.drain(..).filter(|&p| p != apex));
            b.remove_facet(v);
        }
        let mut created = Vec::with_capacity(horizon.len());
        for (ridge, _) in horizon {
            let mut verts = ridge;
            verts.push(apex);
            match b.make_facet(verts) {
                Some(facet) => created.push(b.add_facet(facet)),
                // a flat cone over the horizon adds no volume; skip it
                None => continue,
            }
        }
        b.assign(&orphans, &created);
        queue.extend(created);
    }

    Ok(b
        .facets
        .into_iter()
        .filter(|f| f.alive)
        .map(|f| HullFacet {
            vertices: f.vertices,
            normal: f.normal,
            offset: f.offset,
        })
        .collect())
}
