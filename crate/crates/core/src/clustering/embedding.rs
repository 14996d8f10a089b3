//! Laplacian eigenmaps over the per-stock coherence histories.
//!
//! Graph: each point is joined to its `k` nearest neighbours (every point tied with the
//! `k`-th distance is included), edges are binary and symmetrized by union. Disconnected
//! graphs are joined by repeatedly linking the closest pair of points that lie in
//! different components. Coordinates are the generalized eigenvectors `L f = λ D f` of the
//! second and third smallest eigenvalues, normalized to `fᵀ D f = 1`.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;

use crate::coherence::CoherenceMatrix;
use crate::error::{Error, Result};

/// Default neighbourhood size.
pub const DEFAULT_NEIGHBOR_K: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// N×2 spectral coordinates.
    pub coords: Array2<f64>,
    pub neighbor_k: usize,
    /// The generalized eigenvalues belonging to the two coordinates.
    pub eigenvalues: [f64; 2],
    /// Edges added to connect the neighbourhood graph.
    pub bridges: Vec<(usize, usize)>,
}

/// Embeds the columns of `chi` (one coherence history per stock) into the plane.
pub fn laplacian_eigenmaps(chi: &CoherenceMatrix, neighbor_k: usize) -> Result<Embedding> {
    let n = chi.n_stocks();
    let m = chi.n_windows();
    let mut points = Array2::zeros((n, m));
    for (t, row) in chi.rows().iter().enumerate() {
        for (i, &x) in row.iter().enumerate() {
            if x {
                points[[i, t]] = 1.0;
            }
        }
    }
    embed_points(&points, neighbor_k)
}

/// Embeds the rows of `points` into the plane.
pub fn embed_points(points: &Array2<f64>, neighbor_k: usize) -> Result<Embedding> {
    let n = points.nrows();
    if neighbor_k < 1 {
        return Err(Error::InvalidArgument("neighbor_k must be at least 1".into()));
    }
    if n < neighbor_k + 1 || n < 3 {
        return Err(Error::InvalidArgument(format!(
            "{n} points cannot support neighbor_k = {neighbor_k} and a 2-D embedding"
        )));
    }
    let dist = squared_distances(points);
    if dist.iter().all(|&d| d == 0.0) {
        return Err(Error::DegenerateEmbedding);
    }

    let mut adj = knn_graph(&dist, neighbor_k);
    let bridges = connect_components(&mut adj, &dist);
    if !bridges.is_empty() {
        log::warn!(
            "neighbourhood graph was disconnected; added {} bridging edge(s)",
            bridges.len()
        );
    }

    let degree: Vec<f64> = adj
        .iter()
        .map(|row| row.iter().filter(|&&e| e).count() as f64)
        .collect();
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();

    // I - D^{-1/2} W D^{-1/2} shares eigenvalues with the generalized problem
    let sym = DMatrix::from_fn(n, n, |i, j| {
        let w = if adj[i][j] { 1.0 } else { 0.0 };
        let id = if i == j { 1.0 } else { 0.0 };
        id - inv_sqrt[i] * w * inv_sqrt[j]
    });
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));

    let mut coords = Array2::zeros((n, 2));
    let mut eigenvalues = [0.0; 2];
    for (c, &idx) in order[1..3].iter().enumerate() {
        eigenvalues[c] = eig.eigenvalues[idx].max(0.0);
        let y = eig.eigenvectors.column(idx);
        let mut f: Vec<f64> = (0..n).map(|i| y[i] * inv_sqrt[i]).collect();
        let norm = f
            .iter()
            .zip(&degree)
            .map(|(v, d)| v * v * d)
            .sum::<f64>()
            .sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Eigen("zero generalized eigenvector".into()));
        }
        // sign convention: largest-magnitude entry positive
        let pivot = f
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if v.abs() > f[best].abs() { i } else { best });
        let sign = if f[pivot] < 0.0 { -1.0 } else { 1.0 };
        for v in f.iter_mut() {
            *v *= sign / norm;
        }
        for (i, v) in f.into_iter().enumerate() {
            coords[[i, c]] = v;
        }
    }
    if coords.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite embedding coordinate".into()));
    }
    Ok(Embedding {
        coords,
        neighbor_k,
        eigenvalues,
        bridges,
    })
}

fn squared_distances(points: &Array2<f64>) -> Array2<f64> {
    let n = points.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..i {
            let s: f64 = points
                .row(i)
                .iter()
                .zip(points.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d[[i, j]] = s;
            d[[j, i]] = s;
        }
    }
    d
}

/// Binary k-nearest-neighbour adjacency, ties at the k-th distance included, union-symmetrized.
fn knn_graph(dist: &Array2<f64>, k: usize) -> Vec<Vec<bool>> {
    let n = dist.nrows();
    let mut adj = vec![vec![false; n]; n];
    let mut others: Vec<f64> = Vec::with_capacity(n - 1);
    for i in 0..n {
        others.clear();
        others.extend((0..n).filter(|&j| j != i).map(|j| dist[[i, j]]));
        others.sort_by(f64::total_cmp);
        let radius = others[k - 1];
        for j in 0..n {
            if j != i && dist[[i, j]] <= radius {
                adj[i][j] = true;
                adj[j][i] = true;
            }
        }
    }
    adj
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Links the closest cross-component pair until the graph is connected.
fn connect_components(adj: &mut [Vec<bool>], dist: &Array2<f64>) -> Vec<(usize, usize)> {
    let n = adj.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in 0..i {
            if adj[i][j] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut bridges = Vec::new();
    loop {
        let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            for j in i + 1..n {
                if roots[i] != roots[j] && best.is_none_or(|(d, _, _)| dist[[i, j]] < d) {
                    best = Some((dist[[i, j]], i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        adj[i][j] = true;
        adj[j][i] = true;
        let (a, b) = (roots[i], roots[j]);
        parent[a] = b;
        bridges.push((i, j));
    }
    bridges
}
