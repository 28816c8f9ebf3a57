#![allow(dead_code, clippy::needless_range_loop)]

use cascade_core::{validate_corr, CorrMatrix, Matrix, TreeEdge};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn golden_rows() -> [[f64; 5]; 5] {
    [
        [1.0, 0.9, 0.6, 0.8, 0.7],
        [0.9, 1.0, 0.5, 0.6, 0.6],
        [0.6, 0.5, 1.0, 0.4, 0.1],
        [0.8, 0.6, 0.4, 1.0, 0.8],
        [0.7, 0.6, 0.1, 0.8, 1.0],
    ]
}

pub fn golden() -> CorrMatrix {
    validate_corr(Matrix::from_f64_rows(&golden_rows()).unwrap()).unwrap()
}

/// Normalized sample correlation of `k` standard normal draws, `k >= 2n`.
pub fn random_corr(n: usize, seed: u64) -> CorrMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = 2 * n + 3;
    let g = Matrix::<f64>::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
    let s = g.gram();
    let d: Vec<f64> = s.diag().iter().map(|x| x.sqrt()).collect();
    let c = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            s[(i, j)] / (d[i] * d[j])
        }
    });
    validate_corr(c).unwrap()
}

/// Uniform random labelled tree via a random Prüfer sequence, with edge
/// correlations drawn from `(-0.95, 0.95)`.
pub fn random_tree_edges(n: usize, rng: &mut ChaCha8Rng) -> Vec<TreeEdge<f64>> {
    if n < 2 {
        return Vec::new();
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
    prufer_decode(n, &seq)
        .into_iter()
        .map(|(u, v)| TreeEdge::new(u, v, rng.random_range(-0.95..0.95)))
        .collect()
}

/// Edges of the labelled tree encoded by a Prüfer sequence of length `n - 2`.
pub fn prufer_decode(n: usize, seq: &[usize]) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; n];
    for &s in seq {
        degree[s] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &s in seq {
        let leaf = (0..n).find(|&v| degree[v] == 1).unwrap();
        edges.push((leaf.min(s), leaf.max(s)));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Every labelled spanning tree on `n` nodes, `n^(n-2)` of them.
pub fn all_spanning_trees(n: usize) -> Vec<Vec<(usize, usize)>> {
    if n == 2 {
        return vec![vec![(0, 1)]];
    }
    let len = n - 2;
    let total = n.pow(len as u32);
    (0..total)
        .map(|mut code| {
            let seq: Vec<usize> = (0..len)
                .map(|_| {
                    let d = code % n;
                    code /= n;
                    d
                })
                .collect();
            prufer_decode(n, &seq)
        })
        .collect()
}

/// Path-product covariance computed by walking each pair's tree path.
pub fn path_product_oracle(n: usize, edges: &[(usize, usize, f64)]) -> Matrix<f64> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v, r) in edges {
        adj[u].push((v, r));
        adj[v].push((u, r));
    }
    let mut out = Matrix::zeros(n, n);
    for s in 0..n {
        let mut prod = vec![None; n];
        prod[s] = Some(1.0);
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &(v, r) in &adj[u] {
                if prod[v].is_none() {
                    prod[v] = Some(prod[u].unwrap() * r);
                    stack.push(v);
                }
            }
        }
        for t in 0..n {
            out[(s, t)] = prod[t].unwrap_or(0.0);
        }
    }
    out
}

/// Log-determinant through Gaussian elimination with partial pivoting.
pub fn lu_log_det(m: &Matrix<f64>) -> f64 {
    let n = m.nrows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).to_vec()).collect();
    let mut acc = 0.0;
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        a.swap(k, p);
        let piv = a[k][k];
        acc += piv.abs().ln();
        for i in k + 1..n {
            let f = a[i][k] / piv;
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    acc
}

/// Inverse through Gauss-Jordan elimination.
pub fn gauss_jordan_inverse(m: &Matrix<f64>) -> Matrix<f64> {
    let n = m.nrows();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = m.row(i).to_vec();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        a.swap(k, p);
        let piv = a[k][k];
        for x in a[k].iter_mut() {
            *x /= piv;
        }
        for i in 0..n {
            if i != k {
                let f = a[i][k];
                if f != 0.0 {
                    for j in 0..2 * n {
                        a[i][j] -= f * a[k][j];
                    }
                }
            }
        }
    }
    Matrix::from_fn(n, n, |i, j| a[i][n + j])
}

/// Gaussian KL from the textbook three-term formula with a general inverse.
pub fn kl_oracle(p: &Matrix<f64>, q: &Matrix<f64>) -> f64 {
    let n = p.nrows() as f64;
    let qinv = gauss_jordan_inverse(q);
    let tr = qinv.matmul(p).trace();
    0.5 * (tr - n + lu_log_det(q) - lu_log_det(p))
}
