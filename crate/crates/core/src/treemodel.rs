//! Tree-structured approximations of a Gaussian covariance: the Chow-Liu
//! maximum-weight spanning forest and star trees, together with the induced
//! tree covariance.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::symcore::{kl_gauss, CorrMatrix, SpdMatrix};

/// Correlations with magnitude at or below this are treated as absent edges.
pub const DEFAULT_ZERO_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeEdge<T> {
    pub u: usize,
    pub v: usize,
    /// Correlation between `u` and `v` in the source matrix.
    pub rho: T,
}

impl<T> TreeEdge<T> {
    pub fn new(u: usize, v: usize, rho: T) -> Self {
        Self { u, v, rho }
    }
}

/// Spanning tree or forest over `n` nodes with its induced covariance.
#[derive(Clone, Debug)]
pub struct TreeModel<T> {
    n: usize,
    edges: Vec<TreeEdge<T>>,
    components: Vec<Vec<usize>>,
    covariance: SpdMatrix<T>,
}

impl<T: Scalar> TreeModel<T> {
    /// Builds a tree model from an edge list and per-node variances. The
    /// covariance follows the path-product rule scaled by standard deviations.
    pub fn from_edges(n: usize, edges: Vec<TreeEdge<T>>, variances: &[T]) -> Result<Self> {
        if variances.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: variances.len(),
            });
        }
        let components = components_of(n, &edges)?;
        for e in &edges {
            if !(e.rho.abs() < T::one()) {
                return Err(Error::InvalidCorrelation {
                    u: e.u,
                    v: e.v,
                    value: e.rho.as_f64(),
                });
            }
        }
        let products = path_products(n, &edges);
        let sd: Vec<T> = variances.iter().map(|v| v.sqrt()).collect();
        let cov = Matrix::from_fn(n, n, |i, j| {
            if i == j {
                variances[i]
            } else {
                sd[i] * sd[j] * products[(i, j)]
            }
        });
        Ok(Self {
            n,
            edges,
            components,
            covariance: SpdMatrix::from_trusted(cov),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[TreeEdge<T>] {
        &self.edges
    }

    /// Connected components, each sorted ascending, ordered by smallest label.
    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    pub fn covariance(&self) -> &SpdMatrix<T> {
        &self.covariance
    }

    pub fn is_spanning_tree(&self) -> bool {
        self.components.len() == 1
    }

    /// Neighbour lists, each sorted ascending.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        adjacency(self.n, &self.edges)
    }

    /// Edge pairs normalised so that `u < v`, sorted.
    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<_> = self
            .edges
            .iter()
            .map(|e| (e.u.min(e.v), e.u.max(e.v)))
            .collect();
        pairs.sort_unstable();
        pairs
    }
}

/// Gaussian mutual information of a pair with correlation `rho`,
/// `-1/2 ln(1 - rho^2)`.
pub fn edge_weight<T: Scalar>(rho: T) -> T {
    -T::lit(0.5) * (-(rho * rho)).ln_1p()
}

/// Maximum-weight spanning forest under the mutual-information weight, by
/// Kruskal's algorithm. Pairs with `|rho| <= zero_tol` are never edges, so a
/// block-diagonal source yields a forest. Ties are broken by the
/// lexicographically smaller node pair.
pub fn chow_liu<T: Scalar>(source: &SpdMatrix<T>, zero_tol: T) -> Result<TreeModel<T>> {
    if !(zero_tol >= T::zero() && zero_tol < T::one()) {
        return Err(Error::InvalidArgument(format!(
            "zero tolerance must lie in [0, 1), got {zero_tol}"
        )));
    }
    let n = source.n();
    let mut candidates = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for u in 0..n {
        for v in (u + 1)..n {
            let rho = source.correlation(u, v);
            if !(rho.abs() < T::one()) {
                return Err(Error::InvalidCorrelation {
                    u,
                    v,
                    value: rho.as_f64(),
                });
            }
            if rho.abs() > zero_tol {
                candidates.push((edge_weight(rho), u, v, rho));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("finite weights")
            .then((a.1, a.2).cmp(&(b.1, b.2)))
    });

    let mut dsu = DisjointSets::new(n);
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    for (_, u, v, rho) in candidates {
        if dsu.union(u, v) {
            edges.push(TreeEdge::new(u, v, rho));
            if edges.len() + 1 == n {
                break;
            }
        }
    }
    TreeModel::from_edges(n, edges, &source.diag())
}

/// Unit-diagonal covariance of a tree: entry `(u, v)` is the product of edge
/// correlations along the path `u -> v`, zero across components.
pub fn tree_covariance<T: Scalar>(n: usize, edges: &[TreeEdge<T>]) -> Result<CorrMatrix<T>> {
    let model = TreeModel::from_edges(n, edges.to_vec(), &vec![T::one(); n])?;
    Ok(CorrMatrix::from_trusted(model.covariance.into_matrix()))
}

/// Star tree centred on `center`: every other node is a leaf of the center.
/// The covariance keeps the center row and column of `source` and makes the
/// leaves conditionally independent given the center.
pub fn star_tree<T: Scalar>(source: &SpdMatrix<T>, center: usize) -> Result<TreeModel<T>> {
    let n = source.n();
    if center >= n {
        return Err(Error::InvalidCenter { center, n });
    }
    let edges = (0..n)
        .filter(|&v| v != center)
        .map(|v| TreeEdge::new(center, v, source.correlation(center, v)))
        .collect();
    TreeModel::from_edges(n, edges, &source.diag())
}

/// Star tree with the smallest KL divergence to `source` among all `n`
/// centers; ties go to the lowest index.
pub fn best_star<T: Scalar>(source: &SpdMatrix<T>) -> Result<(usize, TreeModel<T>)> {
    let n = source.n();
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let scored: Vec<(T, TreeModel<T>)> = (0..n)
        .into_par_iter()
        .map(|c| {
            let star = star_tree(source, c)?;
            let kl = kl_gauss(source, star.covariance())?;
            Ok((kl, star))
        })
        .collect::<Result<_>>()?;

    let mut best = 0;
    for (c, (kl, _)) in scored.iter().enumerate() {
        if *kl < scored[best].0 {
            best = c;
        }
    }
    let (_, tree) = scored.into_iter().nth(best).expect("non-empty");
    Ok((best, tree))
}

pub(crate) struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already connected.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

fn components_of<T>(n: usize, edges: &[TreeEdge<T>]) -> Result<Vec<Vec<usize>>> {
    let mut dsu = DisjointSets::new(n);
    for e in edges {
        if e.u >= n || e.v >= n || e.u == e.v {
            return Err(Error::InvalidArgument(format!(
                "edge ({}, {}) is not a valid pair for {n} nodes",
                e.u, e.v
            )));
        }
        if !dsu.union(e.u, e.v) {
            return Err(Error::CyclicEdges { u: e.u, v: e.v });
        }
    }
    let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); n];
    for x in 0..n {
        let r = dsu.find(x);
        by_root[r].push(x);
    }
    let mut comps: Vec<Vec<usize>> = by_root.into_iter().filter(|c| !c.is_empty()).collect();
    comps.sort_by_key(|c| c[0]);
    Ok(comps)
}

fn adjacency<T>(n: usize, edges: &[TreeEdge<T>]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for e in edges {
        adj[e.u].push(e.v);
        adj[e.v].push(e.u);
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    adj
}

fn path_products<T: Scalar>(n: usize, edges: &[TreeEdge<T>]) -> Matrix<T> {
    let mut adj: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
    for e in edges {
        adj[e.u].push((e.v, e.rho));
        adj[e.v].push((e.u, e.rho));
    }
    let mut out = Matrix::zeros(n, n);
    let mut stack = Vec::new();
    for s in 0..n {
        out[(s, s)] = T::one();
        stack.clear();
        stack.push((s, usize::MAX, T::one()));
        while let Some((u, from, prod)) = stack.pop() {
            for &(v, rho) in &adj[u] {
                if v != from {
                    let p = prod * rho;
                    out[(s, v)] = p;
                    stack.push((v, u, p));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symcore::validate_corr;
    use approx::assert_abs_diff_eq;

    fn golden() -> CorrMatrix<f64> {
        validate_corr(
            Matrix::from_f64_rows(&[
                [1.0, 0.9, 0.6, 0.8, 0.7],
                [0.9, 1.0, 0.5, 0.6, 0.6],
                [0.6, 0.5, 1.0, 0.4, 0.1],
                [0.8, 0.6, 0.4, 1.0, 0.8],
                [0.7, 0.6, 0.1, 0.8, 1.0],
            ])
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn golden_chow_liu_edges() {
        let t = chow_liu(&golden(), 1e-12).unwrap();
        assert_eq!(t.edge_pairs(), vec![(0, 1), (0, 2), (0, 3), (3, 4)]);
        let rhos: Vec<f64> = t.edges().iter().map(|e| e.rho).collect();
        assert_eq!(rhos, vec![0.9, 0.8, 0.8, 0.6]);
        assert!(t.is_spanning_tree());
    }

    #[test]
    fn golden_tree_covariance_entries() {
        let t = chow_liu(&golden(), 1e-12).unwrap();
        let c = t.covariance();
        assert_abs_diff_eq!(c[(1, 4)], 0.9 * 0.8 * 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(c[(1, 4)], 0.576, epsilon = 1e-12);
        // printed as 0.374 in the worked example; the path product is 0.384
        assert_abs_diff_eq!(c[(2, 4)], 0.384, epsilon = 1e-12);
        assert_abs_diff_eq!(c[(1, 2)], 0.54, epsilon = 1e-12);
    }

    #[test]
    fn identity_gives_isolated_nodes() {
        let id = CorrMatrix::<f64>::identity(4);
        let t = chow_liu(&id, 1e-12).unwrap();
        assert!(t.edges().is_empty());
        assert_eq!(t.components().len(), 4);
        assert_eq!(t.covariance().as_matrix(), &Matrix::identity(4));
    }

    #[test]
    fn zero_correlation_chain_is_identity() {
        let edges = vec![TreeEdge::new(0, 1, 0.0), TreeEdge::new(1, 2, 0.0)];
        let c = tree_covariance::<f64>(3, &edges).unwrap();
        assert_eq!(c.as_matrix(), &Matrix::identity(3));
    }

    #[test]
    fn tree_covariance_errors() {
        let cyc = vec![
            TreeEdge::new(0, 1, 0.5),
            TreeEdge::new(1, 2, 0.5),
            TreeEdge::new(2, 0, 0.5),
        ];
        assert!(matches!(
            tree_covariance::<f64>(3, &cyc),
            Err(Error::CyclicEdges { .. })
        ));
        let bad = vec![TreeEdge::new(0, 1, 1.0)];
        assert!(matches!(
            tree_covariance::<f64>(2, &bad),
            Err(Error::InvalidCorrelation { .. })
        ));
    }

    #[test]
    fn chow_liu_rejects_bad_tolerance() {
        assert!(chow_liu(&golden(), 1.0).is_err());
        assert!(chow_liu(&golden(), -1.0).is_err());
    }

    #[test]
    fn disconnected_source_gives_forest() {
        let m = Matrix::<f64>::from_f64_rows(&[
            [1.0, 0.5, 0.0, 0.0],
            [0.5, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, -0.3],
            [0.0, 0.0, -0.3, 1.0],
        ])
        .unwrap();
        let t = chow_liu(&validate_corr(m).unwrap(), 1e-12).unwrap();
        assert_eq!(t.components(), &[vec![0, 1], vec![2, 3]]);
        assert_eq!(t.covariance()[(0, 2)], 0.0);
    }

    #[test]
    fn star_two_nodes_is_exact() {
        let m = Matrix::<f64>::from_f64_rows(&[[1.0, 0.3], [0.3, 1.0]]).unwrap();
        let s = validate_corr(m).unwrap();
        let t = star_tree(&s, 0).unwrap();
        assert_eq!(t.covariance().as_matrix(), s.as_matrix());
    }

    #[test]
    fn golden_star_center_one() {
        let s = golden();
        let t = star_tree(&s, 0).unwrap();
        assert_abs_diff_eq!(t.covariance()[(1, 2)], 0.54, epsilon = 1e-15);
        // conditional covariance of the leaves given the center is diagonal
        let c = t.covariance();
        for i in 1..5 {
            for j in 1..5 {
                if i != j {
                    let schur = c[(i, j)] - c[(i, 0)] * c[(0, j)] / c[(0, 0)];
                    assert!(schur.abs() < 1e-12);
                }
            }
        }
        assert!(matches!(star_tree(&s, 5), Err(Error::InvalidCenter { .. })));
    }

    #[test]
    fn best_star_identity_picks_lowest() {
        let (c, t) = best_star(&CorrMatrix::<f64>::identity(4)).unwrap();
        assert_eq!(c, 0);
        assert_eq!(t.covariance().as_matrix(), &Matrix::identity(4));
    }

    #[test]
    fn best_star_golden_matches_direct_search() {
        let s = golden();
        let kls: Vec<f64> = (0..5)
            .map(|c| kl_gauss(&s, star_tree(&s, c).unwrap().covariance()).unwrap())
            .collect();
        let argmin = (0..5)
            .min_by(|&a, &b| kls[a].partial_cmp(&kls[b]).unwrap())
            .unwrap();
        let (c, _) = best_star(&s).unwrap();
        assert_eq!(c, argmin);
    }

    #[test]
    fn best_star_finds_realizable_star() {
        // star covariance with center 2 is its own best star, at zero KL
        let edges = vec![
            TreeEdge::new(2, 0, 0.7),
            TreeEdge::new(2, 1, -0.4),
            TreeEdge::new(2, 3, 0.5),
        ];
        let s = tree_covariance::<f64>(4, &edges).unwrap();
        let (c, t) = best_star(&s).unwrap();
        assert_eq!(c, 2);
        assert!(kl_gauss(&s, t.covariance()).unwrap() < 1e-14);
    }

    #[test]
    fn non_unit_variances_preserved() {
        let m = Matrix::<f64>::from_f64_rows(&[[4.0, 1.0, 0.5], [1.0, 1.0, 0.2], [0.5, 0.2, 2.0]])
            .unwrap();
        let s = SpdMatrix::new(m.clone()).unwrap();
        let t = chow_liu(&s, 1e-12).unwrap();
        for e in t.edges() {
            assert_abs_diff_eq!(t.covariance()[(e.u, e.v)], m[(e.u, e.v)], epsilon = 1e-14);
        }
        assert_eq!(t.covariance().diag(), m.diag());
    }
}
