//! Vertex orderings under which the inverse Cholesky factor of a tree
//! covariance keeps the tree's sparsity, the per-stage linear transform built
//! from it, and the factor-graph view of that transform.

use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::symcore::{
    cholesky_lower, cholesky_upper, inverse_symmetric_sqrt, symmetric_sqrt, upper_inverse,
    LowerTriangular, Permutation,
};
use crate::treemodel::{DisjointSets, TreeModel};

/// Entries with magnitude at or below this count as structural zeros.
pub const SPARSITY_TOL: f64 = 1e-10;

/// How a stage's tree covariance is factored into `C C^T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FactorizationKind {
    /// Lower Cholesky in a parent-first ordering; `Q = C^-1` keeps the tree
    /// sparsity.
    LowerCholeskyOrdered,
    /// Upper Cholesky in natural order; `Q` is generally dense.
    UpperCholesky,
    /// Symmetric square root from the eigendecomposition.
    SymmetricSqrt,
}

impl FactorizationKind {
    pub const ALL: [FactorizationKind; 3] = [
        FactorizationKind::LowerCholeskyOrdered,
        FactorizationKind::UpperCholesky,
        FactorizationKind::SymmetricSqrt,
    ];

    /// Short name used on the command line and in CSV output.
    pub fn name(self) -> &'static str {
        match self {
            FactorizationKind::LowerCholeskyOrdered => "chol-ll",
            FactorizationKind::UpperCholesky => "chol-uu",
            FactorizationKind::SymmetricSqrt => "sym-sqrt",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for FactorizationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parent-first ordering of a tree or forest. Each component is rooted at its
/// lowest label and walked in depth-first preorder with children visited in
/// ascending order; components follow the order of their roots.
pub fn connected_ordering<T: Scalar>(tree: &TreeModel<T>) -> Permutation {
    let adj = tree.adjacency();
    let n = tree.n();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut stack = Vec::new();
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        stack.push(root);
        while let Some(u) = stack.pop() {
            order.push(u);
            for &v in adj[u].iter().rev() {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    Permutation::from_order(order).expect("traversal visits every node once")
}

/// Parent of every node under a parent-first traversal (`None` for roots).
pub fn tree_parents<T: Scalar>(tree: &TreeModel<T>, ordering: &Permutation) -> Vec<Option<usize>> {
    let adj = tree.adjacency();
    let mut parent = vec![None; tree.n()];
    for &u in ordering.order() {
        for &v in &adj[u] {
            if ordering.position(v) < ordering.position(u) {
                parent[u] = Some(v);
            }
        }
    }
    parent
}

#[derive(Clone, Debug)]
pub enum StageFactor<T> {
    /// `L_i`, in the permuted order.
    Lower(LowerTriangular<T>),
    Upper(Matrix<T>),
    SymmetricSqrt(Matrix<T>),
}

impl<T: Scalar> StageFactor<T> {
    pub fn as_matrix(&self) -> &Matrix<T> {
        match self {
            StageFactor::Lower(l) => l.as_matrix(),
            StageFactor::Upper(m) | StageFactor::SymmetricSqrt(m) => m,
        }
    }
}

/// One cascade stage: the tree, its ordering, the factor, the transform
/// `C = P^-1 L P^-T` and the inverse `Q = C^-1`.
#[derive(Clone, Debug)]
pub struct StageTransform<T> {
    pub stage: usize,
    pub kind: FactorizationKind,
    pub permutation: Permutation,
    pub factor: StageFactor<T>,
    pub transform: Matrix<T>,
    pub inverse: Matrix<T>,
    pub tree: TreeModel<T>,
}

impl<T: Scalar> StageTransform<T> {
    pub fn n(&self) -> usize {
        self.tree.n()
    }

    pub fn lower_factor(&self) -> Option<&LowerTriangular<T>> {
        match &self.factor {
            StageFactor::Lower(l) => Some(l),
            _ => None,
        }
    }

    /// `P Q P^T`, the inverse factor seen in the stage's own ordering.
    pub fn permuted_inverse(&self) -> Matrix<T> {
        self.permutation
            .apply(&self.inverse)
            .expect("permutation matches stage dimension")
    }
}

/// Stage transform with the ordered lower Cholesky factorization.
pub fn stage_transform<T: Scalar>(tree: TreeModel<T>, stage: usize) -> Result<StageTransform<T>> {
    build_stage(tree, stage, FactorizationKind::LowerCholeskyOrdered)
}

/// Stage transform for any factorization kind.
pub fn build_stage<T: Scalar>(
    tree: TreeModel<T>,
    stage: usize,
    kind: FactorizationKind,
) -> Result<StageTransform<T>> {
    let cov = tree.covariance().as_matrix();
    let n = tree.n();
    let (permutation, factor, transform, inverse) = match kind {
        FactorizationKind::LowerCholeskyOrdered => {
            let p = connected_ordering(&tree);
            return stage_transform_with_ordering(tree, p, stage);
        }
        FactorizationKind::UpperCholesky => {
            let u = cholesky_upper(cov)?;
            let q = upper_inverse(&u);
            (
                Permutation::identity(n),
                StageFactor::Upper(u.clone()),
                u,
                q,
            )
        }
        FactorizationKind::SymmetricSqrt => {
            let s = symmetric_sqrt(cov)?;
            let q = inverse_symmetric_sqrt(cov)?;
            (
                Permutation::identity(n),
                StageFactor::SymmetricSqrt(s.clone()),
                s,
                q,
            )
        }
    };
    Ok(StageTransform {
        stage,
        kind,
        permutation,
        factor,
        transform,
        inverse,
        tree,
    })
}

/// Ordered lower-Cholesky stage under a caller-supplied ordering.
pub fn stage_transform_with_ordering<T: Scalar>(
    tree: TreeModel<T>,
    ordering: Permutation,
    stage: usize,
) -> Result<StageTransform<T>> {
    let cov = tree.covariance().as_matrix();
    let l = cholesky_lower(&ordering.apply(cov)?)?;
    let transform = ordering.unapply(l.as_matrix())?;
    let inverse = ordering.unapply(l.inverse().as_matrix())?;
    Ok(StageTransform {
        stage,
        kind: FactorizationKind::LowerCholeskyOrdered,
        permutation: ordering,
        factor: StageFactor::Lower(l),
        transform,
        inverse,
        tree,
    })
}

/// True when every non-root node comes after one of its tree neighbours and
/// each component has a single root.
pub fn is_parent_first<T: Scalar>(tree: &TreeModel<T>, ordering: &Permutation) -> bool {
    if ordering.len() != tree.n() {
        return false;
    }
    let roots = tree_parents(tree, ordering)
        .iter()
        .filter(|p| p.is_none())
        .count();
    roots == tree.components().len()
}

/// A factor producing residual `Z^k = sum_j q_kj X^j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Factor<T> {
    pub output: usize,
    /// `(j, q_kj)` for every nonzero coefficient, ascending in `j`.
    pub terms: Vec<(usize, T)>,
}

/// Bipartite factor graph of one stage: variable nodes, one factor per
/// residual, and one edge per nonzero coefficient of `Q`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorGraphDoc<T> {
    pub stage: usize,
    pub variables: Vec<String>,
    pub factor_labels: Vec<String>,
    pub factors: Vec<Factor<T>>,
}

/// Default labels: stage 1 acts on `X1..Xn`, stage `i > 1` on the residuals
/// of stage `i - 1`.
pub fn default_stage_labels(stage: usize, n: usize) -> (Vec<String>, Vec<String>) {
    let vars = (1..=n)
        .map(|k| {
            if stage <= 1 {
                format!("X{k}")
            } else {
                format!("Z{}_{k}", stage - 1)
            }
        })
        .collect();
    let outs = (1..=n).map(|k| format!("Z{stage}_{k}")).collect();
    (vars, outs)
}

pub fn to_factor_graph<T: Scalar>(
    st: &StageTransform<T>,
    variables: &[String],
    factor_labels: &[String],
) -> Result<FactorGraphDoc<T>> {
    let n = st.n();
    for labels in [variables, factor_labels] {
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: labels.len(),
            });
        }
    }
    let tol = T::tol(SPARSITY_TOL);
    let factors = (0..n)
        .map(|k| Factor {
            output: k,
            terms: (0..n)
                .filter_map(|j| {
                    let q = st.inverse[(k, j)];
                    (q.abs() > tol).then_some((j, q))
                })
                .collect(),
        })
        .collect();
    Ok(FactorGraphDoc {
        stage: st.stage,
        variables: variables.to_vec(),
        factor_labels: factor_labels.to_vec(),
        factors,
    })
}

impl<T: Scalar> FactorGraphDoc<T> {
    pub fn with_default_labels(st: &StageTransform<T>) -> Self {
        let (vars, outs) = default_stage_labels(st.stage, st.n());
        to_factor_graph(st, &vars, &outs).expect("labels sized to the stage")
    }

    /// Factor-to-variable edges, one per nonzero coefficient.
    pub fn edge_count(&self) -> usize {
        self.factors.iter().map(|f| f.terms.len()).sum()
    }

    /// Edges coupling a factor to a variable other than its own, i.e. the
    /// off-diagonal nonzeros of `Q`.
    pub fn coupling_edge_count(&self) -> usize {
        self.factors
            .iter()
            .map(|f| f.terms.iter().filter(|(j, _)| *j != f.output).count())
            .sum()
    }

    pub fn is_acyclic(&self) -> bool {
        let n = self.variables.len();
        let mut dsu = DisjointSets::new(n + self.factors.len());
        for (fi, f) in self.factors.iter().enumerate() {
            for &(j, _) in &f.terms {
                if !dsu.union(n + fi, j) {
                    return false;
                }
            }
        }
        true
    }

    /// Graphviz rendering: variables as circles, factors as boxes labeled
    /// with their coefficients to four significant digits.
    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "graph stage_{} {{", self.stage);
        let _ = writeln!(out, "  rankdir=LR;");
        let _ = writeln!(out, "  node [shape=circle];");
        for (j, name) in self.variables.iter().enumerate() {
            let _ = writeln!(out, "  v{j} [label=\"{name}\"];");
        }
        let _ = writeln!(out, "  node [shape=box];");
        for (k, f) in self.factors.iter().enumerate() {
            let coeffs: Vec<String> = f.terms.iter().map(|&(_, q)| format_sig4(q)).collect();
            let _ = writeln!(
                out,
                "  f{k} [label=\"{}: {}\"];",
                self.factor_labels[f.output],
                coeffs.join(", ")
            );
        }
        for (k, f) in self.factors.iter().enumerate() {
            for &(j, q) in &f.terms {
                let _ = writeln!(out, "  f{k} -- v{j} [label=\"{}\"];", format_sig4(q));
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Formats with four significant digits.
pub fn format_sig4<T: Scalar>(x: T) -> String {
    let x = x.as_f64();
    if x == 0.0 {
        return "0".to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&exp) {
        return format!("{x:.3e}");
    }
    let rounded: f64 = format!("{:.3e}", x).parse().unwrap_or(x);
    let exp = rounded.abs().log10().floor() as i32;
    let decimals = (3 - exp).max(0) as usize;
    format!("{rounded:.decimals$}")
}
