//! Cascade engine: repeatedly approximates the residual correlation by a
//! tree, whitens it with the tree's factor, and assembles the model
//! `Sigma_M = C_1 ... C_l (C_1 ... C_l)^T` from the stage transforms.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error as ThisError;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::ordering::{build_stage, FactorGraphDoc, FactorizationKind, StageTransform};
use crate::scalar::Scalar;
use crate::symcore::{kl_gauss, CorrMatrix, SpdMatrix};
use crate::treemodel::{best_star, chow_liu, star_tree, TreeModel, DEFAULT_ZERO_TOL};

/// Below this KL (nats) the residual is numerically the identity and the
/// cascade stops.
pub const CONVERGED_KL: f64 = 1e-14;

/// Tree chosen at each stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TreePolicy {
    ChowLiu,
    /// Star centred on node `i` at stage `i` (wrapping modulo `n`).
    StarFixed,
    /// Best of the `n` stars at every stage.
    StarSweep,
}

impl TreePolicy {
    pub const ALL: [TreePolicy; 3] = [
        TreePolicy::ChowLiu,
        TreePolicy::StarFixed,
        TreePolicy::StarSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TreePolicy::ChowLiu => "chow-liu",
            TreePolicy::StarFixed => "star-fixed",
            TreePolicy::StarSweep => "star-sweep",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    fn tree_for<T: Scalar>(
        self,
        delta: &SpdMatrix<T>,
        stage: usize,
        zero_tol: T,
    ) -> Result<TreeModel<T>> {
        match self {
            TreePolicy::ChowLiu => chow_liu(delta, zero_tol),
            TreePolicy::StarFixed => star_tree(delta, (stage - 1) % delta.n()),
            TreePolicy::StarSweep => best_star(delta).map(|(_, t)| t),
        }
    }
}

impl fmt::Display for TreePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Residual correlation after `stage` stages.
#[derive(Clone, Debug)]
pub struct CamState<T> {
    pub stage: usize,
    pub delta: SpdMatrix<T>,
    /// `D(N(0, delta) || N(0, I))` in nats.
    pub kl_to_identity: T,
}

impl<T: Scalar> CamState<T> {
    pub fn initial(source: &SpdMatrix<T>) -> Result<Self> {
        Ok(Self {
            stage: 0,
            kl_to_identity: kl_to_identity(source)?,
            delta: source.clone(),
        })
    }

    /// `max_k |delta[k][k] - 1|`.
    pub fn max_diag_deviation(&self) -> T {
        self.delta
            .diag()
            .into_iter()
            .fold(T::zero(), |acc, d| acc.max((d - T::one()).abs()))
    }
}

fn kl_to_identity<T: Scalar>(m: &Matrix<T>) -> Result<T> {
    kl_gauss(m, &Matrix::identity(m.nrows()))
}

/// `Delta_i = Q Delta_{i-1} Q^T`, symmetrized.
pub fn cam_update<T: Scalar>(
    previous: &CamState<T>,
    stage: &StageTransform<T>,
) -> Result<CamState<T>> {
    if stage.n() != previous.delta.n() {
        return Err(Error::DimensionMismatch {
            expected: previous.delta.n(),
            found: stage.n(),
        });
    }
    let delta = SpdMatrix::from_symmetrizing(&stage.inverse.congruence(&previous.delta))?;
    Ok(CamState {
        stage: stage.stage,
        kl_to_identity: kl_to_identity(&delta)?,
        delta,
    })
}

#[derive(Clone, Debug)]
pub struct CascadeOptions<T> {
    /// Upper bound `l` on the number of stages.
    pub max_stages: usize,
    /// Stop once `D(Delta_i || I) <= threshold`.
    pub kl_threshold: Option<T>,
    pub zero_tol: T,
    /// Keep every intermediate residual matrix, not just the last one.
    pub record_deltas: bool,
}

impl<T: Scalar> CascadeOptions<T> {
    pub fn stages(max_stages: usize) -> Self {
        Self {
            max_stages,
            kl_threshold: None,
            zero_tol: T::lit(DEFAULT_ZERO_TOL),
            record_deltas: false,
        }
    }

    pub fn with_threshold(mut self, threshold: T) -> Self {
        self.kl_threshold = Some(threshold);
        self
    }

    pub fn recording_deltas(mut self) -> Self {
        self.record_deltas = true;
        self
    }
}

/// Per-stage residual statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageSummary<T> {
    pub stage: usize,
    pub kl: T,
    pub trace: T,
    pub max_diag_deviation: T,
}

#[derive(Clone, Debug)]
pub struct CascadeModel<T> {
    pub source: SpdMatrix<T>,
    pub policy: TreePolicy,
    pub factorization: FactorizationKind,
    /// Stage 1 first; stage 1 is applied last when generating samples.
    pub stages: Vec<StageTransform<T>>,
    /// `C_M = C_1 C_2 ... C_l`.
    pub composite: Matrix<T>,
    /// `Sigma_M = C_M C_M^T`.
    pub model_cov: Matrix<T>,
    /// `(i, D(Sigma || Sigma_M_i))` for `i = 0..=l`, evaluated as
    /// `D(Delta_i || I)`.
    pub kl_trace: Vec<(usize, T)>,
    pub summaries: Vec<StageSummary<T>>,
    pub final_state: CamState<T>,
    /// `Delta_0..Delta_l` when requested through the options.
    pub deltas: Vec<SpdMatrix<T>>,
}

impl<T: Scalar> CascadeModel<T> {
    fn start(
        source: &SpdMatrix<T>,
        policy: TreePolicy,
        factorization: FactorizationKind,
        record: bool,
    ) -> Result<Self> {
        let n = source.n();
        let state = CamState::initial(source)?;
        Ok(Self {
            source: source.clone(),
            policy,
            factorization,
            stages: Vec::new(),
            composite: Matrix::identity(n),
            model_cov: Matrix::identity(n),
            kl_trace: vec![(0, state.kl_to_identity)],
            summaries: vec![summarize(&state)],
            deltas: if record {
                vec![source.clone()]
            } else {
                Vec::new()
            },
            final_state: state,
        })
    }

    fn push(&mut self, stage: StageTransform<T>, state: CamState<T>, record: bool) {
        self.composite = self.composite.matmul(&stage.transform);
        self.model_cov = self.composite.gram().symmetrized();
        self.kl_trace.push((state.stage, state.kl_to_identity));
        self.summaries.push(summarize(&state));
        if record {
            self.deltas.push(state.delta.clone());
        }
        self.stages.push(stage);
        self.final_state = state;
    }

    pub fn n(&self) -> usize {
        self.source.n()
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn final_kl(&self) -> T {
        self.kl_trace.last().expect("trace holds stage 0").1
    }

    pub fn kl_values(&self) -> Vec<T> {
        self.kl_trace.iter().map(|&(_, kl)| kl).collect()
    }

    /// `C_1 ... C_i`.
    pub fn composite_at(&self, i: usize) -> Matrix<T> {
        self.stages[..i]
            .iter()
            .fold(Matrix::identity(self.n()), |acc, st| {
                acc.matmul(&st.transform)
            })
    }

    /// `Sigma_M_i`, the model covariance after `i` stages.
    pub fn model_covariance_at(&self, i: usize) -> Matrix<T> {
        self.composite_at(i).gram().symmetrized()
    }

    pub fn factor_graphs(&self) -> Vec<FactorGraphDoc<T>> {
        self.stages
            .iter()
            .map(FactorGraphDoc::with_default_labels)
            .collect()
    }
}

fn summarize<T: Scalar>(state: &CamState<T>) -> StageSummary<T> {
    StageSummary {
        stage: state.stage,
        kl: state.kl_to_identity,
        trace: state.delta.trace(),
        max_diag_deviation: state.max_diag_deviation(),
    }
}

/// A numerical failure part-way through a cascade, with the stages completed
/// before it.
#[derive(Debug, ThisError)]
#[error("cascade aborted at stage {stage}: {source}")]
pub struct CascadeFailure<T: Scalar> {
    pub stage: usize,
    #[source]
    pub source: Error,
    pub partial: Option<Box<CascadeModel<T>>>,
}

impl<T: Scalar> CascadeFailure<T> {
    fn at(stage: usize, source: Error, partial: Option<CascadeModel<T>>) -> Self {
        Self {
            stage,
            source,
            partial: partial.map(Box::new),
        }
    }
}

/// Greedy cascade: `Delta_0 = Sigma`; at each stage pick a tree for
/// `Delta_{i-1}` under `policy`, factor it with `factorization`, and whiten.
/// Stops after `max_stages`, when the optional KL threshold is met, or when
/// the residual is numerically the identity.
pub fn run_cascade<T: Scalar>(
    source: &SpdMatrix<T>,
    policy: TreePolicy,
    factorization: FactorizationKind,
    options: &CascadeOptions<T>,
) -> std::result::Result<CascadeModel<T>, CascadeFailure<T>> {
    if options.max_stages == 0 {
        return Err(CascadeFailure::at(
            0,
            Error::InvalidArgument("at least one stage is required".into()),
            None,
        ));
    }
    if let Some(t) = options.kl_threshold {
        if !(t >= T::zero()) {
            return Err(CascadeFailure::at(
                0,
                Error::InvalidArgument(format!("KL threshold must be nonnegative, got {t}")),
                None,
            ));
        }
    }
    let record = options.record_deltas;
    let mut model = CascadeModel::start(source, policy, factorization, record)
        .map_err(|e| CascadeFailure::at(0, e, None))?;
    let converged = T::tol(CONVERGED_KL);

    for i in 1..=options.max_stages {
        if model.final_state.kl_to_identity <= converged {
            break;
        }
        let step = policy
            .tree_for(&model.final_state.delta, i, options.zero_tol)
            .and_then(|tree| build_stage(tree, i, factorization))
            .and_then(|stage| cam_update(&model.final_state, &stage).map(|s| (stage, s)));
        let (stage, state) = match step {
            Ok(v) => v,
            Err(e) => return Err(CascadeFailure::at(i, e, Some(model))),
        };
        let kl = state.kl_to_identity;
        model.push(stage, state, record);
        if options.kl_threshold.is_some_and(|t| kl <= t) {
            break;
        }
    }
    Ok(model)
}

/// Star construction that reaches the source exactly: at stage `i` every
/// remaining node is attached to node `i`, which decouples it from the rest.
/// At most `n - 1` stages.
pub fn star_exact_cascade<T: Scalar>(
    source: &SpdMatrix<T>,
) -> std::result::Result<CascadeModel<T>, CascadeFailure<T>> {
    let stages = source.n().saturating_sub(1).max(1);
    run_cascade(
        source,
        TreePolicy::StarFixed,
        FactorizationKind::LowerCholeskyOrdered,
        &CascadeOptions::stages(stages),
    )
}

/// KL trace of one policy/factorization combination.
#[derive(Clone, Debug)]
pub struct PolicyTrace<T> {
    pub policy: TreePolicy,
    pub factorization: FactorizationKind,
    /// The trace, or the error that stopped the run (with the partial trace).
    pub trace: Vec<(usize, T)>,
    pub error: Option<Error>,
}

/// Runs every policy against every factorization on the same source. Results
/// are ordered by (policy, factorization) regardless of completion order.
pub fn compare_policies<T: Scalar>(
    source: &CorrMatrix<T>,
    max_stages: usize,
) -> Vec<PolicyTrace<T>> {
    let combos: Vec<(TreePolicy, FactorizationKind)> = TreePolicy::ALL
        .into_iter()
        .flat_map(|p| FactorizationKind::ALL.into_iter().map(move |f| (p, f)))
        .collect();
    let options = CascadeOptions::stages(max_stages);
    combos
        .into_par_iter()
        .map(
            |(policy, factorization)| match run_cascade(source, policy, factorization, &options) {
                Ok(m) => PolicyTrace {
                    policy,
                    factorization,
                    trace: m.kl_trace,
                    error: None,
                },
                Err(f) => PolicyTrace {
                    policy,
                    factorization,
                    trace: f.partial.map(|m| m.kl_trace).unwrap_or_default(),
                    error: Some(f.source),
                },
            },
        )
        .collect()
}
