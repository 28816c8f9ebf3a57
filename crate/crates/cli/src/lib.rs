//! Subcommands of the `cascade` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use cascade_core::iogen::{self, RNG_ALGORITHM};
use cascade_core::{
    compare_policies, generate_synthetic, read_matrix, run_cascade, CascadeModel, CascadeOptions,
    CorrMatrix, FactorGraphDoc, FactorizationKind, SyntheticSpec, TreePolicy,
};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

/// Above this node count each stage gets noticeably slow (cubic work).
pub const LARGE_N_WARNING: usize = 2000;

#[derive(Debug, Parser)]
#[command(
    name = "cascade",
    version,
    about = "Cascade-of-trees approximation of Gaussian correlation matrices"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one cascade and write its trace, model and optional stage artifacts.
    Approximate(ApproximateArgs),
    /// Run every tree policy against every factorization on one source.
    Compare(CompareArgs),
    /// Write a seeded synthetic correlation matrix.
    Generate(GenerateArgs),
    /// Check a matrix file and report on its invariants.
    Validate(ValidateArgs),
}

/// `n,density,seed`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticArg(pub SyntheticSpec);

impl FromStr for SyntheticArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [n, density, seed] = parts.as_slice() else {
            return Err(format!("expected n,density,seed but got {s:?}"));
        };
        let n = n.parse().map_err(|_| format!("bad node count {n:?}"))?;
        let density = density
            .parse()
            .map_err(|_| format!("bad density {density:?}"))?;
        let seed = seed.parse().map_err(|_| format!("bad seed {seed:?}"))?;
        SyntheticSpec::new(n, density, seed)
            .map(SyntheticArg)
            .map_err(|e| e.to_string())
    }
}

fn parse_policy(s: &str) -> std::result::Result<TreePolicy, String> {
    TreePolicy::from_name(s)
        .ok_or_else(|| format!("unknown policy {s:?} (chow-liu, star-fixed, star-sweep)"))
}

fn parse_factorization(s: &str) -> std::result::Result<FactorizationKind, String> {
    FactorizationKind::from_name(s)
        .ok_or_else(|| format!("unknown factorization {s:?} (chol-ll, chol-uu, sym-sqrt)"))
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct InputSource {
    /// Headerless CSV correlation matrix.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Synthetic instance as n,density,seed.
    #[arg(long, value_name = "N,DENSITY,SEED")]
    pub synthetic: Option<SyntheticArg>,
}

#[derive(Debug, Clone, Args)]
pub struct ApproximateArgs {
    #[command(flatten)]
    pub source: InputSource,
    /// Rescale a covariance input to unit diagonal.
    #[arg(long)]
    pub normalize: bool,
    #[arg(long, default_value = "chow-liu", value_parser = parse_policy)]
    pub policy: TreePolicy,
    #[arg(long, default_value = "chol-ll", value_parser = parse_factorization)]
    pub factorization: FactorizationKind,
    #[arg(long, default_value_t = 3)]
    pub stages: usize,
    /// Stop once the residual KL divergence (nats) drops to this value.
    #[arg(long)]
    pub kl_threshold: Option<f64>,
    #[arg(long)]
    pub emit_dot: bool,
    #[arg(long)]
    pub emit_sparsity: bool,
    /// Write L_i, P_i, Q_i and the residual Delta_i of every stage.
    #[arg(long)]
    pub emit_stage_matrices: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub source: InputSource,
    #[arg(long)]
    pub normalize: bool,
    #[arg(long, default_value_t = 3)]
    pub stages: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long, value_name = "N,DENSITY,SEED")]
    pub synthetic: SyntheticArg,
    /// Output matrix file; metadata goes to `<out>.meta.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub normalize: bool,
    /// Treat the file as a residual matrix and also check trace = n and unit
    /// diagonal.
    #[arg(long)]
    pub cam: bool,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Approximate(a) => cmd_approximate(&a).map(|_| ()),
        Command::Compare(a) => cmd_compare(&a),
        Command::Generate(a) => cmd_generate(&a),
        Command::Validate(a) => cmd_validate(&a).map(|_| ()),
    }
}

fn load_source(src: &InputSource, normalize: bool) -> Result<(CorrMatrix<f64>, serde_json::Value)> {
    let (m, meta) = match (&src.input, &src.synthetic) {
        (Some(path), None) => {
            let m = read_matrix::<f64>(path, normalize).context("iogen")?;
            (
                m,
                json!({ "input": path.display().to_string(), "normalize": normalize }),
            )
        }
        (None, Some(SyntheticArg(spec))) => {
            let m = generate_synthetic::<f64>(spec).context("iogen")?;
            (m, synthetic_meta(spec))
        }
        _ => bail!("exactly one of --input or --synthetic is required"),
    };
    if m.n() > LARGE_N_WARNING {
        eprintln!(
            "warning: n = {} exceeds {LARGE_N_WARNING}; each stage costs O(n^3)",
            m.n()
        );
    }
    Ok((m, meta))
}

fn synthetic_meta(spec: &SyntheticSpec) -> serde_json::Value {
    json!({
        "synthetic": { "n": spec.n, "density": spec.density, "seed": spec.seed },
        "rng": RNG_ALGORITHM,
        "generator_version": env!("CARGO_PKG_VERSION"),
    })
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))
}

/// Runs the cascade and writes its artifacts into `args.out`.
pub fn cmd_approximate(args: &ApproximateArgs) -> Result<CascadeModel<f64>> {
    if args.stages == 0 {
        bail!("--stages must be at least 1");
    }
    let (source, source_meta) = load_source(&args.source, args.normalize)?;
    create_dir(&args.out)?;

    let mut options = CascadeOptions::stages(args.stages);
    if let Some(t) = args.kl_threshold {
        options = options.with_threshold(t);
    }
    if args.emit_stage_matrices {
        options = options.recording_deltas();
    }
    let model = match run_cascade(&source, args.policy, args.factorization, &options) {
        Ok(m) => m,
        Err(failure) => {
            if let Some(partial) = &failure.partial {
                iogen::write_trace(&partial.kl_trace, args.out.join("kl_trace.csv"))
                    .context("iogen")?;
            }
            return Err(anyhow::Error::new(failure).context("cascade"));
        }
    };

    let out = &args.out;
    iogen::write_trace(&model.kl_trace, out.join("kl_trace.csv")).context("iogen")?;
    iogen::write_matrix(&model.model_cov, out.join("model_cov.csv")).context("iogen")?;

    if args.emit_stage_matrices {
        for st in &model.stages {
            let i = st.stage;
            iogen::write_matrix(st.factor.as_matrix(), out.join(format!("L_{i}.csv")))
                .context("iogen")?;
            iogen::write_matrix(
                &st.permutation.to_matrix::<f64>(),
                out.join(format!("P_{i}.csv")),
            )
            .context("iogen")?;
            iogen::write_matrix(&st.inverse, out.join(format!("Q_{i}.csv"))).context("iogen")?;
            iogen::write_matrix(&model.deltas[i], out.join(format!("Delta_{i}.csv")))
                .context("iogen")?;
        }
    }
    if args.emit_dot {
        for fg in model.factor_graphs() {
            fs::write(out.join(format!("stage_{}.dot", fg.stage)), fg.to_dot())
                .with_context(|| format!("ordering: cannot write stage_{}.dot", fg.stage))?;
        }
    }
    if args.emit_sparsity {
        iogen::sparsity_dump(&model.source, out.join("sparsity_sigma.csv")).context("iogen")?;
        for st in &model.stages {
            let i = st.stage;
            iogen::sparsity_dump(
                &model.model_covariance_at(i),
                out.join(format!("sparsity_model_{i}.csv")),
            )
            .context("iogen")?;
            iogen::sparsity_dump(
                st.tree.covariance(),
                out.join(format!("sparsity_tree_{i}.csv")),
            )
            .context("iogen")?;
        }
    }

    let stage1 = model.kl_trace.get(1).map(|&(_, kl)| kl);
    let reductions: Vec<serde_json::Value> = model
        .kl_trace
        .iter()
        .skip(2)
        .map(|&(i, kl)| {
            let pct = stage1.filter(|&s| s > 0.0).map(|s| 100.0 * (1.0 - kl / s));
            json!({ "stage": i, "percent_below_stage1": pct })
        })
        .collect();
    let info = json!({
        "source": source_meta,
        "n": model.n(),
        "policy": args.policy.name(),
        "factorization": args.factorization.name(),
        "max_stages": args.stages,
        "kl_threshold": args.kl_threshold,
        "stages_run": model.stage_count(),
        "final_kl_nats": model.final_kl(),
        "kl_reduction_vs_stage1": reductions,
        "factor_graph_coupling_edges": model
            .factor_graphs()
            .iter()
            .map(FactorGraphDoc::coupling_edge_count)
            .sum::<usize>(),
    });
    fs::write(
        out.join("run_info.json"),
        serde_json::to_string_pretty(&info)? + "\n",
    )
    .context("iogen: cannot write run_info.json")?;

    println!(
        "stages={} final_kl_nats={}",
        model.stage_count(),
        model.final_kl()
    );
    Ok(model)
}

/// Writes `comparison.csv` with columns `policy,factorization,stage,kl_nats`.
pub fn cmd_compare(args: &CompareArgs) -> Result<()> {
    if args.stages == 0 {
        bail!("--stages must be at least 1");
    }
    let (source, _) = load_source(&args.source, args.normalize)?;
    create_dir(&args.out)?;
    let traces = compare_policies(&source, args.stages);
    let mut csv = String::from("policy,factorization,stage,kl_nats\n");
    for t in &traces {
        for &(stage, kl) in &t.trace {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                t.policy.name(),
                t.factorization.name(),
                stage,
                iogen::format_real(kl)
            ));
        }
        if let Some(e) = &t.error {
            eprintln!(
                "warning: {} / {} stopped early: {e}",
                t.policy, t.factorization
            );
        }
    }
    let path = args.out.join("comparison.csv");
    fs::write(&path, csv).with_context(|| format!("iogen: cannot write {}", path.display()))?;
    println!("wrote {} combinations to {}", traces.len(), path.display());
    Ok(())
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let spec = args.synthetic.0;
    let m = generate_synthetic::<f64>(&spec).context("iogen")?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    iogen::write_matrix(&m, &args.out).context("iogen")?;
    let mut meta_path = args.out.clone().into_os_string();
    meta_path.push(".meta.json");
    fs::write(
        &meta_path,
        serde_json::to_string_pretty(&synthetic_meta(&spec))? + "\n",
    )
    .context("iogen: cannot write metadata")?;
    println!("wrote {}x{} matrix to {}", m.n(), m.n(), args.out.display());
    Ok(())
}

/// Outcome of `validate`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub n: usize,
    pub trace: f64,
    pub max_diag_deviation: f64,
    pub kl_to_identity: f64,
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<ValidationReport> {
    let raw = iogen::read_raw_matrix::<f64>(&args.input).context("iogen")?;
    let spd = if args.cam {
        cascade_core::SpdMatrix::new(raw).context("symcore")?
    } else if args.normalize {
        cascade_core::SpdMatrix::new(raw)
            .context("symcore")?
            .normalized()
            .into_spd()
    } else {
        cascade_core::validate_corr(raw)
            .context("symcore")?
            .into_spd()
    };
    let n = spd.n();
    let trace = spd.trace();
    let max_diag_deviation = spd
        .diag()
        .iter()
        .fold(0.0f64, |a, d| a.max((d - 1.0).abs()));
    let kl_to_identity =
        cascade_core::kl_gauss(&spd, &cascade_core::Matrix::identity(n)).context("symcore")?;
    let report = ValidationReport {
        n,
        trace,
        max_diag_deviation,
        kl_to_identity,
    };
    println!("n={n}");
    println!("symmetric=ok positive_definite=ok");
    println!("trace={trace}");
    println!("max_diag_deviation={max_diag_deviation:e}");
    println!("kl_to_identity_nats={kl_to_identity}");
    if args.cam {
        let trace_ok = (trace - n as f64).abs() <= 1e-8;
        let diag_ok = max_diag_deviation <= 1e-8;
        println!("trace_equals_n={}", if trace_ok { "ok" } else { "FAIL" });
        println!("unit_diagonal={}", if diag_ok { "ok" } else { "FAIL" });
        if !(trace_ok && diag_ok) {
            bail!("validate: residual matrix violates the trace or unit-diagonal invariant");
        }
    }
    Ok(report)
}
