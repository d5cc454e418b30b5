//! Subcommand implementations.

use crate::manifest::Manifest;
use crate::{CliError, CliResult};
use cal_core::data::{gen_mixture, load_csv, save_csv, MixtureSpec};
use cal_core::loss::{PeerMode, PriorMode};
use cal_core::model::Checkpoint;
use cal_core::noise::{audit_noise, inject_noise, truncated_normal_mean, NoiseGenConfig};
use cal_core::oracle::suites;
use cal_core::pipeline::{
    evaluate, run_sieve, run_stage1, run_stage2, write_metrics_csv, RunConfig, StageResult,
};
use cal_core::sieve::Decision;
use clap::{Args, Subcommand, ValueEnum};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Subcommand)]
pub enum Command {
    /// Generate a Gaussian-mixture dataset with known Bayes-optimal labels.
    GenData(GenDataArgs),
    /// Corrupt a dataset with instance-dependent label noise.
    InjectNoise(InjectNoiseArgs),
    /// Run the two-stage training pipeline (or a single stage).
    Train(TrainArgs),
    /// Resolve a noisy dataset with a trained stage-1 model.
    Sieve(SieveArgs),
    /// Evaluate a checkpoint against every label column of a dataset.
    Eval(EvalArgs),
    /// Verify the decoupling identities and worst-case bounds.
    VerifyTheorems(VerifyArgs),
    /// Aggregate metrics files from finished runs into one comparison table.
    Report(ReportArgs),
}

pub fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::GenData(args) => gen_data(args),
        Command::InjectNoise(args) => inject_noise_cmd(args),
        Command::Train(args) => train(args),
        Command::Sieve(args) => sieve_cmd(args),
        Command::Eval(args) => eval_cmd(args),
        Command::VerifyTheorems(args) => verify_theorems(args),
        Command::Report(args) => report(args),
    }
}

fn parent_manifest_path(out: &Path, name: &str) -> PathBuf {
    match out.parent() {
        Some(dir) if dir.as_os_str().is_empty() => PathBuf::from(name),
        Some(dir) => dir.join(name),
        None => PathBuf::from(name),
    }
}

// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct GenDataArgs {
    /// Number of mixture components (classes).
    #[arg(long, default_value_t = 2)]
    classes: usize,
    /// Feature dimension.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Samples to draw.
    #[arg(long, default_value_t = 5000)]
    n: usize,
    /// Radius of the ring the component means sit on.
    #[arg(long, default_value_t = 1.25)]
    radius: f64,
    #[arg(long)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn gen_data(args: GenDataArgs) -> CliResult<()> {
    let spec = MixtureSpec::ring(args.classes, args.dim, args.radius, args.n, args.seed);
    let ds = gen_mixture(&spec)?;
    save_csv(&ds, &args.out)?;
    Manifest::new(
        "gen-data",
        Some(args.seed),
        serde_json::json!({
            "spec": spec,
            "out": args.out,
        }),
    )
    .write(&parent_manifest_path(&args.out, "gen-data.manifest.json"))?;
    println!(
        "wrote {} samples ({} classes, dim {}) to {}",
        ds.len(),
        ds.num_classes,
        ds.dim(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct InjectNoiseArgs {
    /// Target overall noise rate in [0,1].
    #[arg(long)]
    eta: f64,
    /// Number of classes.
    #[arg(long)]
    classes: usize,
    #[arg(long)]
    seed: u64,
    /// Clean dataset CSV.
    #[arg(long, value_name = "data.csv")]
    r#in: PathBuf,
    /// Output CSV with y_tilde and q columns appended.
    #[arg(long, value_name = "noisy.csv")]
    out: PathBuf,
}

fn inject_noise_cmd(args: InjectNoiseArgs) -> CliResult<()> {
    let mut ds = load_csv(&args.r#in)?;
    if args.classes < ds.num_classes {
        return Err(CliError::Validation(format!(
            "--classes {} is below the {} classes present in the data",
            args.classes, ds.num_classes
        )));
    }
    ds.num_classes = args.classes;
    let cfg = NoiseGenConfig {
        eta: args.eta,
        num_classes: args.classes,
        feature_dim: ds.dim(),
        seed: args.seed,
    };
    let records = inject_noise(&ds.features, &ds.y_clean, &cfg)?;
    ds.y_tilde = Some(records.iter().map(|r| r.y_tilde).collect());
    ds.q = Some(records.iter().map(|r| r.q).collect());
    save_csv(&ds, &args.out)?;
    let audit = audit_noise(&records, &ds.y_clean)?;
    Manifest::new(
        "inject-noise",
        Some(args.seed),
        serde_json::json!({
            "config": cfg,
            "in": args.r#in,
            "out": args.out,
        }),
    )
    .write(&parent_manifest_path(&args.out, "inject-noise.manifest.json"))?;
    println!(
        "realized flip rate {:.4} (truncated-normal mean {:.4}); max cap violation {:.2e}",
        audit.overall_flip_rate,
        truncated_normal_mean(args.eta, 0.1, 0.0, 1.0),
        audit.max_cap_violation
    );
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageSelect {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Args)]
pub struct TrainArgs {
    /// JSON run configuration; defaults to the toy configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Rerun a previous training run from its manifest.
    #[arg(long, conflicts_with = "config")]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    stage: StageSelect,
    /// Training CSV (must carry y_tilde for noisy training).
    #[arg(long)]
    train: Option<PathBuf>,
    /// Optional held-out CSV evaluated every metrics epoch.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Master seed (overrides the config value).
    #[arg(long)]
    seed: Option<u64>,
    // LossConfig overrides, applied to both stages.
    #[arg(long)]
    eps_ce: Option<f64>,
    #[arg(long)]
    eps_reg: Option<f64>,
    /// Stage-1 regularizer weight.
    #[arg(long)]
    beta1: Option<f64>,
    /// Stage-2 regularizer weight.
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long, value_enum)]
    prior_mode: Option<PriorModeArg>,
    #[arg(long, value_enum)]
    peer_mode: Option<PeerModeArg>,
    #[arg(long)]
    cov_fraction: Option<f64>,
    /// Start stage 2 from the stage-1 weights.
    #[arg(long)]
    warm_start: bool,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum PriorModeArg {
    Plain,
    Sqrt,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum PeerModeArg {
    SampledPairs,
    ExpectedPrior,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct TrainParams {
    config: RunConfig,
    train: PathBuf,
    test: Option<PathBuf>,
    stage: String,
}

fn train(args: TrainArgs) -> CliResult<()> {
    let (mut config, train_path, test_path, stage) = if let Some(mpath) = &args.manifest {
        let manifest = Manifest::load(mpath)?;
        if manifest.command != "train" {
            return Err(CliError::Validation(format!(
                "manifest records a {:?} run, not train",
                manifest.command
            )));
        }
        let params: TrainParams = serde_json::from_value(manifest.params)?;
        let stage = match params.stage.as_str() {
            "1" => StageSelect::One,
            "2" => StageSelect::Two,
            _ => StageSelect::Both,
        };
        (params.config, params.train, params.test, stage)
    } else {
        let config = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                let cfg: RunConfig = serde_json::from_str(&text)?;
                if cfg.schema_version != 1 {
                    return Err(CliError::Validation(format!(
                        "unsupported config schema {}",
                        cfg.schema_version
                    )));
                }
                cfg
            }
            None => RunConfig::toy_default(args.seed.unwrap_or(0)),
        };
        let train_path = args.train.clone().ok_or_else(|| {
            CliError::Validation("--train is required unless --manifest is given".into())
        })?;
        (config, train_path, args.test.clone(), args.stage)
    };

    // Flag overrides, applied after config/manifest resolution.
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    for stage_cfg in [&mut config.stage1, &mut config.stage2] {
        if let Some(v) = args.eps_ce {
            stage_cfg.loss.eps_ce = v;
        }
        if let Some(v) = args.eps_reg {
            stage_cfg.loss.eps_reg = v;
        }
        if let Some(m) = args.prior_mode {
            stage_cfg.loss.prior_mode = match m {
                PriorModeArg::Plain => PriorMode::Plain,
                PriorModeArg::Sqrt => PriorMode::Sqrt,
            };
        }
        if let Some(m) = args.peer_mode {
            stage_cfg.loss.peer_mode = match m {
                PeerModeArg::SampledPairs => PeerMode::SampledPairs,
                PeerModeArg::ExpectedPrior => PeerMode::ExpectedPrior,
            };
        }
        if let Some(v) = args.cov_fraction {
            stage_cfg.loss.cov_fraction = v;
        }
    }
    if let Some(v) = args.beta1 {
        config.stage1.loss.beta = v;
    }
    if let Some(v) = args.beta2 {
        config.stage2.loss.beta = v;
    }
    if args.warm_start {
        config.warm_start_stage2 = true;
    }
    config.validate()?;

    let train_ds = load_csv(&train_path)?;
    let test_ds = test_path.as_ref().map(|p| load_csv(p)).transpose()?;

    std::fs::create_dir_all(&args.out)?;
    let stage_name = match stage {
        StageSelect::One => "1",
        StageSelect::Two => "2",
        StageSelect::Both => "both",
    };
    Manifest::new(
        "train",
        Some(config.seed),
        serde_json::to_value(TrainParams {
            config: config.clone(),
            train: train_path.clone(),
            test: test_path.clone(),
            stage: stage_name.to_string(),
        })?,
    )
    .write(&args.out.join("manifest.json"))?;

    let write_stage = |name: &str, result: &StageResult| -> CliResult<()> {
        let dir = args.out.join(name);
        std::fs::create_dir_all(&dir)?;
        write_metrics_csv(&result.metrics, &dir.join("metrics.csv"))?;
        result.checkpoint.save(&dir.join("checkpoint.json"))?;
        Ok(())
    };

    match stage {
        StageSelect::One => {
            let s1 = run_stage1(&train_ds, test_ds.as_ref(), &config)?;
            write_stage("stage1", &s1)?;
            println!("stage 1 done: {} metric rows", s1.metrics.len());
        }
        StageSelect::Two => {
            let ck_path = args.out.join("stage1").join("checkpoint.json");
            let ck = Checkpoint::load(&ck_path).map_err(|e| {
                CliError::Validation(format!(
                    "stage 2 needs a stage-1 checkpoint at {}: {e}",
                    ck_path.display()
                ))
            })?;
            let sieve = run_sieve(&ck, &train_ds, &config)?;
            write_sieve_csv(&sieve, &args.out.join("dhat.csv"))?;
            let s2 = run_stage2(&train_ds, test_ds.as_ref(), &sieve, &config, Some(&ck))?;
            write_stage("stage2", &s2)?;
            println!("stage 2 done: {} metric rows", s2.metrics.len());
        }
        StageSelect::Both => {
            let s1 = run_stage1(&train_ds, test_ds.as_ref(), &config)?;
            write_stage("stage1", &s1)?;
            let sieve = run_sieve(&s1.checkpoint, &train_ds, &config)?;
            write_sieve_csv(&sieve, &args.out.join("dhat.csv"))?;
            let (kept, relabeled, dropped) = sieve.counts();
            let s2 = run_stage2(
                &train_ds,
                test_ds.as_ref(),
                &sieve,
                &config,
                Some(&s1.checkpoint),
            )?;
            write_stage("stage2", &s2)?;
            println!(
                "pipeline done: sieve kept {kept} / relabeled {relabeled} / dropped {dropped}; \
                 {} skipped corrections",
                s2.empty_row_corrections
            );
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct SieveArgs {
    /// Stage-1 checkpoint JSON.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Noisy dataset CSV.
    #[arg(long, value_name = "noisy.csv")]
    r#in: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    lmin: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    lmax: Option<f64>,
    /// Pick l_min = l_max so this fraction of examples is kept.
    #[arg(long)]
    fraction: Option<f64>,
    /// Output CSV: id, decision, y_hat, adjusted_loss.
    #[arg(long, value_name = "dhat.csv")]
    out: PathBuf,
}

fn sieve_cmd(args: SieveArgs) -> CliResult<()> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let ds = load_csv(&args.r#in)?;
    let mut config = RunConfig::toy_default(ck.seed);
    config.sieve_fraction = args.fraction;
    if args.fraction.is_none() {
        let (lmin, lmax) = match (args.lmin, args.lmax) {
            (Some(a), Some(b)) => (a, b),
            (Some(a), None) | (None, Some(a)) => (a, a),
            (None, None) => {
                return Err(CliError::Validation(
                    "need --fraction or --lmin/--lmax".into(),
                ))
            }
        };
        config.sieve_l_min = lmin;
        config.sieve_l_max = lmax;
    }
    let sieve = run_sieve(&ck, &ds, &config)?;
    write_sieve_csv(&sieve, &args.out)?;
    let (kept, relabeled, dropped) = sieve.counts();
    Manifest::new(
        "sieve",
        Some(ck.seed),
        serde_json::json!({
            "checkpoint": args.checkpoint,
            "in": args.r#in,
            "out": args.out,
            "l_min": sieve.l_min,
            "l_max": sieve.l_max,
            "fraction": args.fraction,
        }),
    )
    .write(&parent_manifest_path(&args.out, "sieve.manifest.json"))?;
    println!(
        "kept {kept} / relabeled {relabeled} / dropped {dropped} (l_min {:.6}, l_max {:.6})",
        sieve.l_min, sieve.l_max
    );
    Ok(())
}

fn write_sieve_csv(sieve: &cal_core::sieve::SieveOutput, path: &Path) -> CliResult<()> {
    let mut out = String::from("id,decision,y_hat,adjusted_loss\n");
    for i in 0..sieve.decisions.len() {
        let decision = match sieve.decisions[i] {
            Decision::Kept => "kept",
            Decision::Relabeled => "relabeled",
            Decision::Dropped => "dropped",
        };
        let y_hat = sieve.y_hat[i]
            .map(|y| y.to_string())
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{i},{decision},{y_hat},{:.12e}",
            sieve.adjusted_losses[i]
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_name = "data.csv")]
    r#in: PathBuf,
    /// Label for the split column of the output.
    #[arg(long, default_value = "test")]
    split: String,
    /// Write the result CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn eval_cmd(args: EvalArgs) -> CliResult<()> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let ds = load_csv(&args.r#in)?;
    let acc = evaluate(&ck.params, &ds)?;
    let tilde = acc
        .vs_y_tilde
        .map(|v| format!("{v:.6}"))
        .unwrap_or_default();
    let csv = format!(
        "split,acc_y_star,acc_y_clean,acc_y_tilde\n{},{:.6},{:.6},{}\n",
        args.split, acc.vs_y_star, acc.vs_y_clean, tilde
    );
    let manifest = Manifest::new(
        "eval",
        Some(ck.seed),
        serde_json::json!({
            "checkpoint": args.checkpoint,
            "in": args.r#in,
            "split": args.split,
            "out": args.out,
        }),
    );
    match &args.out {
        Some(path) => {
            std::fs::write(path, &csv)?;
            manifest.write(&parent_manifest_path(path, "eval.manifest.json"))?;
        }
        None => {
            manifest.write(Path::new("eval.manifest.json"))?;
        }
    }
    print!("{csv}");
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteSelect {
    Binary,
    Multiclass,
    Downweight,
    Bounds,
    Tau,
    All,
}

fn suite_name(s: SuiteSelect) -> &'static str {
    match s {
        SuiteSelect::Binary => "binary",
        SuiteSelect::Multiclass => "multiclass",
        SuiteSelect::Downweight => "downweight",
        SuiteSelect::Bounds => "bounds",
        SuiteSelect::Tau => "tau",
        SuiteSelect::All => "all",
    }
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    suite: SuiteSelect,
    /// Instances per suite.
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Verify instance JSON files from this directory instead of generating
    /// random suites.
    #[arg(long)]
    dir: Option<PathBuf>,
}

fn verify_theorems(args: VerifyArgs) -> CliResult<()> {
    Manifest::new(
        "verify-theorems",
        Some(args.seed),
        serde_json::json!({
            "suite": suite_name(args.suite),
            "instances": args.instances,
            "dir": args.dir,
        }),
    )
    .write(Path::new("verify-theorems.manifest.json"))?;
    if let Some(dir) = &args.dir {
        return verify_instance_dir(dir, args.seed);
    }
    let n = args.instances;
    let mut all_pass = true;
    let want = |s: SuiteSelect| args.suite == SuiteSelect::All || args.suite == s;

    if want(SuiteSelect::Binary) {
        let r = suites::binary_identity_suite(n, 16, args.seed)?;
        all_pass &= r.pass();
        println!(
            "suite=binary instances={} max_residual={:.3e} tolerance={:.0e} pass={}",
            r.instances,
            r.max_abs_residual,
            r.tolerance,
            r.pass()
        );
        let lemma = suites::constant_rate_suite(n.div_ceil(2), 12, args.seed)?;
        all_pass &= lemma.pass();
        println!(
            "suite=binary-constant-rate instances={} max_residual={:.3e} max_covariance={:.3e} pass={}",
            lemma.instances,
            lemma.max_abs_residual,
            lemma.max_abs_covariance,
            lemma.pass()
        );
    }
    if want(SuiteSelect::Multiclass) {
        for k in [3, 4] {
            let r = suites::multiclass_identity_suite(k, n.div_ceil(2), 8, args.seed)?;
            all_pass &= r.pass();
            println!(
                "suite=multiclass k={k} instances={} max_residual={:.3e} pass={}",
                r.instances,
                r.max_abs_residual,
                r.pass()
            );
        }
    }
    if want(SuiteSelect::Downweight) {
        let r = suites::downweight_suite(n.div_ceil(2), 10, args.seed)?;
        all_pass &= r.pass();
        println!(
            "suite=downweight instances={} max_residual={:.3e} max_ratio_error={:.3e} pass={}",
            r.instances,
            r.max_abs_residual,
            r.max_ratio_error,
            r.pass()
        );
    }
    if want(SuiteSelect::Bounds) {
        let r = suites::peer_bound_suite(n.max(200), 10, args.seed)?;
        all_pass &= r.pass();
        println!(
            "suite=bounds instances={} holds={}/{} max_error={:.4} min_slack={:.4} pass={}",
            r.instances,
            r.holds,
            r.instances,
            r.max_error,
            r.min_slack,
            r.pass()
        );
        let peer = suites::peer_optimality_suite(n.div_ceil(2), 12, args.seed)?;
        all_pass &= peer.pass();
        println!(
            "suite=peer-optimality instances={} mismatches={} pass={}",
            peer.instances,
            peer.mismatches,
            peer.pass()
        );
        let cal = suites::cal_optimality_suite(n.div_ceil(2), 12, args.seed)?;
        all_pass &= cal.pass();
        println!(
            "suite=cal-optimality instances={} mismatches={} pass={}",
            cal.instances,
            cal.mismatches,
            cal.pass()
        );
    }
    if want(SuiteSelect::Tau) {
        let r = suites::proxy_bound_suite(&[0.6, 0.75, 0.9, 1.0], n.div_ceil(2), 10, 50, args.seed)?;
        all_pass &= r.pass();
        for row in &r.rows {
            println!(
                "suite=tau tau={:.2} instances={} holds={}/{} max_error={:.4}",
                row.tau, row.instances, row.holds, row.instances, row.max_error
            );
        }
        println!("suite=tau pass={}", r.pass());
    }

    if all_pass {
        println!("verify-theorems: all checks passed");
        Ok(())
    } else {
        Err(CliError::Validation(
            "verify-theorems: at least one check failed".into(),
        ))
    }
}

/// Check every instance file in a directory: binary worlds run the
/// decoupling residual under random classifiers, multi-class worlds run the
/// column-condition residual when the condition holds.
fn verify_instance_dir(dir: &Path, seed: u64) -> CliResult<()> {
    use cal_core::oracle::{
        decoupling_residual_binary, decoupling_residual_multiclass, FiniteInstance,
    };
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(CliError::Validation(format!(
            "no instance files in {}",
            dir.display()
        )));
    }
    let mut all_pass = true;
    let mut rng = cal_core::rng::substream(seed, cal_core::rng::stream::SUITE);
    for path in entries {
        let text = std::fs::read_to_string(&path)?;
        let inst = FiniteInstance::from_json(&text)?;
        let name = path.file_name().unwrap_or_default().to_string_lossy().to_string();
        if inst.is_binary() {
            let mut max_res: f64 = 0.0;
            for _ in 0..20 {
                let f = suites::random_classifier(&inst, &mut rng);
                max_res = max_res.max(decoupling_residual_binary(&inst, &f)?.abs());
            }
            let pass = max_res < 1e-10;
            all_pass &= pass;
            // The three-term identity assumes noise rates mean-uncorrelated
            // with the Bayes class; report that covariance so a failing file
            // can be diagnosed.
            let stats = inst.noise_stats();
            let class_cov: f64 = inst
                .features
                .iter()
                .enumerate()
                .map(|(x, feat)| {
                    let pos = if feat.bayes_label == cal_core::oracle::POS {
                        1.0
                    } else {
                        0.0
                    };
                    feat.px * (stats.z1[x] - stats.z1_mean()) * (pos - stats.p_star)
                })
                .sum();
            println!(
                "file={name} kind=binary max_residual={max_res:.3e} class_noise_cov={class_cov:.3e} pass={pass}"
            );
        } else {
            let f = suites::random_classifier(&inst, &mut rng);
            match decoupling_residual_multiclass(&inst, &f) {
                Ok(out) => {
                    let pass = out.residual.abs() < 1e-10;
                    all_pass &= pass;
                    println!(
                        "file={name} kind=multiclass residual={:.3e} pass={pass}",
                        out.residual
                    );
                }
                Err(e) => {
                    println!("file={name} kind=multiclass skipped ({e})");
                }
            }
        }
    }
    if all_pass {
        println!("verify-theorems: all checks passed");
        Ok(())
    } else {
        Err(CliError::Validation(
            "verify-theorems: at least one check failed".into(),
        ))
    }
}

// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct ReportArgs {
    /// Directory scanned recursively for metrics.csv files.
    #[arg(long)]
    runs: PathBuf,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn collect_metrics_files(dir: &Path, found: &mut Vec<PathBuf>) -> CliResult<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_metrics_files(&path, found)?;
        } else if path.file_name().is_some_and(|n| n == "metrics.csv") {
            found.push(path);
        }
    }
    Ok(())
}

/// The final row per split of every metrics file, as one comparison table.
fn report(args: ReportArgs) -> CliResult<()> {
    let mut files = Vec::new();
    collect_metrics_files(&args.runs, &mut files)?;
    if files.is_empty() {
        return Err(CliError::Validation(format!(
            "no metrics.csv files under {}",
            args.runs.display()
        )));
    }
    let mut out = String::from("run,epoch,split,acc_y_star,acc_y_clean,acc_y_tilde,mean_loss,lr\n");
    for path in files {
        let text = std::fs::read_to_string(&path)?;
        let run = path
            .parent()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        let mut last_per_split: Vec<(String, String)> = Vec::new();
        for line in text.lines().skip(1) {
            let mut fields = line.split(',');
            let epoch = fields.next().unwrap_or_default();
            let split = fields.next().unwrap_or_default().to_string();
            let rest = line
                .splitn(3, ',')
                .nth(2)
                .unwrap_or_default()
                .to_string();
            let row = format!("{run},{epoch},{split},{rest}");
            if let Some(slot) = last_per_split.iter_mut().find(|(s, _)| *s == split) {
                slot.1 = row;
            } else {
                last_per_split.push((split, row));
            }
        }
        for (_, row) in last_per_split {
            out.push_str(&row);
            out.push('\n');
        }
    }
    let manifest = Manifest::new(
        "report",
        None,
        serde_json::json!({ "runs": args.runs, "out": args.out }),
    );
    match &args.out {
        Some(path) => {
            std::fs::write(path, out)?;
            manifest.write(&parent_manifest_path(path, "report.manifest.json"))?;
        }
        None => {
            manifest.write(Path::new("report.manifest.json"))?;
            print!("{out}");
        }
    }
    Ok(())
}
