//! Command implementations behind the `dctconv` binary: synth-data, train,
//! eval, gradcheck, and bench. Every command is reproducible: identical
//! config and seed produce identical output files, and nothing written
//! contains timestamps.
//!
//! Exit-code contract: 0 success, 1 usage/config error, 2 runtime failure.

use dctconv::checkpoint::{Checkpoint, Dtype};
use dctconv::data::image::encode_ppm;
use dctconv::data::{
    dataset_to_checkpoint, load_manifest, stratified_split, synth_dataset, ManifestSource, Sample,
    SampleSource, Split, SynthSpec, Task, MAGNIFICATIONS,
};
use dctconv::gradcheck;
use dctconv::metrics::{
    aggregate_seeds, compute_metrics, magnification_csv, magnification_table, MetricsReport,
};
use dctconv::model::{count_flops, forward_single, init_weights, ModelConfig, ModelPlan};
use dctconv::rng::RngState;
use dctconv::train::{
    curves_to_csv, evaluate_indices, train, weights_from_checkpoint, weights_to_checkpoint,
    TrainConfig,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Usage or config problems exit 1; runtime failures exit 2.
#[derive(Debug)]
pub struct CmdError {
    pub code: i32,
    pub message: String,
}

impl CmdError {
    pub fn usage(message: impl Into<String>) -> CmdError {
        CmdError {
            code: 1,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> CmdError {
        CmdError {
            code: 2,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

pub type CmdResult = Result<(), CmdError>;

fn usage<T>(e: impl std::fmt::Display) -> Result<T, CmdError> {
    Err(CmdError::usage(e.to_string()))
}

fn runtime<T>(e: impl std::fmt::Display) -> Result<T, CmdError> {
    Err(CmdError::runtime(e.to_string()))
}

/// Where a run's samples come from; exactly one source per run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synth(SynthSpec),
    Manifest { path: String, task: Task },
}

/// Full run description: model, training hyperparameters, data source, and
/// the seed list. A snapshot is copied into every output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub data: DataSource,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, CmdError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CmdError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CmdError::usage(format!("bad config {}: {e}", path.display())))
    }
}

/// Fixed stream id for synthetic dataset generation: the dataset is a
/// property of the config, not of the per-run training seed.
const SYNTH_DATA_STREAM: u64 = 0xDA7A;

fn generate_synth(spec: &SynthSpec, base_seed: u64) -> Result<Vec<Sample>, CmdError> {
    let mut rng = RngState::new(base_seed).derive(SYNTH_DATA_STREAM);
    synth_dataset(&mut rng, spec).or_else(usage)
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).or_else(runtime)?;
    }
    std::fs::write(path, contents).or_else(runtime)
}

/// Train per seed, writing per-seed run directories plus an aggregate
/// mean-plus-minus-std report.
pub fn cmd_train(config_path: &Path, seed_override: &[u64], out_dir: &Path) -> CmdResult {
    let mut config = RunConfig::from_file(config_path)?;
    if !seed_override.is_empty() {
        config.seeds = seed_override.to_vec();
    }
    if config.seeds.is_empty() {
        config.seeds = vec![config.train.seed];
    }
    let plan = config.model.plan().or_else(usage)?;
    config.train.validate().or_else(usage)?;

    std::fs::create_dir_all(out_dir).or_else(runtime)?;
    let snapshot = serde_json::to_string_pretty(&config).or_else(runtime)?;
    write_file(&out_dir.join("config_snapshot.json"), &snapshot)?;

    let mut reports: Vec<MetricsReport> = Vec::new();
    for &seed in &config.seeds {
        let seed_dir = out_dir.join(format!("seed_{seed}"));
        std::fs::create_dir_all(&seed_dir).or_else(runtime)?;
        let mut cfg = config.train.clone();
        cfg.seed = seed;

        let outcome = match &config.data {
            DataSource::Synth(spec) => {
                let samples = generate_synth(spec, seed)?;
                let mut split_rng = RngState::new(seed).derive(3);
                let (ti, vi) =
                    stratified_split(&samples, spec.classes, cfg.train_fraction, &mut split_rng);
                let train_set: Vec<Sample> = ti.iter().map(|&i| samples[i].clone()).collect();
                let val_set: Vec<Sample> = vi.iter().map(|&i| samples[i].clone()).collect();
                train(&plan, &train_set, &val_set, &cfg)
            }
            DataSource::Manifest { path, task } => {
                if task.classes() != plan.config.num_classes {
                    return usage(format!(
                        "label set {:?} has {} classes but the model head has {}",
                        task.labels(),
                        task.classes(),
                        plan.config.num_classes
                    ));
                }
                let mpath = resolve_against(config_path, path);
                let manifest = load_manifest(&mpath, *task).or_else(usage)?;
                eprintln!("{}", manifest.summary());
                let target = (plan.config.input.1, plan.config.input.2);
                let train_src =
                    ManifestSource::from_manifest(&manifest, &mpath, target, Some(Split::Train), None);
                let val_src =
                    ManifestSource::from_manifest(&manifest, &mpath, target, Some(Split::Val), None);
                train(&plan, &train_src, &val_src, &cfg)
            }
        }
        .or_else(runtime)?;

        write_file(&seed_dir.join("curves.csv"), &curves_to_csv(&outcome.curves))?;
        let mut ckpt = weights_to_checkpoint(&outcome.weights, Dtype::F64, None);
        ckpt.config_json = Some(snapshot.clone());
        ckpt.save(&seed_dir.join("checkpoint.ckpt")).or_else(runtime)?;

        if let Some(report) = &outcome.final_val {
            write_file(&seed_dir.join("final_metrics.csv"), &report.to_csv())?;
            write_file(&seed_dir.join("final_metrics.txt"), &report.to_text())?;
            reports.push(report.clone());
        }
        if let Some(reason) = &outcome.diverged {
            return runtime(format!(
                "training diverged (seed {seed}): {reason}; last-good checkpoint saved to {}",
                seed_dir.join("checkpoint.ckpt").display()
            ));
        }
        println!(
            "seed {seed}: {} epochs, final val accuracy {}",
            outcome.epochs_run,
            outcome
                .final_val
                .as_ref()
                .map(|r| format!("{:.4}", r.accuracy))
                .unwrap_or_else(|| "n/a".into())
        );
    }

    if !reports.is_empty() {
        let agg = aggregate_seeds(&reports).or_else(runtime)?;
        write_file(&out_dir.join("aggregate.csv"), &agg.to_csv())?;
        write_file(&out_dir.join("aggregate.txt"), &agg.to_text())?;
        println!("{}", agg.to_text());
    }
    Ok(())
}

fn resolve_against(config_path: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(p)
    }
}

/// Evaluation data selection for [`cmd_eval`].
pub struct EvalArgs<'a> {
    pub checkpoint: &'a Path,
    /// Model/run config; defaults to the checkpoint's embedded snapshot.
    pub config: Option<&'a Path>,
    /// Manifest override; otherwise the config's data source is used.
    pub manifest: Option<&'a Path>,
    pub task: Option<Task>,
    pub magnification: Option<u32>,
    pub split: Option<Split>,
    pub out: Option<&'a Path>,
}

/// Evaluate a checkpoint, overall and per magnification when the data
/// carries magnifications.
pub fn cmd_eval(args: &EvalArgs) -> CmdResult {
    let ckpt = Checkpoint::load(args.checkpoint)
        .map_err(|e| CmdError::usage(format!("cannot load checkpoint: {e}")))?;
    let config: RunConfig = match args.config {
        Some(p) => RunConfig::from_file(p)?,
        None => match &ckpt.config_json {
            Some(json) => serde_json::from_str(json).map_err(|e| {
                CmdError::usage(format!("checkpoint config snapshot is unreadable: {e}"))
            })?,
            None => {
                return usage(
                    "no --config given and the checkpoint has no config snapshot sidecar",
                )
            }
        },
    };
    let plan = config.model.plan().or_else(usage)?;
    let weights = weights_from_checkpoint(&plan, &ckpt).or_else(usage)?;
    let target = (plan.config.input.1, plan.config.input.2);

    // resolve the evaluation data
    let mut overall = Vec::new(); // (magnification, label, prediction-ready sample index)
    let report;
    let mut per_mag: BTreeMap<u32, MetricsReport> = BTreeMap::new();
    match (args.manifest, &config.data) {
        (Some(mpath), _) => {
            let task = args.task.ok_or_else(|| {
                CmdError::usage("--task is required when evaluating a manifest")
            })?;
            if task.classes() != plan.config.num_classes {
                return usage(format!(
                    "label set {:?} has {} classes but the model head has {}",
                    task.labels(),
                    task.classes(),
                    plan.config.num_classes
                ));
            }
            let manifest = load_manifest(mpath, task).or_else(usage)?;
            let source =
                ManifestSource::from_manifest(&manifest, mpath, target, args.split, args.magnification);
            if source.is_empty() {
                return usage("no manifest rows match the requested filters");
            }
            for (i, row) in source.rows.iter().enumerate() {
                overall.push((row.magnification, i));
            }
            report = eval_source(&plan, &weights, &source, &overall.iter().map(|&(_, i)| i).collect::<Vec<_>>())?;
            let mags: Vec<u32> = MAGNIFICATIONS
                .iter()
                .cloned()
                .filter(|m| overall.iter().any(|&(mag, _)| mag == *m))
                .collect();
            for m in mags {
                let idx: Vec<usize> = overall
                    .iter()
                    .filter(|&&(mag, _)| mag == m)
                    .map(|&(_, i)| i)
                    .collect();
                per_mag.insert(m, eval_source(&plan, &weights, &source, &idx)?);
            }
        }
        (None, DataSource::Manifest { path, task }) => {
            let mpath = match args.config {
                Some(cfg) => resolve_against(cfg, path),
                None => PathBuf::from(path),
            };
            return cmd_eval(&EvalArgs {
                manifest: Some(&mpath),
                task: Some(*task),
                config: args.config,
                ..EvalArgs {
                    checkpoint: args.checkpoint,
                    config: args.config,
                    manifest: None,
                    task: None,
                    magnification: args.magnification,
                    split: args.split,
                    out: args.out,
                }
            });
        }
        (None, DataSource::Synth(spec)) => {
            let samples = generate_synth(spec, config.train.seed)?;
            let indices: Vec<usize> = (0..samples.len()).collect();
            report = eval_source(&plan, &weights, &samples, &indices)?;
        }
    }

    println!("{}", report.to_text());
    if !per_mag.is_empty() {
        println!("{}", magnification_table(&per_mag));
    }
    if let Some(out) = args.out {
        std::fs::create_dir_all(out).or_else(runtime)?;
        write_file(&out.join("metrics.csv"), &report.to_csv())?;
        write_file(&out.join("metrics.txt"), &report.to_text())?;
        if !per_mag.is_empty() {
            write_file(&out.join("per_magnification.csv"), &magnification_csv(&per_mag))?;
            write_file(&out.join("per_magnification.txt"), &magnification_table(&per_mag))?;
        }
    }
    Ok(())
}

fn eval_source<S: SampleSource + ?Sized>(
    plan: &ModelPlan,
    weights: &dctconv::model::ModelWeights,
    source: &S,
    indices: &[usize],
) -> Result<MetricsReport, CmdError> {
    let (_, cm) = evaluate_indices(plan, weights, source, indices).or_else(runtime)?;
    compute_metrics(&cm).or_else(runtime)
}

/// Finite-difference verification; prints one line per op. Exit 0 iff every
/// checked op meets the tolerance.
pub fn cmd_gradcheck(scope: &str, seed: u64) -> CmdResult {
    let checks = if scope == "all" {
        gradcheck::check_all(seed).or_else(runtime)?
    } else {
        vec![gradcheck::check_op(scope, seed)
            .map_err(|e| CmdError::usage(e.to_string()))?]
    };
    let mut all_ok = true;
    for c in &checks {
        let adj = match c.adjoint_err {
            Some(a) => format!(", adjoint pair err {a:.3e}"),
            None => String::new(),
        };
        println!(
            "{:<18} max rel err {:.3e}{} [{}]",
            c.name,
            c.max_rel_err,
            adj,
            if c.passed() { "ok" } else { "FAIL" }
        );
        all_ok &= c.passed();
    }
    if all_ok {
        Ok(())
    } else {
        runtime(format!(
            "gradient check failed at tolerance {}",
            gradcheck::REL_TOL
        ))
    }
}

/// Cost sweep over reduction factors: exact MAC counts plus measured
/// forward wall-clock (median of warm iterations).
pub fn cmd_bench(
    config: Option<&Path>,
    reductions: &[usize],
    iterations: usize,
    out: Option<&Path>,
) -> CmdResult {
    let base = match config {
        Some(p) => RunConfig::from_file(p)?.model,
        None => ModelConfig::bench_config(),
    };
    let rs: Vec<usize> = if reductions.is_empty() {
        vec![1, 2, 4]
    } else {
        reductions.to_vec()
    };
    let iterations = iterations.max(20);
    let mut csv = String::from("r,attn_score_macs,total_macs,ms_per_image\n");
    for &r in &rs {
        let plan = base.with_reduction(r).plan().or_else(usage)?;
        let flops = count_flops(&plan);
        let mut rng = RngState::new(0);
        let weights = init_weights(&plan, &mut rng);
        let (c, h, w) = plan.config.input;
        let input = rng.rand_uniform(&[c, h, w], 0.0, 1.0);
        // warm once, then time
        forward_single(&plan, &weights, &input).or_else(runtime)?;
        let mut times = Vec::with_capacity(iterations);
        for _ in 0..iterations {
            let t0 = Instant::now();
            forward_single(&plan, &weights, &input).or_else(runtime)?;
            times.push(t0.elapsed().as_secs_f64() * 1e3);
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = times[times.len() / 2];
        let _ = writeln!(
            csv,
            "{},{},{},{:.3}",
            r, flops.attention_score_macs, flops.total_macs, median
        );
        if let Some(out) = out {
            std::fs::create_dir_all(out).or_else(runtime)?;
            write_file(&out.join(format!("flops_r{r}.csv")), &flops.to_csv())?;
            write_file(&out.join(format!("flops_r{r}.txt")), &flops.to_text())?;
        }
    }
    print!("{csv}");
    if let Some(out) = out {
        write_file(&out.join("bench.csv"), &csv)?;
    }
    Ok(())
}

/// Materialize a synthetic dataset: PPM images, a manifest CSV consumable
/// by train/eval, and the tensor-archive dump.
pub fn cmd_synth_data(
    classes: usize,
    n_per_class: usize,
    size: usize,
    seed: u64,
    train_fraction: f64,
    out: &Path,
) -> CmdResult {
    let spec = SynthSpec {
        classes,
        n_per_class,
        size,
    };
    let samples = generate_synth(&spec, seed)?;
    let task = if classes == 2 {
        Task::Binary
    } else {
        Task::Multiclass
    };
    let mut split_rng = RngState::new(seed).derive(3);
    let (train_idx, _) = stratified_split(&samples, classes, train_fraction, &mut split_rng);
    let is_train: std::collections::HashSet<usize> = train_idx.into_iter().collect();

    std::fs::create_dir_all(out.join("images")).or_else(runtime)?;
    let mut manifest = String::from("path,label,magnification,split\n");
    for (i, s) in samples.iter().enumerate() {
        let label = task.labels()[s.label];
        let rel = format!("images/{label}_{i:05}.ppm");
        std::fs::write(out.join(&rel), encode_ppm(&s.image)).or_else(runtime)?;
        let magnification = MAGNIFICATIONS[i % MAGNIFICATIONS.len()];
        let split = if is_train.contains(&i) { "train" } else { "val" };
        let _ = writeln!(manifest, "{rel},{label},{magnification},{split}");
    }
    write_file(&out.join("manifest.csv"), &manifest)?;
    dataset_to_checkpoint(&samples)
        .save(&out.join("dataset.ckpt"))
        .or_else(runtime)?;
    println!(
        "wrote {} samples ({} classes, {size}x{size}) under {}",
        samples.len(),
        classes,
        out.display()
    );
    Ok(())
}
