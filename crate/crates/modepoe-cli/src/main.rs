//! Command-line driver: dataset generation, backbone training, per-stage
//! pipeline runs (discover / compose / sample / distill), evaluation, and
//! full experiment sweeps.
//!
//! Relative `--out` paths resolve against `MODEPOE_OUT` when it is set.
//! `--seed` overrides the seed of whatever config is in play.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use modepoe::compose::compose_teacher;
use modepoe::discovery::discover_prototypes;
use modepoe::distill::{distill, generate_pool, sample_distilled};
use modepoe::experiment::{
    describe_benchmark, report_csv, run_experiment, train_backbone_from_config, ExperimentConfig,
    ExperimentReport,
};
use modepoe::io;
use modepoe::metrics::{f1, frechet_gaussian, knn_precision_recall, FeatureSet, SetRole};
use modepoe::sampler::{
    query_only_teacher, sample_poe_teacher, sample_unconditional, GuidanceConfig, ScheduleMode,
};

#[derive(Parser)]
#[command(name = "modepoe", version, about = "Test-time concept discovery and product-of-experts composition for diffusion models")]
struct Cli {
    /// Override the seed of the loaded config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate benchmark data and previews.
    GenData(GenDataArgs),
    /// Train the toy backbone specified by an experiment config.
    TrainBackbone(TrainArgs),
    /// Discover prototype experts from a query.
    Discover(DiscoverArgs),
    /// Select and compose prototypes into a PoE teacher.
    Compose(ComposeArgs),
    /// Sample a teacher (or unconditionally) through guided DDIM.
    Sample(SampleArgs),
    /// Distill a teacher into a low-rank adapter on a frozen backbone.
    Distill(DistillArgs),
    /// Compare a sample pool against a reference pool.
    Evaluate(EvaluateArgs),
    /// Run the full multi-method sweep.
    RunExperiment(RunArgs),
    /// Print the summary table of a finished experiment.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiscoverArgs {
    /// Backbone checkpoint (toy-denoiser JSON).
    #[arg(long)]
    backbone: PathBuf,
    /// Query vector file ({"values": [...]}).
    #[arg(long)]
    query: PathBuf,
    /// Experiment config supplying the discovery settings.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ComposeArgs {
    #[arg(long)]
    prototypes: PathBuf,
    #[arg(long)]
    query: PathBuf,
    /// Number of prototypes K.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Per-coordinate softmax temperature.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    backbone: PathBuf,
    /// Teacher file; omit together with --query-only for unconditional samples.
    #[arg(long)]
    teacher: Option<PathBuf>,
    /// Sample the query-only baseline around this query vector file.
    #[arg(long)]
    query_only: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    sigma_q: f64,
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 1.2)]
    w0: f64,
    #[arg(long, default_value_t = 2.0)]
    w_max: f64,
    #[arg(long, default_value_t = 50)]
    steps: usize,
    /// Use a fixed guidance weight instead of the variance-aware schedule.
    #[arg(long)]
    fixed_weight: bool,
    /// Render samples as PNGs with this square resolution.
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long, default_value_t = 42)]
    sample_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DistillArgs {
    #[arg(long)]
    backbone: PathBuf,
    #[arg(long)]
    teacher: PathBuf,
    /// Experiment config supplying distillation settings.
    #[arg(long)]
    config: PathBuf,
    /// Tag recorded in the adapter checkpoint.
    #[arg(long, default_value = "cli")]
    query_id: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Generated sample-pool directory.
    #[arg(long)]
    gen: PathBuf,
    /// Reference sample-pool directory.
    #[arg(long, name = "ref")]
    reference: PathBuf,
    #[arg(long, default_value = "generalization")]
    role: String,
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Append a CSV row here (header written if new).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Experiment output directory.
    #[arg(long)]
    dir: PathBuf,
}

fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os("MODEPOE_OUT") {
        Some(root) => PathBuf::from(root).join(path),
        None => path.to_path_buf(),
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig =
        io::load_json(path).with_context(|| format!("reading config {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData(a) => {
            let cfg = load_config(&a.config, cli.seed)?;
            let out = resolve_out(&a.out);
            describe_benchmark(&cfg, &out)?;
            println!("benchmark described under {}", out.display());
        }
        Command::TrainBackbone(a) => {
            let cfg = load_config(&a.config, cli.seed)?;
            let out = resolve_out(&a.out);
            let path = train_backbone_from_config(&cfg, &out)?;
            println!("backbone saved to {}", path.display());
        }
        Command::Discover(a) => {
            let cfg = load_config(&a.config, cli.seed)?;
            let (model, schedule) = io::load_denoiser::<f64>(&a.backbone)?;
            let query: Vec<f64> = io::load_vector(&a.query)?;
            let acfg = cfg.discovery.to_ascent_config(query.len(), cfg.seed);
            let pool = discover_prototypes(&model, &query, &acfg, &schedule)?;
            let out = resolve_out(&a.out);
            io::save_prototypes(&out, &pool)?;
            println!("{} prototypes saved to {}", pool.len(), out.display());
        }
        Command::Compose(a) => {
            let pool = io::load_prototypes::<f64>(&a.prototypes)?;
            let query: Vec<f64> = io::load_vector(&a.query)?;
            let (teacher, selection) = compose_teacher(&pool, &query, a.k, a.tau)?;
            let out = resolve_out(&a.out);
            io::save_teacher(&out, &teacher, &selection)?;
            println!(
                "teacher over prototypes {:?} saved to {}",
                selection.indices,
                out.display()
            );
        }
        Command::Sample(a) => {
            let (model, schedule) = io::load_denoiser::<f64>(&a.backbone)?;
            let mut gcfg: GuidanceConfig<f64> =
                GuidanceConfig::new(a.n, cli.seed.unwrap_or(a.sample_seed));
            gcfg.w0 = a.w0;
            gcfg.w_max = a.w_max;
            gcfg.ddim_steps = a.steps;
            gcfg.schedule_mode =
                if a.fixed_weight { ScheduleMode::Fixed } else { ScheduleMode::VarianceAware };
            let (samples, method) = if let Some(qpath) = &a.query_only {
                let query: Vec<f64> = io::load_vector(qpath)?;
                let teacher = query_only_teacher(&query, a.sigma_q)?;
                (sample_poe_teacher(&model, &teacher, &gcfg, &schedule)?, "query_only")
            } else if let Some(tpath) = &a.teacher {
                let (teacher, _) = io::load_teacher::<f64>(tpath)?;
                (sample_poe_teacher(&model, &teacher, &gcfg, &schedule)?, "poe")
            } else {
                (sample_unconditional(&model, &gcfg, &schedule)?, "unconditional")
            };
            let out = resolve_out(&a.out);
            io::save_sample_pool(
                &out,
                &samples,
                method,
                0,
                "cli",
                gcfg.seed,
                "cli",
                a.resolution,
            )?;
            println!("{} samples saved to {}", samples.len(), out.display());
        }
        Command::Distill(a) => {
            let cfg = load_config(&a.config, cli.seed)?;
            let (model, schedule) = io::load_denoiser::<f64>(&a.backbone)?;
            let (teacher, _) = io::load_teacher::<f64>(&a.teacher)?;
            let mut gcfg: GuidanceConfig<f64> = GuidanceConfig::new(cfg.distill.pool_size, cfg.seed);
            gcfg.w0 = cfg.guidance.w0;
            gcfg.w_max = cfg.guidance.w_max;
            gcfg.schedule_mode = cfg.guidance.schedule_mode;
            gcfg.ddim_steps = cfg.guidance.ddim_steps;
            let pool = generate_pool(&model, &teacher, &gcfg, &schedule, cfg.distill.pool_size)?;
            let dcfg = modepoe::distill::DistillConfig {
                pool_size: cfg.distill.pool_size,
                rank: cfg.distill.rank,
                alpha: cfg.distill.alpha,
                lr: cfg.distill.lr,
                epochs: cfg.distill.epochs,
                batch: cfg.distill.batch,
                cfg_dropout: cfg.distill.cfg_dropout,
                embed_init_std: cfg.distill.embed_init_std,
                seed: cfg.seed,
            };
            let outcome = distill(&model, &pool, &dcfg, &schedule)?;
            let out = resolve_out(&a.out);
            io::save_adapter(&out, &a.query_id, &outcome.adapter, &outcome.c_new)?;
            println!(
                "adapter saved to {} (final loss {:.5})",
                out.display(),
                outcome.loss_trace.last().copied().unwrap_or(f64::NAN)
            );
            // quick sanity sample from the distilled concept
            let mut scfg = gcfg.clone();
            scfg.n_samples = 4;
            let _ = sample_distilled(
                &model,
                &outcome.adapter,
                &outcome.c_new,
                cfg.distill.sampling_w,
                &scfg,
                &schedule,
            )?;
        }
        Command::Evaluate(a) => {
            let (_, gen): (_, Vec<Vec<f64>>) = io::load_sample_pool(&a.gen)?;
            let (ref_manifest, refs): (_, Vec<Vec<f64>>) = io::load_sample_pool(&a.reference)?;
            let role = match a.role.as_str() {
                "faithfulness" => SetRole::FaithfulnessRef,
                "generalization" => SetRole::GeneralizationRef,
                other => bail!("unknown role '{other}'"),
            };
            let gen_set = FeatureSet::new(gen, SetRole::Generated);
            let ref_set = FeatureSet { vectors: refs, class_id: Some(ref_manifest.class_id), role };
            let pr = knn_precision_recall(&gen_set, &ref_set, a.k)?;
            let fd = frechet_gaussian(&gen_set, &ref_set)?;
            let f = f1(pr.precision, pr.recall);
            println!(
                "fd {fd:.6}  precision {:.6}  recall {:.6}  f1 {f:.6}",
                pr.precision, pr.recall
            );
            if let Some(out) = a.out {
                let out = resolve_out(&out);
                let header = "gen,ref,role,fd,precision,recall,f1,n_gen,n_ref\n";
                let row = format!(
                    "{},{},{},{:.6},{:.6},{:.6},{:.6},{},{}\n",
                    a.gen.display(),
                    a.reference.display(),
                    role,
                    fd,
                    pr.precision,
                    pr.recall,
                    f,
                    gen_set.len(),
                    ref_set.len()
                );
                let mut contents = if out.exists() {
                    std::fs::read_to_string(&out)?
                } else {
                    header.to_string()
                };
                contents.push_str(&row);
                io::write_atomic(&out, &contents)?;
            }
        }
        Command::RunExperiment(a) => {
            let cfg = load_config(&a.config, cli.seed)?;
            let out = resolve_out(&a.out);
            let started = std::time::Instant::now();
            let report = run_experiment(&cfg, &out)?;
            println!(
                "experiment finished in {:.1}s: {} rows, {} failures -> {}",
                started.elapsed().as_secs_f64(),
                report.rows.len(),
                report.failures.len(),
                out.display()
            );
            print_summary(&report);
        }
        Command::Report(a) => {
            let report: ExperimentReport = io::load_json(&a.dir.join("report.json"))?;
            println!("config hash: {}", report.config_hash);
            println!("{}", report_csv(&report.rows));
            print_summary(&report);
            if !report.failures.is_empty() {
                println!("failures:");
                for f in &report.failures {
                    println!("  {f}");
                }
            }
        }
    }
    Ok(())
}

fn print_summary(report: &ExperimentReport) {
    println!(
        "{:<12} {:<16} {:>8} {:>18} {:>18} {:>18} {:>18}",
        "method", "reference", "classes", "fd", "precision", "recall", "f1"
    );
    for s in &report.summary {
        println!(
            "{:<12} {:<16} {:>8} {:>11.3}±{:<6.3} {:>11.3}±{:<6.3} {:>11.3}±{:<6.3} {:>11.3}±{:<6.3}",
            s.method.to_string(),
            s.reference_role.to_string(),
            s.n_classes,
            s.fd_mean,
            s.fd_se,
            s.precision_mean,
            s.precision_se,
            s.recall_mean,
            s.recall_se,
            s.f1_mean,
            s.f1_se
        );
    }
}
