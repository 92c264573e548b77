//! Experiment orchestration: build a benchmark world, obtain a backbone,
//! run discovery/composition/sampling per query for every enabled method,
//! evaluate against faithfulness and generalization references, and persist
//! a deterministic report.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::{gen_colormnist, gen_gmm2d, ColorMnistSpec, Gmm2dSpec};
use crate::compose::compose_teacher;
use crate::discovery::{discover_prototypes, AscentConfig, InitStrategy, TimestepGrid};
use crate::distill::{distill, generate_pool, sample_distilled, DistillConfig};
use crate::gmm::{GmmComponent, GmmDensity};
use crate::io;
use crate::metrics::{
    build_reference_sets, f1, frechet_gaussian, knn_precision_recall, FeatureSet, SetRole,
};
use crate::net::{DenoiserArch, ToyDenoiser};
use crate::rng;
use crate::sampler::{
    query_only_teacher, sample_poe_teacher, sample_topk, score_trained_classes, top_k_classes,
    BaselineSpec, GuidanceConfig, ScheduleMode,
};
use crate::schedule::{linear_beta_schedule, NoiseSchedule, DEFAULT_BETA_END, DEFAULT_BETA_START};
use crate::score::ScoreModel;
use crate::train::{train_backbone, TrainerConfig};
use crate::{Error, Result};

/// Generation method under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Poe,
    Lora,
    Top1,
    Top3,
    QueryOnly,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Poe => "poe",
            Method::Lora => "lora",
            Method::Top1 => "top1",
            Method::Top3 => "top3",
            Method::QueryOnly => "query_only",
        };
        write!(f, "{s}")
    }
}

/// World the experiment runs in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkChoice {
    Gmm2d(Gmm2dSpec<f64>),
    ColorMnist(ColorMnistSpec),
}

/// Where the score model comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneSource {
    /// Exact mixture oracle (for ColorMNIST, per-slot Gaussians fit to the
    /// seen tier).
    Oracle,
    /// Load a trained checkpoint.
    Checkpoint(String),
    /// Train the toy denoiser on the seen tier first.
    Train(TrainSettings),
}

/// Backbone architecture and optimizer settings for the train-first path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub width: usize,
    pub hidden_layers: usize,
    pub time_feat_dim: usize,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub null_dropout: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            width: 256,
            hidden_layers: 3,
            time_feat_dim: 16,
            lr: 1e-3,
            batch: 32,
            epochs: 20,
            null_dropout: 0.1,
        }
    }
}

/// Discovery knobs (per-query seeds are derived by the orchestrator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscoverySettings {
    pub t_start: usize,
    pub t_end: usize,
    pub t_step: usize,
    pub n_per_t: usize,
    pub n_iters: usize,
    pub base_step: f64,
    pub init_strategy: InitStrategy,
    /// Overrides the 1e-3 sqrt(d) default when set.
    pub grad_tol: Option<f64>,
    /// Overrides the 0.05 sqrt(d) default when set.
    pub merge_tol: Option<f64>,
    pub n_probes: usize,
    pub fd_step: f64,
    pub var_floor: f64,
}

impl Default for DiscoverySettings {
    fn default() -> Self {
        Self {
            t_start: 50,
            t_end: 400,
            t_step: 25,
            n_per_t: 128,
            n_iters: 150,
            base_step: 0.1,
            init_strategy: InitStrategy::Hybrid { query_fraction: 0.5 },
            grad_tol: None,
            merge_tol: None,
            n_probes: 4,
            fd_step: 5e-3,
            var_floor: 1e-4,
        }
    }
}

impl DiscoverySettings {
    pub fn to_ascent_config(&self, d: usize, seed: u64) -> AscentConfig<f64> {
        let mut cfg = AscentConfig::for_dim(d, seed);
        cfg.t_grid = TimestepGrid::new(self.t_start, self.t_end, self.t_step);
        cfg.n_per_t = self.n_per_t;
        cfg.n_iters = self.n_iters;
        cfg.base_step = self.base_step;
        cfg.init_strategy = self.init_strategy;
        if let Some(g) = self.grad_tol {
            cfg.grad_tol = g;
        }
        if let Some(m) = self.merge_tol {
            cfg.merge_tol = m;
        }
        cfg.n_probes = self.n_probes;
        cfg.fd_step = self.fd_step;
        cfg.var_floor = self.var_floor;
        cfg
    }
}

/// Selection and weighting knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompositionSettings {
    /// Number of prototypes K.
    pub k: usize,
    /// Per-coordinate softmax temperature.
    pub tau: f64,
}

impl Default for CompositionSettings {
    fn default() -> Self {
        Self { k: 3, tau: 0.5 }
    }
}

/// Sampler knobs shared by every method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceSettings {
    pub w0: f64,
    pub w_max: f64,
    pub schedule_mode: ScheduleMode,
    pub ddim_steps: usize,
    /// Saved generations per query per method.
    pub n_gen: usize,
    /// Clamp for the predicted clean state during reverse steps; image runs
    /// use (-1, 1).
    pub x0_clip: Option<(f64, f64)>,
}

impl Default for GuidanceSettings {
    fn default() -> Self {
        Self {
            w0: 1.2,
            w_max: 2.0,
            schedule_mode: ScheduleMode::VarianceAware,
            ddim_steps: 50,
            n_gen: 16,
            x0_clip: None,
        }
    }
}

/// Baseline knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineSettings {
    pub t_eval_lo: usize,
    pub t_eval_hi: usize,
    pub t_eval_count: usize,
    pub n_eps: usize,
    pub tau_tk: f64,
    pub sigma_q: f64,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        Self { t_eval_lo: 50, t_eval_hi: 500, t_eval_count: 10, n_eps: 8, tau_tk: 1.0, sigma_q: 0.1 }
    }
}

impl BaselineSettings {
    fn to_spec(&self, s: &NoiseSchedule<f64>) -> BaselineSpec<f64> {
        let hi = self.t_eval_hi.min(s.t_count()).max(1);
        let lo = self.t_eval_lo.min(hi).max(1);
        let n = self.t_eval_count.max(1);
        let t_eval = (0..n).map(|i| lo + (hi - lo) * i / (n - 1).max(1)).collect();
        BaselineSpec { t_eval, n_eps: self.n_eps, tau_tk: self.tau_tk, sigma_q: self.sigma_q }
    }
}

/// Distillation knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillSettings {
    pub pool_size: usize,
    pub rank: usize,
    pub alpha: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub cfg_dropout: f64,
    pub embed_init_std: f64,
    /// Fixed CFG weight when sampling the distilled concept.
    pub sampling_w: f64,
}

impl Default for DistillSettings {
    fn default() -> Self {
        Self {
            pool_size: 256,
            rank: 8,
            alpha: 16.0,
            lr: 1e-3,
            epochs: 10,
            batch: 16,
            cfg_dropout: 0.1,
            embed_init_std: 0.01,
            sampling_w: 0.8,
        }
    }
}

impl DistillSettings {
    fn to_config(&self, seed: u64) -> DistillConfig<f64> {
        DistillConfig {
            pool_size: self.pool_size,
            rank: self.rank,
            alpha: self.alpha,
            lr: self.lr,
            epochs: self.epochs,
            batch: self.batch,
            cfg_dropout: self.cfg_dropout,
            embed_init_std: self.embed_init_std,
            seed,
        }
    }
}

/// Full experiment description; the single structured config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub version: u32,
    /// Dataset tag written into every metric row.
    pub dataset: String,
    pub benchmark: BenchmarkChoice,
    pub backbone: BackboneSource,
    #[serde(default = "default_t_count")]
    pub t_count: usize,
    #[serde(default = "default_beta_start")]
    pub beta_start: f64,
    #[serde(default = "default_beta_end")]
    pub beta_end: f64,
    #[serde(default)]
    pub discovery: DiscoverySettings,
    #[serde(default)]
    pub composition: CompositionSettings,
    #[serde(default)]
    pub guidance: GuidanceSettings,
    #[serde(default)]
    pub baselines: BaselineSettings,
    #[serde(default)]
    pub distill: DistillSettings,
    pub methods: Vec<Method>,
    pub queries_per_class: usize,
    /// Generalization reference size per class.
    pub n_ref: usize,
    #[serde(default = "default_knn_k")]
    pub knn_k: usize,
    /// Samples drawn per mixture component on the oracle world.
    #[serde(default = "default_gmm_samples")]
    pub gmm_samples_per_component: usize,
    pub seed: u64,
}

fn default_t_count() -> usize {
    1000
}
fn default_beta_start() -> f64 {
    DEFAULT_BETA_START
}
fn default_beta_end() -> f64 {
    DEFAULT_BETA_END
}
fn default_knn_k() -> usize {
    3
}
fn default_gmm_samples() -> usize {
    200
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("method list is empty".into()));
        }
        if self.queries_per_class == 0 || self.n_ref == 0 {
            return Err(Error::InvalidConfig("queries_per_class and n_ref must be positive".into()));
        }
        // both reference sets and the pooled generations feed the k-NN
        // estimator, which needs k+1 points per side
        let min_pts = self.knn_k + 1;
        if self.queries_per_class < min_pts
            || self.n_ref < min_pts
            || self.guidance.n_gen * self.queries_per_class < min_pts
        {
            return Err(Error::InvalidConfig(format!(
                "k-NN metrics at k={} need at least {min_pts} queries, references, and generations per class",
                self.knn_k
            )));
        }
        if self.methods.contains(&Method::Lora) && matches!(self.backbone, BackboneSource::Oracle) {
            return Err(Error::InvalidConfig(
                "lora needs a trainable backbone; the oracle has no weights to adapt".into(),
            ));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule<f64>> {
        linear_beta_schedule(self.t_count, self.beta_start, self.beta_end)
    }
}

/// One metric row of the report CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub dataset: String,
    pub method: Method,
    pub class_id: usize,
    pub reference_role: SetRole,
    pub fd: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_gen: usize,
    pub n_ref: usize,
    pub seed: u64,
}

/// Mean +- standard error of one metric across classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub reference_role: SetRole,
    pub n_classes: usize,
    pub fd_mean: f64,
    pub fd_se: f64,
    pub precision_mean: f64,
    pub precision_se: f64,
    pub recall_mean: f64,
    pub recall_se: f64,
    pub f1_mean: f64,
    pub f1_se: f64,
}

/// Full experiment output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub rows: Vec<MetricRow>,
    pub summary: Vec<SummaryRow>,
    /// Per-query stage failures; empty on a clean run.
    pub failures: Vec<String>,
}

/// Score-model backend resolved from the config.
pub enum Backbone {
    Oracle(GmmDensity<f64>),
    Denoiser(ToyDenoiser<f64>),
}

impl ScoreModel<f64> for Backbone {
    fn dim(&self) -> usize {
        match self {
            Backbone::Oracle(g) => ScoreModel::dim(g),
            Backbone::Denoiser(m) => ScoreModel::dim(m),
        }
    }

    fn eps(
        &self,
        xt: &[f64],
        t: usize,
        s: &NoiseSchedule<f64>,
        c: &crate::score::Conditioning,
    ) -> Result<Vec<f64>> {
        match self {
            Backbone::Oracle(g) => g.eps(xt, t, s, c),
            Backbone::Denoiser(m) => m.eps(xt, t, s, c),
        }
    }

    fn score(
        &self,
        xt: &[f64],
        t: usize,
        s: &NoiseSchedule<f64>,
        c: &crate::score::Conditioning,
    ) -> Result<Vec<f64>> {
        match self {
            Backbone::Oracle(g) => g.score(xt, t, s, c),
            Backbone::Denoiser(m) => m.score(xt, t, s, c),
        }
    }
}

/// One class worth of evaluation material.
struct ClassTask {
    class_id: usize,
    queries: Vec<Vec<f64>>,
    faithfulness: FeatureSet<f64>,
    generalization: FeatureSet<f64>,
}

/// World data resolved from the benchmark choice.
struct World {
    backbone: Backbone,
    trained_classes: Vec<usize>,
    tasks: Vec<ClassTask>,
    image_resolution: Option<usize>,
}

/// Fit one diagonal Gaussian per seen slot as an exact oracle stand-in for a
/// trained backbone.
fn fit_slot_oracle(
    images: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    var_floor: f64,
) -> Result<GmmDensity<f64>> {
    let d = images[0].len();
    let mut count = vec![0usize; n_classes];
    let mut mean = vec![vec![0.0f64; d]; n_classes];
    for (img, &l) in images.iter().zip(labels) {
        count[l] += 1;
        for (m, &v) in mean[l].iter_mut().zip(img) {
            *m += v;
        }
    }
    for c in 0..n_classes {
        if count[c] == 0 {
            return Err(Error::EmptyClassRestriction(c));
        }
        for m in &mut mean[c] {
            *m /= count[c] as f64;
        }
    }
    let mut var = vec![vec![0.0f64; d]; n_classes];
    for (img, &l) in images.iter().zip(labels) {
        for j in 0..d {
            let diff = img[j] - mean[l][j];
            var[l][j] += diff * diff;
        }
    }
    let total: usize = count.iter().sum();
    let components = (0..n_classes)
        .map(|c| GmmComponent {
            weight: count[c] as f64 / total as f64,
            mean: mean[c].clone(),
            var: var[c].iter().map(|&v| (v / count[c] as f64).max(var_floor)).collect(),
        })
        .collect();
    GmmDensity::with_classes(components, Some((0..n_classes).collect()))
}

fn build_world(cfg: &ExperimentConfig, s: &NoiseSchedule<f64>, out_dir: &Path) -> Result<World> {
    match &cfg.benchmark {
        BenchmarkChoice::ColorMnist(spec) => {
            let ds = gen_colormnist::<f64>(spec)?;
            let train = ds.seen_training_set();
            let n_classes = ds.n_seen_classes();
            let backbone = match &cfg.backbone {
                BackboneSource::Oracle => {
                    let images: Vec<Vec<f64>> = train.iter().map(|(x, _)| x.clone()).collect();
                    let labels: Vec<usize> = train.iter().map(|(_, l)| *l).collect();
                    Backbone::Oracle(fit_slot_oracle(&images, &labels, n_classes, 1e-4)?)
                }
                BackboneSource::Checkpoint(path) => {
                    let (model, _) = io::load_denoiser::<f64>(Path::new(path))?;
                    Backbone::Denoiser(model)
                }
                BackboneSource::Train(ts) => {
                    let arch = DenoiserArch {
                        dim: spec.dim(),
                        width: ts.width,
                        hidden_layers: ts.hidden_layers,
                        time_feat_dim: ts.time_feat_dim,
                        n_classes,
                    };
                    let tcfg = TrainerConfig {
                        lr: ts.lr,
                        batch: ts.batch,
                        epochs: ts.epochs,
                        null_dropout: ts.null_dropout,
                        seed: rng::derive_seed(cfg.seed, &[0x7462]),
                    };
                    let out = train_backbone(&train, &arch, s, &tcfg)?;
                    io::save_denoiser(&out_dir.join("backbone.json"), &out.model, s)?;
                    Backbone::Denoiser(out.model)
                }
            };
            let mut tasks = Vec::new();
            for slot in ds.held_out_slots() {
                let member_ids = ds.image_ids_of_slot(slot);
                let members: Vec<Vec<f64>> =
                    member_ids.iter().map(|&i| ds.images[i].clone()).collect();
                let need = cfg.queries_per_class + cfg.n_ref;
                if members.len() < need {
                    return Err(Error::InsufficientPopulation { need, have: members.len() });
                }
                let mut r = rng::substream(cfg.seed, &[0x7175, slot as u64]);
                let order = rng::shuffled_indices(&mut r, members.len());
                let query_ids: Vec<usize> = order[..cfg.queries_per_class].to_vec();
                let (faithfulness, generalization) = build_reference_sets(
                    &members,
                    &query_ids,
                    cfg.n_ref,
                    rng::derive_seed(cfg.seed, &[0x7266, slot as u64]),
                )?;
                tasks.push(ClassTask {
                    class_id: slot,
                    queries: query_ids.iter().map(|&i| members[i].clone()).collect(),
                    faithfulness,
                    generalization,
                });
            }
            Ok(World {
                backbone,
                trained_classes: (0..n_classes).collect(),
                tasks,
                image_resolution: Some(spec.resolution),
            })
        }
        BenchmarkChoice::Gmm2d(spec) => {
            let (samples, oracle) = gen_gmm2d(spec, cfg.gmm_samples_per_component)?;
            let classes = oracle.classes();
            let class_of_sample: Vec<usize> = samples
                .iter()
                .map(|smp| oracle.class_of().map_or(0, |m| m[smp.component]))
                .collect();
            let backbone = match &cfg.backbone {
                BackboneSource::Oracle => Backbone::Oracle(oracle.clone()),
                BackboneSource::Checkpoint(path) => {
                    let (model, _) = io::load_denoiser::<f64>(Path::new(path))?;
                    Backbone::Denoiser(model)
                }
                BackboneSource::Train(ts) => {
                    let n_classes = classes.len().max(1);
                    let data: Vec<(Vec<f64>, usize)> = samples
                        .iter()
                        .zip(&class_of_sample)
                        .map(|(smp, &c)| (smp.x.clone(), c))
                        .collect();
                    let arch = DenoiserArch {
                        dim: oracle.dim(),
                        width: ts.width,
                        hidden_layers: ts.hidden_layers,
                        time_feat_dim: ts.time_feat_dim,
                        n_classes,
                    };
                    let tcfg = TrainerConfig {
                        lr: ts.lr,
                        batch: ts.batch,
                        epochs: ts.epochs,
                        null_dropout: ts.null_dropout,
                        seed: rng::derive_seed(cfg.seed, &[0x7462]),
                    };
                    let out = train_backbone(&data, &arch, s, &tcfg)?;
                    io::save_denoiser(&out_dir.join("backbone.json"), &out.model, s)?;
                    Backbone::Denoiser(out.model)
                }
            };
            let class_list = if classes.is_empty() { vec![0] } else { classes.clone() };
            let mut tasks = Vec::new();
            for &class_id in &class_list {
                let members: Vec<Vec<f64>> = samples
                    .iter()
                    .zip(&class_of_sample)
                    .filter(|(_, &c)| c == class_id)
                    .map(|(smp, _)| smp.x.clone())
                    .collect();
                let need = cfg.queries_per_class + cfg.n_ref;
                if members.len() < need {
                    return Err(Error::InsufficientPopulation { need, have: members.len() });
                }
                let mut r = rng::substream(cfg.seed, &[0x7175, class_id as u64]);
                let order = rng::shuffled_indices(&mut r, members.len());
                let query_ids: Vec<usize> = order[..cfg.queries_per_class].to_vec();
                let (faithfulness, generalization) = build_reference_sets(
                    &members,
                    &query_ids,
                    cfg.n_ref,
                    rng::derive_seed(cfg.seed, &[0x7266, class_id as u64]),
                )?;
                tasks.push(ClassTask {
                    class_id,
                    queries: query_ids.iter().map(|&i| members[i].clone()).collect(),
                    faithfulness,
                    generalization,
                });
            }
            Ok(World { backbone, trained_classes: class_list, tasks, image_resolution: None })
        }
    }
}

/// Generate one method's samples for one query. Heavy shared stages
/// (discovery, composition) are done by the caller and passed in.
#[allow(clippy::too_many_arguments)]
fn run_method_for_query(
    method: Method,
    world: &World,
    teacher: Option<&crate::compose::PoeTeacher<f64>>,
    x_q: &[f64],
    cfg: &ExperimentConfig,
    s: &NoiseSchedule<f64>,
    gcfg: &GuidanceConfig<f64>,
    query_seed: u64,
    out_query_dir: &Path,
) -> Result<Vec<Vec<f64>>> {
    let spec = cfg.baselines.to_spec(s);
    match method {
        Method::Poe => {
            let teacher = teacher.ok_or(Error::EmptyPool)?;
            sample_poe_teacher(&world.backbone, teacher, gcfg, s)
        }
        Method::QueryOnly => {
            let qt = query_only_teacher(x_q, spec.sigma_q)?;
            sample_poe_teacher(&world.backbone, &qt, gcfg, s)
        }
        Method::Top1 | Method::Top3 => {
            let losses = score_trained_classes(
                &world.backbone,
                x_q,
                &world.trained_classes,
                &spec,
                s,
                rng::derive_seed(query_seed, &[0x746b]),
            )?;
            let k = if method == Method::Top1 { 1 } else { 3.min(losses.len()) };
            let top = top_k_classes(&losses, k);
            sample_topk(&world.backbone, &top, spec.tau_tk, gcfg, s)
        }
        Method::Lora => {
            let teacher = teacher.ok_or(Error::EmptyPool)?;
            let base = match &world.backbone {
                Backbone::Denoiser(m) => m,
                Backbone::Oracle(_) => {
                    return Err(Error::InvalidConfig("lora needs a trainable backbone".into()))
                }
            };
            let mut pool_cfg = gcfg.clone();
            pool_cfg.seed = rng::derive_seed(query_seed, &[0x706f]);
            let pool =
                generate_pool(&world.backbone, teacher, &pool_cfg, s, cfg.distill.pool_size)?;
            let dcfg = cfg.distill.to_config(rng::derive_seed(query_seed, &[0x6474]));
            let outcome = distill(base, &pool, &dcfg, s)?;
            io::save_adapter(
                &out_query_dir.join("adapter.json"),
                &format!("{query_seed:016x}"),
                &outcome.adapter,
                &outcome.c_new,
            )?;
            let mut sample_cfg = gcfg.clone();
            sample_cfg.seed = rng::derive_seed(query_seed, &[0x6c73]);
            sample_distilled(
                base,
                &outcome.adapter,
                &outcome.c_new,
                cfg.distill.sampling_w,
                &sample_cfg,
                s,
            )
        }
    }
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

/// Render the per-class metric rows as CSV (deterministic bytes).
pub fn report_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(
        "dataset,method,class,reference_role,fd,precision,recall,f1,n_gen,n_ref,seed\n",
    );
    for r in rows {
        out.push_str(&io::csv_line(&[
            r.dataset.clone(),
            r.method.to_string(),
            r.class_id.to_string(),
            r.reference_role.to_string(),
            fmt(r.fd),
            fmt(r.precision),
            fmt(r.recall),
            fmt(r.f1),
            r.n_gen.to_string(),
            r.n_ref.to_string(),
            r.seed.to_string(),
        ]));
        out.push('\n');
    }
    out
}

/// Render the cross-class summary as CSV.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "method,reference_role,n_classes,fd_mean,fd_se,precision_mean,precision_se,recall_mean,recall_se,f1_mean,f1_se\n",
    );
    for r in rows {
        out.push_str(&io::csv_line(&[
            r.method.to_string(),
            r.reference_role.to_string(),
            r.n_classes.to_string(),
            fmt(r.fd_mean),
            fmt(r.fd_se),
            fmt(r.precision_mean),
            fmt(r.precision_se),
            fmt(r.recall_mean),
            fmt(r.recall_se),
            fmt(r.f1_mean),
            fmt(r.f1_se),
        ]));
        out.push('\n');
    }
    out
}

/// Train (or fit) the configured backbone and save it as a checkpoint;
/// returns the checkpoint path. Oracle backbones have no weights to save.
pub fn train_backbone_from_config(cfg: &ExperimentConfig, out_dir: &Path) -> Result<std::path::PathBuf> {
    let s = cfg.schedule()?;
    std::fs::create_dir_all(out_dir)?;
    let world = build_world(cfg, &s, out_dir)?;
    let path = out_dir.join("backbone.json");
    match &world.backbone {
        Backbone::Denoiser(model) => {
            io::save_denoiser(&path, model, &s)?;
            Ok(path)
        }
        Backbone::Oracle(_) => Err(Error::InvalidConfig(
            "the oracle backbone has no weights; use backbone = train or checkpoint".into(),
        )),
    }
}

/// Materialize the benchmark's class structure for inspection: slot metadata
/// plus one preview image per slot for image benchmarks.
pub fn describe_benchmark(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    match &cfg.benchmark {
        BenchmarkChoice::ColorMnist(spec) => {
            let ds = gen_colormnist::<f64>(spec)?;
            io::save_json(&out_dir.join("slots.json"), &ds.slots)?;
            for (i, slot) in ds.slots.iter().enumerate() {
                let ids = ds.image_ids_of_slot(i);
                if let Some(&first) = ids.first() {
                    let tag = if slot.held_out { "ood" } else { "seen" };
                    io::write_png(
                        &out_dir.join(format!("slot{i:03}_{tag}_d{}.png", slot.digit)),
                        &ds.images[first],
                        spec.resolution,
                        spec.resolution,
                    )?;
                }
            }
        }
        BenchmarkChoice::Gmm2d(spec) => {
            let (samples, oracle) = gen_gmm2d(spec, cfg.gmm_samples_per_component)?;
            io::save_json(&out_dir.join("oracle.json"), &oracle)?;
            io::save_json(&out_dir.join("samples.json"), &samples)?;
        }
    }
    io::save_json(&out_dir.join("benchmark_config.json"), cfg)?;
    Ok(())
}

/// Run the full sweep and persist report.csv, summary.csv, report.json, and
/// a config snapshot under `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    let s = cfg.schedule()?;
    std::fs::create_dir_all(out_dir)?;
    let config_hash = io::config_hash(cfg)?;
    io::save_json(&out_dir.join("config_snapshot.json"), cfg)?;

    let world = build_world(cfg, &s, out_dir)?;
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    // per (method, class): generated samples pooled across queries
    let mut generated: BTreeMap<(Method, usize), Vec<Vec<f64>>> = BTreeMap::new();

    for task in &world.tasks {
        for (qi, x_q) in task.queries.iter().enumerate() {
            let query_seed = rng::derive_seed(cfg.seed, &[task.class_id as u64, qi as u64]);
            let query_dir = out_dir
                .join("classes")
                .join(format!("class{:03}", task.class_id))
                .join(format!("q{qi:02}"));

            // shared teacher for poe/lora
            let needs_teacher =
                cfg.methods.contains(&Method::Poe) || cfg.methods.contains(&Method::Lora);
            let teacher = if needs_teacher {
                let acfg = cfg
                    .discovery
                    .to_ascent_config(x_q.len(), rng::derive_seed(query_seed, &[0x6469]));
                match discover_prototypes(&world.backbone, x_q, &acfg, &s) {
                    Ok(pool) => {
                        if let Err(e) = io::save_prototypes(&query_dir.join("prototypes.json"), &pool)
                        {
                            failures.push(format!(
                                "class {} query {qi}: saving prototypes: {e}",
                                task.class_id
                            ));
                        }
                        match compose_teacher(&pool, x_q, cfg.composition.k, cfg.composition.tau) {
                            Ok((teacher, selection)) => {
                                if let Err(e) = io::save_teacher(
                                    &query_dir.join("teacher.json"),
                                    &teacher,
                                    &selection,
                                ) {
                                    failures.push(format!(
                                        "class {} query {qi}: saving teacher: {e}",
                                        task.class_id
                                    ));
                                }
                                Some(teacher)
                            }
                            Err(e) => {
                                failures.push(format!(
                                    "class {} query {qi}: composition: {e}",
                                    task.class_id
                                ));
                                None
                            }
                        }
                    }
                    Err(e) => {
                        failures.push(format!(
                            "class {} query {qi}: discovery: {e}",
                            task.class_id
                        ));
                        None
                    }
                }
            } else {
                None
            };

            for &method in &cfg.methods {
                let mut gcfg = GuidanceConfig::new(
                    cfg.guidance.n_gen,
                    rng::derive_seed(query_seed, &[method as u64, 0x6765]),
                );
                gcfg.w0 = cfg.guidance.w0;
                gcfg.w_max = cfg.guidance.w_max;
                gcfg.schedule_mode = cfg.guidance.schedule_mode;
                gcfg.ddim_steps = cfg.guidance.ddim_steps;
                gcfg.x0_clip = cfg.guidance.x0_clip;
                match run_method_for_query(
                    method,
                    &world,
                    teacher.as_ref(),
                    x_q,
                    cfg,
                    &s,
                    &gcfg,
                    query_seed,
                    &query_dir,
                ) {
                    Ok(samples) => {
                        let pool_dir = out_dir
                            .join("samples")
                            .join(method.to_string())
                            .join(format!("class{:03}", task.class_id))
                            .join(format!("q{qi:02}"));
                        if let Err(e) = io::save_sample_pool(
                            &pool_dir,
                            &samples,
                            &method.to_string(),
                            task.class_id,
                            &format!("q{qi:02}"),
                            gcfg.seed,
                            &config_hash,
                            world.image_resolution,
                        ) {
                            failures.push(format!(
                                "class {} query {qi} {method}: saving samples: {e}",
                                task.class_id
                            ));
                        }
                        generated
                            .entry((method, task.class_id))
                            .or_default()
                            .extend(samples);
                    }
                    Err(e) => failures.push(format!(
                        "class {} query {qi} {method}: {e}",
                        task.class_id
                    )),
                }
            }
        }
    }

    // evaluate per (method, class, role)
    for task in &world.tasks {
        for &method in &cfg.methods {
            let Some(samples) = generated.get(&(method, task.class_id)) else {
                continue;
            };
            if samples.is_empty() {
                continue;
            }
            let gen_set = FeatureSet {
                vectors: samples.clone(),
                class_id: Some(task.class_id),
                role: SetRole::Generated,
            };
            for (role, reference) in [
                (SetRole::FaithfulnessRef, &task.faithfulness),
                (SetRole::GeneralizationRef, &task.generalization),
            ] {
                let result: Result<MetricRow> = (|| {
                    let pr = knn_precision_recall(&gen_set, reference, cfg.knn_k)?;
                    let fd = frechet_gaussian(&gen_set, reference)?;
                    Ok(MetricRow {
                        dataset: cfg.dataset.clone(),
                        method,
                        class_id: task.class_id,
                        reference_role: role,
                        fd,
                        precision: pr.precision,
                        recall: pr.recall,
                        f1: f1(pr.precision, pr.recall),
                        n_gen: gen_set.len(),
                        n_ref: reference.len(),
                        seed: cfg.seed,
                    })
                })();
                match result {
                    Ok(row) => rows.push(row),
                    Err(e) => failures.push(format!(
                        "class {} {method} {role}: metrics: {e}",
                        task.class_id
                    )),
                }
            }
        }
    }

    rows.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.class_id.cmp(&b.class_id))
            .then(a.reference_role.to_string().cmp(&b.reference_role.to_string()))
    });

    // summary across classes
    let mut summary = Vec::new();
    for &method in &cfg.methods {
        for role in [SetRole::FaithfulnessRef, SetRole::GeneralizationRef] {
            let per_class: Vec<&MetricRow> = rows
                .iter()
                .filter(|r| r.method == method && r.reference_role == role)
                .collect();
            if per_class.is_empty() {
                continue;
            }
            let (fd_mean, fd_se) = mean_se(&per_class.iter().map(|r| r.fd).collect::<Vec<_>>());
            let (p_mean, p_se) =
                mean_se(&per_class.iter().map(|r| r.precision).collect::<Vec<_>>());
            let (r_mean, r_se) = mean_se(&per_class.iter().map(|r| r.recall).collect::<Vec<_>>());
            let (f_mean, f_se) = mean_se(&per_class.iter().map(|r| r.f1).collect::<Vec<_>>());
            summary.push(SummaryRow {
                method,
                reference_role: role,
                n_classes: per_class.len(),
                fd_mean,
                fd_se,
                precision_mean: p_mean,
                precision_se: p_se,
                recall_mean: r_mean,
                recall_se: r_se,
                f1_mean: f_mean,
                f1_se: f_se,
            });
        }
    }

    failures.sort();
    let report = ExperimentReport { config_hash, rows, summary, failures };
    io::write_atomic(&out_dir.join("report.csv"), &report_csv(&report.rows))?;
    io::write_atomic(&out_dir.join("summary.csv"), &summary_csv(&report.summary))?;
    io::save_json(&out_dir.join("report.json"), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke_config(seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            version: 1,
            dataset: "gmm-smoke".into(),
            benchmark: BenchmarkChoice::Gmm2d(Gmm2dSpec::separated_modes(3, 6.0, 0.05, 11)),
            backbone: BackboneSource::Oracle,
            t_count: 1000,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
            discovery: DiscoverySettings {
                t_start: 100,
                t_end: 300,
                t_step: 100,
                n_per_t: 12,
                n_iters: 200,
                ..DiscoverySettings::default()
            },
            composition: CompositionSettings::default(),
            guidance: GuidanceSettings { ddim_steps: 25, n_gen: 12, ..GuidanceSettings::default() },
            baselines: BaselineSettings { n_eps: 2, t_eval_count: 4, ..BaselineSettings::default() },
            distill: DistillSettings::default(),
            methods: vec![Method::QueryOnly],
            queries_per_class: 4,
            n_ref: 8,
            knn_k: 3,
            gmm_samples_per_component: 40,
            seed,
        }
    }

    fn tmpdir(tag: &str) -> std::path::PathBuf {
        let dir =
            std::env::temp_dir().join(format!("modepoe-exp-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        dir
    }

    #[test]
    fn smoke_query_only_on_oracle_world() {
        let cfg = smoke_config(5);
        let dir = tmpdir("smoke");
        let report = run_experiment(&cfg, &dir).unwrap();
        assert!(report.failures.is_empty(), "{:?}", report.failures);
        // 1 method x 3 classes x 2 roles
        assert_eq!(report.rows.len(), 6);
        for class in 0..3 {
            for role in [SetRole::FaithfulnessRef, SetRole::GeneralizationRef] {
                assert!(report
                    .rows
                    .iter()
                    .any(|r| r.class_id == class && r.reference_role == role));
            }
        }
        assert!(dir.join("report.csv").exists());
        assert!(dir.join("summary.csv").exists());
        assert!(dir.join("config_snapshot.json").exists());
    }

    #[test]
    fn rerun_and_snapshot_reproduce_csv_bytes() {
        let cfg = smoke_config(7);
        let dir_a = tmpdir("rerun-a");
        let dir_b = tmpdir("rerun-b");
        run_experiment(&cfg, &dir_a).unwrap();
        // parse the emitted snapshot and rerun from it
        let parsed: ExperimentConfig =
            io::load_json(&dir_a.join("config_snapshot.json")).unwrap();
        assert_eq!(parsed, cfg);
        run_experiment(&parsed, &dir_b).unwrap();
        let a = std::fs::read(dir_a.join("report.csv")).unwrap();
        let b = std::fs::read(dir_b.join("report.csv")).unwrap();
        assert_eq!(a, b);
        let a = std::fs::read(dir_a.join("summary.csv")).unwrap();
        let b = std::fs::read(dir_b.join("summary.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lora_on_oracle_backbone_is_rejected() {
        let mut cfg = smoke_config(5);
        cfg.methods = vec![Method::Lora];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn empty_method_list_rejected() {
        let mut cfg = smoke_config(5);
        cfg.methods.clear();
        assert!(cfg.validate().is_err());
    }
}
