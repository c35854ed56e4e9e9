use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index;
use rayon::prelude::*;

use super::config::{DataSource, SweepConfig};
use crate::bound::{
    evaluate_bound, evaluate_with_hessian, hessian_diag, spectral_norm_product, BoundConfig,
    DEtaVariant, PriorMean, DEFAULT_MAX_ITERS, DEFAULT_TOL,
};
use crate::dataset::{
    balanced_subsample, load_cifar10_bin, load_mnist_idx, make_synthetic, randomize_labels,
    LabeledDataset, Normalization, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::network::{read_checkpoint, write_checkpoint, MlpParams};
use crate::rng::{derive_seed, seeded};
use crate::trainer::{train, zero_one_error, Init, TrainConfig};

type Dataset = LabeledDataset<f64>;

const STREAM_DATA: u64 = 1;
const STREAM_TEST: u64 = 2;
const STREAM_LABELS: u64 = 3;
const STREAM_TRAIN: u64 = 4;

/// Training and held-out data for one run.
#[derive(Debug, Clone)]
pub struct RunData {
    pub train: Dataset,
    pub test: Dataset,
}

enum Pool {
    Synthetic,
    Files {
        train: Dataset,
        test: Option<Dataset>,
    },
}

impl Pool {
    fn load(source: &DataSource) -> Result<Self> {
        Ok(match source {
            DataSource::Synthetic { .. } => Pool::Synthetic,
            DataSource::Mnist {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => {
                let train = load_mnist_idx(train_images, train_labels)?;
                let test = match (test_images, test_labels) {
                    (Some(i), Some(l)) => Some(load_mnist_idx(i, l)?),
                    (None, None) => None,
                    _ => {
                        return Err(Error::arg(
                            "MNIST test images and labels must be given together",
                        ))
                    }
                };
                Pool::Files { train, test }
            }
            DataSource::Cifar { train, test } => {
                let tr = load_cifar10_bin(train)?;
                let te = if test.is_empty() {
                    None
                } else {
                    Some(load_cifar10_bin(test)?)
                };
                Pool::Files {
                    train: tr,
                    test: te,
                }
            }
        })
    }
}

fn run_seed(seed: u64, n: usize) -> u64 {
    derive_seed(seed, n as u64)
}

/// Synthetic draw with class sizes `⌊m/k⌋ + [c < m mod k]`.
fn synthetic_sample(source: &DataSource, m: usize, seed: u64) -> Result<Dataset> {
    let DataSource::Synthetic {
        num_classes,
        dim,
        separation,
        noise,
        ..
    } = *source
    else {
        unreachable!("synthetic pool")
    };
    let per_class = m.div_ceil(num_classes);
    let ds: Dataset = make_synthetic(&SyntheticSpec {
        num_classes,
        dim,
        samples_per_class: per_class,
        cluster_separation: separation,
        noise_std: noise,
        seed,
    })?;
    let rows: Vec<usize> = (0..num_classes)
        .flat_map(|c| {
            let count = m / num_classes + usize::from(c < m % num_classes);
            (0..count).map(move |j| c * per_class + j)
        })
        .collect();
    ds.select(&rows)
}

/// `per_class` rows of each class avoiding `excluded`, sorted.
fn pick_balanced(
    ds: &Dataset,
    per_class: usize,
    excluded: &HashSet<usize>,
    seed: u64,
) -> Result<Vec<usize>> {
    let mut rng = seeded(seed);
    let mut rows = Vec::new();
    for (c, members) in ds.class_members().iter().enumerate() {
        let free: Vec<usize> = members
            .iter()
            .copied()
            .filter(|r| !excluded.contains(r))
            .collect();
        if free.len() < per_class {
            return Err(Error::arg(format!(
                "class {c} has {} free rows, {per_class} requested",
                free.len()
            )));
        }
        rows.extend(
            index::sample(&mut rng, free.len(), per_class)
                .into_iter()
                .map(|j| free[j]),
        );
    }
    rows.sort_unstable();
    Ok(rows)
}

fn run_data(cfg: &SweepConfig, pool: &Pool, n: usize, r: f64, seed: u64) -> Result<RunData> {
    let base = run_seed(seed, n);
    let (clean, test) = match pool {
        Pool::Synthetic => {
            let DataSource::Synthetic { seed: src, .. } = cfg.source else {
                unreachable!()
            };
            let train = synthetic_sample(&cfg.source, n, derive_seed(src ^ base, STREAM_DATA))?;
            let test = synthetic_sample(
                &cfg.source,
                cfg.test_size,
                derive_seed(src ^ seed, STREAM_TEST),
            )?;
            (train, test)
        }
        Pool::Files { train, test } => {
            let k = train.num_classes();
            let test_n = cfg.test_size - cfg.test_size % k;
            if test_n == 0 {
                return Err(Error::arg(format!("test size must be at least {k}")));
            }
            match test {
                Some(t) => (
                    balanced_subsample(train, n, derive_seed(base, STREAM_DATA))?,
                    balanced_subsample(t, test_n, derive_seed(seed, STREAM_TEST))?,
                ),
                None => {
                    if !n.is_multiple_of(k) {
                        return Err(Error::arg(format!(
                            "subsample size {n} is not a positive multiple of {k} classes"
                        )));
                    }
                    let tr = pick_balanced(
                        train,
                        n / k,
                        &HashSet::new(),
                        derive_seed(base, STREAM_DATA),
                    )?;
                    let used: HashSet<usize> = tr.iter().copied().collect();
                    let te =
                        pick_balanced(train, test_n / k, &used, derive_seed(base, STREAM_TEST))?;
                    (train.select(&tr)?, train.select(&te)?)
                }
            }
        }
    };
    let noisy = randomize_labels(
        &clean,
        r,
        derive_seed(base, STREAM_LABELS ^ (r.to_bits() << 8)),
    )?;
    if cfg.normalize {
        let norm = Normalization::fit(&noisy)?;
        Ok(RunData {
            train: norm.apply(&noisy),
            test: norm.apply(&test),
        })
    } else {
        Ok(RunData { train: noisy, test })
    }
}

/// Exposes the data of one run, e.g. for inspection from the command line.
pub fn load_run_source(cfg: &SweepConfig, n: usize, r: f64, seed: u64) -> Result<RunData> {
    run_data(cfg, &Pool::load(&cfg.source)?, n, r, seed)
}

fn train_config(cfg: &SweepConfig, n: usize, seed: u64) -> TrainConfig<f64> {
    TrainConfig {
        seed: derive_seed(run_seed(seed, n), STREAM_TRAIN),
        ..cfg.train.clone()
    }
}

/// Initial weights of a run, reproduced from its training seed.
fn initial_params(widths: &[usize], tc: &TrainConfig<f64>) -> Result<MlpParams<f64>> {
    MlpParams::gaussian(widths, tc.init_scale, &mut seeded(tc.seed))
}

fn bound_config(cfg: &SweepConfig, initial: &MlpParams<f64>) -> BoundConfig<f64> {
    let mut b = cfg.bound.clone();
    b.prior_mean = if cfg.prior_at_init {
        PriorMean::Vector(initial.flatten())
    } else {
        PriorMean::Zero
    };
    if let DEtaVariant::MultiClassSmooth { .. } = b.d_eta {
        b.d_eta = DEtaVariant::MultiClassSmooth {
            num_classes: cfg.source.num_classes(),
        };
    }
    b
}

/// One CSV row of a sweep. Metrics of failed runs are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub n: usize,
    pub r: f64,
    pub seed: u64,
    pub status: String,
    pub train_error: f64,
    pub test_error: f64,
    pub p: usize,
    pub gamma: f64,
    pub sigma2: f64,
    pub eta: f64,
    pub delta: f64,
    pub margin_loss: f64,
    pub p_tilde: usize,
    pub effective_curvature: f64,
    pub l2_term: f64,
    pub kl_exact: f64,
    pub tail_term: f64,
    pub confidence_term: f64,
    pub total: f64,
    /// `‖θ†‖²`.
    pub l2_sq: f64,
    /// `‖θ† − θ0‖²` with `θ0` the prior mean.
    pub dist_sq: f64,
    pub spec_prod: f64,
    /// `a_η · margin_loss`.
    pub empirical_component: f64,
    /// `b_η/(2n) · KL`, the per-sample-scaled KL term.
    pub kl_component: f64,
}

pub const RESULTS_HEADER: &str = "n,r,seed,status,train_error,test_error,p,gamma,sigma2,eta,delta,margin_loss,p_tilde,effective_curvature,l2_term,kl_exact,tail_term,confidence_term,total,l2_sq,dist_sq,spec_prod,empirical_component,kl_component";

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

impl RunRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    fn failed(n: usize, r: f64, seed: u64, err: &Error) -> Self {
        let msg: String = err
            .to_string()
            .chars()
            .map(|c| {
                if c == ',' || c == '\n' || c == '\r' {
                    ';'
                } else {
                    c
                }
            })
            .collect();
        let nan = f64::NAN;
        Self {
            n,
            r,
            seed,
            status: format!("failed: {msg}"),
            train_error: nan,
            test_error: nan,
            p: 0,
            gamma: nan,
            sigma2: nan,
            eta: nan,
            delta: nan,
            margin_loss: nan,
            p_tilde: 0,
            effective_curvature: nan,
            l2_term: nan,
            kl_exact: nan,
            tail_term: nan,
            confidence_term: nan,
            total: nan,
            l2_sq: nan,
            dist_sq: nan,
            spec_prod: nan,
            empirical_component: nan,
            kl_component: nan,
        }
    }

    pub fn to_csv(&self) -> String {
        [
            self.n.to_string(),
            self.r.to_string(),
            self.seed.to_string(),
            self.status.clone(),
            num(self.train_error),
            num(self.test_error),
            self.p.to_string(),
            num(self.gamma),
            num(self.sigma2),
            num(self.eta),
            num(self.delta),
            num(self.margin_loss),
            self.p_tilde.to_string(),
            num(self.effective_curvature),
            num(self.l2_term),
            num(self.kl_exact),
            num(self.tail_term),
            num(self.confidence_term),
            num(self.total),
            num(self.l2_sq),
            num(self.dist_sq),
            num(self.spec_prod),
            num(self.empirical_component),
            num(self.kl_component),
        ]
        .join(",")
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 24 {
            return Err(Error::Format(format!(
                "result row has {} fields, expected 24",
                f.len()
            )));
        }
        let float = |i: usize| -> Result<f64> {
            if f[i].is_empty() {
                Ok(f64::NAN)
            } else {
                f[i].parse()
                    .map_err(|_| Error::Format(format!("bad number `{}`", f[i])))
            }
        };
        let int = |i: usize| -> Result<usize> {
            f[i].parse()
                .map_err(|_| Error::Format(format!("bad integer `{}`", f[i])))
        };
        Ok(Self {
            n: int(0)?,
            r: float(1)?,
            seed: f[2]
                .parse()
                .map_err(|_| Error::Format(format!("bad seed `{}`", f[2])))?,
            status: f[3].to_string(),
            train_error: float(4)?,
            test_error: float(5)?,
            p: int(6)?,
            gamma: float(7)?,
            sigma2: float(8)?,
            eta: float(9)?,
            delta: float(10)?,
            margin_loss: float(11)?,
            p_tilde: int(12)?,
            effective_curvature: float(13)?,
            l2_term: float(14)?,
            kl_exact: float(15)?,
            tail_term: float(16)?,
            confidence_term: float(17)?,
            total: float(18)?,
            l2_sq: float(19)?,
            dist_sq: float(20)?,
            spec_prod: float(21)?,
            empirical_component: float(22)?,
            kl_component: float(23)?,
        })
    }

    /// Sum of the stored bound components.
    pub fn recomputed_total(&self) -> f64 {
        self.empirical_component + self.kl_component + self.tail_term + self.confidence_term
    }
}

fn train_run(
    cfg: &SweepConfig,
    pool: &Pool,
    n: usize,
    r: f64,
    seed: u64,
) -> Result<(RunRow, MlpParams<f64>)> {
    let data = run_data(cfg, pool, n, r, seed)?;
    let widths = cfg.widths(data.train.dim());
    let tc = train_config(cfg, n, seed);
    let out = train(Init::Random { widths }, &data.train, &tc)?;
    let row = score_run(cfg, &data, n, r, seed, &out.params, &out.initial)?;
    Ok((row, out.params))
}

fn score_run(
    cfg: &SweepConfig,
    data: &RunData,
    n: usize,
    r: f64,
    seed: u64,
    params: &MlpParams<f64>,
    initial: &MlpParams<f64>,
) -> Result<RunRow> {
    let bc = bound_config(cfg, initial);
    let rep = evaluate_bound(params, &data.train, &bc)?;
    let theta = params.flatten();
    let theta0 = match &bc.prior_mean {
        PriorMean::Zero => vec![0.0; theta.len()],
        PriorMean::Vector(v) => v.clone(),
    };
    let dist_sq = theta
        .iter()
        .zip(&theta0)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(RunRow {
        n,
        r,
        seed,
        status: "ok".into(),
        train_error: zero_one_error(params, &data.train),
        test_error: zero_one_error(params, &data.test),
        p: rep.p,
        gamma: rep.gamma,
        sigma2: rep.sigma2,
        eta: rep.eta,
        delta: rep.delta,
        margin_loss: rep.margin_loss,
        p_tilde: rep.p_tilde,
        effective_curvature: rep.effective_curvature,
        l2_term: rep.l2_term,
        kl_exact: rep.kl_exact,
        tail_term: rep.tail_value(),
        confidence_term: rep.confidence_term,
        total: rep.total,
        l2_sq: params.l2_norm_sq(),
        dist_sq,
        spec_prod: spectral_norm_product(params, DEFAULT_MAX_ITERS, DEFAULT_TOL).value,
        empirical_component: rep.empirical_component(),
        kl_component: rep.kl_component(),
    })
}

fn run_key(n: usize, r: f64, seed: u64) -> String {
    format!("n{n}_r{r}_s{seed}")
}

struct RunFiles {
    row: PathBuf,
    ckpt: PathBuf,
    time: PathBuf,
}

fn run_files(dir: &Path, n: usize, r: f64, seed: u64) -> RunFiles {
    let key = run_key(n, r, seed);
    RunFiles {
        row: dir.join(format!("{key}.row")),
        ckpt: dir.join(format!("{key}.ckpt")),
        time: dir.join(format!("{key}.time")),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Keys whose values change the outcome of an individual run.
fn fingerprint(cfg: &SweepConfig) -> String {
    let mut s = String::new();
    for (k, v) in cfg.to_key_values() {
        if !matches!(k.as_str(), "n" | "r" | "repeats" | "sigma2_grid" | "out") {
            let _ = writeln!(s, "{k} = {v}");
        }
    }
    s
}

/// Prepares `out/runs`, refusing to mix runs from a different configuration.
fn prepare_out(cfg: &SweepConfig) -> Result<Option<PathBuf>> {
    let Some(out) = &cfg.out_dir else {
        return Ok(None);
    };
    let runs = out.join("runs");
    create_dir(&runs)?;
    let fp_path = runs.join("fingerprint.txt");
    let fp = fingerprint(cfg);
    if fp_path.exists() {
        if read_file(&fp_path)? != fp {
            return Err(Error::arg(format!(
                "{} holds runs from a different configuration",
                runs.display()
            )));
        }
    } else {
        write_file(&fp_path, &fp)?;
    }
    write_file(&out.join("config.txt"), cfg.to_text())?;
    Ok(Some(runs))
}

fn execute(
    cfg: &SweepConfig,
    pool: &Pool,
    runs: Option<&Path>,
    n: usize,
    r: f64,
    seed: u64,
) -> (RunRow, f64) {
    if let Some(dir) = runs {
        let files = run_files(dir, n, r, seed);
        if files.row.exists() && files.ckpt.exists() {
            if let Ok(row) = read_file(&files.row).and_then(|t| RunRow::from_csv(&t)) {
                let secs = read_file(&files.time)
                    .ok()
                    .and_then(|t| t.trim().parse().ok())
                    .unwrap_or(f64::NAN);
                return (row, secs);
            }
        }
    }
    let start = Instant::now();
    let result = train_run(cfg, pool, n, r, seed);
    let secs = start.elapsed().as_secs_f64();
    match result {
        Ok((row, params)) => {
            if let Some(dir) = runs {
                let files = run_files(dir, n, r, seed);
                let saved = write_checkpoint(&params, &files.ckpt)
                    .and_then(|_| write_file(&files.time, format!("{secs}\n")))
                    .and_then(|_| write_file(&files.row, format!("{}\n", row.to_csv())));
                if let Err(e) = saved {
                    return (RunRow::failed(n, r, seed, &e), secs);
                }
            }
            (row, secs)
        }
        Err(e) => (RunRow::failed(n, r, seed, &e), secs),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Sorted by `(r, n, seed)`.
    pub rows: Vec<RunRow>,
    /// Wall time per row, same order; kept out of the results CSV so that it
    /// stays reproducible.
    pub wall_secs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub n: usize,
    pub r: f64,
    pub count: usize,
    pub failed: usize,
    /// `(metric, mean, std)` over successful runs; sample std, 0 for one run.
    pub stats: Vec<(&'static str, f64, f64)>,
}

impl SummaryRow {
    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.stats.iter().find(|s| s.0 == metric).map(|s| s.1)
    }

    pub fn std(&self, metric: &str) -> Option<f64> {
        self.stats.iter().find(|s| s.0 == metric).map(|s| s.2)
    }
}

type Metric = (&'static str, fn(&RunRow) -> f64);

const SUMMARY_METRICS: [Metric; 11] = [
    ("total", |r| r.total),
    ("test_error", |r| r.test_error),
    ("train_error", |r| r.train_error),
    ("margin_loss", |r| r.margin_loss),
    ("effective_curvature", |r| r.effective_curvature),
    ("l2_term", |r| r.l2_term),
    ("kl_exact", |r| r.kl_exact),
    ("kl_component", |r| r.kl_component),
    ("l2_sq", |r| r.l2_sq),
    ("dist_sq", |r| r.dist_sq),
    ("spec_prod", |r| r.spec_prod),
];

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    if v.len() == 1 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var.sqrt())
}

/// Means and standard deviations over seeds for each `(n, r)` point.
pub fn summarize(rows: &[RunRow]) -> Vec<SummaryRow> {
    let mut points: Vec<(usize, f64)> = Vec::new();
    for row in rows {
        if !points.iter().any(|&(n, r)| n == row.n && r == row.r) {
            points.push((row.n, row.r));
        }
    }
    points.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    points
        .into_iter()
        .map(|(n, r)| {
            let group: Vec<&RunRow> = rows.iter().filter(|x| x.n == n && x.r == r).collect();
            let good: Vec<&RunRow> = group.iter().copied().filter(|x| x.ok()).collect();
            let stats = SUMMARY_METRICS
                .iter()
                .map(|&(name, get)| {
                    let vals: Vec<f64> = good.iter().map(|x| get(x)).collect();
                    let (m, s) = mean_std(&vals);
                    (name, m, s)
                })
                .collect();
            SummaryRow {
                n,
                r,
                count: group.len(),
                failed: group.len() - good.len(),
                stats,
            }
        })
        .collect()
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{RESULTS_HEADER}\n");
        for row in &self.rows {
            s.push_str(&row.to_csv());
            s.push('\n');
        }
        s
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        summarize(&self.rows)
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("n,r,count,failed");
        for (name, _) in SUMMARY_METRICS {
            let _ = write!(s, ",mean_{name},std_{name}");
        }
        s.push('\n');
        for row in self.summary() {
            let _ = write!(s, "{},{},{},{}", row.n, row.r, row.count, row.failed);
            for (_, m, sd) in &row.stats {
                let _ = write!(s, ",{},{}", num(*m), num(*sd));
            }
            s.push('\n');
        }
        s
    }

    pub fn timings_csv(&self) -> String {
        let mut s = String::from("n,r,seed,wall_secs\n");
        for (row, t) in self.rows.iter().zip(&self.wall_secs) {
            let _ = writeln!(s, "{},{},{},{}", row.n, row.r, row.seed, num(*t));
        }
        s
    }

    /// Mean of `metric` over successful runs at `(n, r)`.
    pub fn mean(&self, n: usize, r: f64, metric: &str) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|s| s.n == n && s.r == r)?
            .mean(metric)
    }

    fn write(&self, out: &Path, stem: &str) -> Result<()> {
        write_file(&out.join(format!("{stem}.csv")), self.to_csv())?;
        write_file(&out.join(format!("{stem}_summary.csv")), self.summary_csv())?;
        write_file(&out.join(format!("{stem}_timings.csv")), self.timings_csv())
    }
}

fn run_grid(cfg: &SweepConfig, points: &[(usize, f64)]) -> Result<SweepResult> {
    cfg.validate()?;
    let pool = Pool::load(&cfg.source)?;
    let runs = prepare_out(cfg)?;
    let jobs: Vec<(usize, f64, u64)> = points
        .iter()
        .flat_map(|&(n, r)| cfg.seeds().into_iter().map(move |s| (n, r, s)))
        .collect();
    let mut done: Vec<(RunRow, f64)> = jobs
        .par_iter()
        .map(|&(n, r, s)| execute(cfg, &pool, runs.as_deref(), n, r, s))
        .collect();
    done.sort_by(|a, b| {
        a.0.r
            .total_cmp(&b.0.r)
            .then(a.0.n.cmp(&b.0.n))
            .then(a.0.seed.cmp(&b.0.seed))
    });
    let (rows, wall_secs) = done.into_iter().unzip();
    Ok(SweepResult { rows, wall_secs })
}

fn dedup_sorted_f64(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

fn dedup_sorted_usize(v: &[usize]) -> Vec<usize> {
    let mut out = v.to_vec();
    out.sort_unstable();
    out.dedup();
    out
}

/// Every `(n, r)` of the grids × seeds; writes `random_labels*.csv` when an
/// output directory is set.
pub fn sweep_random_labels(cfg: &SweepConfig) -> Result<SweepResult> {
    let points: Vec<(usize, f64)> = dedup_sorted_f64(&cfg.r_grid)
        .into_iter()
        .flat_map(|r| {
            dedup_sorted_usize(&cfg.n_grid)
                .into_iter()
                .map(move |n| (n, r))
        })
        .collect();
    let res = run_grid(cfg, &points)?;
    if let Some(out) = &cfg.out_dir {
        res.write(out, "random_labels")?;
    }
    Ok(res)
}

/// Every `n` of the grid at `r = 0`; writes `sample_size*.csv` and `norms.csv`.
pub fn sweep_sample_size(cfg: &SweepConfig) -> Result<SweepResult> {
    let points: Vec<(usize, f64)> = dedup_sorted_usize(&cfg.n_grid)
        .into_iter()
        .map(|n| (n, 0.0))
        .collect();
    let res = run_grid(cfg, &points)?;
    if let Some(out) = &cfg.out_dir {
        res.write(out, "sample_size")?;
        write_norms_csv(&compare_norms(&res), &out.join("norms.csv"))?;
    }
    Ok(res)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormRow {
    pub n: usize,
    pub seed: u64,
    pub l2_sq: f64,
    pub spec_prod: f64,
    pub l2_sq_per_n: f64,
    pub spec_prod_per_n: f64,
}

pub const NORMS_HEADER: &str = "n,seed,l2_sq,spec_prod,l2_sq_per_n,spec_prod_per_n";

/// `‖θ†‖²` and `Π‖W_h‖₂`, raw and divided by `n`, for each successful run.
pub fn compare_norms(res: &SweepResult) -> Vec<NormRow> {
    res.rows
        .iter()
        .filter(|r| r.ok())
        .map(|r| NormRow {
            n: r.n,
            seed: r.seed,
            l2_sq: r.l2_sq,
            spec_prod: r.spec_prod,
            l2_sq_per_n: r.l2_sq / r.n as f64,
            spec_prod_per_n: r.spec_prod / r.n as f64,
        })
        .collect()
}

pub fn write_norms_csv(rows: &[NormRow], path: &Path) -> Result<()> {
    let mut s = format!("{NORMS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.n, r.seed, r.l2_sq, r.spec_prod, r.l2_sq_per_n, r.spec_prod_per_n
        );
    }
    write_file(path, s)
}

/// Ratios `mean(·)(n_hi) / mean(·)(n_lo)` for `‖θ†‖²` and the spectral product.
pub fn norm_growth(rows: &[NormRow], n_lo: usize, n_hi: usize) -> Option<(f64, f64)> {
    let mean = |n: usize, get: fn(&NormRow) -> f64| {
        let v: Vec<f64> = rows.iter().filter(|r| r.n == n).map(get).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    Some((
        mean(n_hi, |r| r.l2_sq)? / mean(n_lo, |r| r.l2_sq)?,
        mean(n_hi, |r| r.spec_prod)? / mean(n_lo, |r| r.spec_prod)?,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaRow {
    pub seed: u64,
    pub sigma2: f64,
    pub margin_loss: f64,
    pub p_tilde: usize,
    pub effective_curvature: f64,
    pub l2_term: f64,
    pub kl_exact: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSweep {
    /// Sorted by seed, then σ².
    pub rows: Vec<SigmaRow>,
    /// `(σ², mean total, std total)` per grid point.
    pub means: Vec<(f64, f64, f64)>,
    pub argmin_sigma2: f64,
    /// The minimizing σ² is strictly inside the grid.
    pub u_shaped: bool,
}

impl SigmaSweep {
    pub const CSV_HEADER: &'static str =
        "seed,sigma2,margin_loss,p_tilde,effective_curvature,l2_term,kl_exact,total";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.seed,
                r.sigma2,
                r.margin_loss,
                r.p_tilde,
                r.effective_curvature,
                r.l2_term,
                r.kl_exact,
                r.total
            );
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("sigma2,mean_total,std_total,is_argmin\n");
        for &(s2, m, sd) in &self.means {
            let _ = writeln!(s, "{s2},{m},{sd},{}", s2 == self.argmin_sigma2);
        }
        s
    }
}

/// Re-evaluates the bound across the σ² grid on one network per seed
/// (trained at the first `n` and `r` of the config, or loaded from a
/// checkpoint of an earlier sweep in the same output directory).
pub fn sweep_sigma(cfg: &SweepConfig) -> Result<SigmaSweep> {
    cfg.validate()?;
    let grid = dedup_sorted_f64(&cfg.sigma2_grid);
    if grid.is_empty() || grid.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::arg("sigma2 grid must be non-empty and positive"));
    }
    let (n, r) = (cfg.n_grid[0], cfg.r_grid[0]);
    let pool = Pool::load(&cfg.source)?;
    let runs = prepare_out(cfg)?;
    let per_seed: Vec<Result<Vec<SigmaRow>>> = cfg
        .seeds()
        .par_iter()
        .map(|&seed| {
            let data = run_data(cfg, &pool, n, r, seed)?;
            let widths = cfg.widths(data.train.dim());
            let tc = train_config(cfg, n, seed);
            let initial = initial_params(&widths, &tc)?;
            let ckpt = runs.as_deref().map(|d| run_files(d, n, r, seed).ckpt);
            let params = match &ckpt {
                Some(p) if p.exists() => read_checkpoint(p)?,
                _ => {
                    let out = train(
                        Init::Random {
                            widths: widths.clone(),
                        },
                        &data.train,
                        &tc,
                    )?;
                    debug_assert_eq!(out.initial, initial);
                    if let Some(p) = &ckpt {
                        write_checkpoint(&out.params, p)?;
                    }
                    out.params
                }
            };
            let hdiag = hessian_diag(&params, &data.train);
            let base = bound_config(cfg, &initial);
            grid.iter()
                .map(|&sigma2| {
                    let rep = evaluate_with_hessian(
                        &params,
                        &data.train,
                        &BoundConfig {
                            sigma2,
                            ..base.clone()
                        },
                        &hdiag,
                    )?;
                    Ok(SigmaRow {
                        seed,
                        sigma2,
                        margin_loss: rep.margin_loss,
                        p_tilde: rep.p_tilde,
                        effective_curvature: rep.effective_curvature,
                        l2_term: rep.l2_term,
                        kl_exact: rep.kl_exact,
                        total: rep.total,
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_seed {
        rows.extend(r?);
    }
    let means: Vec<(f64, f64, f64)> = grid
        .iter()
        .map(|&s2| {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.sigma2 == s2)
                .map(|r| r.total)
                .collect();
            let (m, sd) = mean_std(&v);
            (s2, m, sd)
        })
        .collect();
    let best = means
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let out = SigmaSweep {
        rows,
        argmin_sigma2: means[best].0,
        u_shaped: best > 0 && best + 1 < means.len(),
        means,
    };
    if let Some(dir) = &cfg.out_dir {
        write_file(&dir.join("sigma.csv"), out.to_csv())?;
        write_file(&dir.join("sigma_summary.csv"), out.summary_csv())?;
    }
    Ok(out)
}

/// Scores already trained weights on the data of run `(n, r, seed)`. The
/// prior mean is that run's initialization (or zero), as in a sweep.
pub fn score_params(
    cfg: &SweepConfig,
    params: &MlpParams<f64>,
    n: usize,
    r: f64,
    seed: u64,
) -> Result<RunRow> {
    cfg.validate()?;
    let data = run_data(cfg, &Pool::load(&cfg.source)?, n, r, seed)?;
    let widths = cfg.widths(data.train.dim());
    if params.widths() != widths {
        return Err(Error::arg(format!(
            "checkpoint widths {:?} do not match the configured network {widths:?}",
            params.widths()
        )));
    }
    let initial = initial_params(&widths, &train_config(cfg, n, seed))?;
    score_run(cfg, &data, n, r, seed, params, &initial)
}

/// Trains and scores a single run without touching the output directory.
pub fn run_one(cfg: &SweepConfig, n: usize, r: f64, seed: u64) -> Result<(RunRow, MlpParams<f64>)> {
    cfg.validate()?;
    train_run(cfg, &Pool::load(&cfg.source)?, n, r, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SweepConfig {
        let mut cfg = SweepConfig::default();
        cfg.set("synthetic.dim", "4").unwrap();
        cfg.n_grid = vec![30];
        cfg.r_grid = vec![0.5, 0.0];
        cfg.width = 6;
        cfg.repeats = 2;
        cfg.train.epochs = 5;
        cfg.test_size = 60;
        cfg
    }

    #[test]
    fn near_balanced_synthetic() {
        let cfg = SweepConfig::default();
        let ds = synthetic_sample(&cfg.source, 100, 1).unwrap();
        assert_eq!(ds.len(), 100);
        assert_eq!(ds.class_histogram(), vec![34, 33, 33]);
    }

    #[test]
    fn rows_sorted_and_round_trip() {
        let cfg = tiny();
        let res = sweep_random_labels(&cfg).unwrap();
        assert_eq!(res.rows.len(), 4);
        let keys: Vec<(f64, u64)> = res.rows.iter().map(|r| (r.r, r.seed)).collect();
        assert_eq!(keys, vec![(0.0, 0), (0.0, 1), (0.5, 0), (0.5, 1)]);
        for row in &res.rows {
            assert!(row.ok(), "{}", row.status);
            assert_eq!(RunRow::from_csv(&row.to_csv()).unwrap(), *row);
            assert!((row.total - row.recomputed_total()).abs() <= 1e-12);
        }
        let csv = res.to_csv();
        assert!(csv.starts_with(RESULTS_HEADER));
        assert_eq!(csv.lines().count(), 5);
        assert_eq!(res.summary().len(), 2);
    }

    #[test]
    fn failure_rows_keep_the_schema() {
        let row = RunRow::failed(10, 0.0, 3, &Error::NonFiniteGradient { step: 4 });
        let line = row.to_csv();
        assert_eq!(line.split(',').count(), 24);
        let back = RunRow::from_csv(&line).unwrap();
        assert!(!back.ok() && back.total.is_nan());
    }

    #[test]
    fn resumes_from_run_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny();
        cfg.r_grid = vec![0.0];
        cfg.out_dir = Some(dir.path().to_path_buf());
        let first = sweep_random_labels(&cfg).unwrap();
        let row_file = run_files(&dir.path().join("runs"), 30, 0.0, 0).row;
        let stamp = fs::metadata(&row_file).unwrap().modified().unwrap();
        let second = sweep_random_labels(&cfg).unwrap();
        assert_eq!(first.rows, second.rows);
        assert_eq!(fs::metadata(&row_file).unwrap().modified().unwrap(), stamp);
        assert!(dir.path().join("config.txt").exists());

        let mut other = cfg.clone();
        other.width = 7;
        assert!(sweep_random_labels(&other).is_err());
    }

    #[test]
    fn sigma_grid_is_deduplicated() {
        let mut cfg = tiny();
        cfg.repeats = 1;
        cfg.sigma2_grid = vec![10.0, 0.1, 10.0, 1.0];
        let s = sweep_sigma(&cfg).unwrap();
        let grid: Vec<f64> = s.means.iter().map(|m| m.0).collect();
        assert_eq!(grid, vec![0.1, 1.0, 10.0]);
        assert_eq!(s.rows.len(), 3);
        assert!(grid.contains(&s.argmin_sigma2));
    }

    #[test]
    fn norm_rows_and_growth() {
        let res = SweepResult {
            rows: vec![
                RunRow {
                    l2_sq: 2.0,
                    spec_prod: 1.0,
                    ..RunRow {
                        status: "ok".into(),
                        ..RunRow::failed(10, 0.0, 0, &Error::arg("x"))
                    }
                },
                RunRow {
                    l2_sq: 4.0,
                    spec_prod: 4.0,
                    ..RunRow {
                        status: "ok".into(),
                        ..RunRow::failed(100, 0.0, 0, &Error::arg("x"))
                    }
                },
            ],
            wall_secs: vec![0.0, 0.0],
        };
        let rows = compare_norms(&res);
        assert_eq!(rows[1].l2_sq_per_n, 0.04);
        assert_eq!(norm_growth(&rows, 10, 100), Some((2.0, 4.0)));
        assert_eq!(norm_growth(&rows, 10, 1000), None);
    }
}
