use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pacbayes_core::concentration::standard_suite;
use pacbayes_core::experiments::{
    compare_norms, emit_plot, norm_growth, run_one, score_params, sweep_random_labels,
    sweep_sample_size, sweep_sigma, write_norms_csv, PlotKind, RunRow, SweepConfig, SweepResult,
    NORMS_HEADER, RESULTS_HEADER,
};
use pacbayes_core::network::{read_checkpoint, write_checkpoint};

#[derive(Parser)]
#[command(
    name = "pacbayes",
    version,
    about = "Train ReLU networks and evaluate curvature-aware PAC-Bayes bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network (first n and r of the grids) and save its checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Checkpoint path (defaults to <out>/model.ckpt).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate the bound for one run, training first unless a checkpoint is given.
    Bound {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Sweep the label-corruption fraction r.
    SweepRandomLabels {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep the training-set size n at r = 0.
    SweepSampleSize {
        #[command(flatten)]
        common: Common,
    },
    /// Re-evaluate the bound over the sigma^2 grid on one network per seed.
    SweepSigma {
        #[command(flatten)]
        common: Common,
        /// Comma-separated sigma^2 grid.
        #[arg(long)]
        sigma2_grid: Option<String>,
    },
    /// Compare parameter-norm and spectral-norm-product growth across n.
    CompareNorms {
        #[command(flatten)]
        common: Common,
        /// Read runs from an existing results CSV instead of training.
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Monte-Carlo checks of the concentration inequalities.
    ConcCheck {
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for one CSV per check.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render an SVG from a sweep CSV.
    Plot {
        #[arg(long)]
        input: PathBuf,
        /// random-labels, sample-size, sigma or norms.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    /// key = value file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training-set sizes, comma separated.
    #[arg(long)]
    n: Option<String>,
    /// Label-corruption fractions, comma separated.
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Center the prior at zero instead of the initialization.
    #[arg(long)]
    prior_zero: bool,
    #[arg(long, requires = "mnist_labels")]
    mnist_images: Option<PathBuf>,
    #[arg(long, requires = "mnist_images")]
    mnist_labels: Option<PathBuf>,
    #[arg(long, requires = "mnist_test_labels")]
    mnist_test_images: Option<PathBuf>,
    #[arg(long, requires = "mnist_test_images")]
    mnist_test_labels: Option<PathBuf>,
    /// CIFAR-10 training batch files, comma separated.
    #[arg(long)]
    cifar_bin: Option<String>,
    #[arg(long, requires = "cifar_bin")]
    cifar_test_bin: Option<String>,
    /// Synthetic clusters as k,dim,per-class,sep,noise; per-class sets n = k * per-class
    /// unless --n is given.
    #[arg(long, conflicts_with_all = ["mnist_images", "cifar_bin"])]
    synthetic: Option<String>,
    /// Extra config entries as key=value, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn entries(&self) -> Result<Vec<(String, String)>> {
        let mut e: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: String| e.push((k.to_string(), v));
        if let Some(spec) = &self.synthetic {
            let f: Vec<&str> = spec.split(',').map(str::trim).collect();
            if f.len() != 5 {
                bail!(pacbayes_core::Error::Argument(format!(
                    "--synthetic expects k,dim,per-class,sep,noise, got `{spec}`"
                )));
            }
            push("source", "synthetic".into());
            push("synthetic.classes", f[0].into());
            push("synthetic.dim", f[1].into());
            push("synthetic.separation", f[3].into());
            push("synthetic.noise", f[4].into());
            if self.n.is_none() {
                let parse = |s: &str| {
                    s.parse::<usize>().map_err(|_| {
                        pacbayes_core::Error::Argument(format!("--synthetic: `{s}` is not a count"))
                    })
                };
                push("n", (parse(f[0])? * parse(f[2])?).to_string());
            }
        }
        if let Some(p) = &self.mnist_images {
            push("mnist.train_images", p.display().to_string());
        }
        if let Some(p) = &self.mnist_labels {
            push("mnist.train_labels", p.display().to_string());
        }
        if let Some(p) = &self.mnist_test_images {
            push("mnist.test_images", p.display().to_string());
        }
        if let Some(p) = &self.mnist_test_labels {
            push("mnist.test_labels", p.display().to_string());
        }
        if let Some(v) = &self.cifar_bin {
            push("cifar.train", v.clone());
        }
        if let Some(v) = &self.cifar_test_bin {
            push("cifar.test", v.clone());
        }
        for (k, v) in [
            ("n", self.n.clone()),
            ("r", self.r.clone()),
            ("depth", self.depth.map(|v| v.to_string())),
            ("width", self.width.map(|v| v.to_string())),
            ("bound.sigma2", self.sigma2.map(|v| v.to_string())),
            ("bound.gamma", self.gamma.map(|v| v.to_string())),
            ("bound.eta", self.eta.map(|v| v.to_string())),
            ("bound.delta", self.delta.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("repeats", self.repeats.map(|v| v.to_string())),
            ("train.epochs", self.epochs.map(|v| v.to_string())),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
        ] {
            if let Some(v) = v {
                push(k, v);
            }
        }
        if self.prior_zero {
            push("bound.prior_mean", "zero".into());
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| {
                pacbayes_core::Error::Argument(format!("--set expects KEY=VALUE, got `{kv}`"))
            })?;
            push(k.trim(), v.trim().to_string());
        }
        Ok(e)
    }

    fn config(&self) -> Result<SweepConfig> {
        let mut cfg = SweepConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| pacbayes_core::Error::Io {
                path: path.clone(),
                source: e,
            })?;
            cfg.apply_text(&text)
                .with_context(|| format!("in {}", path.display()))?;
        }
        for (k, v) in self.entries()? {
            cfg.set(&k, &v)
                .with_context(|| format!("option for `{k}`"))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn first_run(cfg: &SweepConfig) -> (usize, f64, u64) {
    (cfg.n_grid[0], cfg.r_grid[0], cfg.seed)
}

fn print_row(row: &RunRow) {
    for (k, v) in RESULTS_HEADER.split(',').zip(row.to_csv().split(',')) {
        println!("{k:<22}{v}");
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| pacbayes_core::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn report_sweep(res: &SweepResult) -> Result<()> {
    print!("{}", res.summary_csv());
    let failed: Vec<&RunRow> = res.rows.iter().filter(|r| !r.ok()).collect();
    for r in &failed {
        eprintln!(
            "run n={} r={} seed={} failed: {}",
            r.n, r.r, r.seed, r.status
        );
    }
    if !failed.is_empty() && failed.len() == res.rows.len() {
        bail!("all {} runs failed", failed.len());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, checkpoint } => {
            let cfg = common.config()?;
            let (n, r, seed) = first_run(&cfg);
            let (row, params) = run_one(&cfg, n, r, seed)?;
            let path = checkpoint.or_else(|| cfg.out_dir.as_ref().map(|d| d.join("model.ckpt")));
            if let Some(p) = &path {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    ensure_dir(dir)?;
                }
                write_checkpoint(&params, p)?;
                eprintln!("checkpoint written to {}", p.display());
            }
            println!(
                "train_error {}\ntest_error {}",
                row.train_error, row.test_error
            );
        }
        Command::Bound { common, checkpoint } => {
            let cfg = common.config()?;
            let (n, r, seed) = first_run(&cfg);
            let row = match checkpoint {
                Some(p) => score_params(&cfg, &read_checkpoint(&p)?, n, r, seed)?,
                None => run_one(&cfg, n, r, seed)?.0,
            };
            print_row(&row);
        }
        Command::SweepRandomLabels { common } => {
            report_sweep(&sweep_random_labels(&common.config()?)?)?
        }
        Command::SweepSampleSize { common } => {
            report_sweep(&sweep_sample_size(&common.config()?)?)?
        }
        Command::SweepSigma {
            common,
            sigma2_grid,
        } => {
            let mut cfg = common.config()?;
            if let Some(g) = sigma2_grid {
                cfg.set("sigma2_grid", &g)?;
            }
            let res = sweep_sigma(&cfg)?;
            print!("{}", res.summary_csv());
            println!(
                "argmin sigma2 {} (interior minimum: {})",
                res.argmin_sigma2, res.u_shaped
            );
        }
        Command::CompareNorms { common, results } => {
            let cfg = common.config()?;
            let res = match results {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|e| pacbayes_core::Error::Io {
                        path: path.clone(),
                        source: e,
                    })?;
                    let rows = text
                        .lines()
                        .skip(1)
                        .filter(|l| !l.trim().is_empty())
                        .map(RunRow::from_csv)
                        .collect::<pacbayes_core::Result<Vec<_>>>()?;
                    let wall_secs = vec![f64::NAN; rows.len()];
                    SweepResult { rows, wall_secs }
                }
                None => sweep_sample_size(&cfg)?,
            };
            let rows = compare_norms(&res);
            if let Some(out) = &cfg.out_dir {
                ensure_dir(out)?;
                write_norms_csv(&rows, &out.join("norms.csv"))?;
            }
            println!("{NORMS_HEADER}");
            for r in &rows {
                println!(
                    "{},{},{},{},{},{}",
                    r.n, r.seed, r.l2_sq, r.spec_prod, r.l2_sq_per_n, r.spec_prod_per_n
                );
            }
            let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
            ns.sort_unstable();
            ns.dedup();
            if let (Some(&lo), Some(&hi)) = (ns.first(), ns.last()) {
                if let Some((l2, spec)) = norm_growth(&rows, lo, hi).filter(|_| lo < hi) {
                    println!("growth n={lo} -> {hi}: l2_sq x{l2:.4}, spec_prod x{spec:.4}");
                }
            }
        }
        Command::ConcCheck { trials, seed, out } => {
            if trials == 0 {
                bail!(pacbayes_core::Error::Argument(
                    "--trials must be positive".into()
                ));
            }
            let reports = standard_suite(trials, seed)?;
            if let Some(dir) = &out {
                ensure_dir(dir)?;
            }
            for rep in &reports {
                for row in &rep.rows {
                    println!(
                        "{:<26} threshold {:>8.4}  empirical {:.4e}  bound {:.4e}  stderr {:.1e}  {}",
                        rep.name,
                        row.threshold,
                        row.empirical,
                        row.bound,
                        row.stderr,
                        if row.pass { "PASS" } else { "FAIL" }
                    );
                }
                if let Some(dir) = &out {
                    let path = dir.join(format!("{}.csv", rep.name));
                    fs::write(&path, rep.to_csv()).map_err(|e| pacbayes_core::Error::Io {
                        path: path.clone(),
                        source: e,
                    })?;
                }
            }
            let failing = reports.iter().filter(|r| !r.all_pass()).count();
            println!(
                "{} of {} checks hold at every grid point",
                reports.len() - failing,
                reports.len()
            );
        }
        Command::Plot {
            input,
            kind,
            output,
        } => {
            let kind: PlotKind = kind.parse()?;
            emit_plot(&input, kind, &output)?;
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<pacbayes_core::Error>() {
        Some(pacbayes_core::Error::Argument(_)) => 2,
        Some(e) if e.is_data_error() => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = String::new();
            for cause in e.chain().map(ToString::to_string) {
                if !msg.contains(&cause) {
                    msg = if msg.is_empty() {
                        cause
                    } else {
                        format!("{msg}: {cause}")
                    };
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
