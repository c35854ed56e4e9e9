use std::fmt::Write as _;
use std::path::PathBuf;

use crate::bound::{BoundConfig, DEtaVariant, KlMode};
use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

/// Where training and test samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Gaussian clusters; every run draws a fresh training and test sample.
    Synthetic {
        num_classes: usize,
        dim: usize,
        separation: f64,
        noise: f64,
        seed: u64,
    },
    /// IDX files. Without a test split, test rows are drawn from the training
    /// pool, disjoint from the training subsample.
    Mnist {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: Option<PathBuf>,
        test_labels: Option<PathBuf>,
    },
    Cifar {
        train: Vec<PathBuf>,
        test: Vec<PathBuf>,
    },
}

impl DataSource {
    pub fn num_classes(&self) -> usize {
        match self {
            DataSource::Synthetic { num_classes, .. } => *num_classes,
            _ => 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub source: DataSource,
    pub n_grid: Vec<usize>,
    pub r_grid: Vec<f64>,
    /// Number of weight layers.
    pub depth: usize,
    pub width: usize,
    pub train: TrainConfig<f64>,
    pub bound: BoundConfig<f64>,
    /// Center the prior at the initialization (otherwise at zero).
    pub prior_at_init: bool,
    pub sigma2_grid: Vec<f64>,
    pub repeats: usize,
    pub seed: u64,
    pub test_size: usize,
    pub normalize: bool,
    pub out_dir: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic {
                num_classes: 3,
                dim: 20,
                separation: 3.0,
                noise: 1.0,
                seed: 0,
            },
            n_grid: vec![300],
            r_grid: vec![0.0],
            depth: 2,
            width: 16,
            train: TrainConfig {
                learning_rate: 0.01,
                batch_size: 64,
                epochs: 300,
                ..TrainConfig::default()
            },
            bound: BoundConfig {
                sigma2: 100.0,
                gamma: 10.0,
                ..BoundConfig::default()
            },
            prior_at_init: true,
            sigma2_grid: vec![0.05, 0.1, 1.0, 10.0, 100.0, 200.0],
            repeats: 5,
            seed: 0,
            test_size: 1500,
            normalize: true,
            out_dir: None,
        }
    }
}

fn parse<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::arg(format!("cannot parse `{value}` for key `{key}`")))
}

fn parse_list<V: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<V>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::arg(format!(
            "cannot parse `{value}` as a boolean for key `{key}`"
        ))),
    }
}

fn join<V: ToString>(v: &[V]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn join_paths(v: &[PathBuf]) -> String {
    v.iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.r_grid.is_empty() {
            return Err(Error::arg("n and r grids must be non-empty"));
        }
        if self.n_grid.iter().any(|&n| n < 2) {
            return Err(Error::arg("every n must be at least 2"));
        }
        if self.r_grid.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::arg("every r must lie in [0, 1]"));
        }
        if self.repeats == 0 {
            return Err(Error::arg("repeats must be at least 1"));
        }
        if self.depth < 2 || self.width == 0 {
            return Err(Error::arg("depth must be at least 2 and width positive"));
        }
        if self.test_size == 0 {
            return Err(Error::arg("test size must be positive"));
        }
        if let DataSource::Synthetic {
            num_classes,
            dim,
            separation,
            noise,
            ..
        } = &self.source
        {
            if *num_classes < 2
                || *num_classes > 2 * dim
                || !(*separation > 0.0)
                || !(*noise >= 0.0)
            {
                return Err(Error::arg("invalid synthetic source parameters"));
            }
        }
        self.train.validate()?;
        let probe = BoundConfig {
            prior_variances: None,
            ..self.bound.clone()
        };
        probe.validate(0)?;
        Ok(())
    }

    /// Seeds used for repeat `i`.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeats as u64).map(|i| self.seed + i).collect()
    }

    /// Hidden widths repeated `depth − 1` times between input and output.
    pub fn widths(&self, input_dim: usize) -> Vec<usize> {
        let mut w = vec![input_dim];
        w.extend(std::iter::repeat_n(self.width, self.depth - 1));
        w.push(self.source.num_classes());
        w
    }

    /// Every setting as `key = value`, all defaults resolved.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| kv.push((k.to_string(), v));
        match &self.source {
            DataSource::Synthetic {
                num_classes,
                dim,
                separation,
                noise,
                seed,
            } => {
                put("source", "synthetic".into());
                put("synthetic.classes", num_classes.to_string());
                put("synthetic.dim", dim.to_string());
                put("synthetic.separation", separation.to_string());
                put("synthetic.noise", noise.to_string());
                put("synthetic.seed", seed.to_string());
            }
            DataSource::Mnist {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => {
                put("source", "mnist".into());
                put("mnist.train_images", train_images.display().to_string());
                put("mnist.train_labels", train_labels.display().to_string());
                if let (Some(i), Some(l)) = (test_images, test_labels) {
                    put("mnist.test_images", i.display().to_string());
                    put("mnist.test_labels", l.display().to_string());
                }
            }
            DataSource::Cifar { train, test } => {
                put("source", "cifar".into());
                put("cifar.train", join_paths(train));
                put("cifar.test", join_paths(test));
            }
        }
        put("n", join(&self.n_grid));
        put("r", join(&self.r_grid));
        put("depth", self.depth.to_string());
        put("width", self.width.to_string());
        put("repeats", self.repeats.to_string());
        put("seed", self.seed.to_string());
        put("test_size", self.test_size.to_string());
        put("normalize", self.normalize.to_string());
        put("train.lr", self.train.learning_rate.to_string());
        put("train.batch_size", self.train.batch_size.to_string());
        put("train.epochs", self.train.epochs.to_string());
        put("train.beta1", self.train.beta1.to_string());
        put("train.beta2", self.train.beta2.to_string());
        put("train.eps", self.train.eps.to_string());
        put("train.init_scale", self.train.init_scale.to_string());
        put("bound.sigma2", self.bound.sigma2.to_string());
        put("bound.gamma", self.bound.gamma.to_string());
        put("bound.eta", self.bound.eta.to_string());
        put("bound.delta", self.bound.delta.to_string());
        put("bound.include_tail", self.bound.include_tail.to_string());
        put(
            "bound.margin_inflation",
            self.bound.margin_inflation.to_string(),
        );
        put(
            "bound.kl_mode",
            match self.bound.kl_mode {
                KlMode::CurvaturePlusL2 => "curvature-l2",
                KlMode::Exact => "exact",
            }
            .into(),
        );
        put(
            "bound.d_eta",
            match self.bound.d_eta {
                DEtaVariant::NonSmoothTwoClass => "two-class",
                DEtaVariant::MultiClassSmooth { .. } => "multi-class",
            }
            .into(),
        );
        put(
            "bound.prior_mean",
            if self.prior_at_init { "init" } else { "zero" }.into(),
        );
        put("sigma2_grid", join(&self.sigma2_grid));
        if let Some(out) = &self.out_dir {
            put("out", out.display().to_string());
        }
        kv
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_key_values() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Sets one key. Switching `source` resets the source-specific fields.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "source" => {
                self.source = match v {
                    "synthetic" => SweepConfig::default().source,
                    "mnist" => DataSource::Mnist {
                        train_images: PathBuf::new(),
                        train_labels: PathBuf::new(),
                        test_images: None,
                        test_labels: None,
                    },
                    "cifar" => DataSource::Cifar {
                        train: Vec::new(),
                        test: Vec::new(),
                    },
                    other => return Err(Error::arg(format!("unknown source `{other}`"))),
                }
            }
            k @ ("synthetic.classes"
            | "synthetic.dim"
            | "synthetic.separation"
            | "synthetic.noise"
            | "synthetic.seed") => {
                let DataSource::Synthetic {
                    num_classes,
                    dim,
                    separation,
                    noise,
                    seed,
                } = &mut self.source
                else {
                    return Err(Error::arg(format!("`{k}` requires source = synthetic")));
                };
                match k {
                    "synthetic.classes" => *num_classes = parse(k, v)?,
                    "synthetic.dim" => *dim = parse(k, v)?,
                    "synthetic.separation" => *separation = parse(k, v)?,
                    "synthetic.noise" => *noise = parse(k, v)?,
                    _ => *seed = parse(k, v)?,
                }
            }
            k @ ("mnist.train_images" | "mnist.train_labels" | "mnist.test_images"
            | "mnist.test_labels") => {
                if !matches!(self.source, DataSource::Mnist { .. }) {
                    self.set("source", "mnist")?;
                }
                let DataSource::Mnist {
                    train_images,
                    train_labels,
                    test_images,
                    test_labels,
                } = &mut self.source
                else {
                    unreachable!()
                };
                let p = PathBuf::from(v);
                match k {
                    "mnist.train_images" => *train_images = p,
                    "mnist.train_labels" => *train_labels = p,
                    "mnist.test_images" => *test_images = Some(p),
                    _ => *test_labels = Some(p),
                }
            }
            k @ ("cifar.train" | "cifar.test") => {
                if !matches!(self.source, DataSource::Cifar { .. }) {
                    self.set("source", "cifar")?;
                }
                let DataSource::Cifar { train, test } = &mut self.source else {
                    unreachable!()
                };
                let paths = v
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(PathBuf::from)
                    .collect();
                if k == "cifar.train" {
                    *train = paths;
                } else {
                    *test = paths;
                }
            }
            k @ "n" => self.n_grid = parse_list(k, v)?,
            k @ "r" => self.r_grid = parse_list(k, v)?,
            k @ "depth" => self.depth = parse(k, v)?,
            k @ "width" => self.width = parse(k, v)?,
            k @ "repeats" => self.repeats = parse(k, v)?,
            k @ "seed" => self.seed = parse(k, v)?,
            k @ "test_size" => self.test_size = parse(k, v)?,
            k @ "normalize" => self.normalize = parse_bool(k, v)?,
            k @ "train.lr" => self.train.learning_rate = parse(k, v)?,
            k @ "train.batch_size" => self.train.batch_size = parse(k, v)?,
            k @ "train.epochs" => self.train.epochs = parse(k, v)?,
            k @ "train.beta1" => self.train.beta1 = parse(k, v)?,
            k @ "train.beta2" => self.train.beta2 = parse(k, v)?,
            k @ "train.eps" => self.train.eps = parse(k, v)?,
            k @ "train.init_scale" => self.train.init_scale = parse(k, v)?,
            k @ "bound.sigma2" => self.bound.sigma2 = parse(k, v)?,
            k @ "bound.gamma" => self.bound.gamma = parse(k, v)?,
            k @ "bound.eta" => self.bound.eta = parse(k, v)?,
            k @ "bound.delta" => self.bound.delta = parse(k, v)?,
            k @ "bound.include_tail" => self.bound.include_tail = parse_bool(k, v)?,
            k @ "bound.margin_inflation" => self.bound.margin_inflation = parse_bool(k, v)?,
            "bound.kl_mode" => {
                self.bound.kl_mode = match v {
                    "curvature-l2" => KlMode::CurvaturePlusL2,
                    "exact" => KlMode::Exact,
                    other => return Err(Error::arg(format!("unknown kl mode `{other}`"))),
                }
            }
            "bound.d_eta" => {
                self.bound.d_eta = match v {
                    "two-class" => DEtaVariant::NonSmoothTwoClass,
                    "multi-class" => DEtaVariant::MultiClassSmooth {
                        num_classes: self.source.num_classes(),
                    },
                    other => return Err(Error::arg(format!("unknown d_eta variant `{other}`"))),
                }
            }
            "bound.prior_mean" => {
                self.prior_at_init = match v {
                    "init" => true,
                    "zero" => false,
                    other => return Err(Error::arg(format!("unknown prior mean `{other}`"))),
                }
            }
            k @ "sigma2_grid" => self.sigma2_grid = parse_list(k, v)?,
            "out" => self.out_dir = Some(PathBuf::from(v)),
            other => return Err(Error::arg(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::arg(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = SweepConfig {
            n_grid: vec![100, 1000],
            r_grid: vec![0.0, 0.25],
            prior_at_init: false,
            out_dir: Some("runs/out".into()),
            ..SweepConfig::default()
        };
        cfg.bound.kl_mode = KlMode::Exact;
        assert_eq!(SweepConfig::from_text(&cfg.to_text()).unwrap(), cfg);

        let mut m = SweepConfig::default();
        m.apply_text("mnist.train_images = a\nmnist.train_labels = b\n# note\n\ncifar.train = x,y")
            .unwrap();
        assert!(matches!(m.source, DataSource::Cifar { ref train, .. } if train.len() == 2));
        let mut m = SweepConfig::default();
        m.apply_text("mnist.train_images = a\nmnist.train_labels = b")
            .unwrap();
        assert_eq!(SweepConfig::from_text(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn rejects_bad_input() {
        let mut cfg = SweepConfig::default();
        assert!(cfg.set("nope", "1").is_err());
        assert!(cfg.set("depth", "two").is_err());
        assert!(cfg.apply_text("depth 3").is_err());
        cfg.r_grid = vec![];
        assert!(cfg.validate().is_err());
        let cfg = SweepConfig {
            repeats: 0,
            ..SweepConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(SweepConfig::default().validate().is_ok());
    }

    #[test]
    fn widths_and_seeds() {
        let cfg = SweepConfig {
            depth: 3,
            width: 8,
            repeats: 3,
            seed: 10,
            ..SweepConfig::default()
        };
        assert_eq!(cfg.widths(20), vec![20, 8, 8, 3]);
        assert_eq!(cfg.seeds(), vec![10, 11, 12]);
    }
}
