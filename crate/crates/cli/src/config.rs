//! `key=value` run configuration: the key table, parsing with line numbers,
//! command-line overrides and validation.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use fedgae_core::attack::{ClaimedSize, DualSign, ObjectiveMode, StealthRadius, TargetMap};
use fedgae_core::{LaplacianKind, PartitionScheme, ThresholdPolicy};

/// Environment variable naming the dataset directory.
pub const DATA_ROOT_ENV: &str = "FEDGAE_DATA_ROOT";
pub const DEFAULT_DATA_ROOT: &str = "data/mnist-subset";

pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

/// Every accepted configuration key, in snapshot order.
pub const KEYS: &[Key] = &[
    key("dataset", "mnist", "mnist | fashionmnist | cifar10"),
    key(
        "data_root",
        "",
        "dataset directory; empty means $FEDGAE_DATA_ROOT, then data/mnist-subset",
    ),
    key("train_cap", "2000", "training samples used (0 = all)"),
    key("test_cap", "1000", "test samples used (0 = all)"),
    key("J", "5", "number of benign clients"),
    key("T_L", "10", "local iterations per round"),
    key("T_FL", "50", "communication rounds"),
    key("eta", "0.01", "local learning rate"),
    key("mu", "0.01", "SVM regularization coefficient"),
    key("batch_size", "10", "local mini-batch size (0 = full batch)"),
    key("partition", "iid", "iid | label_sorted"),
    key("seed", "0", "run seed"),
    key(
        "eavesdrop_count",
        "all",
        "benign uploads the attackers observe: all | 1..=J",
    ),
    key("attacker", "none", "none | gae | mp"),
    key("attackers", "1", "number of attacker instances"),
    key("gae_epochs", "20", "GAE training epochs per round"),
    key("gae_lr", "0.01", "GAE Adam learning rate"),
    key("gae_probes", "4", "two-point perturbation probes per epoch"),
    key("gae_perturbation", "0.001", "perturbation radius of each probe"),
    key("gae_hidden", "32", "GCN hidden width"),
    key("gae_embed", "16", "GCN embedding width"),
    key("gae_dropout", "0.1", "dropout between GCN layers while training"),
    key("laplacian", "degree", "degree | elementwise"),
    key(
        "target_map",
        "clamp",
        "adjacency to edge-probability map: clamp | shift",
    ),
    key("d_t", "adaptive", "stealth radius: adaptive | <number>"),
    key("claimed_size", "mean", "attacker data size: mean | <integer>"),
    key("lambda_init", "1.0", "initial dual variable"),
    key("dual_step", "0.5", "dual sub-gradient step"),
    key("dual_sign", "standard", "standard | paper"),
    key("objective", "surrogate", "surrogate | oracle"),
    key("probe_size", "500", "oracle probe samples taken after the training cap"),
    key(
        "mp_scale",
        "spread:3",
        "MP offset: spread:<k> (k x max benign distance) | fixed:<value>",
    ),
    key(
        "detector_k",
        "2.0",
        "report-only detector: flag distance > mean + k*std",
    ),
    key(
        "detector_tau",
        "none",
        "fixed detector threshold overriding detector_k: none | <number>",
    ),
    key("defense", "none", "none | distance | multi_krum"),
    key("krum_f", "1", "multi-Krum tolerated byzantine count"),
    key("krum_m", "auto", "multi-Krum selected count: auto (n - f) | <integer>"),
    key(
        "output_dir",
        "out",
        "directory for metrics.csv, config.txt and summary.txt",
    ),
];

pub fn key_spec(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

/// A configuration problem, with the file line when the offending value
/// came from a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "configuration error at line {l}: {}", self.message),
            None => write!(f, "configuration error: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    FashionMnist,
    Cifar10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackerKind {
    None,
    Gae,
    Mp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefenseKind {
    None,
    Distance,
    MultiKrum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MpScaleSetting {
    Spread(f64),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    pub data_root: PathBuf,
    pub train_cap: usize,
    pub test_cap: usize,
    pub j: usize,
    pub t_l: usize,
    pub t_fl: usize,
    pub eta: f64,
    pub mu: f64,
    pub batch_size: usize,
    pub partition: PartitionScheme,
    pub seed: u64,
    pub eavesdrop_count: Option<usize>,
    pub attacker: AttackerKind,
    pub attackers: usize,
    pub gae_epochs: usize,
    pub gae_lr: f64,
    pub gae_probes: usize,
    pub gae_perturbation: f64,
    pub gae_hidden: usize,
    pub gae_embed: usize,
    pub gae_dropout: f64,
    pub laplacian: LaplacianKind,
    pub target_map: TargetMap,
    pub d_t: StealthRadius,
    pub claimed_size: ClaimedSize,
    pub lambda_init: f64,
    pub dual_step: f64,
    pub dual_sign: DualSign,
    pub objective: ObjectiveMode,
    pub probe_size: usize,
    pub mp_scale: MpScaleSetting,
    pub detector: ThresholdPolicy,
    pub defense: DefenseKind,
    pub krum_f: usize,
    pub krum_m: Option<usize>,
    pub output_dir: PathBuf,
}

/// Raw values with the file line each came from (`None` for defaults and
/// overrides).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<&'static str, (String, Option<usize>)>,
}

impl RawConfig {
    pub fn defaults() -> Self {
        let values = KEYS.iter().map(|k| (k.name, (k.default.to_string(), None))).collect();
        Self { values }
    }

    pub fn set(&mut self, name: &str, value: &str, line: Option<usize>) -> Result<(), ConfigError> {
        let spec = key_spec(name).ok_or_else(|| ConfigError {
            line,
            message: format!("unknown key '{name}'"),
        })?;
        self.values.insert(spec.name, (value.trim().to_string(), line));
        Ok(())
    }

    pub fn get(&self, name: &str) -> &str {
        &self.values[name].0
    }

    fn line(&self, name: &str) -> Option<usize> {
        self.values.get(name).and_then(|v| v.1)
    }

    /// Applies every `key=value` line of `text`. Blank lines and text after
    /// `#` are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or_else(|| ConfigError {
                line: Some(line),
                message: format!("expected key=value, got '{content}'"),
            })?;
            self.set(k.trim(), v, Some(line))?;
        }
        Ok(())
    }

    fn err(&self, name: &str, message: String) -> ConfigError {
        ConfigError {
            line: self.line(name),
            message,
        }
    }

    fn parse<T: std::str::FromStr>(&self, name: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let v = self.get(name);
        v.parse()
            .map_err(|e| self.err(name, format!("invalid value '{v}' for {name}: {e}")))
    }

    fn choice<T: Copy>(&self, name: &str, options: &[(&str, T)]) -> Result<T, ConfigError> {
        let v = self.get(name);
        options.iter().find(|(s, _)| *s == v).map(|(_, t)| *t).ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(s, _)| *s).collect();
            self.err(
                name,
                format!("invalid value '{v}' for {name}; expected one of {}", names.join(", ")),
            )
        })
    }

    fn finite(&self, name: &str) -> Result<f64, ConfigError> {
        let v: f64 = self.parse(name)?;
        if !v.is_finite() {
            return Err(self.err(name, format!("{name} must be finite")));
        }
        Ok(v)
    }

    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let data_root = match self.get("data_root") {
            "" => std::env::var_os(DATA_ROOT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_ROOT)),
            p => PathBuf::from(p),
        };
        let eavesdrop_count = match self.get("eavesdrop_count") {
            "all" => None,
            _ => Some(self.parse("eavesdrop_count")?),
        };
        let d_t = match self.get("d_t") {
            "adaptive" => StealthRadius::Adaptive,
            _ => StealthRadius::Fixed(self.finite("d_t")?),
        };
        let claimed_size = match self.get("claimed_size") {
            "mean" => ClaimedSize::MeanObserved,
            _ => ClaimedSize::Fixed(self.parse("claimed_size")?),
        };
        let mp_scale = {
            let v = self.get("mp_scale");
            let bad = || {
                self.err(
                    "mp_scale",
                    format!("invalid value '{v}' for mp_scale; expected spread:<k> or fixed:<value>"),
                )
            };
            let (kind, num) = v.split_once(':').ok_or_else(bad)?;
            let num: f64 = num.trim().parse().map_err(|_| bad())?;
            match kind.trim() {
                "spread" => MpScaleSetting::Spread(num),
                "fixed" => MpScaleSetting::Fixed(num),
                _ => return Err(bad()),
            }
        };
        let detector = match self.get("detector_tau") {
            "none" => ThresholdPolicy::MeanPlusKStd(self.finite("detector_k")?),
            _ => ThresholdPolicy::Fixed(self.finite("detector_tau")?),
        };
        let krum_m = match self.get("krum_m") {
            "auto" => None,
            _ => Some(self.parse("krum_m")?),
        };

        let cfg = RunConfig {
            dataset: self.choice(
                "dataset",
                &[
                    ("mnist", DatasetKind::Mnist),
                    ("fashionmnist", DatasetKind::FashionMnist),
                    ("cifar10", DatasetKind::Cifar10),
                ],
            )?,
            data_root,
            train_cap: self.parse("train_cap")?,
            test_cap: self.parse("test_cap")?,
            j: self.parse("J")?,
            t_l: self.parse("T_L")?,
            t_fl: self.parse("T_FL")?,
            eta: self.finite("eta")?,
            mu: self.finite("mu")?,
            batch_size: self.parse("batch_size")?,
            partition: self.choice(
                "partition",
                &[
                    ("iid", PartitionScheme::Iid),
                    ("label_sorted", PartitionScheme::LabelSorted),
                ],
            )?,
            seed: self.parse("seed")?,
            eavesdrop_count,
            attacker: self.choice(
                "attacker",
                &[
                    ("none", AttackerKind::None),
                    ("gae", AttackerKind::Gae),
                    ("mp", AttackerKind::Mp),
                ],
            )?,
            attackers: self.parse("attackers")?,
            gae_epochs: self.parse("gae_epochs")?,
            gae_lr: self.finite("gae_lr")?,
            gae_probes: self.parse("gae_probes")?,
            gae_perturbation: self.finite("gae_perturbation")?,
            gae_hidden: self.parse("gae_hidden")?,
            gae_embed: self.parse("gae_embed")?,
            gae_dropout: self.finite("gae_dropout")?,
            laplacian: self.choice(
                "laplacian",
                &[
                    ("degree", LaplacianKind::Degree),
                    ("elementwise", LaplacianKind::Elementwise),
                ],
            )?,
            target_map: self.choice(
                "target_map",
                &[("clamp", TargetMap::Clamp), ("shift", TargetMap::Shift)],
            )?,
            d_t,
            claimed_size,
            lambda_init: self.finite("lambda_init")?,
            dual_step: self.finite("dual_step")?,
            dual_sign: self.choice(
                "dual_sign",
                &[("standard", DualSign::Standard), ("paper", DualSign::Paper)],
            )?,
            objective: self.choice(
                "objective",
                &[
                    ("surrogate", ObjectiveMode::Surrogate),
                    ("oracle", ObjectiveMode::Oracle),
                ],
            )?,
            probe_size: self.parse("probe_size")?,
            mp_scale,
            detector,
            defense: self.choice(
                "defense",
                &[
                    ("none", DefenseKind::None),
                    ("distance", DefenseKind::Distance),
                    ("multi_krum", DefenseKind::MultiKrum),
                ],
            )?,
            krum_f: self.parse("krum_f")?,
            krum_m,
            output_dir: PathBuf::from(self.get("output_dir")),
        };
        self.validate(&cfg)?;
        Ok(cfg)
    }

    fn validate(&self, c: &RunConfig) -> Result<(), ConfigError> {
        let need = |ok: bool, name: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(self.err(name, msg.to_string()))
            }
        };
        need(c.j >= 1, "J", "invariant J >= 1 violated")?;
        need(c.t_l >= 1, "T_L", "invariant T_L >= 1 violated")?;
        need(c.t_fl >= 1, "T_FL", "invariant T_FL >= 1 violated")?;
        if let Some(k) = c.eavesdrop_count {
            if k == 0 || k > c.j {
                let name = if self.line("eavesdrop_count").is_some() || self.line("J").is_none() {
                    "eavesdrop_count"
                } else {
                    "J"
                };
                return Err(self.err(name, format!("invariant eavesdrop_count <= J violated ({k} > {})", c.j)));
            }
        }
        need(c.eta > 0.0, "eta", "eta must be > 0")?;
        need(c.mu >= 0.0, "mu", "mu must be >= 0")?;
        need(c.attackers >= 1, "attackers", "attackers must be >= 1")?;
        need(c.gae_epochs >= 1, "gae_epochs", "gae_epochs must be >= 1")?;
        need(c.gae_probes >= 1, "gae_probes", "gae_probes must be >= 1")?;
        need(c.gae_lr >= 0.0, "gae_lr", "gae_lr must be >= 0")?;
        need(
            c.gae_perturbation > 0.0,
            "gae_perturbation",
            "gae_perturbation must be > 0",
        )?;
        need(
            c.gae_hidden >= 1 && c.gae_embed >= 1,
            "gae_hidden",
            "GCN widths must be >= 1",
        )?;
        need(
            (0.0..1.0).contains(&c.gae_dropout),
            "gae_dropout",
            "gae_dropout must lie in [0, 1)",
        )?;
        need(c.lambda_init >= 0.0, "lambda_init", "lambda_init must be >= 0")?;
        need(c.dual_step > 0.0, "dual_step", "dual_step must be > 0")?;
        if let StealthRadius::Fixed(d) = c.d_t {
            need(d > 0.0, "d_t", "d_t must be > 0")?;
        }
        if let ClaimedSize::Fixed(n) = c.claimed_size {
            need(n >= 1, "claimed_size", "claimed_size must be >= 1")?;
        }
        let observed = c.eavesdrop_count.unwrap_or(c.j);
        if c.attacker == AttackerKind::Gae {
            need(
                observed >= 2,
                "eavesdrop_count",
                "the GAE attacker needs at least two observed clients",
            )?;
        }
        if c.objective == ObjectiveMode::Oracle {
            need(
                c.probe_size >= 1,
                "probe_size",
                "oracle objective needs probe_size >= 1",
            )?;
        }
        match c.mp_scale {
            MpScaleSetting::Spread(v) | MpScaleSetting::Fixed(v) => need(
                v.is_finite() && v >= 0.0,
                "mp_scale",
                "mp_scale must be finite and >= 0",
            )?,
        }
        if c.defense == DefenseKind::MultiKrum {
            let n = c.j
                + if c.attacker == AttackerKind::None {
                    0
                } else {
                    c.attackers
                };
            need(
                n >= c.krum_f + 3,
                "krum_f",
                "multi-Krum needs at least krum_f + 3 participants",
            )?;
            if let Some(m) = c.krum_m {
                need(
                    m >= 1 && m <= n - c.krum_f,
                    "krum_m",
                    "krum_m must lie in 1..=participants - krum_f",
                )?;
            }
        }
        Ok(())
    }
}

/// Reads the optional config file, then applies `overrides` in order.
pub fn parse_config(file: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig, ConfigError> {
    let mut raw = RawConfig::defaults();
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        raw.apply_text(&text)?;
    }
    for (k, v) in overrides {
        raw.set(k, v, None)?;
    }
    raw.resolve()
}

/// Canonical `key=value` text for a resolved config; parsing it back yields
/// the same config.
pub fn snapshot(c: &RunConfig) -> String {
    fn num(v: f64) -> String {
        format!("{v:?}")
    }
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        out.push_str(k);
        out.push('=');
        out.push_str(&v);
        out.push('\n');
    };
    put(
        "dataset",
        match c.dataset {
            DatasetKind::Mnist => "mnist",
            DatasetKind::FashionMnist => "fashionmnist",
            DatasetKind::Cifar10 => "cifar10",
        }
        .into(),
    );
    put("data_root", c.data_root.display().to_string());
    put("train_cap", c.train_cap.to_string());
    put("test_cap", c.test_cap.to_string());
    put("J", c.j.to_string());
    put("T_L", c.t_l.to_string());
    put("T_FL", c.t_fl.to_string());
    put("eta", num(c.eta));
    put("mu", num(c.mu));
    put("batch_size", c.batch_size.to_string());
    put(
        "partition",
        match c.partition {
            PartitionScheme::Iid => "iid",
            PartitionScheme::LabelSorted => "label_sorted",
        }
        .into(),
    );
    put("seed", c.seed.to_string());
    put(
        "eavesdrop_count",
        c.eavesdrop_count.map_or("all".into(), |k| k.to_string()),
    );
    put(
        "attacker",
        match c.attacker {
            AttackerKind::None => "none",
            AttackerKind::Gae => "gae",
            AttackerKind::Mp => "mp",
        }
        .into(),
    );
    put("attackers", c.attackers.to_string());
    put("gae_epochs", c.gae_epochs.to_string());
    put("gae_lr", num(c.gae_lr));
    put("gae_probes", c.gae_probes.to_string());
    put("gae_perturbation", num(c.gae_perturbation));
    put("gae_hidden", c.gae_hidden.to_string());
    put("gae_embed", c.gae_embed.to_string());
    put("gae_dropout", num(c.gae_dropout));
    put(
        "laplacian",
        match c.laplacian {
            LaplacianKind::Degree => "degree",
            LaplacianKind::Elementwise => "elementwise",
        }
        .into(),
    );
    put(
        "target_map",
        match c.target_map {
            TargetMap::Clamp => "clamp",
            TargetMap::Shift => "shift",
        }
        .into(),
    );
    put(
        "d_t",
        match c.d_t {
            StealthRadius::Adaptive => "adaptive".into(),
            StealthRadius::Fixed(d) => num(d),
        },
    );
    put(
        "claimed_size",
        match c.claimed_size {
            ClaimedSize::MeanObserved => "mean".into(),
            ClaimedSize::Fixed(n) => n.to_string(),
        },
    );
    put("lambda_init", num(c.lambda_init));
    put("dual_step", num(c.dual_step));
    put(
        "dual_sign",
        match c.dual_sign {
            DualSign::Standard => "standard",
            DualSign::Paper => "paper",
        }
        .into(),
    );
    put(
        "objective",
        match c.objective {
            ObjectiveMode::Surrogate => "surrogate",
            ObjectiveMode::Oracle => "oracle",
        }
        .into(),
    );
    put("probe_size", c.probe_size.to_string());
    put(
        "mp_scale",
        match c.mp_scale {
            MpScaleSetting::Spread(k) => format!("spread:{}", num(k)),
            MpScaleSetting::Fixed(v) => format!("fixed:{}", num(v)),
        },
    );
    let (k, tau) = match c.detector {
        ThresholdPolicy::MeanPlusKStd(k) => (num(k), "none".to_string()),
        ThresholdPolicy::Fixed(t) => ("2.0".to_string(), num(t)),
    };
    put("detector_k", k);
    put("detector_tau", tau);
    put(
        "defense",
        match c.defense {
            DefenseKind::None => "none",
            DefenseKind::Distance => "distance",
            DefenseKind::MultiKrum => "multi_krum",
        }
        .into(),
    );
    put("krum_f", c.krum_f.to_string());
    put("krum_m", c.krum_m.map_or("auto".into(), |m| m.to_string()));
    put("output_dir", c.output_dir.display().to_string());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_text(text: &str, overrides: &[(&str, &str)]) -> Result<RunConfig, ConfigError> {
        let mut raw = RawConfig::defaults();
        raw.apply_text(text)?;
        for (k, v) in overrides {
            raw.set(k, v, None)?;
        }
        raw.resolve()
    }

    #[test]
    fn file_then_override() {
        let c = from_text("J=5\nT_L=10\n", &[("seed", "7")]).unwrap();
        assert_eq!((c.j, c.t_l, c.seed), (5, 10, 7));
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = from_text("# header\n\nJ = 3   # three clients\n", &[]).unwrap();
        assert_eq!(c.j, 3);
    }

    #[test]
    fn zero_clients_cites_invariant_and_line() {
        let e = from_text("seed=1\nJ=0\n", &[]).unwrap_err();
        assert_eq!(e.line, Some(2));
        assert!(e.message.contains("J >= 1"), "{e}");
    }

    #[test]
    fn eavesdrop_above_j() {
        let e = from_text("J=5\neavesdrop_count=9\n", &[]).unwrap_err();
        assert_eq!(e.line, Some(2));
        assert!(e.message.contains("eavesdrop_count <= J"));
    }

    #[test]
    fn unknown_key_and_bad_value() {
        let e = from_text("\nfoo=1\n", &[]).unwrap_err();
        assert_eq!(e.line, Some(2));
        assert!(e.message.contains("unknown key 'foo'"));
        let e = from_text("eta=fast\n", &[]).unwrap_err();
        assert_eq!(e.line, Some(1));
        let e = from_text("attacker=gan\n", &[]).unwrap_err();
        assert!(e.message.contains("none, gae, mp"));
        assert!(from_text("J 5\n", &[]).is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let c = from_text(
            "J=7\nattacker=gae\nd_t=0.25\nmp_scale=fixed:4.5\ndetector_tau=3\nkrum_m=2\ndata_root=/x\neavesdrop_count=4\n",
            &[],
        )
        .unwrap();
        let again = from_text(&snapshot(&c), &[]).unwrap();
        assert_eq!(c, again);
        let d = from_text("data_root=/d\n", &[]).unwrap();
        assert_eq!(from_text(&snapshot(&d), &[]).unwrap(), d);
    }

    #[test]
    fn every_key_has_a_default_that_resolves() {
        let c = RawConfig::defaults().resolve().unwrap();
        assert_eq!((c.j, c.t_l, c.t_fl, c.train_cap, c.test_cap), (5, 10, 50, 2000, 1000));
        assert_eq!(c.eavesdrop_count, None);
    }
}
