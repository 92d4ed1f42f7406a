//! Experiment configuration: a flat key-value file with `[sections]`,
//! typed extraction with defaults, and a semantic hash that stamps every
//! output file.

use p2rec_core::data::SyntheticSpec;
use p2rec_core::losses::FusionMethod;
use p2rec_core::train::{AblationSet, TrainConfig};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type Sections = BTreeMap<String, BTreeMap<String, String>>;

fn parse_sections(text: &str) -> Result<Sections, ConfigError> {
    let mut sections: Sections = BTreeMap::new();
    let mut current = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            current = line[1..line.len() - 1].trim().to_string();
            sections.entry(current.clone()).or_default();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            ConfigError(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        if current.is_empty() {
            return Err(ConfigError(format!(
                "line {}: key outside any [section]",
                lineno + 1
            )));
        }
        sections
            .get_mut(&current)
            .unwrap()
            .insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(sections)
}

struct Section<'a> {
    name: &'a str,
    values: BTreeMap<String, String>,
    consumed: std::collections::HashSet<String>,
}

impl<'a> Section<'a> {
    fn new(name: &'a str, sections: &Sections) -> Self {
        Section {
            name,
            values: sections.get(name).cloned().unwrap_or_default(),
            consumed: Default::default(),
        }
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        self.consumed.insert(key.to_string());
        self.values.get(key).cloned()
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                ConfigError(format!("[{}] {key}: cannot parse `{v}`", self.name))
            }),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        for key in self.values.keys() {
            if !self.consumed.contains(key) {
                return Err(ConfigError(format!(
                    "[{}] unknown key `{key}`",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Files {
        interactions_a: PathBuf,
        interactions_b: PathBuf,
        review_a: Option<PathBuf>,
        review_b: Option<PathBuf>,
        text_a: Option<PathBuf>,
        text_b: Option<PathBuf>,
        visual_a: Option<PathBuf>,
        visual_b: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    InProcess,
    Socket,
}

impl TransportKind {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "inproc" => Ok(TransportKind::InProcess),
            "socket" => Ok(TransportKind::Socket),
            other => Err(ConfigError(format!(
                "unknown transport `{other}` (inproc|socket)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepGrids {
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
    pub dim: Vec<usize>,
    pub fusion: Vec<FusionMethod>,
}

impl Default for SweepGrids {
    fn default() -> Self {
        SweepGrids {
            alpha: vec![0.0, 1e-4, 1e-3, 1e-2, 1e-1],
            lambda: vec![0.0, 0.01, 0.1, 1.0],
            dim: vec![16, 32, 64, 128],
            fusion: vec![
                FusionMethod::Sum,
                FusionMethod::Concat,
                FusionMethod::Attention,
            ],
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub kcore: usize,
    pub train: TrainConfig,
    pub sweep: SweepGrids,
    pub out_dir: PathBuf,
    pub transport: TransportKind,
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, ConfigError> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| ConfigError(format!("{what}: cannot parse `{v}`")))
        })
        .collect()
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let sections = parse_sections(text)?;
        for name in sections.keys() {
            if !["data", "model", "train", "sweep", "output"].contains(&name.as_str()) {
                return Err(ConfigError(format!("unknown section [{name}]")));
            }
        }

        let mut data = Section::new("data", &sections);
        let source = data.raw("source").unwrap_or_else(|| "synthetic".into());
        let kcore = data.parse("kcore", 5usize)?;
        let data_source = match source.as_str() {
            "synthetic" => {
                let defaults = SyntheticSpec::default();
                let spec = SyntheticSpec {
                    users: data.parse("users", defaults.users)?,
                    items_a: data.parse("items_a", defaults.items_a)?,
                    items_b: data.parse("items_b", defaults.items_b)?,
                    d_common: data.parse("d_common", defaults.d_common)?,
                    d_specific: data.parse("d_specific", defaults.d_specific)?,
                    noise: data.parse("noise", defaults.noise)?,
                    target_density: Some(data.parse("density", 0.05f64)?),
                    d_raw: data.parse("d_raw", defaults.d_raw)?,
                    feature_noise: data.parse("feature_noise", defaults.feature_noise)?,
                    min_degree: data.parse("min_degree", defaults.min_degree)?,
                    common_weight: data.parse("common_weight", defaults.common_weight)?,
                    specific_weight: data.parse("specific_weight", defaults.specific_weight)?,
                };
                DataSource::Synthetic(spec)
            }
            "files" => {
                let need = |sec: &mut Section, key: &str| -> Result<PathBuf, ConfigError> {
                    sec.raw(key)
                        .map(PathBuf::from)
                        .ok_or_else(|| ConfigError(format!("[data] missing `{key}`")))
                };
                let opt = |sec: &mut Section, key: &str| sec.raw(key).map(PathBuf::from);
                DataSource::Files {
                    interactions_a: need(&mut data, "interactions_a")?,
                    interactions_b: need(&mut data, "interactions_b")?,
                    review_a: opt(&mut data, "review_a"),
                    review_b: opt(&mut data, "review_b"),
                    text_a: opt(&mut data, "text_a"),
                    text_b: opt(&mut data, "text_b"),
                    visual_a: opt(&mut data, "visual_a"),
                    visual_b: opt(&mut data, "visual_b"),
                }
            }
            other => {
                return Err(ConfigError(format!(
                    "[data] source must be synthetic|files, got `{other}`"
                )))
            }
        };
        data.finish()?;

        let defaults = TrainConfig::default();
        let mut model = Section::new("model", &sections);
        let fusion = FusionMethod::parse(&model.raw("fusion").unwrap_or_else(|| "sum".into()))
            .map_err(|e| ConfigError(e.to_string()))?;
        let (id_dim, proj_dim) = (
            model.parse("id_dim", defaults.id_dim)?,
            model.parse("proj_dim", defaults.proj_dim)?,
        );
        let (disen_hidden, disen_dim) = (
            model.parse("disen_hidden", defaults.disen_hidden)?,
            model.parse("disen_dim", defaults.disen_dim)?,
        );
        let predictor_hidden = model.parse("predictor_hidden", defaults.predictor_hidden)?;
        let layers = model.parse("layers", defaults.layers)?;
        model.finish()?;

        let mut train = Section::new("train", &sections);
        let mut ablations = AblationSet::default();
        if let Some(list) = train.raw("ablate") {
            if !list.trim().is_empty() {
                for name in list.split(',') {
                    ablations
                        .enable(name.trim())
                        .map_err(|e| ConfigError(e.to_string()))?;
                }
            }
        }
        let train_cfg = TrainConfig {
            epochs: train.parse("epochs", defaults.epochs)?,
            batch_size: train.parse("batch_size", defaults.batch_size)?,
            lr: train.parse("lr", defaults.lr)?,
            alpha: train.parse("alpha", defaults.alpha)?,
            lambda: train.parse("lambda", defaults.lambda)?,
            dropout_rate: train.parse("dropout", defaults.dropout_rate)?,
            layers,
            id_dim,
            proj_dim,
            disen_hidden,
            disen_dim,
            predictor_hidden,
            fusion,
            patience: train.parse("patience", defaults.patience)?,
            neg_ratio: train.parse("neg_ratio", defaults.neg_ratio)?,
            eval_k: train.parse("eval_k", defaults.eval_k)?,
            eval_negatives: train.parse("eval_negatives", defaults.eval_negatives)?,
            ablations,
            seed: train.parse("seed", defaults.seed)?,
        };
        train.finish()?;

        let mut sweep = Section::new("sweep", &sections);
        let grid_defaults = SweepGrids::default();
        let grids = SweepGrids {
            alpha: match sweep.raw("alpha") {
                Some(s) => parse_list(&s, "[sweep] alpha")?,
                None => grid_defaults.alpha,
            },
            lambda: match sweep.raw("lambda") {
                Some(s) => parse_list(&s, "[sweep] lambda")?,
                None => grid_defaults.lambda,
            },
            dim: match sweep.raw("dim") {
                Some(s) => parse_list(&s, "[sweep] dim")?,
                None => grid_defaults.dim,
            },
            fusion: match sweep.raw("fusion") {
                Some(s) => s
                    .split(',')
                    .map(|v| FusionMethod::parse(v.trim()).map_err(|e| ConfigError(e.to_string())))
                    .collect::<Result<_, _>>()?,
                None => grid_defaults.fusion,
            },
        };
        for (name, empty) in [
            ("alpha", grids.alpha.is_empty()),
            ("lambda", grids.lambda.is_empty()),
            ("dim", grids.dim.is_empty()),
            ("fusion", grids.fusion.is_empty()),
        ] {
            if empty {
                return Err(ConfigError(format!("[sweep] {name} grid is empty")));
            }
        }
        sweep.finish()?;

        let mut output = Section::new("output", &sections);
        let out_dir = PathBuf::from(output.raw("dir").unwrap_or_else(|| "runs/out".into()));
        let transport = TransportKind::parse(
            &output.raw("transport").unwrap_or_else(|| "inproc".into()),
        )?;
        output.finish()?;

        Ok(ExperimentConfig {
            data: data_source,
            kcore,
            train: train_cfg,
            sweep: grids,
            out_dir,
            transport,
        })
    }

    /// Canonical text of the semantic fields ([data], [model], [train]);
    /// sweeps, output locations, and transport are excluded; they do not
    /// change what a single run computes.
    pub fn canonical_semantic(&self) -> String {
        let mut s = String::new();
        s.push_str("[data]\n");
        match &self.data {
            DataSource::Synthetic(spec) => {
                writeln!(s, "source = synthetic").unwrap();
                writeln!(s, "users = {}", spec.users).unwrap();
                writeln!(s, "items_a = {}", spec.items_a).unwrap();
                writeln!(s, "items_b = {}", spec.items_b).unwrap();
                writeln!(s, "d_common = {}", spec.d_common).unwrap();
                writeln!(s, "d_specific = {}", spec.d_specific).unwrap();
                writeln!(s, "noise = {}", spec.noise).unwrap();
                match spec.target_density {
                    Some(d) => writeln!(s, "density = {d}").unwrap(),
                    None => writeln!(s, "density = none").unwrap(),
                }
                writeln!(s, "d_raw = {}", spec.d_raw).unwrap();
                writeln!(s, "feature_noise = {}", spec.feature_noise).unwrap();
                writeln!(s, "min_degree = {}", spec.min_degree).unwrap();
                writeln!(s, "common_weight = {}", spec.common_weight).unwrap();
                writeln!(s, "specific_weight = {}", spec.specific_weight).unwrap();
            }
            DataSource::Files {
                interactions_a,
                interactions_b,
                review_a,
                review_b,
                text_a,
                text_b,
                visual_a,
                visual_b,
            } => {
                writeln!(s, "source = files").unwrap();
                let p = |v: &Option<PathBuf>| {
                    v.as_ref()
                        .map(|p| p.display().to_string())
                        .unwrap_or_else(|| "none".into())
                };
                writeln!(s, "interactions_a = {}", interactions_a.display()).unwrap();
                writeln!(s, "interactions_b = {}", interactions_b.display()).unwrap();
                writeln!(s, "review_a = {}", p(review_a)).unwrap();
                writeln!(s, "review_b = {}", p(review_b)).unwrap();
                writeln!(s, "text_a = {}", p(text_a)).unwrap();
                writeln!(s, "text_b = {}", p(text_b)).unwrap();
                writeln!(s, "visual_a = {}", p(visual_a)).unwrap();
                writeln!(s, "visual_b = {}", p(visual_b)).unwrap();
            }
        }
        writeln!(s, "kcore = {}", self.kcore).unwrap();
        let t = &self.train;
        s.push_str("[model]\n");
        writeln!(s, "id_dim = {}", t.id_dim).unwrap();
        writeln!(s, "proj_dim = {}", t.proj_dim).unwrap();
        writeln!(s, "disen_hidden = {}", t.disen_hidden).unwrap();
        writeln!(s, "disen_dim = {}", t.disen_dim).unwrap();
        writeln!(s, "predictor_hidden = {}", t.predictor_hidden).unwrap();
        writeln!(s, "layers = {}", t.layers).unwrap();
        writeln!(s, "fusion = {}", t.fusion.as_str()).unwrap();
        s.push_str("[train]\n");
        writeln!(s, "epochs = {}", t.epochs).unwrap();
        writeln!(s, "batch_size = {}", t.batch_size).unwrap();
        writeln!(s, "lr = {}", t.lr).unwrap();
        writeln!(s, "alpha = {}", t.alpha).unwrap();
        writeln!(s, "lambda = {}", t.lambda).unwrap();
        writeln!(s, "dropout = {}", t.dropout_rate).unwrap();
        writeln!(s, "patience = {}", t.patience).unwrap();
        writeln!(s, "neg_ratio = {}", t.neg_ratio).unwrap();
        writeln!(s, "eval_k = {}", t.eval_k).unwrap();
        writeln!(s, "eval_negatives = {}", t.eval_negatives).unwrap();
        writeln!(s, "ablate = {}", t.ablations.active().join(",")).unwrap();
        writeln!(s, "seed = {}", t.seed).unwrap();
        s
    }

    pub fn config_hash(&self) -> String {
        hash_text(&self.canonical_semantic())
    }

    /// Hash with one swept key blanked out; sweep aggregation refuses rows
    /// whose base hash differs.
    pub fn base_hash_excluding(&self, swept: &str) -> String {
        let canon = self.canonical_semantic();
        let filtered: String = canon
            .lines()
            .filter(|line| !line.starts_with(&format!("{swept} = ")))
            .collect::<Vec<_>>()
            .join("\n");
        hash_text(&filtered)
    }

    /// A config file reproducing this experiment exactly (used to hand the
    /// resolved config to worker subprocesses and as provenance).
    pub fn resolved_file(&self) -> String {
        let mut s = self.canonical_semantic();
        s.push_str("[sweep]\n");
        let join_f64 =
            |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        writeln!(s, "alpha = {}", join_f64(&self.sweep.alpha)).unwrap();
        writeln!(s, "lambda = {}", join_f64(&self.sweep.lambda)).unwrap();
        writeln!(
            s,
            "dim = {}",
            self.sweep
                .dim
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        )
        .unwrap();
        writeln!(
            s,
            "fusion = {}",
            self.sweep
                .fusion
                .iter()
                .map(|f| f.as_str())
                .collect::<Vec<_>>()
                .join(",")
        )
        .unwrap();
        s.push_str("[output]\n");
        writeln!(s, "dir = {}", self.out_dir.display()).unwrap();
        writeln!(
            s,
            "transport = {}",
            match self.transport {
                TransportKind::InProcess => "inproc",
                TransportKind::Socket => "socket",
            }
        )
        .unwrap();
        s
    }
}

pub fn hash_text(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
