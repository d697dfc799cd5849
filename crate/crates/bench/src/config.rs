use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparse_gp::knots::OatConfig;
use sparse_gp::optimizer::OptimizerConfig;
use sparse_gp::KernelParams;

use crate::data::{Comparator, FilterRule};
use crate::error::{BenchError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KnotSelection {
    #[serde(rename = "OAT-BO")]
    OatBo,
    #[serde(rename = "OAT-RS")]
    OatRs,
    #[serde(rename = "Simult")]
    Simult,
    #[serde(rename = "none")]
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "VFE")]
    Vfe,
    #[serde(rename = "FIC")]
    Fic,
    #[serde(rename = "FullGP")]
    FullGp,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KnotInit {
    Kmeans,
    /// Final knots and parameters of an earlier roster model.
    FromModel(String),
}

impl TryFrom<String> for KnotInit {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        if s == "kmeans" {
            Ok(KnotInit::Kmeans)
        } else if let Some(id) = s.strip_prefix("from-model:") {
            Ok(KnotInit::FromModel(id.to_string()))
        } else {
            Err(format!("knot_init must be \"kmeans\" or \"from-model:<id>\", got {s:?}"))
        }
    }
}

impl From<KnotInit> for String {
    fn from(k: KnotInit) -> String {
        match k {
            KnotInit::Kmeans => "kmeans".into(),
            KnotInit::FromModel(id) => format!("from-model:{id}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub model_id: String,
    pub knot_selection: KnotSelection,
    pub approximation: ModelKind,
    #[serde(default = "default_knot_init")]
    pub knot_init: KnotInit,
    /// For `Simult` with k-means knots: the model whose final knot count is
    /// reused. Defaults to the first earlier OAT-BO entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knot_count_from: Option<String>,
}

fn default_knot_init() -> KnotInit {
    KnotInit::Kmeans
}

impl RosterEntry {
    pub fn new(id: &str, selection: KnotSelection, kind: ModelKind, init: KnotInit) -> Self {
        Self {
            model_id: id.into(),
            knot_selection: selection,
            approximation: kind,
            knot_init: init,
            knot_count_from: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitParams {
    pub signal_variance: f64,
    pub lengthscale: f64,
    pub noise_variance: f64,
}

impl Default for InitParams {
    fn default() -> Self {
        Self {
            signal_variance: 1.0,
            lengthscale: 1.0,
            noise_variance: 0.1,
        }
    }
}

impl InitParams {
    pub fn kernel_params(&self) -> Result<KernelParams> {
        Ok(KernelParams::new(self.signal_variance, self.lengthscale, self.noise_variance)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub predictors: Vec<String>,
    pub target: String,
    #[serde(default)]
    pub filters: Vec<FilterRule>,
    pub split_fraction: f64,
    pub n_runs: usize,
    pub rng_seed: u64,
    pub roster: Vec<RosterEntry>,
    #[serde(default)]
    pub oat: OatConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub init: InitParams,
    pub output_dir: PathBuf,
    /// Write wall-clock training time to the `seconds` column. Off, the
    /// column is left empty and the results CSV is reproducible byte for byte.
    #[serde(default = "yes")]
    pub record_wall_time: bool,
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn entry(&self, id: &str) -> Option<(usize, &RosterEntry)> {
        self.roster.iter().enumerate().find(|(_, e)| e.model_id == id)
    }

    pub fn has_full_gp(&self) -> bool {
        self.roster.iter().any(|e| e.approximation == ModelKind::FullGp)
    }

    /// Roster index of the model whose knot count a `Simult`/k-means entry reuses.
    pub fn count_source(&self, index: usize) -> Option<usize> {
        let e = &self.roster[index];
        match &e.knot_count_from {
            Some(id) => self.entry(id).map(|(i, _)| i),
            None => self.roster[..index]
                .iter()
                .position(|r| r.knot_selection == KnotSelection::OatBo),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.predictors.is_empty() {
            return bad("no predictor columns".into());
        }
        if self.n_runs == 0 {
            return bad("n_runs must be positive".into());
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad(format!("split_fraction {} outside (0,1)", self.split_fraction));
        }
        if self.roster.is_empty() {
            return bad("empty roster".into());
        }
        self.oat.validate()?;
        self.optimizer.validate()?;
        self.init.kernel_params()?;

        let mut seen = HashSet::new();
        for (i, e) in self.roster.iter().enumerate() {
            if e.model_id.is_empty() || e.model_id.contains(['/', '\\', ',']) {
                return bad(format!("model id {:?} is not usable in file names and CSV cells", e.model_id));
            }
            if !seen.insert(e.model_id.as_str()) {
                return bad(format!("duplicate model id {}", e.model_id));
            }
            if e.approximation == ModelKind::FullGp && e.knot_selection != KnotSelection::None {
                return bad(format!("{}: a full GP takes knot_selection \"none\"", e.model_id));
            }
            if let KnotInit::FromModel(src) = &e.knot_init {
                match self.entry(src) {
                    Some((j, s)) if j < i && s.approximation != ModelKind::FullGp => {}
                    _ => return bad(format!("{}: from-model:{src} must name an earlier sparse model", e.model_id)),
                }
                if matches!(e.knot_selection, KnotSelection::OatBo | KnotSelection::OatRs) {
                    return bad(format!("{}: OAT selection starts from k-means knots", e.model_id));
                }
            }
            if e.knot_selection == KnotSelection::Simult && e.knot_init == KnotInit::Kmeans {
                match self.count_source(i) {
                    Some(j) if j < i => {}
                    _ => {
                        return bad(format!(
                            "{}: simultaneous optimization from k-means needs an earlier OAT model for its knot count",
                            e.model_id
                        ))
                    }
                }
            }
        }
        Ok(())
    }
}

/// Full GP, three OAT models, and two simultaneous refits.
pub fn boston_roster() -> Vec<RosterEntry> {
    use KnotSelection::*;
    use ModelKind::*;
    vec![
        RosterEntry::new("FGP", None, FullGp, KnotInit::Kmeans),
        RosterEntry::new("OBVk", OatBo, Vfe, KnotInit::Kmeans),
        RosterEntry::new("ORVk", OatRs, Vfe, KnotInit::Kmeans),
        RosterEntry::new("OBFk", OatBo, Fic, KnotInit::Kmeans),
        RosterEntry::new("SVk", Simult, Vfe, KnotInit::Kmeans),
        RosterEntry::new("SVO", Simult, Vfe, KnotInit::FromModel("OBVk".into())),
    ]
}

/// The Boston roster without the full GP and the k-means simultaneous fit.
pub fn ccpp_roster() -> Vec<RosterEntry> {
    use KnotSelection::*;
    use ModelKind::*;
    vec![
        RosterEntry::new("OBVk", OatBo, Vfe, KnotInit::Kmeans),
        RosterEntry::new("ORVk", OatRs, Vfe, KnotInit::Kmeans),
        RosterEntry::new("OBFk", OatBo, Fic, KnotInit::Kmeans),
        RosterEntry::new("SVO", Simult, Vfe, KnotInit::FromModel("OBVk".into())),
    ]
}

/// Boston housing: three predictors, censored targets at 50 removed.
pub fn boston_config(dataset: PathBuf, output_dir: PathBuf) -> ExperimentConfig {
    ExperimentConfig {
        dataset,
        predictors: vec!["LSTAT".into(), "RM".into(), "PTRATIO".into()],
        target: "MEDV".into(),
        filters: vec![FilterRule {
            column: "MEDV".into(),
            op: Comparator::Eq,
            value: 50.0,
        }],
        split_fraction: 0.8,
        n_runs: 5,
        rng_seed: 0,
        roster: boston_roster(),
        oat: OatConfig::default(),
        optimizer: OptimizerConfig::default(),
        init: InitParams::default(),
        output_dir,
        record_wall_time: true,
    }
}

/// Airfoil self-noise, with the UCI columns named frequency, angle, chord,
/// velocity, thickness and pressure.
pub fn airfoil_config(dataset: PathBuf, output_dir: PathBuf) -> ExperimentConfig {
    ExperimentConfig {
        dataset,
        predictors: ["frequency", "angle", "chord", "velocity", "thickness"]
            .map(String::from)
            .to_vec(),
        target: "pressure".into(),
        filters: Vec::new(),
        split_fraction: 0.8,
        n_runs: 5,
        rng_seed: 0,
        roster: boston_roster(),
        oat: OatConfig::default(),
        optimizer: OptimizerConfig::default(),
        init: InitParams::default(),
        output_dir,
        record_wall_time: true,
    }
}

/// Combined cycle power plant: four ambient predictors, 50/50 split.
pub fn ccpp_config(dataset: PathBuf, output_dir: PathBuf) -> ExperimentConfig {
    ExperimentConfig {
        dataset,
        predictors: vec!["AT".into(), "V".into(), "AP".into(), "RH".into()],
        target: "PE".into(),
        filters: Vec::new(),
        split_fraction: 0.5,
        n_runs: 5,
        rng_seed: 0,
        roster: ccpp_roster(),
        oat: OatConfig::default(),
        optimizer: OptimizerConfig::default(),
        init: InitParams::default(),
        output_dir,
        record_wall_time: true,
    }
}
