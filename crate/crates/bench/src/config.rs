//! Suite configuration: the JSON file format, per-suite defaults, and the
//! validation that runs before any computation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dyadshift::lattice::check_exponent;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unknown suite {0:?}; run `dyadshift list-suites`")]
    UnknownSuite(String),
    #[error("no suite named on the command line or in the config")]
    MissingSuite,
    #[error("suite {cli:?} on the command line disagrees with {file:?} in the config")]
    SuiteConflict { cli: String, file: String },
    #[error("depth {depth} needs at least {} levels, grid has {levels}", depth + 1)]
    DepthOverflow { depth: u32, levels: u32 },
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Suite {
    #[serde(rename = "haar-calculus")]
    HaarCalculus,
    #[serde(rename = "identity-318")]
    Identity318,
    #[serde(rename = "model-41")]
    Model41,
    #[serde(rename = "l2-contraction")]
    L2Contraction,
    #[serde(rename = "shift-growth")]
    ShiftGrowth,
    #[serde(rename = "partial-paraproduct-61")]
    PartialParaproduct61,
    #[serde(rename = "paraproduct-rbound-54")]
    ParaproductRbound54,
    #[serde(rename = "paraproduct-rbound-55")]
    ParaproductRbound55,
    #[serde(rename = "paraproduct-rbound-56")]
    ParaproductRbound56,
    #[serde(rename = "tri-partial-81")]
    TriPartial81,
    #[serde(rename = "tri-partial-82")]
    TriPartial82,
    #[serde(rename = "decoupling-32")]
    Decoupling32,
    #[serde(rename = "stopping-51")]
    Stopping51,
    #[serde(rename = "key-estimate")]
    KeyEstimate,
    #[serde(rename = "khintchine-maurey")]
    KhintchineMaurey,
    #[serde(rename = "fefferman-stein")]
    FeffermanStein,
}

impl Suite {
    pub const ALL: [Suite; 16] = [
        Suite::HaarCalculus,
        Suite::Identity318,
        Suite::Model41,
        Suite::L2Contraction,
        Suite::ShiftGrowth,
        Suite::PartialParaproduct61,
        Suite::ParaproductRbound54,
        Suite::ParaproductRbound55,
        Suite::ParaproductRbound56,
        Suite::TriPartial81,
        Suite::TriPartial82,
        Suite::Decoupling32,
        Suite::Stopping51,
        Suite::KeyEstimate,
        Suite::KhintchineMaurey,
        Suite::FeffermanStein,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::HaarCalculus => "haar-calculus",
            Suite::Identity318 => "identity-318",
            Suite::Model41 => "model-41",
            Suite::L2Contraction => "l2-contraction",
            Suite::ShiftGrowth => "shift-growth",
            Suite::PartialParaproduct61 => "partial-paraproduct-61",
            Suite::ParaproductRbound54 => "paraproduct-rbound-54",
            Suite::ParaproductRbound55 => "paraproduct-rbound-55",
            Suite::ParaproductRbound56 => "paraproduct-rbound-56",
            Suite::TriPartial81 => "tri-partial-81",
            Suite::TriPartial82 => "tri-partial-82",
            Suite::Decoupling32 => "decoupling-32",
            Suite::Stopping51 => "stopping-51",
            Suite::KeyEstimate => "key-estimate",
            Suite::KhintchineMaurey => "khintchine-maurey",
            Suite::FeffermanStein => "fefferman-stein",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Suite::HaarCalculus => "orthonormality, reconstruction, block and telescoping identities",
            Suite::Identity318 => "direct bi-parameter shift vs the nested one-parameter evaluation",
            Suite::Model41 => "model operators vs their one-parameter shift form",
            Suite::L2Contraction => "exact L2 norms of scalar one-parameter shifts",
            Suite::ShiftGrowth => "bi-parameter shift norms against the depth growth model",
            Suite::PartialParaproduct61 => "partial paraproduct norms in both axis orders",
            Suite::ParaproductRbound54 => "R-bounds of one-parameter paraproduct families",
            Suite::ParaproductRbound55 => "R-bounds of full bi-parameter paraproduct families",
            Suite::ParaproductRbound56 => "R-bounds of mixed bi-parameter paraproduct families",
            Suite::TriPartial81 => "tri-parameter partial paraproducts, one shift parameter",
            Suite::TriPartial82 => "tri-parameter partial paraproducts, two shift parameters",
            Suite::Decoupling32 => "decoupling ratios of martingale blocks",
            Suite::Stopping51 => "stopping families: packing, sparseness, block bounds",
            Suite::KeyEstimate => "coefficient pairing against product BMO and the square function",
            Suite::KhintchineMaurey => "Rademacher averages vs square functions in lattices",
            Suite::FeffermanStein => "vector-valued maximal function ratios",
        }
    }

    /// Arity of each entry of `exponents` and of `depths`.
    fn arities(self) -> (usize, usize) {
        match self {
            Suite::HaarCalculus => (0, 0),
            Suite::Identity318 => (0, 4),
            Suite::Model41 => (0, 2),
            Suite::L2Contraction => (0, 2),
            Suite::ShiftGrowth => (3, 4),
            Suite::PartialParaproduct61 => (3, 2),
            Suite::ParaproductRbound54 | Suite::ParaproductRbound55 | Suite::ParaproductRbound56 => (2, 0),
            Suite::TriPartial81 => (4, 2),
            Suite::TriPartial82 => (4, 4),
            Suite::Decoupling32 => (1, 2),
            Suite::Stopping51 => (0, 0),
            Suite::KeyEstimate => (0, 0),
            Suite::KhintchineMaurey => (1, 0),
            Suite::FeffermanStein => (3, 0),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| ConfigError::UnknownSuite(s.to_string()))
    }
}

/// A grid for the Haar calculus checks: `axes` copies of an `n`-dimensional
/// axis with `levels` levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub axes: usize,
    pub dim: u32,
    pub levels: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub restarts: Option<usize>,
    pub iterations: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Absolute or relative deviation allowed in exact identities.
    pub tolerance: Option<f64>,
    /// Largest allowed ratio between constants fitted on two runs.
    pub stability: Option<f64>,
    /// Suite-specific upper bound (norm, ratio, or block size).
    pub bound: Option<f64>,
}

/// The config file. Everything but `seed` is optional and falls back to the
/// suite's defaults; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default)]
    pub suite: Option<String>,
    pub seed: u64,
    #[serde(default)]
    pub levels: Option<Vec<u32>>,
    #[serde(default)]
    pub grids: Option<Vec<GridConfig>>,
    #[serde(default)]
    pub lattice_dims: Option<Vec<usize>>,
    #[serde(default)]
    pub exponents: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub depths: Option<Vec<Vec<u32>>>,
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub sizes: Option<Vec<usize>>,
    #[serde(default)]
    pub search: Option<SearchConfig>,
    #[serde(default)]
    pub thresholds: Option<Thresholds>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl SuiteConfig {
    pub fn new(suite: Suite, seed: u64) -> Self {
        SuiteConfig {
            suite: Some(suite.name().to_string()),
            seed,
            levels: None,
            grids: None,
            lattice_dims: None,
            exponents: None,
            depths: None,
            trials: None,
            sizes: None,
            search: None,
            thresholds: None,
            out: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// The suite named by `cli`, the config, or both (which must agree).
    pub fn suite(&self, cli: Option<&str>) -> Result<Suite, ConfigError> {
        match (cli, self.suite.as_deref()) {
            (Some(c), Some(f)) if c != f => Err(ConfigError::SuiteConflict {
                cli: c.to_string(),
                file: f.to_string(),
            }),
            (Some(name), _) | (None, Some(name)) => name.parse(),
            (None, None) => Err(ConfigError::MissingSuite),
        }
    }

    /// Fills in defaults and validates everything against truncation limits.
    pub fn resolve(&self, suite: Suite) -> Result<Resolved, ConfigError> {
        let d = Resolved::defaults(suite, self.seed);
        let search = self.search.clone().unwrap_or_default();
        let th = self.thresholds.clone().unwrap_or_default();
        let r = Resolved {
            suite,
            seed: self.seed,
            levels: self.levels.clone().unwrap_or(d.levels),
            grids: self.grids.clone().unwrap_or(d.grids),
            lattice_dims: self.lattice_dims.clone().unwrap_or(d.lattice_dims),
            exponents: self.exponents.clone().unwrap_or(d.exponents),
            depths: self.depths.clone().unwrap_or(d.depths),
            trials: self.trials.unwrap_or(d.trials),
            sizes: self.sizes.clone().unwrap_or(d.sizes),
            restarts: search.restarts.unwrap_or(d.restarts),
            iterations: search.iterations.unwrap_or(d.iterations),
            tolerance: th.tolerance.unwrap_or(d.tolerance),
            stability: th.stability.unwrap_or(d.stability),
            bound: th.bound.or(d.bound),
            out: self.out.clone(),
        };
        r.validate()?;
        Ok(r)
    }
}

/// A config with every default filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub suite: Suite,
    pub seed: u64,
    pub levels: Vec<u32>,
    pub grids: Vec<GridConfig>,
    pub lattice_dims: Vec<usize>,
    pub exponents: Vec<Vec<f64>>,
    pub depths: Vec<Vec<u32>>,
    pub trials: usize,
    pub sizes: Vec<usize>,
    pub restarts: usize,
    pub iterations: usize,
    pub tolerance: f64,
    pub stability: f64,
    pub bound: Option<f64>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

fn grid4(values: &[u32]) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for &a in values {
        for &b in values {
            for &c in values {
                for &d in values {
                    out.push(vec![a, b, c, d]);
                }
            }
        }
    }
    out
}

fn grid2(values: &[u32]) -> Vec<Vec<u32>> {
    values.iter().flat_map(|&a| values.iter().map(move |&b| vec![a, b])).collect()
}

fn pairs(values: &[f64]) -> Vec<Vec<f64>> {
    values.iter().flat_map(|&a| values.iter().map(move |&b| vec![a, b])).collect()
}

/// Depth points of the shift-growth suite: every model value from 1 to 9.
const SHIFT_GROWTH_POINTS: [[u32; 4]; 12] = [
    [0, 0, 0, 0],
    [1, 1, 0, 0],
    [0, 0, 1, 1],
    [1, 1, 1, 1],
    [2, 2, 0, 0],
    [0, 0, 2, 2],
    [2, 2, 1, 1],
    [1, 1, 2, 2],
    [2, 2, 2, 2],
    [0, 2, 0, 2],
    [2, 0, 1, 2],
    [1, 2, 2, 0],
];

impl Resolved {
    fn defaults(suite: Suite, seed: u64) -> Resolved {
        let base = Resolved {
            suite,
            seed,
            levels: vec![3],
            grids: Vec::new(),
            lattice_dims: vec![2],
            exponents: Vec::new(),
            depths: Vec::new(),
            trials: 1,
            sizes: Vec::new(),
            restarts: 20,
            iterations: 60,
            tolerance: 1e-12,
            stability: 2.0,
            bound: None,
            out: None,
        };
        match suite {
            Suite::HaarCalculus => Resolved {
                levels: Vec::new(),
                grids: vec![
                    GridConfig { axes: 1, dim: 1, levels: 5 },
                    GridConfig { axes: 1, dim: 2, levels: 3 },
                    GridConfig { axes: 2, dim: 1, levels: 3 },
                    GridConfig { axes: 3, dim: 1, levels: 2 },
                ],
                lattice_dims: vec![1, 4],
                trials: 3,
                ..base
            },
            Suite::Identity318 => Resolved {
                depths: grid4(&[0, 1, 2]),
                trials: 100,
                tolerance: 1e-11,
                ..base
            },
            Suite::Model41 => Resolved {
                levels: vec![4],
                lattice_dims: vec![1, 2, 3],
                depths: grid2(&[0, 1, 2]),
                trials: 12,
                ..base
            },
            Suite::L2Contraction => Resolved {
                levels: vec![6],
                lattice_dims: vec![1],
                depths: grid2(&[0, 1, 2, 3]),
                trials: 50,
                tolerance: 1e-9,
                bound: Some(1.0),
                ..base
            },
            Suite::ShiftGrowth => Resolved {
                levels: vec![3, 4],
                lattice_dims: vec![1, 4],
                exponents: vec![vec![2.0, 2.0, 2.0], vec![3.0, 1.5, 3.0]],
                depths: SHIFT_GROWTH_POINTS.iter().map(|p| p.to_vec()).collect(),
                ..base
            },
            Suite::PartialParaproduct61 => Resolved {
                exponents: vec![vec![3.0, 1.5, 2.0]],
                depths: grid2(&[0, 1, 2]),
                sizes: vec![8, 16],
                ..base
            },
            Suite::ParaproductRbound54 | Suite::ParaproductRbound55 | Suite::ParaproductRbound56 => Resolved {
                levels: vec![4],
                exponents: pairs(&[1.5, 2.0, 3.0]),
                sizes: vec![4, 16, 64],
                restarts: 4,
                iterations: 30,
                ..base
            },
            Suite::TriPartial81 => Resolved {
                levels: vec![2],
                exponents: vec![vec![3.0, 1.5, 2.0, 2.0]],
                depths: grid2(&[0, 1]),
                trials: 4,
                sizes: vec![4],
                ..base
            },
            Suite::TriPartial82 => Resolved {
                levels: vec![2],
                exponents: vec![vec![3.0, 1.5, 2.0, 2.0]],
                depths: grid4(&[0, 1]),
                trials: 2,
                ..base
            },
            Suite::Decoupling32 => Resolved {
                levels: vec![3, 4],
                exponents: vec![vec![1.5], vec![2.0], vec![3.0]],
                depths: vec![vec![0, 0], vec![1, 0], vec![1, 1]],
                trials: 200,
                tolerance: 1e-10,
                ..base
            },
            Suite::Stopping51 => Resolved {
                levels: vec![5],
                lattice_dims: vec![1],
                trials: 500,
                bound: Some(6.0),
                ..base
            },
            Suite::KeyEstimate => Resolved {
                levels: vec![3, 4],
                lattice_dims: vec![1],
                trials: 50,
                sizes: vec![8],
                ..base
            },
            Suite::KhintchineMaurey => Resolved {
                levels: Vec::new(),
                lattice_dims: (1..=8).collect(),
                exponents: vec![vec![2.0], vec![1.5], vec![4.0]],
                trials: 1000,
                sizes: vec![4],
                ..base
            },
            Suite::FeffermanStein => Resolved {
                levels: vec![3, 2],
                lattice_dims: vec![1],
                exponents: vec![vec![3.0, 1.5, 1.5], vec![3.0, 1.5, 2.0], vec![2.0, 2.0, 3.0]],
                trials: 500,
                sizes: vec![3],
                bound: Some(16.0),
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let (exp_arity, depth_arity) = self.suite.arities();
        for &l in &self.levels {
            if !(1..=12).contains(&l) {
                return Err(invalid("levels", format!("{l} is outside 1..=12")));
            }
        }
        let needs_levels = !matches!(self.suite, Suite::HaarCalculus | Suite::KhintchineMaurey);
        if needs_levels && self.levels.is_empty() {
            return Err(invalid("levels", "at least one level is required"));
        }
        if self.suite == Suite::HaarCalculus && self.grids.is_empty() {
            return Err(invalid("grids", "at least one grid is required"));
        }
        for g in &self.grids {
            if g.axes == 0 || g.axes > 3 || g.dim == 0 || g.dim > 3 || g.levels == 0 {
                return Err(invalid("grids", format!("{g:?} needs 1..=3 axes, dim 1..=3, levels >= 1")));
            }
            let cells = 1u64 << (g.axes as u64 * g.dim as u64 * g.levels as u64).min(63);
            if cells > 1024 {
                return Err(invalid("grids", format!("{g:?} has more than 1024 cells")));
            }
        }
        if self.lattice_dims.is_empty() || self.lattice_dims.iter().any(|&d| d == 0 || d > 8) {
            return Err(invalid("lattice_dims", "need a nonempty list of dimensions in 1..=8"));
        }
        if exp_arity > 0 && self.exponents.is_empty() {
            return Err(invalid("exponents", "at least one exponent tuple is required"));
        }
        for e in &self.exponents {
            if e.len() != exp_arity {
                return Err(invalid("exponents", format!("{} suite takes tuples of {exp_arity}", self.suite)));
            }
            for &p in e {
                check_exponent(p).map_err(|err| invalid("exponents", err.to_string()))?;
            }
        }
        if depth_arity > 0 && self.depths.is_empty() {
            return Err(invalid("depths", "at least one depth tuple is required"));
        }
        let finest = self.levels.iter().copied().min().unwrap_or(0);
        for t in &self.depths {
            if t.len() != depth_arity {
                return Err(invalid("depths", format!("{} suite takes tuples of {depth_arity}", self.suite)));
            }
            for &i in t {
                if i + 1 > finest {
                    return Err(ConfigError::DepthOverflow { depth: i, levels: finest });
                }
            }
        }
        let fitted = matches!(
            self.suite,
            Suite::ShiftGrowth | Suite::PartialParaproduct61 | Suite::TriPartial81 | Suite::TriPartial82
        );
        if fitted && self.depths.len() < crate::fit::MIN_POINTS {
            return Err(invalid(
                "depths",
                format!("growth fits need at least {} depth points", crate::fit::MIN_POINTS),
            ));
        }
        if self.suite == Suite::Decoupling32 {
            if let Some(t) = self.depths.iter().find(|t| t[1] > t[0]) {
                return Err(invalid("depths", format!("decoupling needs j <= i, got {t:?}")));
            }
        }
        if self.trials == 0 {
            return Err(invalid("trials", "must be positive"));
        }
        if self.sizes.contains(&0) {
            return Err(invalid("sizes", "must be positive"));
        }
        let needs_sizes = matches!(
            self.suite,
            Suite::PartialParaproduct61
                | Suite::ParaproductRbound54
                | Suite::ParaproductRbound55
                | Suite::ParaproductRbound56
                | Suite::TriPartial81
                | Suite::KeyEstimate
                | Suite::KhintchineMaurey
                | Suite::FeffermanStein
        );
        if needs_sizes && self.sizes.is_empty() {
            return Err(invalid("sizes", "at least one size is required"));
        }
        if self.restarts == 0 || self.iterations == 0 {
            return Err(invalid("search", "restarts and iterations must be positive"));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 || self.stability.is_nan() || self.stability < 1.0 || self.bound.is_some_and(|b| !b.is_finite()) {
            return Err(invalid("thresholds", "need tolerance >= 0, stability >= 1, and a finite bound"));
        }
        match self.suite {
            Suite::FeffermanStein if self.levels.len() != 2 => {
                Err(invalid("levels", "fefferman-stein takes levels for its two axes"))
            }
            Suite::Stopping51 | Suite::KeyEstimate | Suite::ShiftGrowth | Suite::Decoupling32
                if self.levels.iter().any(|&l| l < 2) =>
            {
                Err(invalid("levels", "this suite needs at least 2 levels"))
            }
            _ => Ok(()),
        }
    }
}
