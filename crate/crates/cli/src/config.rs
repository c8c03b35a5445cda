use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ergodic_core::cell::SolverOptions;
use ergodic_core::derivative::OneSidedOptions;
use ergodic_core::hamiltonian::HamiltonianModel;
use ergodic_core::lp::VelocitySpec;
use ergodic_core::torus::{Stencil, TorusGrid};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    SolveCell,
    Mather,
    SweepEps,
    SweepP,
    DerivativeCheck,
    Semiconvexity,
    Rate,
    LpCompare,
    OneSided,
    Accept,
}

impl Task {
    pub const ALL: [Task; 10] = [
        Task::SolveCell,
        Task::Mather,
        Task::SweepEps,
        Task::SweepP,
        Task::DerivativeCheck,
        Task::Semiconvexity,
        Task::Rate,
        Task::LpCompare,
        Task::OneSided,
        Task::Accept,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::SolveCell => "solve-cell",
            Task::Mather => "mather",
            Task::SweepEps => "sweep-eps",
            Task::SweepP => "sweep-p",
            Task::DerivativeCheck => "derivative-check",
            Task::Semiconvexity => "semiconvexity",
            Task::Rate => "rate",
            Task::LpCompare => "lp-compare",
            Task::OneSided => "one-sided",
            Task::Accept => "accept",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Task::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| CliError::Validation(format!("unknown task `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub stencil: Stencil,
}

/// Check tolerances; every one must be positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub residual: f64,
    pub trivial: f64,
    pub forms: f64,
    pub fd: f64,
    pub holonomy: f64,
    pub semiconvexity: f64,
    pub gradient: f64,
    pub convexity: f64,
    pub lp_gap: f64,
    pub one_sided: f64,
    pub flat: f64,
    /// Allowed excess of `dminus` over `dplus`.
    pub ordering: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            residual: 1e-10,
            trivial: 1e-10,
            forms: 1e-10,
            fd: 1e-5,
            holonomy: 1e-10,
            semiconvexity: 1e-8,
            gradient: 1e-4,
            convexity: 1e-8,
            lp_gap: 5e-2,
            one_sided: 2e-2,
            flat: 1e-6,
            ordering: 1e-8,
        }
    }
}

impl Tolerances {
    fn validate(&self) -> Result<(), CliError> {
        let all = [
            ("residual", self.residual),
            ("trivial", self.trivial),
            ("forms", self.forms),
            ("fd", self.fd),
            ("holonomy", self.holonomy),
            ("semiconvexity", self.semiconvexity),
            ("gradient", self.gradient),
            ("convexity", self.convexity),
            ("lp_gap", self.lp_gap),
            ("one_sided", self.one_sided),
            ("flat", self.flat),
            ("ordering", self.ordering),
        ];
        match all.iter().find(|(_, t)| !(*t > 0.0 && t.is_finite())) {
            Some((name, t)) => Err(CliError::Validation(format!("tolerance `{name}` must be > 0, got {t}"))),
            None => Ok(()),
        }
    }
}

/// Task parameters. Each task reads the fields it needs and rejects a config missing one.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskParams {
    pub eps: Option<f64>,
    pub p: Option<Vec<f64>>,
    pub eps_list: Option<Vec<f64>>,
    /// Momenta of `sweep-p` and `one-sided`.
    pub p_list: Option<Vec<Vec<f64>>>,
    pub etas: Option<Vec<f64>>,
    pub eps_samples: Option<Vec<f64>>,
    pub c0_reference: Option<f64>,
    pub xi: Option<Vec<f64>>,
    pub velocity: Option<VelocitySpec>,
    pub solver: SolverOptions,
    pub one_sided: Option<OneSidedOptions>,
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; when present it must name the task given on the command line.
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default)]
    pub model: Option<Value>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub params: TaskParams,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        cfg.params.tolerances.validate()?;
        cfg.params.solver.validate()?;
        Ok(cfg)
    }

    /// Builds the model, resolving table paths relative to `base`.
    pub fn model(&self, base: Option<&Path>) -> Result<HamiltonianModel, CliError> {
        let spec = self.model.as_ref().ok_or_else(|| missing("model"))?;
        Ok(HamiltonianModel::from_json_in(spec, base)?)
    }

    pub fn grid(&self, model: &HamiltonianModel) -> Result<TorusGrid, CliError> {
        let g = self.grid.as_ref().ok_or_else(|| missing("grid"))?;
        if g.dim != g.sizes.len() || g.dim != model.dim() {
            return Err(CliError::Validation(format!(
                "grid dim {} with {} sizes does not match the {}-dimensional model",
                g.dim,
                g.sizes.len(),
                model.dim()
            )));
        }
        Ok(TorusGrid::with_stencil(&g.sizes, g.stencil)?)
    }

    pub fn eps(&self) -> Result<f64, CliError> {
        self.params.eps.ok_or_else(|| missing("params.eps"))
    }

    pub fn p(&self, model: &HamiltonianModel) -> Result<Vec<f64>, CliError> {
        let p = self.params.p.clone().ok_or_else(|| missing("params.p"))?;
        check_len("params.p", &p, model.dim())?;
        Ok(p)
    }

    pub fn p_list(&self, model: &HamiltonianModel) -> Result<Vec<Vec<f64>>, CliError> {
        let list = self.params.p_list.clone().ok_or_else(|| missing("params.p_list"))?;
        if list.is_empty() {
            return Err(CliError::Validation("params.p_list is empty".into()));
        }
        for p in &list {
            check_len("params.p_list entry", p, model.dim())?;
        }
        Ok(list)
    }

    pub fn list(&self, name: &str, value: &Option<Vec<f64>>) -> Result<Vec<f64>, CliError> {
        match value {
            Some(v) if !v.is_empty() => Ok(v.clone()),
            Some(_) => Err(CliError::Validation(format!("params.{name} is empty"))),
            None => Err(missing(&format!("params.{name}"))),
        }
    }
}

fn missing(field: &str) -> CliError {
    CliError::Validation(format!("this task needs `{field}` in the config"))
}

fn check_len(what: &str, v: &[f64], dim: usize) -> Result<(), CliError> {
    if v.len() != dim {
        return Err(CliError::Validation(format!("{what} has {} components, the model has dimension {dim}", v.len())));
    }
    Ok(())
}
