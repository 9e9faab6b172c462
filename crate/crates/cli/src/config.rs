//! Experiment configuration: command-line flags layered over an optional JSON document.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use pepbcd::algos::{MethodSpec, StepSchedule};
use pepbcd::expr::LipschitzVector;
use pepbcd::pep::{Criterion, Setting, SolverOptions};
use pepbcd::{PepError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ccd,
    Cacd,
    Am,
    Custom,
    /// Randomized accelerated method over all block sequences.
    Racd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SettingKind {
    All,
    Init,
    Gradnorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionKind {
    Gap,
    MinGrad,
    Decrease,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Flags shared by every subcommand. Everything is optional so that a JSON
/// config can fill the gaps.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Number of blocks p.
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Number of cycles K.
    #[arg(long)]
    pub cycles: Option<usize>,
    /// Number of steps N (randomized and sequence runs).
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub lipschitz: Option<Vec<f64>>,
    /// Absolute step sizes, one per block (or per step for custom methods).
    #[arg(long, value_delimiter = ',', conflicts_with = "gamma_rel")]
    pub gamma: Option<Vec<f64>>,
    /// Step sizes relative to 1/L_ℓ.
    #[arg(long, value_delimiter = ',')]
    pub gamma_rel: Option<Vec<f64>>,
    /// 1-based block update order.
    #[arg(long, value_delimiter = ',')]
    pub order: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub setting: Option<SettingKind>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long, value_enum)]
    pub criterion: Option<CriterionKind>,
    /// Solver tolerance (defaults to PEPBCD_SOLVER_TOL, then 1e-8).
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub export_sdpa: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long)]
    pub jobs: Option<usize>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Values set in `flags` win over `self`.
    pub fn overlay(mut self, flags: &Self) -> Self {
        overlay!(
            self,
            flags,
            method,
            blocks,
            cycles,
            steps,
            lipschitz,
            gamma,
            gamma_rel,
            order,
            setting,
            radius,
            criterion,
            tol,
            out,
            format,
            export_sdpa,
            jobs
        );
        self
    }

    pub fn load(path: Option<&PathBuf>, flags: &Self) -> Result<Self> {
        let base = match path {
            Some(p) => Self::from_json(&std::fs::read_to_string(p)?)?,
            None => Self::default(),
        };
        let merged = base.overlay(flags);
        merged.validate()?;
        Ok(merged)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(PepError::InvalidInput(format!("{what} must be positive")));
        if self.blocks == Some(0) {
            return bad("--blocks");
        }
        if self.cycles == Some(0) {
            return bad("--cycles");
        }
        if self.steps == Some(0) {
            return bad("--steps");
        }
        if self.jobs == Some(0) {
            return bad("--jobs");
        }
        for (name, v) in [("--radius", self.radius), ("--tol", self.tol)] {
            if let Some(x) = v {
                if !(x.is_finite() && x > 0.0) {
                    return bad(name);
                }
            }
        }
        if self.gamma.is_some() && self.gamma_rel.is_some() {
            return Err(PepError::InvalidInput("give either --gamma or --gamma-rel, not both".into()));
        }
        if let Some(o) = &self.order {
            if o.contains(&0) {
                return Err(PepError::InvalidInput("--order is 1-based".into()));
            }
        }
        Ok(())
    }

    pub fn method(&self) -> Method {
        self.method.unwrap_or(Method::Ccd)
    }

    pub fn p(&self) -> usize {
        self.blocks.or_else(|| self.lipschitz.as_ref().map(|l| l.len())).unwrap_or(2)
    }

    pub fn k(&self) -> usize {
        self.cycles.unwrap_or(1)
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or_default()
    }

    pub fn lipschitz(&self) -> Result<LipschitzVector> {
        let p = self.p();
        match &self.lipschitz {
            Some(v) if v.len() == 1 => LipschitzVector::uniform(p, v[0]),
            Some(v) if v.len() == p => LipschitzVector::new(v.clone()),
            Some(v) => Err(PepError::InvalidInput(format!("{} Lipschitz constants for {p} blocks", v.len()))),
            None => LipschitzVector::uniform(p, 1.0),
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius.unwrap_or(1.0)
    }

    pub fn setting(&self) -> Setting {
        match self.setting.unwrap_or(SettingKind::Init) {
            SettingKind::All => Setting::all(self.radius()),
            SettingKind::Init => Setting::init(self.radius()),
            SettingKind::Gradnorm => Setting::GradNormalized,
        }
    }

    pub fn criterion(&self) -> Criterion {
        match self.criterion {
            Some(CriterionKind::Gap) => Criterion::FinalValueGap,
            Some(CriterionKind::MinGrad) => Criterion::MinGradDualNorm,
            Some(CriterionKind::Decrease) => Criterion::CycleDecrease,
            None if self.setting == Some(SettingKind::Gradnorm) => Criterion::CycleDecrease,
            None => Criterion::FinalValueGap,
        }
    }

    pub fn solver_options(&self) -> Result<SolverOptions> {
        let o = SolverOptions::from_env()?;
        let o = match self.tol {
            Some(t) => o.with_tolerance(t),
            None => o,
        };
        o.validate()?;
        Ok(o)
    }

    /// 0-based order, if given.
    pub fn order0(&self) -> Option<Vec<usize>> {
        self.order.as_ref().map(|o| o.iter().map(|b| b - 1).collect())
    }

    pub fn schedule(&self, l: &LipschitzVector) -> Result<StepSchedule> {
        let p = l.len();
        let broadcast = |v: &Vec<f64>| if v.len() == 1 { vec![v[0]; p] } else { v.clone() };
        match (&self.gamma, &self.gamma_rel) {
            (Some(g), _) => StepSchedule::absolute(broadcast(g)),
            (None, Some(r)) => StepSchedule::relative(r, l),
            (None, None) => Ok(StepSchedule::inverse_lipschitz(l)),
        }
    }

    /// Deterministic method described by the configuration.
    pub fn method_spec(&self) -> Result<MethodSpec> {
        let p = self.p();
        let k = self.k();
        let l = self.lipschitz()?;
        let order = self.order0();
        let spec = match self.method() {
            Method::Ccd => MethodSpec::ccd(p, k, self.schedule(&l)?)?,
            Method::Cacd => MethodSpec::cacd(p, k, self.schedule(&l)?)?,
            Method::Am => MethodSpec::am(p, k)?,
            Method::Custom => {
                let order = order.clone().unwrap_or_else(|| (0..p * k).map(|i| i % p).collect());
                let n = order.len();
                let per_step: Vec<f64> = match (&self.gamma, &self.gamma_rel) {
                    (Some(g), _) if g.len() == n => g.clone(),
                    (None, Some(r)) if r.len() == n => r.iter().zip(&order).map(|(r, b)| r / l.get(*b)).collect(),
                    _ => {
                        let s = self.schedule(&l)?;
                        order.iter().map(|b| s.gamma()[*b]).collect()
                    }
                };
                return MethodSpec::custom_from_steps(p, order, &per_step);
            }
            Method::Racd => {
                return Err(PepError::InvalidInput("the randomized method has no single deterministic run".into()))
            }
        };
        match order {
            Some(o) => spec.with_order(o),
            None => Ok(spec),
        }
    }
}
