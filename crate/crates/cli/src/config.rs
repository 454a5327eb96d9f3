//! Experiment configuration files.
//!
//! Configs are TOML. Subsystem and coupling indices, as well as coupling
//! variable/equation numbers, are 1-based to match the `x_i_k` column names
//! of trajectory files.

use std::path::Path;

use anyhow::{Context, bail, ensure};
use koopman_core::dynamics::{CoupledSystem, Coupling};
use koopman_core::{PolynomialVectorField, Term, VariableLayout};
use serde::{Deserialize, Serialize};

pub const DUFFING_PRESET: &str = include_str!("../presets/duffing.preset");
pub const VDP_PRESET: &str = include_str!("../presets/vdp.preset");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    pub exponents: Vec<u32>,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubsystemSpec {
    Duffing { delta: f64, alpha: f64, beta: f64 },
    VanDerPol { mu: f64 },
    /// Linear field `dx/dt = A x`, `a` row-major.
    Linear { a: Vec<Vec<f64>> },
    /// Arbitrary polynomial field: `terms[i]` lists the terms of `dx_i/dt`.
    Polynomial { dim: usize, terms: Vec<Vec<TermSpec>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingSpec {
    /// `strength * (x_{source,variable} - x_{target,variable})` added to
    /// equation `equation` of the target.
    Diffusive {
        target: usize,
        source: usize,
        strength: f64,
        #[serde(default = "one")]
        variable: usize,
        #[serde(default = "two")]
        equation: usize,
    },
    /// `strength * g(x_target, x_source)` with `g` over the concatenated
    /// variables of target then source, one term list per target equation.
    Polynomial {
        target: usize,
        source: usize,
        strength: f64,
        terms: Vec<Vec<TermSpec>>,
    },
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub degree: u32,
    pub dt: f64,
    pub sigma: f64,
    pub initial_ranges: Vec<[f64; 2]>,
    pub train_steps: usize,
    #[serde(default)]
    pub train_burn_in: usize,
    pub test_count: usize,
    pub test_steps: usize,
    #[serde(default)]
    pub test_burn_in: usize,
    pub perturbation: f64,
    pub checkpoint_stride: usize,
    /// Largest checkpoint; defaults to every training pair.
    #[serde(default)]
    pub checkpoint_max: Option<usize>,
    pub nstep_pairs: usize,
    pub horizon: u32,
    pub spectrum_pairs: usize,
    #[serde(default = "default_threshold")]
    pub spectrum_threshold: f64,
    #[serde(default)]
    pub seed: u64,
    /// Undirected edges coupled diffusively with `coupling_strength`.
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
    #[serde(default)]
    pub coupling_strength: f64,
    #[serde(default, rename = "subsystem")]
    pub subsystems: Vec<SubsystemSpec>,
    #[serde(default, rename = "coupling")]
    pub couplings: Vec<CouplingSpec>,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_threshold() -> f64 {
    0.99
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn preset(name: &str) -> anyhow::Result<Self> {
        match name {
            "duffing" => Self::parse(DUFFING_PRESET),
            "vdp" | "van_der_pol" => Self::parse(VDP_PRESET),
            other => bail!("unknown preset {other:?} (expected duffing or vdp)"),
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        ensure!(!self.subsystems.is_empty(), "config has no subsystem equations");
        ensure!(self.degree >= 1, "degree must be at least 1");
        ensure!(self.dt.is_finite() && self.dt > 0.0, "dt must be positive");
        ensure!(self.sigma.is_finite() && self.sigma > 0.0, "sigma must be positive");
        ensure!(self.train_steps > 0, "train_steps must be positive");
        ensure!(self.test_count > 0 && self.test_steps > 0, "test lengths must be positive");
        ensure!(
            self.perturbation.is_finite() && self.perturbation > 0.0,
            "perturbation radius must be positive"
        );
        ensure!(self.checkpoint_stride > 0, "checkpoint_stride must be positive");
        ensure!(self.horizon >= 1, "horizon must be at least 1");
        ensure!(
            self.horizon as usize <= self.test_steps,
            "horizon exceeds the test trajectory length"
        );
        let pairs = self.train_pairs();
        if let Some(max) = self.checkpoint_max {
            ensure!(max >= 1 && max <= pairs, "checkpoint_max must be within 1..={pairs}");
        }
        ensure!(
            self.checkpoint_stride <= self.checkpoint_limit(),
            "checkpoint_stride exceeds the number of training pairs"
        );
        ensure!(self.nstep_pairs >= 1 && self.nstep_pairs <= pairs, "nstep_pairs must be within 1..={pairs}");
        ensure!(
            self.spectrum_pairs >= 1 && self.spectrum_pairs <= pairs,
            "spectrum_pairs must be within 1..={pairs}"
        );
        let dim = self.layout()?.total();
        ensure!(
            self.initial_ranges.len() == dim,
            "initial_ranges has {} entries but the system has {dim} variables",
            self.initial_ranges.len()
        );
        for [lo, hi] in &self.initial_ranges {
            ensure!(lo.is_finite() && hi.is_finite() && lo <= hi, "invalid initial range [{lo}, {hi}]");
        }
        self.system()?;
        Ok(())
    }

    /// Snapshot pairs in the training trajectory.
    pub fn train_pairs(&self) -> usize {
        self.train_steps
    }

    fn checkpoint_limit(&self) -> usize {
        self.checkpoint_max.unwrap_or(self.train_pairs())
    }

    /// Pair counts at which both methods are compared.
    pub fn checkpoints(&self) -> Vec<usize> {
        (1..)
            .map(|k| k * self.checkpoint_stride)
            .take_while(|&m| m <= self.checkpoint_limit())
            .collect()
    }

    pub fn ranges(&self) -> Vec<(f64, f64)> {
        self.initial_ranges.iter().map(|r| (r[0], r[1])).collect()
    }

    pub fn subsystem_fields(&self) -> anyhow::Result<Vec<PolynomialVectorField>> {
        self.subsystems.iter().map(build_subsystem).collect()
    }

    pub fn layout(&self) -> anyhow::Result<VariableLayout> {
        let fields = self.subsystem_fields()?;
        Ok(VariableLayout::new(fields.iter().map(|f| f.var_count()).collect())?)
    }

    pub fn system(&self) -> anyhow::Result<CoupledSystem> {
        let fields = self.subsystem_fields()?;
        let layout = VariableLayout::new(fields.iter().map(|f| f.var_count()).collect())?;
        let n = layout.subsystem_count();
        let index = |i: usize, what: &str| -> anyhow::Result<usize> {
            ensure!(i >= 1 && i <= n, "{what} index {i} outside 1..={n}");
            Ok(i - 1)
        };
        let mut couplings = Vec::new();
        for [a, b] in &self.edges {
            let (a, b) = (index(*a, "edge")?, index(*b, "edge")?);
            couplings.push(Coupling::diffusive(a, b, self.coupling_strength, &layout, 0, 1)?);
            couplings.push(Coupling::diffusive(b, a, self.coupling_strength, &layout, 0, 1)?);
        }
        for c in &self.couplings {
            couplings.push(match c {
                CouplingSpec::Diffusive {
                    target,
                    source,
                    strength,
                    variable,
                    equation,
                } => {
                    ensure!(*variable >= 1 && *equation >= 1, "coupling variable/equation are 1-based");
                    Coupling::diffusive(
                        index(*target, "coupling target")?,
                        index(*source, "coupling source")?,
                        *strength,
                        &layout,
                        variable - 1,
                        equation - 1,
                    )?
                }
                CouplingSpec::Polynomial {
                    target,
                    source,
                    strength,
                    terms,
                } => {
                    let (t, s) = (index(*target, "coupling target")?, index(*source, "coupling source")?);
                    let vars = layout.dim(t) + layout.dim(s);
                    ensure!(terms.len() == layout.dim(t), "coupling needs one term list per target equation");
                    Coupling {
                        target: t,
                        source: s,
                        strength: *strength,
                        field: PolynomialVectorField::polynomial_map(vars, convert_terms(terms))?,
                    }
                }
            });
        }
        Ok(CoupledSystem::new(fields, couplings)?)
    }
}

fn convert_terms(terms: &[Vec<TermSpec>]) -> Vec<Vec<Term>> {
    terms
        .iter()
        .map(|c| c.iter().map(|t| Term::new(t.exponents.clone(), t.coef)).collect())
        .collect()
}

fn build_subsystem(spec: &SubsystemSpec) -> anyhow::Result<PolynomialVectorField> {
    Ok(match spec {
        SubsystemSpec::Duffing { delta, alpha, beta } => PolynomialVectorField::duffing(*delta, *alpha, *beta)?,
        SubsystemSpec::VanDerPol { mu } => PolynomialVectorField::van_der_pol(*mu)?,
        SubsystemSpec::Linear { a } => {
            ensure!(a.iter().all(|r| r.len() == a.len()), "linear subsystem matrix must be square");
            PolynomialVectorField::linear(a)?
        }
        SubsystemSpec::Polynomial { dim, terms } => PolynomialVectorField::new(*dim, convert_terms(terms))?,
    })
}
