//! Coupled polynomial systems, RK4 simulation, and seeded data generation.

use std::io::{BufRead, Write};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dict::VariableLayout;
use crate::edmd::SnapshotPair;
use crate::error::{KoopmanError, Result};
use crate::field::{PolynomialVectorField, Term};

/// Interaction `c · g(x_target, x_source)` added to the target subsystem.
/// `field` has `dim(target) + dim(source)` variables (target's first) and
/// `dim(target)` components.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub target: usize,
    pub source: usize,
    pub strength: f64,
    pub field: PolynomialVectorField,
}

impl Coupling {
    /// Diffusive coupling `c (x_{source,variable} - x_{target,variable})`
    /// acting on component `equation` of the target.
    pub fn diffusive(
        target: usize,
        source: usize,
        strength: f64,
        layout: &VariableLayout,
        variable: usize,
        equation: usize,
    ) -> Result<Self> {
        if target >= layout.subsystem_count() || source >= layout.subsystem_count() {
            return Err(KoopmanError::InvalidArgument("coupling index out of range".into()));
        }
        let dt = layout.dim(target);
        let ds = layout.dim(source);
        if variable >= dt.min(ds) || equation >= dt {
            return Err(KoopmanError::InvalidArgument(
                "diffusive coupling variable or equation out of range".into(),
            ));
        }
        let vars = dt + ds;
        let mut components = vec![Vec::new(); dt];
        let unit = |v: usize| {
            let mut e = vec![0; vars];
            e[v] = 1;
            e
        };
        components[equation].push(Term::new(unit(dt + variable), 1.0));
        components[equation].push(Term::new(unit(variable), -1.0));
        Ok(Self {
            target,
            source,
            strength,
            field: PolynomialVectorField::polynomial_map(vars, components)?,
        })
    }
}

/// `ẋ_i = f_i(x_i) + Σ_j c_ij g_ij(x_i, x_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSystem {
    subsystems: Vec<PolynomialVectorField>,
    couplings: Vec<Coupling>,
    layout: VariableLayout,
    full: PolynomialVectorField,
}

impl CoupledSystem {
    pub fn new(subsystems: Vec<PolynomialVectorField>, couplings: Vec<Coupling>) -> Result<Self> {
        let layout = VariableLayout::new(subsystems.iter().map(|f| f.var_count()).collect())?;
        let mut full = PolynomialVectorField::zero(layout.total())?;
        for (i, f) in subsystems.iter().enumerate() {
            let map: Vec<usize> = (layout.offset(i)..layout.offset(i) + layout.dim(i)).collect();
            full.add_mapped(f, layout.offset(i), &map, 1.0)?;
        }
        for c in &couplings {
            let n = layout.subsystem_count();
            if c.target >= n || c.source >= n || c.target == c.source {
                return Err(KoopmanError::InvalidArgument(format!(
                    "invalid coupling {} <- {}",
                    c.target, c.source
                )));
            }
            if !c.strength.is_finite() {
                return Err(KoopmanError::NonFinite("coupling strength"));
            }
            let (dt, ds) = (layout.dim(c.target), layout.dim(c.source));
            if c.field.var_count() != dt + ds || c.field.components().len() != dt {
                return Err(KoopmanError::DimensionMismatch {
                    expected: dt + ds,
                    actual: c.field.var_count(),
                });
            }
            let map: Vec<usize> = (layout.offset(c.target)..layout.offset(c.target) + dt)
                .chain(layout.offset(c.source)..layout.offset(c.source) + ds)
                .collect();
            full.add_mapped(&c.field, layout.offset(c.target), &map, c.strength)?;
        }
        Ok(Self {
            subsystems,
            couplings,
            layout,
            full,
        })
    }

    /// Oscillators on an undirected edge list, each edge coupled both ways
    /// through `c (x_{j,1} - x_{i,1})` in the second equation.
    pub fn diffusive_network(
        subsystems: Vec<PolynomialVectorField>,
        edges: &[(usize, usize)],
        strength: f64,
    ) -> Result<Self> {
        let layout = VariableLayout::new(subsystems.iter().map(|f| f.var_count()).collect())?;
        let mut couplings = Vec::new();
        for &(i, j) in edges {
            couplings.push(Coupling::diffusive(i, j, strength, &layout, 0, 1)?);
            couplings.push(Coupling::diffusive(j, i, strength, &layout, 0, 1)?);
        }
        Self::new(subsystems, couplings)
    }

    pub fn subsystems(&self) -> &[PolynomialVectorField] {
        &self.subsystems
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn layout(&self) -> &VariableLayout {
        &self.layout
    }

    /// The induced vector field over all `D` variables.
    pub fn full_field(&self) -> &PolynomialVectorField {
        &self.full
    }

    /// Contribution of one coupling to `ẋ` of its target, as a full-length vector.
    pub fn coupling_contribution(&self, coupling: &Coupling, x: &[f64]) -> Vec<f64> {
        let mut args = self.layout.slice(x, coupling.target).to_vec();
        args.extend_from_slice(self.layout.slice(x, coupling.source));
        let g = coupling.field.eval(&args);
        let mut out = vec![0.0; self.layout.total()];
        let off = self.layout.offset(coupling.target);
        for (k, v) in g.into_iter().enumerate() {
            out[off + k] = coupling.strength * v;
        }
        out
    }
}

/// One classical fourth-order Runge–Kutta step.
pub fn rk4_step(field: &PolynomialVectorField, x: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = x.len();
    if !field.is_square() {
        return Err(KoopmanError::InvalidArgument("RK4 needs a square vector field".into()));
    }
    if n != field.var_count() {
        return Err(KoopmanError::DimensionMismatch {
            expected: field.var_count(),
            actual: n,
        });
    }
    if !dt.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(KoopmanError::NonFinite("RK4 input"));
    }
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    field.eval_into(x, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    field.eval_into(&tmp, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    field.eval_into(&tmp, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    field.eval_into(&tmp, &mut k4);
    let out: Vec<f64> = (0..n)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(KoopmanError::NonFinite("RK4 step"));
    }
    Ok(out)
}

/// Uniformly sampled states of a simulated system.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub dt: f64,
    /// Time of `states[0]`.
    pub t0: f64,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Drops the first `steps` states (relaxation).
    pub fn discard(mut self, steps: usize) -> Self {
        let steps = steps.min(self.states.len());
        self.states.drain(..steps);
        self.t0 += steps as f64 * self.dt;
        self
    }

    /// Consecutive states as snapshot pairs.
    pub fn pairs(&self) -> Result<Vec<SnapshotPair>> {
        SnapshotPair::from_states(&self.states)
    }

    pub fn write_csv<W: Write>(&self, layout: &VariableLayout, mut out: W) -> std::io::Result<()> {
        write!(out, "t")?;
        for s in 0..layout.subsystem_count() {
            for k in 0..layout.dim(s) {
                write!(out, ",x_{}_{}", s + 1, k + 1)?;
            }
        }
        writeln!(out)?;
        for (k, state) in self.states.iter().enumerate() {
            write!(out, "{:.16e}", self.t0 + k as f64 * self.dt)?;
            for v in state {
                write!(out, ",{v:.16e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Reads the CSV written by [`Trajectory::write_csv`]. `dt` and `t0` are
    /// recovered from the time column.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| KoopmanError::InvalidArgument("empty trajectory file".into()))?
            .map_err(|e| KoopmanError::InvalidArgument(e.to_string()))?;
        let cols = header.split(',').count();
        if cols < 2 || !header.starts_with("t,") {
            return Err(KoopmanError::InvalidArgument(format!("bad trajectory header: {header}")));
        }
        let mut times = Vec::new();
        let mut states = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line.map_err(|e| KoopmanError::InvalidArgument(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| KoopmanError::InvalidArgument(format!("row {}: {e}", row + 2)))?;
            if vals.len() != cols {
                return Err(KoopmanError::DimensionMismatch {
                    expected: cols,
                    actual: vals.len(),
                });
            }
            times.push(vals[0]);
            states.push(vals[1..].to_vec());
        }
        if states.is_empty() {
            return Err(KoopmanError::InvalidArgument("trajectory has no rows".into()));
        }
        let dt = if times.len() > 1 {
            (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64
        } else {
            0.0
        };
        Ok(Self {
            states,
            dt,
            t0: times[0],
            seed: 0,
        })
    }
}

/// Integrates `steps` RK4 steps from `x0`; the result has `steps + 1` states.
pub fn simulate(system: &CoupledSystem, x0: &[f64], steps: usize, dt: f64) -> Result<Trajectory> {
    simulate_field(system.full_field(), x0, steps, dt)
}

pub fn simulate_field(field: &PolynomialVectorField, x0: &[f64], steps: usize, dt: f64) -> Result<Trajectory> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(KoopmanError::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x0.to_vec());
    for step in 0..steps {
        let next = rk4_step(field, &states[step], dt).map_err(|e| match e {
            KoopmanError::NonFinite(_) => KoopmanError::BlowUp { step },
            other => other,
        })?;
        states.push(next);
    }
    Ok(Trajectory {
        states,
        dt,
        t0: 0.0,
        seed: 0,
    })
}

/// Independent random streams used by one experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngStream {
    TrainInitial,
    TestPerturbation(u64),
}

impl RngStream {
    fn id(self) -> u64 {
        match self {
            RngStream::TrainInitial => 0,
            RngStream::TestPerturbation(i) => 1 + i,
        }
    }
}

pub fn stream_rng(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

fn draw(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi { lo } else { rng.random_range(lo..hi) }
}

/// Independent uniform draw per coordinate from `ranges[i] = (lo, hi)`.
pub fn sample_initial(ranges: &[(f64, f64)], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    for &(lo, hi) in ranges {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(KoopmanError::InvalidArgument(format!("invalid range ({lo}, {hi})")));
        }
    }
    Ok(ranges.iter().map(|&(lo, hi)| draw(rng, lo, hi)).collect())
}

/// `x + ε` with `ε_i ~ U(-radius, radius)`.
pub fn perturb_initial(x: &[f64], radius: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(KoopmanError::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    Ok(x.iter().map(|v| v + draw(rng, -radius, radius)).collect())
}
