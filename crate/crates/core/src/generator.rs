//! Local Koopman matrices derived from a polynomial ODE.
//!
//! The adjoint generator `L† = Σ_i f_i ∂/∂x_i` maps monomials to
//! polynomials: `L† x^n = Σ_i Σ_a n_i f_{i,a} x^{n - e_i + a}`. Acting on the
//! expansion coefficients `c` of an observable `Σ_n c(n) x^n`, this is the
//! linear system `dc/dt = G c` with `G[m, n] = Σ n_i f_{i,a}` over all
//! `(i, a)` with `m = n - e_i + a`. Targets of degree above the dictionary
//! bound are dropped.
//!
//! Column `m` of `exp(G dt)` holds the coefficients of `x^m` advanced by
//! `dt`, i.e. `ψ_m(x(t+dt)) = Σ_n exp(G dt)[n, m] ψ_n(x(t))`. In the
//! `Ψ(y) = K Ψ(x)` convention that is `K = exp(G dt)ᵀ`.

use nalgebra::DMatrix;

use crate::dict::Dictionary;
use crate::error::{KoopmanError, Result};
use crate::expm::expm;
use crate::field::PolynomialVectorField;
use crate::model::KoopmanModel;

/// `L†` restricted to a dictionary, acting on coefficient vectors.
/// Entry `(m, n)` is the rate at which the coefficient of source monomial `n`
/// feeds the coefficient of target monomial `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    dict: Dictionary,
    entries: DMatrix<f64>,
}

impl GeneratorMatrix {
    pub fn dict(&self) -> &Dictionary {
        &self.dict
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

pub fn build_generator(field: &PolynomialVectorField, dict: &Dictionary) -> Result<GeneratorMatrix> {
    if field.var_count() != dict.var_count() {
        return Err(KoopmanError::DimensionMismatch {
            expected: dict.var_count(),
            actual: field.var_count(),
        });
    }
    if !field.is_square() {
        return Err(KoopmanError::InvalidArgument(
            "generator needs one component per variable".into(),
        ));
    }
    let n = dict.len();
    let mut entries = DMatrix::zeros(n, n);
    for (source, mono) in dict.entries().iter().enumerate() {
        for (var, terms) in field.components().iter().enumerate() {
            let Some(lowered) = mono.lower(var) else {
                continue;
            };
            let power = mono.exponents()[var] as f64;
            for term in terms {
                let target = lowered.add(&term.monomial);
                if let Some(t) = dict.index_of(&target) {
                    entries[(t, source)] += power * term.coef;
                }
            }
        }
    }
    Ok(GeneratorMatrix {
        dict: dict.clone(),
        entries,
    })
}

fn check_dt(dt: f64) -> Result<()> {
    if !dt.is_finite() {
        return Err(KoopmanError::NonFinite("time step"));
    }
    if dt < 0.0 {
        return Err(KoopmanError::InvalidArgument(format!(
            "time step must be non-negative, got {dt}"
        )));
    }
    Ok(())
}

/// Advances the generator by `dt` with the matrix exponential.
pub fn local_koopman(generator: &GeneratorMatrix, dt: f64) -> Result<KoopmanModel> {
    check_dt(dt)?;
    let propagator = expm(&(&generator.entries * dt));
    KoopmanModel::new(generator.dict.clone(), propagator.transpose())
}

/// Same as [`local_koopman`] but integrates `dC/dt = G C`, `C(0) = I`, with
/// `substeps` classical RK4 steps. Used as an independent cross-check.
pub fn local_koopman_rk4(generator: &GeneratorMatrix, dt: f64, substeps: usize) -> Result<KoopmanModel> {
    check_dt(dt)?;
    if substeps == 0 {
        return Err(KoopmanError::InvalidArgument("substeps must be positive".into()));
    }
    let g = &generator.entries;
    let n = g.nrows();
    let h = dt / substeps as f64;
    let mut c = DMatrix::<f64>::identity(n, n);
    for _ in 0..substeps {
        let k1 = g * &c;
        let k2 = g * (&c + &k1 * (h / 2.0));
        let k3 = g * (&c + &k2 * (h / 2.0));
        let k4 = g * (&c + &k3 * h);
        c += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    KoopmanModel::new(generator.dict.clone(), c.transpose())
}

/// Convenience: generator plus exponential in one call.
pub fn derive_local_model(field: &PolynomialVectorField, dict: &Dictionary, dt: f64) -> Result<KoopmanModel> {
    local_koopman(&build_generator(field, dict)?, dt)
}
