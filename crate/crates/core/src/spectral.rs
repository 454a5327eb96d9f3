//! Koopman eigen-triples and spectral state prediction.
//!
//! For `K = U diag(μ) U⁻¹` the left vectors are the columns of `W = U⁻ᵀ`, so
//! `w_lᵀ u_k = δ_lk`. Eigenfunctions are `φ_l(x) = w_lᵀ Ψ(x)` (plain
//! transpose, no conjugation) and modes are `v_l = B u_l`, where `B` selects
//! the coordinate monomials. The n-step prediction is `Σ_l v_l μ_l^n φ_l(x)`.

use faer::Mat;
use nalgebra::{Complex, DMatrix, DVector};

use crate::dict::Dictionary;
use crate::error::{KoopmanError, Result};
use crate::model::KoopmanModel;

pub type C64 = Complex<f64>;

/// Biorthonormality residual above which a decomposition counts as defective.
pub const DEFECTIVE_RESIDUAL: f64 = 1e-6;
/// Allowed imaginary residue of a prediction, relative to the magnitude of
/// the summed terms.
pub const IMAGINARY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    dict: Dictionary,
    eigenvalues: Vec<C64>,
    right: DMatrix<C64>,
    left: DMatrix<C64>,
    projector: DMatrix<f64>,
    residual: f64,
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &[C64] {
        &self.eigenvalues
    }

    /// Columns are the unit-norm right eigenvectors `u_l`.
    pub fn right_vectors(&self) -> &DMatrix<C64> {
        &self.right
    }

    /// Columns are the left vectors `w_l` scaled so that `w_lᵀ u_l = 1`.
    pub fn left_vectors(&self) -> &DMatrix<C64> {
        &self.left
    }

    /// `B`: `D × N_dic`, ones at the coordinate monomials.
    pub fn projector(&self) -> &DMatrix<f64> {
        &self.projector
    }

    pub fn dict(&self) -> &Dictionary {
        &self.dict
    }

    /// Larger of `max_{l,k} |w_lᵀ u_k - δ_lk|` and the relative max-entry
    /// error of `U diag(μ) Wᵀ` against `K`.
    pub fn biorthonormality_residual(&self) -> f64 {
        self.residual
    }

    pub fn is_defective(&self) -> bool {
        self.residual.is_nan() || self.residual > DEFECTIVE_RESIDUAL
    }

    /// Koopman modes `v_l = B u_l` as columns.
    pub fn modes(&self) -> DMatrix<C64> {
        self.projector.map(|v| C64::new(v, 0.0)) * &self.right
    }

    /// `φ_l(x) = w_lᵀ Ψ(x)` for every `l`.
    pub fn eigenfunctions(&self, x: &[f64]) -> Result<DVector<C64>> {
        let psi = DVector::from_vec(self.dict.evaluate(x)?).map(|v| C64::new(v, 0.0));
        Ok(self.left.tr_mul(&psi))
    }

    fn ensure_usable(&self) -> Result<()> {
        if self.is_defective() {
            return Err(KoopmanError::Defective {
                residual: self.residual,
            });
        }
        Ok(())
    }

    /// `Σ_l v_l μ_l^n φ_l(x)`; `n = 0` reconstructs `x` itself.
    pub fn predict_n(&self, x: &[f64], n: u32) -> Result<Vec<f64>> {
        self.ensure_usable()?;
        let phi = self.eigenfunctions(x)?;
        let d = self.dict.var_count();
        let mut out = Vec::with_capacity(d);
        for var in 0..d {
            let row = self.dict.variable_index(var);
            let mut sum = C64::new(0.0, 0.0);
            let mut scale = 0.0;
            for l in 0..self.eigenvalues.len() {
                let term = self.right[(row, l)] * self.eigenvalues[l].powu(n) * phi[l];
                scale += term.norm();
                sum += term;
            }
            check_imaginary(sum.im, scale)?;
            out.push(sum.re);
        }
        Ok(out)
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.predict_n(x, 1)
    }

    /// Real `D × N_dic` matrix `Σ_l v_l μ_l^n w_lᵀ`, so that the n-step
    /// prediction is this matrix applied to `Ψ(x)`.
    pub fn propagator(&self, n: u32) -> Result<DMatrix<f64>> {
        self.ensure_usable()?;
        let d = self.dict.var_count();
        let size = self.dict.len();
        let mut out = DMatrix::zeros(d, size);
        for var in 0..d {
            let row = self.dict.variable_index(var);
            let weights: Vec<C64> = (0..size)
                .map(|l| self.right[(row, l)] * self.eigenvalues[l].powu(n))
                .collect();
            for j in 0..size {
                let mut sum = C64::new(0.0, 0.0);
                let mut scale = 0.0;
                for (l, w) in weights.iter().enumerate() {
                    let term = w * self.left[(j, l)];
                    scale += term.norm();
                    sum += term;
                }
                check_imaginary(sum.im, scale)?;
                out[(var, j)] = sum.re;
            }
        }
        Ok(out)
    }

    /// Number of eigenvalues with `|μ| > threshold`.
    pub fn count_above(&self, threshold: f64) -> usize {
        self.eigenvalues.iter().filter(|m| m.norm() > threshold).count()
    }
}

fn check_imaginary(im: f64, scale: f64) -> Result<()> {
    if im.abs() > IMAGINARY_TOLERANCE * scale.max(1.0) {
        return Err(KoopmanError::ComplexResidue(im.abs()));
    }
    Ok(())
}

/// `B` for a dictionary: row `i` picks the monomial `x_i`.
pub fn state_projector(dict: &Dictionary) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(dict.var_count(), dict.len());
    for v in 0..dict.var_count() {
        b[(v, dict.variable_index(v))] = 1.0;
    }
    b
}

/// Eigenvalue order: descending modulus, then descending real part, then
/// descending imaginary part.
fn spectral_order(a: &C64, b: &C64) -> std::cmp::Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then_with(|| b.re.total_cmp(&a.re))
        .then_with(|| b.im.total_cmp(&a.im))
}

pub fn decompose(model: &KoopmanModel) -> Result<SpectralDecomposition> {
    let k = model.matrix();
    let n = k.nrows();
    if k.iter().any(|v| !v.is_finite()) {
        return Err(KoopmanError::NonFinite("Koopman matrix"));
    }
    let mat = Mat::<f64>::from_fn(n, n, |i, j| k[(i, j)]);
    let evd = mat
        .eigen()
        .map_err(|e| KoopmanError::Eigen(format!("{e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let values: Vec<C64> = (0..n).map(|i| C64::new(s[i].re, s[i].im)).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| spectral_order(&values[a], &values[b]).then(a.cmp(&b)));

    let eigenvalues: Vec<C64> = order.iter().map(|&i| values[i]).collect();
    let mut right = DMatrix::<C64>::from_fn(n, n, |r, c| {
        let z = u[(r, order[c])];
        C64::new(z.re, z.im)
    });
    for mut col in right.column_iter_mut() {
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            col /= C64::new(norm, 0.0);
        }
    }

    let (left, residual) = match right.clone().try_inverse() {
        Some(inv) => {
            let left = inv.transpose();
            let gram = left.transpose() * &right;
            let residual = gram
                .iter()
                .enumerate()
                .map(|(idx, z)| {
                    let (r, c) = (idx % n, idx / n);
                    let target = if r == c { 1.0 } else { 0.0 };
                    (z - C64::new(target, 0.0)).norm()
                })
                .fold(0.0, f64::max);
            // an inverse of nearly parallel eigenvectors is biorthonormal by
            // construction, so also require U diag(μ) Wᵀ to give back K
            let lam = DMatrix::from_diagonal(&DVector::from_vec(eigenvalues.clone()));
            let rebuilt = &right * lam * left.transpose();
            let scale = k.amax().max(f64::MIN_POSITIVE);
            let mismatch = rebuilt
                .iter()
                .zip(k.iter())
                .map(|(z, &v)| (z - C64::new(v, 0.0)).norm())
                .fold(0.0, f64::max)
                / scale;
            (left, residual.max(mismatch))
        }
        None => (DMatrix::zeros(n, n), f64::INFINITY),
    };

    Ok(SpectralDecomposition {
        dict: model.dict().clone(),
        eigenvalues,
        right,
        left,
        projector: state_projector(model.dict()),
        residual,
    })
}

/// `‖ŷ - y‖₂ / ‖y‖₂`.
pub fn relative_l2(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(KoopmanError::DimensionMismatch {
            expected: y_true.len(),
            actual: y_pred.len(),
        });
    }
    let denom = y_true.iter().map(|v| v * v).sum::<f64>().sqrt();
    if denom == 0.0 {
        return Err(KoopmanError::ZeroNorm);
    }
    let num = y_true
        .iter()
        .zip(y_pred)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(num / denom)
}

/// Multi-step state predictor shared by every method under comparison.
/// Uses the eigen-triples when the decomposition is sound and falls back to
/// explicit powers `B Kⁿ` otherwise.
#[derive(Debug, Clone)]
pub enum Predictor {
    Spectral(SpectralDecomposition),
    MatrixPower { model: KoopmanModel, reason: String },
}

impl Predictor {
    pub fn new(model: &KoopmanModel) -> Self {
        match decompose(model) {
            Ok(dec) if !dec.is_defective() => Predictor::Spectral(dec),
            Ok(dec) => Predictor::MatrixPower {
                model: model.clone(),
                reason: format!("defective (residual {:.3e})", dec.biorthonormality_residual()),
            },
            Err(e) => Predictor::MatrixPower {
                model: model.clone(),
                reason: e.to_string(),
            },
        }
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self, Predictor::Spectral(_))
    }

    /// Propagators for `n = 1..=horizon`.
    pub fn propagators(&self, horizon: u32) -> Result<Vec<DMatrix<f64>>> {
        match self {
            Predictor::Spectral(dec) => {
                let spectral: Result<Vec<_>> = (1..=horizon).map(|n| dec.propagator(n)).collect();
                match spectral {
                    Ok(p) => Ok(p),
                    Err(KoopmanError::ComplexResidue(_)) => {
                        let model = KoopmanModel::new(dec.dict.clone(), reconstruct(dec))?;
                        Ok(power_propagators(&model, horizon))
                    }
                    Err(e) => Err(e),
                }
            }
            Predictor::MatrixPower { model, .. } => Ok(power_propagators(model, horizon)),
        }
    }
}

fn reconstruct(dec: &SpectralDecomposition) -> DMatrix<f64> {
    let lam = DMatrix::from_diagonal(&DVector::from_vec(dec.eigenvalues.clone()));
    (&dec.right * lam * dec.left.transpose()).map(|z| z.re)
}

/// `B Kⁿ` for `n = 1..=horizon`.
pub fn power_propagators(model: &KoopmanModel, horizon: u32) -> Vec<DMatrix<f64>> {
    let mut acc = state_projector(model.dict());
    (0..horizon)
        .map(|_| {
            acc = &acc * model.matrix();
            acc.clone()
        })
        .collect()
}
