//! Batch and online extended dynamic mode decomposition.
//!
//! Batch EDMD solves `min_K Σ_m |Ψ(y_m) - K Ψ(x_m)|²` as `K = Q P⁺` with
//! `Q = Σ Ψ(y_m) Ψ(x_m)ᵀ` and `P = Σ Ψ(x_m) Ψ(x_m)ᵀ`.
//!
//! The online path keeps `K` together with the inverse of the regularized
//! Gram matrix and absorbs one pair at a time with a Sherman–Morrison update.
//! Starting from `K₀` and `Pinv₀ = σ I`, after `M` pairs it holds
//! `K_M = (K₀/σ + Q)(I/σ + P)⁻¹`.

use nalgebra::{DMatrix, DVector};

use crate::dict::Dictionary;
use crate::error::{KoopmanError, Result};
use crate::model::KoopmanModel;

/// A state and its one-step successor.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl SnapshotPair {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(KoopmanError::DimensionMismatch {
                expected: x.len(),
                actual: y.len(),
            });
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(KoopmanError::NonFinite("snapshot pair"));
        }
        Ok(Self { x, y })
    }

    /// Consecutive states of a trajectory as pairs.
    pub fn from_states(states: &[Vec<f64>]) -> Result<Vec<SnapshotPair>> {
        states
            .windows(2)
            .map(|w| SnapshotPair::new(w[0].clone(), w[1].clone()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchDiagnostics {
    pub pair_count: usize,
    /// Number of singular values of `P` kept by the pseudoinverse.
    pub rank: usize,
    pub largest_singular_value: f64,
    pub smallest_kept_singular_value: f64,
    pub rank_deficient: bool,
}

/// Sums `Σ Ψ(y)Ψ(x)ᵀ` and `Σ Ψ(x)Ψ(x)ᵀ` over the pairs.
pub fn gram_matrices(dict: &Dictionary, pairs: &[SnapshotPair]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = dict.len();
    let m = pairs.len();
    let mut px = DMatrix::<f64>::zeros(n, m);
    let mut py = DMatrix::<f64>::zeros(n, m);
    let mut buf = vec![0.0; n];
    for (j, pair) in pairs.iter().enumerate() {
        dict.evaluate_into(&pair.x, &mut buf)?;
        px.column_mut(j).copy_from_slice(&buf);
        dict.evaluate_into(&pair.y, &mut buf)?;
        py.column_mut(j).copy_from_slice(&buf);
    }
    let q = &py * px.transpose();
    let p = &px * px.transpose();
    Ok((q, p))
}

/// Moore–Penrose pseudoinverse through the SVD. Singular values at or below
/// `ε · max(rows, cols) · σ_max` are treated as zero.
pub fn pseudoinverse(a: &DMatrix<f64>) -> (DMatrix<f64>, usize, f64, f64) {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = f64::EPSILON * a.nrows().max(a.ncols()) as f64 * smax;
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let mut pinv = DMatrix::zeros(a.ncols(), a.nrows());
    let mut rank = 0;
    let mut smallest = f64::INFINITY;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            smallest = smallest.min(s);
            pinv += vt.row(k).transpose() * u.column(k).transpose() / s;
        }
    }
    (pinv, rank, smax, smallest)
}

pub fn batch_edmd(dict: &Dictionary, pairs: &[SnapshotPair]) -> Result<(KoopmanModel, BatchDiagnostics)> {
    if pairs.is_empty() {
        return Err(KoopmanError::InvalidArgument("batch EDMD needs at least one pair".into()));
    }
    let (q, p) = gram_matrices(dict, pairs)?;
    let (pinv, rank, smax, smallest) = pseudoinverse(&p);
    let k = q * pinv;
    let diag = BatchDiagnostics {
        pair_count: pairs.len(),
        rank,
        largest_singular_value: smax,
        smallest_kept_singular_value: smallest,
        rank_deficient: rank < dict.len(),
    };
    Ok((KoopmanModel::new(dict.clone(), k)?, diag))
}

/// Recursive EDMD state: current `K`, inverse Gram surrogate, pairs absorbed.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineState {
    dict: Dictionary,
    k: DMatrix<f64>,
    pinv: DMatrix<f64>,
    count: usize,
    last_gamma: Option<f64>,
    psi_x: DVector<f64>,
    psi_y: DVector<f64>,
}

impl OnlineState {
    /// Starts from `seed` with `Pinv = σ I`.
    pub fn new(seed: KoopmanModel, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(KoopmanError::InvalidArgument(format!(
                "sigma must be positive and finite, got {sigma}"
            )));
        }
        let (dict, k) = seed.into_parts();
        let n = dict.len();
        Ok(Self {
            dict,
            k,
            pinv: DMatrix::identity(n, n) * sigma,
            count: 0,
            last_gamma: None,
            psi_x: DVector::zeros(n),
            psi_y: DVector::zeros(n),
        })
    }

    pub fn zero_seed(dict: Dictionary, sigma: f64) -> Result<Self> {
        Self::new(KoopmanModel::zeros(dict), sigma)
    }

    pub fn dict(&self) -> &Dictionary {
        &self.dict
    }

    pub fn koopman(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn pinv(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Gain of the most recent update.
    pub fn last_gamma(&self) -> Option<f64> {
        self.last_gamma
    }

    pub fn model(&self) -> KoopmanModel {
        KoopmanModel::new(self.dict.clone(), self.k.clone()).expect("state keeps a square K")
    }

    /// Absorbs one snapshot pair and returns its gain `γ`.
    pub fn update(&mut self, pair: &SnapshotPair) -> Result<f64> {
        self.dict.evaluate_into(&pair.x, self.psi_x.as_mut_slice())?;
        self.dict.evaluate_into(&pair.y, self.psi_y.as_mut_slice())?;

        let g = &self.pinv * &self.psi_x; // Pinv ψx (= (ψxᵀ Pinv)ᵀ by symmetry)
        let gamma = 1.0 / (1.0 + self.psi_x.dot(&g));
        let innovation = &self.psi_y - &self.k * &self.psi_x;
        self.k.ger(gamma, &innovation, &g, 1.0);
        self.pinv.ger(-gamma, &g, &g, 1.0);

        let n = self.pinv.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (self.pinv[(i, j)] + self.pinv[(j, i)]);
                self.pinv[(i, j)] = avg;
                self.pinv[(j, i)] = avg;
            }
        }
        self.count += 1;
        self.last_gamma = Some(gamma);
        Ok(gamma)
    }

    pub fn update_all<'a>(&mut self, pairs: impl IntoIterator<Item = &'a SnapshotPair>) -> Result<()> {
        for p in pairs {
            self.update(p)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_fro(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    fn random_pairs(rng: &mut ChaCha8Rng, dim: usize, count: usize, map: impl Fn(&[f64]) -> Vec<f64>) -> Vec<SnapshotPair> {
        (0..count)
            .map(|_| {
                let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let y = map(&x);
                SnapshotPair::new(x, y).unwrap()
            })
            .collect()
    }

    /// Ridge oracle formed explicitly: (K₀/σ + Q)(P + I/σ)⁻¹.
    fn ridge_oracle(dict: &Dictionary, pairs: &[SnapshotPair], k0: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
        let (q, p) = gram_matrices(dict, pairs).unwrap();
        let n = dict.len();
        let reg = p + DMatrix::identity(n, n) / sigma;
        let rhs = (k0 / sigma + q).transpose();
        // solve regᵀ Xᵀ = rhsᵀ; reg is symmetric
        reg.cholesky().unwrap().solve(&rhs).transpose()
    }

    #[test]
    fn identity_dynamics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = Dictionary::new(2, 3).unwrap();
        let pairs = random_pairs(&mut rng, 2, 40, |x| x.to_vec());
        let (k, diag) = batch_edmd(&d, &pairs).unwrap();
        assert!((k.matrix() - DMatrix::identity(10, 10)).amax() < 1e-10);
        assert_eq!(diag.rank, 10);
        assert!(!diag.rank_deficient);
    }

    #[test]
    fn scalar_linear_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = -0.6;
        let d = Dictionary::new(1, 2).unwrap();
        let pairs = random_pairs(&mut rng, 1, 20, |x| vec![a * x[0]]);
        let (k, _) = batch_edmd(&d, &pairs).unwrap();
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, a, a * a]));
        assert!((k.matrix() - want).amax() < 1e-12);
    }

    #[test]
    fn degenerate_data_is_flagged() {
        let d = Dictionary::new(2, 2).unwrap();
        let pair = SnapshotPair::new(vec![0.3, 0.4], vec![0.5, 0.1]).unwrap();
        let (k, diag) = batch_edmd(&d, &vec![pair.clone(); 5]).unwrap();
        assert_eq!(diag.rank, 1);
        assert!(diag.rank_deficient);
        // the fitted model still reproduces the one observed transition
        let pred = k.advance_observables(&pair.x).unwrap();
        let want = d.evaluate(&pair.y).unwrap();
        for (p, w) in pred.iter().zip(&want) {
            assert!((p - w).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_needs_pairs() {
        let d = Dictionary::new(1, 1).unwrap();
        assert!(batch_edmd(&d, &[]).is_err());
        assert!(SnapshotPair::new(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(SnapshotPair::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn init_examples() {
        let d = Dictionary::new(2, 1).unwrap();
        let s = OnlineState::new(KoopmanModel::identity(d.clone()), 1.0).unwrap();
        assert_eq!(s.pinv(), &DMatrix::identity(3, 3));
        assert_eq!(s.count(), 0);
        let z = OnlineState::zero_seed(d.clone(), 1e8).unwrap();
        assert_eq!(z.koopman(), &DMatrix::zeros(3, 3));
        assert_eq!(z.pinv()[(1, 1)], 1e8);
        assert!(OnlineState::new(KoopmanModel::identity(d.clone()), 0.0).is_err());
        assert!(OnlineState::new(KoopmanModel::identity(d.clone()), -1.0).is_err());
        assert!(OnlineState::new(KoopmanModel::identity(d), f64::NAN).is_err());
    }

    #[test]
    fn single_pair_closed_form() {
        let d = Dictionary::new(2, 2).unwrap();
        let pair = SnapshotPair::new(vec![0.5, -0.2], vec![0.1, 0.9]).unwrap();
        let mut s = OnlineState::zero_seed(d.clone(), 1.0).unwrap();
        let gamma = s.update(&pair).unwrap();
        let px = DVector::from_vec(d.evaluate(&pair.x).unwrap());
        let py = DVector::from_vec(d.evaluate(&pair.y).unwrap());
        let want = &py * px.transpose() / (1.0 + px.norm_squared());
        assert!((s.koopman() - &want).amax() < 1e-15);
        assert!((gamma - 1.0 / (1.0 + px.norm_squared())).abs() < 1e-15);
        assert!((s.koopman() - ridge_oracle(&d, &[pair], &DMatrix::zeros(6, 6), 1.0)).amax() < 1e-14);
    }

    #[test]
    fn exact_prediction_leaves_k_unchanged() {
        let d = Dictionary::new(1, 2).unwrap();
        let a = 0.8;
        let k0 = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, a, a * a]));
        let mut s = OnlineState::new(KoopmanModel::new(d.clone(), k0.clone()).unwrap(), 2.0).unwrap();
        let before = s.pinv().clone();
        s.update(&SnapshotPair::new(vec![0.7], vec![a * 0.7]).unwrap()).unwrap();
        assert!((s.koopman() - &k0).amax() < 1e-15);
        assert!(s.pinv().trace() < before.trace());
        assert_eq!(s.count(), 1);
    }

    #[test]
    fn seeded_state_matches_ridge_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Dictionary::new(2, 2).unwrap();
        let pairs = random_pairs(&mut rng, 2, 30, |x| vec![0.9 * x[0] + 0.1 * x[1] * x[1], -0.5 * x[0] * x[1]]);
        let k0 = DMatrix::from_fn(6, 6, |i, j| ((i + 2 * j) % 4) as f64 * 0.1);
        let mut s = OnlineState::new(KoopmanModel::new(d.clone(), k0.clone()).unwrap(), 0.7).unwrap();
        s.update_all(&pairs).unwrap();
        let oracle = ridge_oracle(&d, &pairs, &k0, 0.7);
        assert!(rel_fro(s.koopman(), &oracle) < 1e-10);
    }
}
