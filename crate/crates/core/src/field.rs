//! Sparse polynomial vector fields `dx/dt = f(x)`.

use std::collections::BTreeMap;

use crate::dict::MultiIndex;
use crate::error::{KoopmanError, Result};

/// One monomial term `coef * x^exponents` of a component of `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub monomial: MultiIndex,
    pub coef: f64,
}

impl Term {
    pub fn new(exponents: Vec<u32>, coef: f64) -> Self {
        Self {
            monomial: MultiIndex::new(exponents),
            coef,
        }
    }
}

/// Right-hand side `f` with one sparse polynomial per coordinate. Coupling
/// terms reuse the type as a polynomial map whose output count differs from
/// its variable count (see [`PolynomialVectorField::polynomial_map`]).
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialVectorField {
    var_count: usize,
    components: Vec<Vec<Term>>,
}

impl PolynomialVectorField {
    /// Builds a field from raw per-coordinate term lists. Duplicate monomials
    /// within a component are merged and exact zeros are dropped.
    pub fn new(var_count: usize, components: Vec<Vec<Term>>) -> Result<Self> {
        if components.len() != var_count {
            return Err(KoopmanError::DimensionMismatch {
                expected: var_count,
                actual: components.len(),
            });
        }
        Self::polynomial_map(var_count, components)
    }

    /// Polynomial map from `var_count` variables to `components.len()` outputs.
    pub fn polynomial_map(var_count: usize, components: Vec<Vec<Term>>) -> Result<Self> {
        if var_count == 0 {
            return Err(KoopmanError::InvalidArgument(
                "vector field needs at least one variable".into(),
            ));
        }
        let mut merged = Vec::with_capacity(var_count);
        for terms in components {
            let mut acc: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
            for t in terms {
                if t.monomial.var_count() != var_count {
                    return Err(KoopmanError::DimensionMismatch {
                        expected: var_count,
                        actual: t.monomial.var_count(),
                    });
                }
                if !t.coef.is_finite() {
                    return Err(KoopmanError::NonFinite("vector field coefficient"));
                }
                *acc.entry(t.monomial.exponents().to_vec()).or_insert(0.0) += t.coef;
            }
            merged.push(
                acc.into_iter()
                    .filter(|(_, c)| *c != 0.0)
                    .map(|(e, c)| Term::new(e, c))
                    .collect(),
            );
        }
        Ok(Self {
            var_count,
            components: merged,
        })
    }

    pub fn zero(var_count: usize) -> Result<Self> {
        Self::new(var_count, vec![Vec::new(); var_count])
    }

    /// Linear field `dx/dt = A x` with `a` given row-major.
    pub fn linear(a: &[Vec<f64>]) -> Result<Self> {
        let d = a.len();
        let components = a
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(j, &c)| Term {
                        monomial: MultiIndex::unit(d, j),
                        coef: c,
                    })
                    .collect()
            })
            .collect();
        Self::new(d, components)
    }

    /// Single Duffing oscillator `x1' = x2`, `x2' = -delta x2 - alpha x1 - beta x1^3`.
    pub fn duffing(delta: f64, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(
            2,
            vec![
                vec![Term::new(vec![0, 1], 1.0)],
                vec![
                    Term::new(vec![0, 1], -delta),
                    Term::new(vec![1, 0], -alpha),
                    Term::new(vec![3, 0], -beta),
                ],
            ],
        )
    }

    /// Single van der Pol oscillator `x1' = x2`, `x2' = mu (1 - x1^2) x2 - x1`.
    pub fn van_der_pol(mu: f64) -> Result<Self> {
        Self::new(
            2,
            vec![
                vec![Term::new(vec![0, 1], 1.0)],
                vec![
                    Term::new(vec![0, 1], mu),
                    Term::new(vec![2, 1], -mu),
                    Term::new(vec![1, 0], -1.0),
                ],
            ],
        )
    }

    pub fn var_count(&self) -> usize {
        self.var_count
    }

    pub fn output_count(&self) -> usize {
        self.components.len()
    }

    pub fn is_square(&self) -> bool {
        self.components.len() == self.var_count
    }

    pub fn components(&self) -> &[Vec<Term>] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &[Term] {
        &self.components[i]
    }

    pub fn max_degree(&self) -> u32 {
        self.components
            .iter()
            .flatten()
            .map(|t| t.monomial.degree())
            .max()
            .unwrap_or(0)
    }

    pub fn has_constant_terms(&self) -> bool {
        self.components
            .iter()
            .flatten()
            .any(|t| t.monomial.is_constant())
    }

    /// Writes `f(x)` into `out`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (slot, terms) in out.iter_mut().zip(&self.components) {
            *slot = terms.iter().map(|t| t.coef * t.monomial.eval(x)).sum();
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.components.len()];
        self.eval_into(x, &mut out);
        out
    }

    /// Adds `scale * other` into components `target_offset..` of this field,
    /// mapping `other`'s variable `k` to this field's variable `var_map[k]`.
    pub fn add_mapped(
        &mut self,
        other: &PolynomialVectorField,
        target_offset: usize,
        var_map: &[usize],
        scale: f64,
    ) -> Result<()> {
        if var_map.len() != other.var_count {
            return Err(KoopmanError::DimensionMismatch {
                expected: other.var_count,
                actual: var_map.len(),
            });
        }
        if var_map.iter().any(|&v| v >= self.var_count)
            || target_offset + other.components.len() > self.components.len()
        {
            return Err(KoopmanError::InvalidArgument(
                "mapped field does not fit the target".into(),
            ));
        }
        let mut components = self.components.clone();
        for (k, terms) in other.components.iter().enumerate() {
            for t in terms {
                let mut e = vec![0u32; self.var_count];
                for (src, &exp) in t.monomial.exponents().iter().enumerate() {
                    e[var_map[src]] += exp;
                }
                components[target_offset + k].push(Term::new(e, scale * t.coef));
            }
        }
        *self = Self::polynomial_map(self.var_count, components)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_duplicates_and_drops_zeros() {
        let f = PolynomialVectorField::new(
            2,
            vec![
                vec![Term::new(vec![1, 0], 1.0), Term::new(vec![1, 0], 2.0)],
                vec![Term::new(vec![0, 1], 1.0), Term::new(vec![0, 1], -1.0)],
            ],
        )
        .unwrap();
        assert_eq!(f.component(0), &[Term::new(vec![1, 0], 3.0)]);
        assert!(f.component(1).is_empty());
    }

    #[test]
    fn rejects_malformed_fields() {
        assert!(PolynomialVectorField::new(2, vec![vec![]]).is_err());
        assert!(PolynomialVectorField::new(2, vec![vec![Term::new(vec![1], 1.0)], vec![]]).is_err());
        assert!(PolynomialVectorField::new(1, vec![vec![Term::new(vec![1], f64::NAN)]]).is_err());
    }

    #[test]
    fn duffing_evaluation() {
        let f = PolynomialVectorField::duffing(0.23, -0.99, 0.80).unwrap();
        let v = f.eval(&[0.5, -1.0]);
        assert_eq!(v[0], -1.0);
        let want = -0.23 * -1.0 + 0.99 * 0.5 - 0.80 * 0.125;
        assert!((v[1] - want).abs() < 1e-15);
        assert_eq!(f.max_degree(), 3);
    }

    #[test]
    fn van_der_pol_evaluation() {
        let f = PolynomialVectorField::van_der_pol(1.32).unwrap();
        let v = f.eval(&[0.5, 2.0]);
        let want = 1.32 * (1.0 - 0.25) * 2.0 - 0.5;
        assert!((v[1] - want).abs() < 1e-14);
    }

    #[test]
    fn add_mapped_embeds_variables() {
        let mut f = PolynomialVectorField::zero(4).unwrap();
        let g = PolynomialVectorField::duffing(0.1, 1.0, 1.0).unwrap();
        f.add_mapped(&g, 2, &[2, 3], 1.0).unwrap();
        let v = f.eval(&[9.0, 9.0, 0.5, 1.0]);
        assert_eq!(&v[..2], &[0.0, 0.0]);
        assert_eq!(v, [0.0, 0.0, 1.0, -0.1 - 0.5 - 0.125]);
    }
}
