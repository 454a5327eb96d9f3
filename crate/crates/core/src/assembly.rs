//! Global seed matrix for a coupled system, built by embedding each
//! subsystem's local Koopman matrix into the full-system dictionary.
//!
//! The global dictionary interleaves subsystem monomials with interaction
//! monomials (those mixing variables of two or more subsystems), so local
//! blocks are scattered by index map rather than placed contiguously. Rows
//! and columns of interaction monomials stay zero.

use nalgebra::DMatrix;

use crate::dict::{Dictionary, VariableLayout, embed_indices};
use crate::error::{KoopmanError, Result};
use crate::model::KoopmanModel;

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSeed {
    global_dict: Dictionary,
    matrix: DMatrix<f64>,
    embeddings: Vec<Vec<usize>>,
}

impl GlobalSeed {
    pub fn global_dict(&self) -> &Dictionary {
        &self.global_dict
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Global indices of subsystem `i`'s local dictionary entries.
    pub fn embedding(&self, subsystem: usize) -> &[usize] {
        &self.embeddings[subsystem]
    }

    /// Submatrix at subsystem `i`'s embedded indices.
    pub fn local_block(&self, subsystem: usize) -> DMatrix<f64> {
        let map = &self.embeddings[subsystem];
        DMatrix::from_fn(map.len(), map.len(), |r, c| self.matrix[(map[r], map[c])])
    }

    pub fn to_model(&self) -> KoopmanModel {
        KoopmanModel::new(self.global_dict.clone(), self.matrix.clone())
            .expect("seed matrix matches its dictionary")
    }
}

pub fn assemble_global(
    locals: &[KoopmanModel],
    layout: &VariableLayout,
    global_dict: &Dictionary,
) -> Result<GlobalSeed> {
    if locals.len() != layout.subsystem_count() {
        return Err(KoopmanError::DimensionMismatch {
            expected: layout.subsystem_count(),
            actual: locals.len(),
        });
    }
    for local in locals {
        if local.dict().max_degree() != global_dict.max_degree() {
            return Err(KoopmanError::InvalidArgument(format!(
                "local dictionary degree {} differs from global degree {}",
                local.dict().max_degree(),
                global_dict.max_degree()
            )));
        }
    }

    let n = global_dict.len();
    let c = global_dict.constant_index();
    let mut matrix = DMatrix::zeros(n, n);
    let mut embeddings = Vec::with_capacity(locals.len());
    for (s, local) in locals.iter().enumerate() {
        let map = embed_indices(local.dict(), global_dict, layout, s)?;
        let k = local.matrix();
        let lc = local.dict().constant_index();
        // the constant observable must map to itself (or the model is empty)
        let row_ok = k
            .row(lc)
            .iter()
            .enumerate()
            .all(|(j, &v)| if j == lc { v == 1.0 || v == 0.0 } else { v == 0.0 });
        if !row_ok {
            return Err(KoopmanError::ConstantMismatch { subsystem: s });
        }
        for (lr, &gr) in map.iter().enumerate() {
            for (lcol, &gc) in map.iter().enumerate() {
                if gr == c && gc == c {
                    continue;
                }
                matrix[(gr, gc)] = k[(lr, lcol)];
            }
        }
        embeddings.push(map);
    }
    matrix[(c, c)] = 1.0;
    Ok(GlobalSeed {
        global_dict: global_dict.clone(),
        matrix,
        embeddings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dict::subsystems_touched;
    use crate::field::PolynomialVectorField;
    use crate::generator::derive_local_model;
    use std::collections::HashSet;

    fn duffing_locals(dt: f64) -> Vec<KoopmanModel> {
        let d = Dictionary::new(2, 3).unwrap();
        [(0.23, -0.99, 0.80), (0.15, -0.59, 0.86)]
            .iter()
            .map(|&(a, b, c)| {
                derive_local_model(&PolynomialVectorField::duffing(a, b, c).unwrap(), &d, dt).unwrap()
            })
            .collect()
    }

    #[test]
    fn two_planar_subsystems_structure() {
        let layout = VariableLayout::uniform(2, 2).unwrap();
        let global = Dictionary::new(4, 3).unwrap();
        let seed = assemble_global(&duffing_locals(0.01), &layout, &global).unwrap();
        assert_eq!(seed.matrix().shape(), (35, 35));

        // writable slots: pairs of global indices from the same subsystem image
        let mut slots = HashSet::new();
        for s in 0..2 {
            for &r in seed.embedding(s) {
                for &c in seed.embedding(s) {
                    slots.insert((r, c));
                }
            }
        }
        assert_eq!(slots.len(), 2 * 100 - 1);
        for r in 0..35 {
            for c in 0..35 {
                if !slots.contains(&(r, c)) {
                    assert_eq!(seed.matrix()[(r, c)], 0.0, "({r},{c}) outside the block pattern");
                }
            }
        }
        for (i, m) in global.entries().iter().enumerate() {
            if subsystems_touched(m, &layout) >= 2 {
                assert!(seed.matrix().row(i).iter().all(|&v| v == 0.0));
                assert!(seed.matrix().column(i).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn block_consistency() {
        let layout = VariableLayout::uniform(2, 2).unwrap();
        let global = Dictionary::new(4, 3).unwrap();
        let locals = duffing_locals(0.01);
        let seed = assemble_global(&locals, &layout, &global).unwrap();
        for (s, local) in locals.iter().enumerate() {
            assert_eq!(&seed.local_block(s), local.matrix());
        }
    }

    #[test]
    fn single_subsystem_is_reindexing() {
        let layout = VariableLayout::uniform(1, 2).unwrap();
        let global = Dictionary::new(2, 3).unwrap();
        let locals = duffing_locals(0.02)[..1].to_vec();
        let seed = assemble_global(&locals, &layout, &global).unwrap();
        assert_eq!(seed.matrix(), locals[0].matrix());
    }

    #[test]
    fn zero_locals_leave_only_the_constant() {
        let layout = VariableLayout::uniform(3, 2).unwrap();
        let global = Dictionary::new(6, 2).unwrap();
        let locals = vec![KoopmanModel::zeros(Dictionary::new(2, 2).unwrap()); 3];
        let seed = assemble_global(&locals, &layout, &global).unwrap();
        let mut want = DMatrix::zeros(28, 28);
        want[(0, 0)] = 1.0;
        assert_eq!(seed.matrix(), &want);
    }

    #[test]
    fn errors() {
        let layout = VariableLayout::uniform(2, 2).unwrap();
        let global = Dictionary::new(4, 3).unwrap();
        let locals = duffing_locals(0.01);
        assert!(assemble_global(&locals[..1], &layout, &global).is_err());

        let low = Dictionary::new(2, 2).unwrap();
        let bad_degree = vec![KoopmanModel::identity(low.clone()), KoopmanModel::identity(low)];
        assert!(assemble_global(&bad_degree, &layout, &global).is_err());

        let d = Dictionary::new(2, 3).unwrap();
        let mut m = DMatrix::identity(10, 10);
        m[(0, 3)] = 0.5;
        let broken = vec![locals[0].clone(), KoopmanModel::new(d, m).unwrap()];
        assert_eq!(
            assemble_global(&broken, &layout, &global),
            Err(KoopmanError::ConstantMismatch { subsystem: 1 })
        );
    }

    #[test]
    fn uncoupled_prediction_is_bitwise_identical() {
        // x1' = -0.3 x1 + x2, x2' = -x1 ; x3' = 0.1 x3 - 2 x4, x4' = 0.5 x3 - 0.2 x4
        let d = Dictionary::new(2, 3).unwrap();
        let f1 = PolynomialVectorField::linear(&[vec![-0.3, 1.0], vec![-1.0, 0.0]]).unwrap();
        let f2 = PolynomialVectorField::linear(&[vec![0.1, -2.0], vec![0.5, -0.2]]).unwrap();
        let locals = vec![
            derive_local_model(&f1, &d, 0.01).unwrap(),
            derive_local_model(&f2, &d, 0.01).unwrap(),
        ];
        let layout = VariableLayout::uniform(2, 2).unwrap();
        let global = Dictionary::new(4, 3).unwrap();
        let seed = assemble_global(&locals, &layout, &global).unwrap().to_model();
        let x = [0.7, -1.1, 0.25, 1.9];
        let g = seed.advance_observables(&x).unwrap();
        for s in 0..2 {
            let local = locals[s].advance_observables(layout.slice(&x, s)).unwrap();
            let map = embed_indices(&d, &global, &layout, s).unwrap();
            for (l, &gi) in map.iter().enumerate() {
                assert_eq!(g[gi].to_bits(), local[l].to_bits());
            }
        }
    }
}
