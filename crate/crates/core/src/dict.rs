//! Monomial multi-indices, dictionaries, and the mapping between subsystem
//! (local) dictionaries and the full-system (global) dictionary.
//!
//! Dictionaries are ordered graded-lexicographically: total degree ascending,
//! and within one degree the exponent vectors are sorted in descending
//! lexicographic order. Index 0 is always the constant monomial and indices
//! `1..=var_count` are the coordinate functions `x_1, ..., x_D`.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use crate::error::{KoopmanError, Result};

/// Exponent vector of a monomial `x_1^{n_1} ... x_D^{n_D}`.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self(exponents)
    }

    pub fn zero(var_count: usize) -> Self {
        Self(vec![0; var_count])
    }

    /// Unit exponent on variable `var`.
    pub fn unit(var_count: usize, var: usize) -> Self {
        let mut e = vec![0; var_count];
        e[var] = 1;
        Self(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn var_count(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.var_count(), other.var_count());
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self - e_var`, or `None` when the exponent on `var` is zero.
    pub fn lower(&self, var: usize) -> Option<MultiIndex> {
        let e = *self.0.get(var)?;
        if e == 0 {
            return None;
        }
        let mut out = self.0.clone();
        out[var] -= 1;
        Some(MultiIndex(out))
    }

    /// Value of the monomial at `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .fold(1.0, |acc, (&e, &xi)| acc * xi.powi(e as i32))
    }

    /// Zero-pads into a `total_vars`-variable index, placing this index's
    /// variables starting at `offset`.
    pub fn embed(&self, offset: usize, total_vars: usize) -> MultiIndex {
        let mut out = vec![0; total_vars];
        out[offset..offset + self.0.len()].copy_from_slice(&self.0);
        MultiIndex(out)
    }

    /// Graded order: lower degree first, then descending lexicographic.
    pub fn graded_cmp(&self, other: &MultiIndex) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        Self(v)
    }
}

/// All monomials in `var_count` variables of total degree at most `max_degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    var_count: usize,
    max_degree: u32,
    entries: Vec<MultiIndex>,
    lookup: HashMap<MultiIndex, usize>,
}

impl Dictionary {
    pub fn new(var_count: usize, max_degree: u32) -> Result<Self> {
        if var_count == 0 {
            return Err(KoopmanError::InvalidArgument(
                "dictionary needs at least one variable".into(),
            ));
        }
        if max_degree == 0 {
            return Err(KoopmanError::InvalidArgument(
                "dictionary degree must be at least 1".into(),
            ));
        }
        let mut entries = Vec::new();
        for degree in 0..=max_degree {
            let mut current = vec![0u32; var_count];
            push_compositions(degree, 0, &mut current, &mut entries);
        }
        // compositions are generated in descending lexicographic order per degree
        debug_assert!(
            entries
                .windows(2)
                .all(|w| w[0].graded_cmp(&w[1]) == Ordering::Less)
        );
        let lookup = entries
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        Ok(Self {
            var_count,
            max_degree,
            entries,
            lookup,
        })
    }

    pub fn var_count(&self) -> usize {
        self.var_count
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MultiIndex] {
        &self.entries
    }

    pub fn entry(&self, index: usize) -> &MultiIndex {
        &self.entries[index]
    }

    pub fn index_of(&self, m: &MultiIndex) -> Option<usize> {
        self.lookup.get(m).copied()
    }

    pub const fn constant_index(&self) -> usize {
        0
    }

    /// Index of the coordinate monomial `x_var`.
    pub fn variable_index(&self, var: usize) -> usize {
        1 + var
    }

    /// Evaluates every dictionary function at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        self.evaluate_into(x, &mut out)?;
        Ok(out)
    }

    /// Allocation-free variant of [`Dictionary::evaluate`].
    pub fn evaluate_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.var_count {
            return Err(KoopmanError::DimensionMismatch {
                expected: self.var_count,
                actual: x.len(),
            });
        }
        if out.len() != self.len() {
            return Err(KoopmanError::DimensionMismatch {
                expected: self.len(),
                actual: out.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(KoopmanError::NonFinite("dictionary input"));
        }
        for (slot, m) in out.iter_mut().zip(&self.entries) {
            *slot = m.eval(x);
        }
        Ok(())
    }
}

fn push_compositions(remaining: u32, var: usize, current: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    let last = current.len() - 1;
    if var == last {
        current[var] = remaining;
        out.push(MultiIndex(current.clone()));
        current[var] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        current[var] = e;
        push_compositions(remaining - e, var + 1, current, out);
    }
    current[var] = 0;
}

/// Location of each subsystem's variables inside the global state vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableLayout {
    dims: Vec<usize>,
    offsets: Vec<usize>,
}

impl VariableLayout {
    pub fn new(subsystem_dims: Vec<usize>) -> Result<Self> {
        if subsystem_dims.is_empty() || subsystem_dims.contains(&0) {
            return Err(KoopmanError::InvalidArgument(
                "layout needs at least one subsystem, each with positive dimension".into(),
            ));
        }
        let mut offsets = Vec::with_capacity(subsystem_dims.len() + 1);
        offsets.push(0);
        for d in &subsystem_dims {
            offsets.push(offsets.last().unwrap() + d);
        }
        Ok(Self {
            dims: subsystem_dims,
            offsets,
        })
    }

    /// `count` subsystems of dimension `dim` each.
    pub fn uniform(count: usize, dim: usize) -> Result<Self> {
        Self::new(vec![dim; count])
    }

    pub fn subsystem_count(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self, subsystem: usize) -> usize {
        self.dims[subsystem]
    }

    pub fn offset(&self, subsystem: usize) -> usize {
        self.offsets[subsystem]
    }

    pub fn total(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Subsystem that owns global variable `var`.
    pub fn owner(&self, var: usize) -> usize {
        self.offsets[1..].partition_point(|&end| end <= var)
    }

    pub fn slice<'a>(&self, x: &'a [f64], subsystem: usize) -> &'a [f64] {
        &x[self.offsets[subsystem]..self.offsets[subsystem + 1]]
    }
}

/// Maps each entry of a subsystem dictionary to its position in the global
/// dictionary. `result[k]` is the global index of local entry `k`.
pub fn embed_indices(
    local: &Dictionary,
    global: &Dictionary,
    layout: &VariableLayout,
    subsystem: usize,
) -> Result<Vec<usize>> {
    if subsystem >= layout.subsystem_count() {
        return Err(KoopmanError::InvalidArgument(format!(
            "subsystem {subsystem} out of range for {} subsystems",
            layout.subsystem_count()
        )));
    }
    if local.var_count() != layout.dim(subsystem) {
        return Err(KoopmanError::DimensionMismatch {
            expected: layout.dim(subsystem),
            actual: local.var_count(),
        });
    }
    if global.var_count() != layout.total() {
        return Err(KoopmanError::DimensionMismatch {
            expected: layout.total(),
            actual: global.var_count(),
        });
    }
    let offset = layout.offset(subsystem);
    local
        .entries()
        .iter()
        .map(|m| {
            let padded = m.embed(offset, layout.total());
            global
                .index_of(&padded)
                .ok_or_else(|| KoopmanError::MissingMonomial(padded.exponents().to_vec()))
        })
        .collect()
}

/// Number of subsystems whose variables appear in `m` with nonzero exponent.
pub fn subsystems_touched(m: &MultiIndex, layout: &VariableLayout) -> usize {
    (0..layout.subsystem_count())
        .filter(|&s| {
            m.exponents()[layout.offset(s)..layout.offset(s) + layout.dim(s)]
                .iter()
                .any(|&e| e > 0)
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn binomial(n: u64, k: u64) -> u64 {
        (1..=k).fold(1, |acc, i| acc * (n - k + i) / i)
    }

    #[test]
    fn sizes() {
        assert_eq!(Dictionary::new(2, 3).unwrap().len(), 10);
        assert_eq!(Dictionary::new(6, 3).unwrap().len(), 84);
        assert_eq!(Dictionary::new(4, 3).unwrap().len(), 35);
        let d = Dictionary::new(1, 1).unwrap();
        assert_eq!(d.entries(), &[MultiIndex::new(vec![0]), MultiIndex::new(vec![1])]);
        for v in 1..5 {
            for deg in 1..5 {
                let d = Dictionary::new(v, deg).unwrap();
                assert_eq!(d.len() as u64, binomial((v as u64) + deg as u64, deg as u64));
            }
        }
    }

    #[test]
    fn rejects_zero_arguments() {
        assert!(Dictionary::new(0, 3).is_err());
        assert!(Dictionary::new(3, 0).is_err());
    }

    #[test]
    fn ordering_is_graded_with_coordinates_first() {
        let d = Dictionary::new(2, 3).unwrap();
        let got: Vec<Vec<u32>> = d.entries().iter().map(|m| m.exponents().to_vec()).collect();
        let want = vec![
            vec![0, 0],
            vec![1, 0],
            vec![0, 1],
            vec![2, 0],
            vec![1, 1],
            vec![0, 2],
            vec![3, 0],
            vec![2, 1],
            vec![1, 2],
            vec![0, 3],
        ];
        assert_eq!(got, want);
        let d6 = Dictionary::new(6, 3).unwrap();
        for v in 0..6 {
            assert_eq!(d6.entry(d6.variable_index(v)), &MultiIndex::unit(6, v));
        }
        assert!(d6.entry(0).is_constant());
    }

    #[test]
    fn evaluate_examples() {
        let d = Dictionary::new(2, 3).unwrap();
        let v = d.evaluate(&[2.0, 1.0]).unwrap();
        assert_eq!(v[d.index_of(&MultiIndex::new(vec![2, 1])).unwrap()], 4.0);

        let z = d.evaluate(&[0.0, 0.0]).unwrap();
        assert_eq!(z[0], 1.0);
        assert!(z[1..].iter().all(|&v| v == 0.0));

        let d1 = Dictionary::new(1, 2).unwrap();
        assert_eq!(d1.evaluate(&[3.0]).unwrap(), vec![1.0, 3.0, 9.0]);
    }

    #[test]
    fn evaluate_rejects_bad_input() {
        let d = Dictionary::new(2, 2).unwrap();
        assert!(matches!(d.evaluate(&[f64::NAN, 0.0]), Err(KoopmanError::NonFinite(_))));
        assert!(matches!(
            d.evaluate(&[1.0]),
            Err(KoopmanError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn embedding_two_planar_subsystems() {
        let layout = VariableLayout::uniform(2, 2).unwrap();
        let global = Dictionary::new(4, 3).unwrap();
        let local = Dictionary::new(2, 3).unwrap();
        assert_eq!(global.len(), 35);

        let map0 = embed_indices(&local, &global, &layout, 0).unwrap();
        let map1 = embed_indices(&local, &global, &layout, 1).unwrap();
        let sq = local.index_of(&MultiIndex::new(vec![2, 0])).unwrap();
        assert_eq!(global.entry(map0[sq]).exponents(), &[2, 0, 0, 0]);
        assert_eq!(global.entry(map1[sq]).exponents(), &[0, 0, 2, 0]);
        assert_eq!(map1[local.constant_index()], 0);

        // brute-force oracle: enumerate the global dictionary and pick the
        // monomials supported on each subsystem's variables
        let support = |lo: usize| -> HashSet<usize> {
            global
                .entries()
                .iter()
                .enumerate()
                .filter(|(_, m)| {
                    m.exponents()
                        .iter()
                        .enumerate()
                        .all(|(v, &e)| e == 0 || (lo..lo + 2).contains(&v))
                })
                .map(|(i, _)| i)
                .collect()
        };
        let s0: HashSet<usize> = map0.iter().copied().collect();
        let s1: HashSet<usize> = map1.iter().copied().collect();
        assert_eq!(s0.len(), 10);
        assert_eq!(s1.len(), 10);
        assert_eq!(s0, support(0));
        assert_eq!(s1, support(2));
        assert_eq!(s0.intersection(&s1).copied().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn embedding_preserves_order() {
        let layout = VariableLayout::new(vec![2, 3, 1]).unwrap();
        let global = Dictionary::new(6, 3).unwrap();
        for s in 0..3 {
            let local = Dictionary::new(layout.dim(s), 3).unwrap();
            let map = embed_indices(&local, &global, &layout, s).unwrap();
            assert!(map.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn embedding_errors() {
        let layout = VariableLayout::uniform(2, 2).unwrap();
        let global = Dictionary::new(4, 2).unwrap();
        let local = Dictionary::new(2, 3).unwrap();
        assert!(matches!(
            embed_indices(&local, &global, &layout, 0),
            Err(KoopmanError::MissingMonomial(_))
        ));
        let wrong_dim = Dictionary::new(3, 2).unwrap();
        assert!(embed_indices(&wrong_dim, &global, &layout, 0).is_err());
        assert!(embed_indices(&Dictionary::new(2, 2).unwrap(), &global, &layout, 2).is_err());
    }

    #[test]
    fn layout_offsets() {
        let l = VariableLayout::new(vec![2, 3, 1]).unwrap();
        assert_eq!(l.total(), 6);
        assert_eq!((l.offset(0), l.offset(1), l.offset(2)), (0, 2, 5));
        assert_eq!((0..6).map(|v| l.owner(v)).collect::<Vec<_>>(), vec![0, 0, 1, 1, 1, 2]);
        assert!(VariableLayout::new(vec![]).is_err());
        assert!(VariableLayout::new(vec![2, 0]).is_err());
    }

    proptest! {
        #[test]
        fn index_round_trip(vars in 1usize..5, deg in 1u32..5) {
            let d = Dictionary::new(vars, deg).unwrap();
            for (i, m) in d.entries().iter().enumerate() {
                prop_assert_eq!(d.index_of(m), Some(i));
            }
        }

        #[test]
        fn evaluation_is_multiplicative(
            x in proptest::collection::vec(-2.0f64..2.0, 3),
            a in 0usize..20,
            b in 0usize..20,
        ) {
            let d = Dictionary::new(3, 3).unwrap();
            let v = d.evaluate(&x).unwrap();
            let sum = d.entry(a).add(d.entry(b));
            if let Some(k) = d.index_of(&sum) {
                let expect = v[a] * v[b];
                prop_assert!((v[k] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
            }
        }

        #[test]
        fn distinct_subsystem_images_meet_at_constant(dims in proptest::collection::vec(1usize..3, 2..4)) {
            let layout = VariableLayout::new(dims.clone()).unwrap();
            let global = Dictionary::new(layout.total(), 2).unwrap();
            let maps: Vec<HashSet<usize>> = (0..dims.len())
                .map(|s| {
                    let local = Dictionary::new(dims[s], 2).unwrap();
                    embed_indices(&local, &global, &layout, s).unwrap().into_iter().collect()
                })
                .collect();
            for i in 0..maps.len() {
                for j in (i + 1)..maps.len() {
                    let common: Vec<usize> = maps[i].intersection(&maps[j]).copied().collect();
                    prop_assert_eq!(common, vec![0]);
                }
            }
        }
    }
}
