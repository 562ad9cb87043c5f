//! Per-coordinate polynomial feature maps.
//!
//! Layout is `[1?, x₁..x_D, x₁²..x_D², …, x₁^d..x_D^d]`, so a degree-`d−1`
//! map produces a prefix of the degree-`d` output.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureMap {
    degree: usize,
    include_bias: bool,
    input_dim: usize,
}

/// How one feature map relates to another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nesting {
    Identical,
    /// The new map's outputs are a prefix of the old map's outputs.
    Shrinks,
    /// The old map's outputs are a prefix of the new map's outputs.
    Grows,
    NotNested,
}

impl FeatureMap {
    pub fn new(degree: usize, include_bias: bool, input_dim: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidArgument("feature degree must be positive".into()));
        }
        Ok(Self {
            degree,
            include_bias,
            input_dim,
        })
    }

    /// Degree-1 map with a bias column.
    pub fn linear(input_dim: usize) -> Self {
        Self {
            degree: 1,
            include_bias: true,
            input_dim,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn include_bias(&self) -> bool {
        self.include_bias
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn with_degree(&self, degree: usize) -> Result<Self> {
        Self::new(degree, self.include_bias, self.input_dim)
    }

    pub fn output_dim(&self) -> usize {
        usize::from(self.include_bias) + self.input_dim * self.degree
    }

    pub fn expand(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("features_expand", self.input_dim, x.len())?;
        let mut out = Vec::with_capacity(self.output_dim());
        self.expand_into(x, &mut out);
        Ok(out)
    }

    fn expand_into(&self, x: &[f64], out: &mut Vec<f64>) {
        if self.include_bias {
            out.push(1.0);
        }
        let mut power = x.to_vec();
        for k in 1..=self.degree {
            if k > 1 {
                for (p, xi) in power.iter_mut().zip(x) {
                    *p *= xi;
                }
            }
            out.extend_from_slice(&power);
        }
    }

    /// Design matrix Φ (N×P) whose rows are the expanded input rows.
    pub fn design(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("design matrix", self.input_dim, inputs.ncols())?;
        let p = self.output_dim();
        let mut phi = DMatrix::zeros(inputs.nrows(), p);
        let mut row = Vec::with_capacity(p);
        let mut x = vec![0.0; self.input_dim];
        for i in 0..inputs.nrows() {
            for (j, xj) in x.iter_mut().enumerate() {
                *xj = inputs[(i, j)];
            }
            row.clear();
            self.expand_into(&x, &mut row);
            for (j, v) in row.iter().enumerate() {
                phi[(i, j)] = *v;
            }
        }
        Ok(phi)
    }

    pub fn nesting(&self, new: &FeatureMap) -> Nesting {
        if self.input_dim != new.input_dim || self.include_bias != new.include_bias {
            return Nesting::NotNested;
        }
        match new.degree.cmp(&self.degree) {
            std::cmp::Ordering::Equal => Nesting::Identical,
            std::cmp::Ordering::Less => Nesting::Shrinks,
            std::cmp::Ordering::Greater => Nesting::Grows,
        }
    }

    /// Weight map `A` (P_new × P_old) carrying old weights into the new
    /// parameter space: identity on the shared prefix, zero elsewhere.
    /// `None` when the maps are not nested.
    pub fn transfer_matrix(&self, new: &FeatureMap) -> Option<DMatrix<f64>> {
        if self.nesting(new) == Nesting::NotNested {
            return None;
        }
        let (rows, cols) = (new.output_dim(), self.output_dim());
        Some(DMatrix::from_fn(rows, cols, |i, j| if i == j { 1.0 } else { 0.0 }))
    }

    /// `A·w` for the prefix transfer matrix without forming `A`.
    pub fn transfer_weights(&self, new: &FeatureMap, w: &DVector<f64>) -> Option<DVector<f64>> {
        if self.nesting(new) == Nesting::NotNested {
            return None;
        }
        let p_new = new.output_dim();
        Some(DVector::from_fn(p_new, |i, _| if i < w.len() { w[i] } else { 0.0 }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expand_examples() {
        let m1 = FeatureMap::new(1, true, 2).unwrap();
        assert_eq!(m1.expand(&[2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let m2 = FeatureMap::new(2, true, 2).unwrap();
        assert_eq!(m2.expand(&[2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 9.0]);
        let empty = FeatureMap::new(1, false, 0).unwrap();
        assert!(empty.expand(&[]).unwrap().is_empty());
    }

    #[test]
    fn dimension_mismatch() {
        let m = FeatureMap::new(2, true, 3).unwrap();
        assert!(matches!(m.expand(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(FeatureMap::new(0, true, 3).is_err());
    }

    #[test]
    fn output_dim_formula() {
        for d in 1..5 {
            for dim in 0..4 {
                for bias in [false, true] {
                    let m = FeatureMap::new(d, bias, dim).unwrap();
                    let x: Vec<f64> = (0..dim).map(|i| i as f64 + 0.5).collect();
                    assert_eq!(m.expand(&x).unwrap().len(), usize::from(bias) + dim * d);
                }
            }
        }
    }

    #[test]
    fn degrees_nest_as_prefixes() {
        let x = [0.3, -1.7, 2.2];
        for d in 2..6 {
            let lo = FeatureMap::new(d - 1, true, 3).unwrap().expand(&x).unwrap();
            let hi = FeatureMap::new(d, true, 3).unwrap().expand(&x).unwrap();
            assert_eq!(&hi[..lo.len()], &lo[..]);
        }
    }

    #[test]
    fn design_rows_match_expand() {
        let m = FeatureMap::new(3, true, 2).unwrap();
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -0.5, 0.25]);
        let phi = m.design(&x).unwrap();
        for i in 0..2 {
            let row = m.expand(&[x[(i, 0)], x[(i, 1)]]).unwrap();
            for j in 0..m.output_dim() {
                assert_eq!(phi[(i, j)], row[j]);
            }
        }
    }

    #[test]
    fn transfer_is_prefix_projection() {
        let old = FeatureMap::new(2, true, 2).unwrap();
        let new = FeatureMap::new(1, true, 2).unwrap();
        assert_eq!(old.nesting(&new), Nesting::Shrinks);
        let a = old.transfer_matrix(&new).unwrap();
        assert_eq!(a.shape(), (3, 5));
        let w = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(&a * &w, old.transfer_weights(&new, &w).unwrap());
        // φ_new = A φ_old for prefix maps
        let phi_old = DVector::from_vec(old.expand(&[0.5, -2.0]).unwrap());
        let phi_new = DVector::from_vec(new.expand(&[0.5, -2.0]).unwrap());
        assert_eq!(&a * phi_old, phi_new);
        let other = FeatureMap::new(1, false, 2).unwrap();
        assert_eq!(old.nesting(&other), Nesting::NotNested);
        assert!(old.transfer_matrix(&other).is_none());
    }
}
