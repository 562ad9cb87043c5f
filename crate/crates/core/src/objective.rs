//! Objectives written as a sum over rows plus a row-independent term.
//!
//! Full-batch solvers only need [`FiniteSum::value_grad`]; the minibatch
//! solver also uses the row/global split.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result};

pub trait FiniteSum {
    fn dim(&self) -> usize;

    fn num_rows(&self) -> usize;

    /// Adds the gradient of the listed rows' terms to `grad` and returns
    /// their summed value.
    fn rows_value_grad(&self, w: &DVector<f64>, rows: &[usize], grad: &mut DVector<f64>) -> f64;

    /// Same as [`rows_value_grad`](Self::rows_value_grad) over every row.
    fn all_rows_value_grad(&self, w: &DVector<f64>, grad: &mut DVector<f64>) -> f64 {
        let rows: Vec<usize> = (0..self.num_rows()).collect();
        self.rows_value_grad(w, &rows, grad)
    }

    /// Adds the gradient of the row-independent term to `grad`.
    fn global_value_grad(&self, _w: &DVector<f64>, _grad: &mut DVector<f64>) -> f64 {
        0.0
    }

    fn value_grad(&self, w: &DVector<f64>) -> (f64, DVector<f64>) {
        let mut grad = DVector::zeros(self.dim());
        let v = self.all_rows_value_grad(w, &mut grad) + self.global_value_grad(w, &mut grad);
        (v, grad)
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        self.value_grad(w).0
    }
}

impl<T: FiniteSum + ?Sized> FiniteSum for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn num_rows(&self) -> usize {
        (**self).num_rows()
    }
    fn rows_value_grad(&self, w: &DVector<f64>, rows: &[usize], grad: &mut DVector<f64>) -> f64 {
        (**self).rows_value_grad(w, rows, grad)
    }
    fn all_rows_value_grad(&self, w: &DVector<f64>, grad: &mut DVector<f64>) -> f64 {
        (**self).all_rows_value_grad(w, grad)
    }
    fn global_value_grad(&self, w: &DVector<f64>, grad: &mut DVector<f64>) -> f64 {
        (**self).global_value_grad(w, grad)
    }
}

/// Sum of several objectives over the same parameter vector. Rows are
/// numbered part by part in insertion order.
pub struct SumObjective<'a> {
    dim: usize,
    parts: Vec<Box<dyn FiniteSum + 'a>>,
    offsets: Vec<usize>,
}

impl<'a> SumObjective<'a> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            parts: Vec::new(),
            offsets: vec![0],
        }
    }

    pub fn push(&mut self, part: impl FiniteSum + 'a) -> Result<()> {
        check_dim("objective part", self.dim, part.dim())?;
        let end = self.offsets.last().copied().unwrap_or(0) + part.num_rows();
        self.parts.push(Box::new(part));
        self.offsets.push(end);
        Ok(())
    }

    pub fn with(mut self, part: impl FiniteSum + 'a) -> Result<Self> {
        self.push(part)?;
        Ok(self)
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }
}

impl FiniteSum for SumObjective<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_rows(&self) -> usize {
        self.offsets.last().copied().unwrap_or(0)
    }

    fn rows_value_grad(&self, w: &DVector<f64>, rows: &[usize], grad: &mut DVector<f64>) -> f64 {
        let mut per_part: Vec<Vec<usize>> = vec![Vec::new(); self.parts.len()];
        for &r in rows {
            // first part whose end exceeds r
            let k = self.offsets[1..].partition_point(|&end| end <= r);
            per_part[k].push(r - self.offsets[k]);
        }
        let mut v = 0.0;
        for (part, local) in self.parts.iter().zip(&per_part) {
            if !local.is_empty() {
                v += part.rows_value_grad(w, local, grad);
            }
        }
        v
    }

    fn all_rows_value_grad(&self, w: &DVector<f64>, grad: &mut DVector<f64>) -> f64 {
        self.parts.iter().map(|p| p.all_rows_value_grad(w, grad)).sum()
    }

    fn global_value_grad(&self, w: &DVector<f64>, grad: &mut DVector<f64>) -> f64 {
        self.parts.iter().map(|p| p.global_value_grad(w, grad)).sum()
    }
}

/// `½γ‖w‖² − bᵀw + c`, the common shape of every L2-type weight term.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticWeight {
    pub gamma: f64,
    pub linear: DVector<f64>,
    pub constant: f64,
}

impl QuadraticWeight {
    /// `½δ‖w‖²`.
    pub fn ridge(dim: usize, delta: f64) -> Self {
        Self {
            gamma: delta,
            linear: DVector::zeros(dim),
            constant: 0.0,
        }
    }

    /// `½δ‖w − a‖²`.
    pub fn shifted(delta: f64, anchor: &DVector<f64>) -> Self {
        Self {
            gamma: delta,
            linear: anchor * delta,
            constant: 0.5 * delta * anchor.norm_squared(),
        }
    }

    /// Two-generator divergence for L2 pairs,
    /// `½(γ‖w‖² + δ‖a‖² − 2δ wᵀa)`, with gradient `γw − δa`.
    pub fn two_generator(gamma_new: f64, delta_old: f64, anchor: &DVector<f64>) -> Self {
        Self {
            gamma: gamma_new,
            linear: anchor * delta_old,
            constant: 0.5 * delta_old * anchor.norm_squared(),
        }
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.gamma *= s;
        self.linear *= s;
        self.constant *= s;
        self
    }

    pub fn eval_into(&self, w: &DVector<f64>, grad: &mut DVector<f64>) -> f64 {
        grad.axpy(self.gamma, w, 1.0);
        *grad -= &self.linear;
        0.5 * self.gamma * w.norm_squared() - self.linear.dot(w) + self.constant
    }
}

impl FiniteSum for QuadraticWeight {
    fn dim(&self) -> usize {
        self.linear.len()
    }
    fn num_rows(&self) -> usize {
        0
    }
    fn rows_value_grad(&self, _: &DVector<f64>, _: &[usize], _: &mut DVector<f64>) -> f64 {
        0.0
    }
    fn global_value_grad(&self, w: &DVector<f64>, grad: &mut DVector<f64>) -> f64 {
        self.eval_into(w, grad)
    }
}

/// `½(w − a)ᵀH(w − a)` for a symmetric `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub hessian: DMatrix<f64>,
    pub anchor: DVector<f64>,
}

impl FiniteSum for QuadraticForm {
    fn dim(&self) -> usize {
        self.anchor.len()
    }
    fn num_rows(&self) -> usize {
        0
    }
    fn rows_value_grad(&self, _: &DVector<f64>, _: &[usize], _: &mut DVector<f64>) -> f64 {
        0.0
    }
    fn global_value_grad(&self, w: &DVector<f64>, grad: &mut DVector<f64>) -> f64 {
        let d = w - &self.anchor;
        let hd = &self.hessian * &d;
        *grad += &hd;
        0.5 * d.dot(&hd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Squares {
        centers: Vec<f64>,
    }

    // Σ_i ½(w₀ − c_i)²
    impl FiniteSum for Squares {
        fn dim(&self) -> usize {
            1
        }
        fn num_rows(&self) -> usize {
            self.centers.len()
        }
        fn rows_value_grad(&self, w: &DVector<f64>, rows: &[usize], grad: &mut DVector<f64>) -> f64 {
            rows.iter()
                .map(|&i| {
                    let r = w[0] - self.centers[i];
                    grad[0] += r;
                    0.5 * r * r
                })
                .sum()
        }
    }

    #[test]
    fn sum_routes_rows_to_parts() {
        let obj = SumObjective::new(1)
            .with(Squares { centers: vec![1.0, 2.0] })
            .unwrap()
            .with(QuadraticWeight::ridge(1, 2.0))
            .unwrap()
            .with(Squares { centers: vec![5.0] })
            .unwrap();
        assert_eq!(obj.num_rows(), 3);
        let w = DVector::from_element(1, 0.0);
        let mut g = DVector::zeros(1);
        let v = obj.rows_value_grad(&w, &[2], &mut g);
        assert_eq!((v, g[0]), (12.5, -5.0));
        let (v, g) = obj.value_grad(&w);
        assert_eq!(v, 0.5 + 2.0 + 12.5);
        assert_eq!(g[0], -8.0);
    }

    #[test]
    fn weight_terms() {
        let a = DVector::from_vec(vec![1.0, -2.0]);
        let w = DVector::from_vec(vec![0.5, 0.5]);
        let mut g = DVector::zeros(2);
        let v = QuadraticWeight::shifted(2.0, &a).eval_into(&w, &mut g);
        assert!((v - (w.clone() - &a).norm_squared()).abs() < 1e-14);
        assert_eq!(g, (&w - &a) * 2.0);
        // γ = δ reduces the two-generator form to the shifted form
        let mut g2 = DVector::zeros(2);
        let v2 = QuadraticWeight::two_generator(2.0, 2.0, &a).eval_into(&w, &mut g2);
        assert!((v - v2).abs() < 1e-14);
        assert_eq!(g, g2);
        let q = QuadraticForm {
            hessian: DMatrix::identity(2, 2) * 3.0,
            anchor: a.clone(),
        };
        let (qv, qg) = q.value_grad(&a);
        assert_eq!(qv, 0.0);
        assert_eq!(qg, DVector::zeros(2));
    }
}
