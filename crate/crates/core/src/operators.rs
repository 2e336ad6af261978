//! Bounded operators on the truncated space.
//!
//! Two concrete testbeds are provided: the scaled backward shift `wB` and a
//! unimodular diagonal perturbed by a rapidly decaying weighted shift. A dense
//! matrix kind covers everything else.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linspace::{check_dim, circle_point, StateVector, C64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorKind {
    /// `(Tv)_k = w·v_{k+1}`, last coordinate set to zero.
    ScaledBackwardShift { weight: f64 },
    /// `T = D + N` with `D = diag(e^{2πiθ_k})` and `N_{k,k+1} = ε·4^{-k}`.
    PerturbedDiagonal { angles: Vec<f64>, epsilon: f64 },
    /// Row-major square matrix.
    DenseMatrix { rows: Vec<Vec<C64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OperatorSpec {
    kind: OperatorKind,
    dim: usize,
    norm_bound: f64,
}

/// Weight of the coupling between coordinates `k` and `k+1`.
pub fn perturbation_weight(epsilon: f64, k: usize) -> f64 {
    epsilon * 0.25f64.powi(k as i32)
}

impl OperatorSpec {
    /// `wB` on `d` coordinates. Requires `w > 1` so that the untruncated
    /// operator has a whole disc of eigenvalues containing the unit circle.
    pub fn scaled_backward_shift(weight: f64, d: usize) -> Result<Self> {
        if !(weight > 1.0) || !weight.is_finite() {
            return Err(invalid("weight", format!("shift weight must be > 1, got {weight}")));
        }
        if d == 0 {
            return Err(invalid("dimension", "dimension must be ≥ 1"));
        }
        Ok(Self {
            kind: OperatorKind::ScaledBackwardShift { weight },
            dim: d,
            norm_bound: weight,
        })
    }

    pub fn perturbed_diagonal(angles: Vec<f64>, epsilon: f64, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(invalid("dimension", "dimension must be ≥ 1"));
        }
        if angles.len() != d {
            return Err(invalid(
                "angles",
                format!("expected {d} angles, got {}", angles.len()),
            ));
        }
        if angles.iter().any(|t| !t.is_finite()) {
            return Err(invalid("angles", "angles must be finite"));
        }
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(invalid("epsilon", format!("perturbation must be ≥ 0, got {epsilon}")));
        }
        Ok(Self {
            kind: OperatorKind::PerturbedDiagonal { angles, epsilon },
            dim: d,
            norm_bound: 1.0 + epsilon,
        })
    }

    /// Dense operator; the norm bound is the Frobenius norm.
    pub fn dense(rows: Vec<Vec<C64>>) -> Result<Self> {
        let d = rows.len();
        if d == 0 {
            return Err(invalid("dimension", "dimension must be ≥ 1"));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: r.len() });
        }
        if rows.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid("rows", "matrix entries must be finite"));
        }
        let frob = rows.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        Ok(Self {
            kind: OperatorKind::DenseMatrix { rows },
            dim: d,
            norm_bound: frob,
        })
    }

    /// Rebuilds a spec from its kind and dimension, re-validating everything.
    pub fn from_kind(kind: OperatorKind, d: usize) -> Result<Self> {
        match kind {
            OperatorKind::ScaledBackwardShift { weight } => Self::scaled_backward_shift(weight, d),
            OperatorKind::PerturbedDiagonal { angles, epsilon } => {
                Self::perturbed_diagonal(angles, epsilon, d)
            }
            OperatorKind::DenseMatrix { rows } => {
                let op = Self::dense(rows)?;
                check_dim(d, op.dim)?;
                Ok(op)
            }
        }
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Upper bound on `‖T‖` over the truncated space.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    /// `Tv`.
    pub fn apply(&self, v: &StateVector) -> Result<StateVector> {
        check_dim(self.dim, v.dim())?;
        let x = v.entries();
        let d = self.dim;
        let out: Vec<C64> = match &self.kind {
            OperatorKind::ScaledBackwardShift { weight } => (0..d)
                .map(|k| if k + 1 < d { x[k + 1] * *weight } else { C64::new(0.0, 0.0) })
                .collect(),
            OperatorKind::PerturbedDiagonal { angles, epsilon } => (0..d)
                .map(|k| {
                    let mut z = circle_point(angles[k]) * x[k];
                    if k + 1 < d {
                        z += x[k + 1] * perturbation_weight(*epsilon, k);
                    }
                    z
                })
                .collect(),
            OperatorKind::DenseMatrix { rows } => rows
                .iter()
                .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
                .collect(),
        };
        Ok(StateVector::from_raw(out, v.space_p()))
    }

    /// `T^n v` by direct application. Vectors known as eigen-expansions should
    /// use [`crate::eigenfields::EigenExpansion::power`] instead.
    pub fn power_apply(&self, v: &StateVector, n: u64) -> Result<StateVector> {
        check_dim(self.dim, v.dim())?;
        let vn = v.norm();
        if vn > 0.0 && self.norm_bound > 1.0 {
            let log_size = n as f64 * self.norm_bound.ln() + vn.ln();
            if log_size >= f64::MAX.ln() {
                return Err(Error::PowerOverflow { power: n });
            }
        }
        if n == 0 {
            return Ok(v.clone());
        }
        if let OperatorKind::ScaledBackwardShift { weight } = self.kind {
            let d = self.dim;
            let gain = weight.powf(n as f64);
            let x = v.entries();
            let out = (0..d)
                .map(|k| {
                    let src = k as u64 + n;
                    if src < d as u64 {
                        x[src as usize] * gain
                    } else {
                        C64::new(0.0, 0.0)
                    }
                })
                .collect();
            return Ok(StateVector::from_raw(out, v.space_p()));
        }
        let mut cur = v.clone();
        for _ in 0..n {
            cur = self.apply(&cur)?;
        }
        Ok(cur)
    }

    /// Diagonal entry `λ_k = e^{2πiθ_k}` of a perturbed diagonal operator.
    pub fn diagonal_angle(&self, k: usize) -> Result<f64> {
        match &self.kind {
            OperatorKind::PerturbedDiagonal { angles, .. } => angles
                .get(k)
                .copied()
                .ok_or_else(|| invalid("k", format!("index {k} out of range"))),
            _ => Err(Error::WrongOperatorKind("perturbed_diagonal")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn real_vec(xs: &[f64]) -> StateVector {
        StateVector::new(xs.iter().map(|&x| c(x, 0.0)).collect()).unwrap()
    }

    /// Largest singular value by power iteration on `T*T`, using only `apply`
    /// and the explicit adjoint built from columns.
    fn power_iteration_norm(op: &OperatorSpec) -> f64 {
        let d = op.dim();
        let cols: Vec<StateVector> = (0..d)
            .map(|k| op.apply(&StateVector::basis(d, k).unwrap()).unwrap())
            .collect();
        let adjoint = |y: &StateVector| -> StateVector {
            let e = (0..d)
                .map(|k| cols[k].entries().iter().zip(y.entries()).map(|(a, b)| a.conj() * b).sum())
                .collect();
            StateVector::new(e).unwrap()
        };
        let mut x = real_vec(&(0..d).map(|k| 1.0 + k as f64 * 0.37).collect::<Vec<_>>());
        let mut sigma = 0.0;
        for _ in 0..500 {
            let y = adjoint(&op.apply(&x).unwrap());
            let n = y.norm();
            sigma = n.sqrt();
            x = y.scale(c(1.0 / n, 0.0));
        }
        sigma
    }

    #[test]
    fn shift_of_geometric_sequence() {
        let op = OperatorSpec::scaled_backward_shift(2.0, 4).unwrap();
        let v = real_vec(&[1.0, 0.5, 0.25, 0.0]);
        assert_eq!(op.apply(&v).unwrap(), real_vec(&[1.0, 0.5, 0.0, 0.0]));
    }

    #[test]
    fn zero_maps_to_zero() {
        let ops = [
            OperatorSpec::scaled_backward_shift(2.0, 5).unwrap(),
            OperatorSpec::perturbed_diagonal(vec![0.1, 0.2, 0.3, 0.4, 0.5], 0.2, 5).unwrap(),
        ];
        for op in &ops {
            assert!(op.apply(&StateVector::zeros(5).unwrap()).unwrap().is_zero());
        }
    }

    #[test]
    fn pure_diagonal_on_basis_vector() {
        let theta0 = 2f64.sqrt() - 1.0;
        let op = OperatorSpec::perturbed_diagonal(vec![theta0, 0.7, 0.9], 0.0, 3).unwrap();
        let out = op.apply(&StateVector::basis(3, 0).unwrap()).unwrap();
        let expected = StateVector::basis(3, 0).unwrap().scale(circle_point(theta0));
        assert!(out.distance(&expected).unwrap() < 1e-15);
    }

    #[test]
    fn power_apply_examples() {
        let op = OperatorSpec::scaled_backward_shift(2.0, 8).unwrap();
        let e3 = StateVector::basis(8, 3).unwrap();
        assert_eq!(op.power_apply(&e3, 0).unwrap(), e3);
        let out = op.power_apply(&e3, 3).unwrap();
        assert_eq!(out, StateVector::basis(8, 0).unwrap().scale(c(8.0, 0.0)));
        assert!(op.power_apply(&e3, 4).unwrap().is_zero());
    }

    #[test]
    fn power_apply_shift_matches_repeated_apply() {
        let op = OperatorSpec::scaled_backward_shift(1.5, 6).unwrap();
        let v = real_vec(&[0.3, -1.0, 2.0, 0.5, 0.25, 4.0]);
        let mut cur = v.clone();
        for n in 1..8 {
            cur = op.apply(&cur).unwrap();
            assert!(op.power_apply(&v, n).unwrap().distance(&cur).unwrap() < 1e-12);
        }
    }

    #[test]
    fn power_overflow_is_guarded() {
        let op = OperatorSpec::scaled_backward_shift(2.0, 8).unwrap();
        let v = StateVector::basis(8, 0).unwrap();
        assert_eq!(op.power_apply(&v, 2000), Err(Error::PowerOverflow { power: 2000 }));
        assert!(op.power_apply(&StateVector::zeros(8).unwrap(), 2000).is_ok());
    }

    #[test]
    fn constructor_examples() {
        assert_eq!(OperatorSpec::scaled_backward_shift(2.0, 64).unwrap().norm_bound(), 2.0);
        assert_eq!(OperatorSpec::scaled_backward_shift(1.5, 32).unwrap().norm_bound(), 1.5);
        assert!(OperatorSpec::scaled_backward_shift(1.0, 8).is_err());
        assert!(OperatorSpec::perturbed_diagonal(vec![0.1], 0.1, 2).is_err());
        assert!(OperatorSpec::perturbed_diagonal(vec![0.1, 0.2], -0.1, 2).is_err());
    }

    #[test]
    fn perturbed_diagonal_norm_bound_holds() {
        let angles: Vec<f64> = (0..12).map(|k| ((k as f64 + 2.0).sqrt()).fract()).collect();
        for eps in [0.0, 0.05, 0.3, 1.0] {
            let op = OperatorSpec::perturbed_diagonal(angles.clone(), eps, 12).unwrap();
            let sigma = power_iteration_norm(&op);
            assert!(sigma <= 1.0 + eps + 1e-9, "eps {eps}: sigma {sigma}");
        }
    }

    #[test]
    fn dense_matches_shift() {
        let d = 4;
        let rows = (0..d)
            .map(|i| (0..d).map(|j| if j == i + 1 { c(2.0, 0.0) } else { c(0.0, 0.0) }).collect())
            .collect();
        let dense = OperatorSpec::dense(rows).unwrap();
        let shift = OperatorSpec::scaled_backward_shift(2.0, d).unwrap();
        let v = real_vec(&[1.0, -2.0, 3.0, 0.5]);
        assert_eq!(dense.apply(&v).unwrap(), shift.apply(&v).unwrap());
        assert!(dense.norm_bound() >= power_iteration_norm(&dense) - 1e-12);
    }

    #[test]
    fn kind_round_trips_through_json() {
        let op = OperatorSpec::perturbed_diagonal(vec![0.1, 0.2], 0.1, 2).unwrap();
        let text = serde_json::to_string(op.kind()).unwrap();
        let kind: OperatorKind = serde_json::from_str(&text).unwrap();
        assert_eq!(OperatorSpec::from_kind(kind, 2).unwrap(), op);
    }
}
