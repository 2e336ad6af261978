//! Truncated complex sequence spaces.
//!
//! A [`StateVector`] is the first `d` coordinates of an element of `ℓ_p`.
//! A [`DualFunctional`] acts on it through the conjugate-linear pairing
//! `⟨f, v⟩ = Σ_k conj(f_k)·v_k`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;

/// Truncation dimension used when an experiment does not set one.
pub const DEFAULT_DIMENSION: usize = 64;

/// `e^{2πiθ}`.
pub fn circle_point(theta: f64) -> C64 {
    C64::from_polar(1.0, TAU * theta)
}

/// Fractional part of `n·θ`, with the rounding error of the product folded
/// back in so that large `n` keep full precision.
pub fn frac_mul(theta: f64, n: u64) -> f64 {
    let nf = n as f64;
    let x = nf * theta;
    let err = nf.mul_add(theta, -x);
    let f = (x - x.floor()) + err;
    f - f.floor()
}

/// `e^{2πi·nθ}` evaluated without repeated multiplication.
pub fn circle_power(theta: f64, n: u64) -> C64 {
    circle_point(frac_mul(theta, n))
}

/// Finite truncation of a vector in a complex sequence space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    entries: Vec<C64>,
    #[serde(default = "default_p")]
    space_p: f64,
}

fn default_p() -> f64 {
    2.0
}

impl StateVector {
    /// Vector in `ℓ_2` truncated to `entries.len()` coordinates.
    pub fn new(entries: Vec<C64>) -> Result<Self> {
        Self::with_norm_index(entries, 2.0)
    }

    /// Vector whose norm is the `ℓ_p` norm; `p = ∞` selects the sup norm.
    pub fn with_norm_index(entries: Vec<C64>, space_p: f64) -> Result<Self> {
        if entries.is_empty() {
            return Err(invalid("dimension", "dimension must be ≥ 1"));
        }
        if !(space_p >= 1.0) {
            return Err(invalid("space_p", format!("norm index must be ≥ 1, got {space_p}")));
        }
        if let Some(i) = entries.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { entries, space_p })
    }

    pub(crate) fn from_raw(entries: Vec<C64>, space_p: f64) -> Self {
        debug_assert!(!entries.is_empty());
        Self { entries, space_p }
    }

    pub fn zeros(d: usize) -> Result<Self> {
        Self::new(vec![C64::new(0.0, 0.0); d])
    }

    /// The `k`-th unit coordinate vector `e_k`.
    pub fn basis(d: usize, k: usize) -> Result<Self> {
        if k >= d {
            return Err(invalid("k", format!("basis index {k} out of range for dimension {d}")));
        }
        let mut v = Self::zeros(d)?;
        v.entries[k] = C64::new(1.0, 0.0);
        Ok(v)
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn space_p(&self) -> f64 {
        self.space_p
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<C64> {
        self.entries
    }

    /// `ℓ_p` norm, computed with scaling so tiny or huge entries do not
    /// underflow or overflow.
    pub fn norm(&self) -> f64 {
        lp_norm(&self.entries, self.space_p)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    /// `v + c·w`.
    pub fn add_scaled(&self, c: C64, w: &StateVector) -> Result<StateVector> {
        check_dim(self.dim(), w.dim())?;
        let entries = self
            .entries
            .iter()
            .zip(&w.entries)
            .map(|(a, b)| a + c * b)
            .collect();
        Ok(Self::from_raw(entries, self.space_p))
    }

    pub fn scale(&self, c: C64) -> StateVector {
        Self::from_raw(self.entries.iter().map(|z| c * z).collect(), self.space_p)
    }

    /// `‖v − w‖`.
    pub fn distance(&self, w: &StateVector) -> Result<f64> {
        check_dim(self.dim(), w.dim())?;
        let diff: Vec<C64> = self.entries.iter().zip(&w.entries).map(|(a, b)| a - b).collect();
        Ok(lp_norm(&diff, self.space_p))
    }

    /// Returns `v/‖v‖` together with `‖v‖`.
    pub fn normalized(&self) -> Result<(StateVector, f64)> {
        let n = self.norm();
        if n == 0.0 {
            return Err(invalid("v", "cannot normalize the zero vector"));
        }
        Ok((self.scale(C64::new(1.0 / n, 0.0)), n))
    }
}

/// Continuous linear functional on the truncated space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualFunctional {
    entries: Vec<C64>,
}

impl DualFunctional {
    pub fn new(entries: Vec<C64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(invalid("dimension", "dimension must be ≥ 1"));
        }
        if let Some(i) = entries.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { entries })
    }

    pub fn zeros(d: usize) -> Result<Self> {
        Self::new(vec![C64::new(0.0, 0.0); d])
    }

    /// Coordinate functional `e_k*`.
    pub fn coordinate(d: usize, k: usize) -> Result<Self> {
        if k >= d {
            return Err(invalid("k", format!("coordinate {k} out of range for dimension {d}")));
        }
        let mut f = Self::zeros(d)?;
        f.entries[k] = C64::new(1.0, 0.0);
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    /// `⟨f, v⟩ = Σ_k conj(f_k)·v_k`, linear in `v`.
    pub fn pair(&self, v: &StateVector) -> Result<C64> {
        check_dim(self.dim(), v.dim())?;
        Ok(pair_slices(&self.entries, v.entries()))
    }
}

pub(crate) fn pair_slices(f: &[C64], v: &[C64]) -> C64 {
    f.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn lp_norm(entries: &[C64], p: f64) -> f64 {
    let scale = entries.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
    if scale == 0.0 || p.is_infinite() {
        return scale;
    }
    if p == 2.0 {
        let s: f64 = entries.iter().map(|z| (z / scale).norm_sqr()).sum();
        return scale * s.sqrt();
    }
    let s: f64 = entries.iter().map(|z| (z.norm() / scale).powf(p)).sum();
    scale * s.powf(1.0 / p)
}

/// Open ball `B(center, radius)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: StateVector,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: StateVector, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(invalid("radius", format!("radius must be ≥ 0, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    /// `B(center, radius + r)`.
    pub fn inflated(&self, r: f64) -> Self {
        Self {
            center: self.center.clone(),
            radius: self.radius + r,
        }
    }

    /// `‖v − center‖`.
    pub fn distance_to_center(&self, v: &[C64]) -> Result<f64> {
        check_dim(self.center.dim(), v.len())?;
        let diff: Vec<C64> = v.iter().zip(self.center.entries()).map(|(a, b)| a - b).collect();
        Ok(lp_norm(&diff, self.center.space_p()))
    }

    pub fn contains(&self, v: &[C64]) -> Result<bool> {
        Ok(self.distance_to_center(v)? < self.radius)
    }
}

/// Singular values, in decreasing order, of the matrix whose columns are
/// `columns`.
pub fn singular_values(columns: &[&StateVector]) -> Result<Vec<f64>> {
    let first = columns
        .first()
        .ok_or_else(|| invalid("columns", "at least one column is required"))?;
    let d = first.dim();
    for c in columns {
        check_dim(d, c.dim())?;
    }
    let n = columns.len();
    // Wide matrices go through the R factor of the tall adjoint, which has the
    // same singular values and keeps the SVD at size d×d.
    let m = if n > d {
        let adj = nalgebra::DMatrix::from_fn(n, d, |j, i| columns[j].entries()[i].conj());
        adj.qr().r()
    } else {
        nalgebra::DMatrix::from_fn(d, n, |i, j| columns[j].entries()[i])
    };
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn norm_examples() {
        let e0 = StateVector::basis(4, 0).unwrap();
        assert_eq!(e0.norm(), 1.0);
        assert_eq!(StateVector::zeros(4).unwrap().norm(), 0.0);
        let v = StateVector::new(vec![c(3.0, 0.0), c(4.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!((v.norm() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn norm_index_variants() {
        let v = StateVector::with_norm_index(vec![c(3.0, 0.0), c(0.0, -4.0)], 1.0).unwrap();
        assert!((v.norm() - 7.0).abs() < 1e-14);
        let v = StateVector::with_norm_index(vec![c(3.0, 0.0), c(0.0, -4.0)], f64::INFINITY).unwrap();
        assert_eq!(v.norm(), 4.0);
    }

    #[test]
    fn norm_survives_extreme_scales() {
        let v = StateVector::new(vec![c(1e-300, 0.0), c(1e-300, 0.0)]).unwrap();
        assert!((v.norm() / 1e-300 - 2f64.sqrt()).abs() < 1e-14);
        let v = StateVector::new(vec![c(1e300, 0.0), c(0.0, 1e300)]).unwrap();
        assert!((v.norm() / 1e300 - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn pair_examples() {
        let f = DualFunctional::coordinate(3, 0).unwrap();
        let v = StateVector::new(vec![c(2.0, -1.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert_eq!(f.pair(&v).unwrap(), c(2.0, -1.0));

        let zero = DualFunctional::zeros(3).unwrap();
        assert_eq!(zero.pair(&v).unwrap(), c(0.0, 0.0));

        let f = DualFunctional::new(vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let v = StateVector::new(vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)]).unwrap();
        assert_eq!(f.pair(&v).unwrap(), c(1.0, 1.0));
    }

    #[test]
    fn pair_is_conjugate_linear_in_functional() {
        let f = DualFunctional::new(vec![c(0.0, 1.0)]).unwrap();
        let v = StateVector::new(vec![c(1.0, 0.0)]).unwrap();
        assert_eq!(f.pair(&v).unwrap(), c(0.0, -1.0));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let f = DualFunctional::zeros(2).unwrap();
        let v = StateVector::zeros(3).unwrap();
        assert_eq!(
            f.pair(&v),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        );
        assert!(v.add_scaled(c(1.0, 0.0), &StateVector::zeros(2).unwrap()).is_err());
    }

    #[test]
    fn add_scaled_examples() {
        let v = StateVector::new(vec![c(1.0, 2.0), c(3.0, 4.0)]).unwrap();
        let w = StateVector::new(vec![c(-1.0, 0.5), c(7.0, 0.0)]).unwrap();
        assert_eq!(v.add_scaled(c(0.0, 0.0), &w).unwrap(), v);
        let zero = StateVector::zeros(2).unwrap();
        assert_eq!(zero.add_scaled(c(1.0, 0.0), &w).unwrap(), w);

        let a = StateVector::new(vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let b = StateVector::new(vec![c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        let r = a.add_scaled(c(0.0, 1.0), &b).unwrap();
        assert_eq!(r.entries(), &[c(1.0, 0.0), c(0.0, 1.0)]);
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(StateVector::new(vec![]).is_err());
        assert_eq!(
            StateVector::new(vec![c(0.0, 0.0), c(f64::NAN, 0.0)]),
            Err(Error::NonFinite(1))
        );
        assert!(StateVector::with_norm_index(vec![c(1.0, 0.0)], 0.5).is_err());
    }

    #[test]
    fn circle_power_matches_repeated_squaring() {
        let theta = 2f64.sqrt() - 1.0;
        for n in [0u64, 1, 7, 1_000, 123_456, 999_983] {
            let direct = circle_power(theta, n);
            let by_powu = circle_point(theta).powu(n as u32);
            assert!((direct - by_powu).norm() < 1e-9, "n = {n}");
        }
        assert!((circle_power(0.25, 2) - c(-1.0, 0.0)).norm() < 1e-15);
    }
}
