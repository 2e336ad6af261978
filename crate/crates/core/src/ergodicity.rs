//! Correlation sequences `⟨U_Tⁿ|x*|², |y*|²⟩` of a Steinhaus series and
//! their Cesàro averages, the witness that `T` is not ergodic for the law
//! of the series.
//!
//! With `c_p = a_p⟨x*, x_p⟩`, `d_p = a_p⟨y*, x_p⟩` and
//! `cross(n) = Σ_p λ_pⁿ c_p conj(d_p)`, the closed form is
//! `Σ|c_p|²·Σ|d_p|² + |cross(n)|²`. That count treats the fourth moment
//! `E|χ|⁴` as 2. Steinhaus variables have `E|χ|⁴ = 1`, so the exact
//! correlation is the closed form minus the diagonal `Σ|c_p|²|d_p|²`;
//! [`steinhaus_correlation`] returns that value.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::linspace::{check_dim, circle_power, pair_slices, DualFunctional, C64};
use crate::operators::OperatorSpec;
use crate::stats::{stream_rng, McEstimate, RunningStats};
use crate::steinhaus::SteinhausSeries;

/// Minimum horizon accepted by [`nonergodicity_witness`].
pub const MIN_WITNESS_HORIZON: u64 = 1000;

const CHUNK: u64 = 4096;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationSpec {
    c: Vec<C64>,
    d: Vec<C64>,
    angles: Vec<f64>,
}

impl CorrelationSpec {
    pub fn new(c: Vec<C64>, d: Vec<C64>, angles: Vec<f64>) -> Result<Self> {
        if c.len() != d.len() || c.len() != angles.len() {
            return Err(invalid(
                "spec",
                format!("lengths differ: c {}, d {}, angles {}", c.len(), d.len(), angles.len()),
            ));
        }
        let finite = |z: &C64| z.re.is_finite() && z.im.is_finite();
        if !c.iter().chain(&d).all(finite) || !angles.iter().all(|t| t.is_finite()) {
            return Err(invalid("spec", "entries must be finite"));
        }
        Ok(Self { c, d, angles })
    }

    /// Same `c` and `d`, i.e. `y* = x*`.
    pub fn symmetric(c: Vec<C64>, angles: Vec<f64>) -> Result<Self> {
        Self::new(c.clone(), c, angles)
    }

    /// `c_p = a_p⟨x*, x_p⟩`, `d_p = a_p⟨y*, x_p⟩` over the series terms.
    pub fn from_series(series: &SteinhausSeries, x: &DualFunctional, y: &DualFunctional) -> Result<Self> {
        check_dim(series.dim(), x.dim())?;
        check_dim(series.dim(), y.dim())?;
        let mut c = Vec::new();
        let mut d = Vec::new();
        let mut angles = Vec::new();
        for t in series.terms() {
            c.push(t.coeff * x.pair(t.pair.vector())?);
            d.push(t.coeff * y.pair(t.pair.vector())?);
            angles.push(t.pair.theta());
        }
        Self::new(c, d, angles)
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn c(&self) -> &[C64] {
        &self.c
    }

    pub fn d(&self) -> &[C64] {
        &self.d
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// `Σ|c_p|²·Σ|d_p|²`, the limit an ergodic measure would force.
    pub fn product_term(&self) -> f64 {
        let sc: f64 = self.c.iter().map(|z| z.norm_sqr()).sum();
        let sd: f64 = self.d.iter().map(|z| z.norm_sqr()).sum();
        sc * sd
    }

    /// `Σ|c_p|²|d_p|²`.
    pub fn diagonal_term(&self) -> f64 {
        self.c.iter().zip(&self.d).map(|(a, b)| a.norm_sqr() * b.norm_sqr()).sum()
    }

    /// `Σ_p λ_pⁿ c_p conj(d_p)`.
    pub fn cross(&self, n: u64) -> C64 {
        self.c
            .iter()
            .zip(&self.d)
            .zip(&self.angles)
            .map(|((a, b), &t)| circle_power(t, n) * a * b.conj())
            .sum()
    }

    /// Rows `n,correlation,cesaro` for `n < horizon`, the running Cesàro
    /// mean taken over `0..=n`.
    pub fn to_csv(&self, horizon: u64) -> String {
        let mut out = String::from("n,correlation,cesaro\n");
        let mut sum = 0.0;
        for n in 0..horizon {
            let v = correlation_closed_form(self, n);
            sum += v;
            let _ = writeln!(out, "{n},{v},{}", sum / (n + 1) as f64);
        }
        out
    }
}

/// `Σ|c_p|²·Σ|d_p|² + |cross(n)|²`.
pub fn correlation_closed_form(spec: &CorrelationSpec, n: u64) -> f64 {
    spec.product_term() + spec.cross(n).norm_sqr()
}

/// `E|⟨x*, TⁿΦ⟩|²|⟨y*, Φ⟩|²` for Steinhaus phases: the closed form minus
/// the diagonal `Σ|c_p|²|d_p|²`.
pub fn steinhaus_correlation(spec: &CorrelationSpec, n: u64) -> f64 {
    correlation_closed_form(spec, n) - spec.diagonal_term()
}

/// `(1/N)·Σ_{n<N} value(n)`. Partial sums are taken over fixed chunks and
/// combined in order, so the result does not depend on the thread count.
pub fn cesaro_average<F>(value: F, horizon: u64) -> Result<f64>
where
    F: Fn(u64) -> f64 + Sync,
{
    if horizon == 0 {
        return Err(invalid("horizon", "must be at least 1"));
    }
    let chunks = horizon.div_ceil(CHUNK);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|k| (k * CHUNK..((k + 1) * CHUNK).min(horizon)).map(&value).sum())
        .collect();
    Ok(partial.iter().sum::<f64>() / horizon as f64)
}

/// Cesàro average of `|cross(n)|²` over `n < N`. Ergodicity would drive it
/// to zero; a stable positive value witnesses the opposite.
pub fn nonergodicity_witness(spec: &CorrelationSpec, horizon: u64) -> Result<f64> {
    if horizon < MIN_WITNESS_HORIZON {
        return Err(invalid(
            "horizon",
            format!("need at least {MIN_WITNESS_HORIZON}, got {horizon}"),
        ));
    }
    cesaro_average(|n| spec.cross(n).norm_sqr(), horizon)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FloorLevel {
    pub horizon: u64,
    /// Fraction of `n < horizon` with `|cross(n)|² ≥ ε`.
    pub fraction: f64,
    /// Fraction of `n < horizon` in `D_δ`.
    pub d_delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WitnessFloor {
    pub eps: f64,
    pub delta: f64,
    pub levels: Vec<FloorLevel>,
    /// Smallest `D_δ` fraction over the horizons, the lower-density proxy.
    pub d_delta_lower: f64,
    /// `ε·d_δ/2`, the lower bound the return set forces on the witness.
    pub witness_lower_bound: f64,
    /// Witness at the largest horizon.
    pub witness: f64,
    pub holds: bool,
}

/// Finite-horizon check that `|cross(n)|²` stays away from zero on a set of
/// positive lower density.
///
/// `D_δ = {n : |λ_pⁿ − 1| < δ for every p}` is counted along with the
/// fraction of `n` where `|cross(n)|² ≥ ε`. The check holds when, at every
/// horizon, that fraction is at least half the `D_δ` fraction and positive,
/// every `n ∈ D_δ` clears `ε`, and the witness is at least `ε·d_δ/2`.
pub fn witness_floor(spec: &CorrelationSpec, eps: f64, delta: f64, horizons: &[u64]) -> Result<WitnessFloor> {
    if !(eps > 0.0) || !(delta > 0.0) {
        return Err(invalid("eps/delta", "must be positive"));
    }
    if horizons.is_empty() || horizons.windows(2).any(|w| w[0] >= w[1]) || horizons[0] == 0 {
        return Err(invalid("horizons", "need a strictly increasing non-empty list of positive horizons"));
    }
    let in_d = |n: u64| spec.angles.iter().all(|&t| (circle_power(t, n) - 1.0).norm() < delta);
    let mut levels = Vec::with_capacity(horizons.len());
    let mut d_clears = true;
    for &h in horizons {
        let stats: Vec<(u64, u64, bool)> = (0..h.div_ceil(CHUNK))
            .into_par_iter()
            .map(|k| {
                let (mut above, mut hits, mut clears) = (0u64, 0u64, true);
                for n in k * CHUNK..((k + 1) * CHUNK).min(h) {
                    let big = spec.cross(n).norm_sqr() >= eps;
                    above += u64::from(big);
                    if in_d(n) {
                        hits += 1;
                        clears &= big;
                    }
                }
                (above, hits, clears)
            })
            .collect();
        let above: u64 = stats.iter().map(|s| s.0).sum();
        let hits: u64 = stats.iter().map(|s| s.1).sum();
        d_clears &= stats.iter().all(|s| s.2);
        levels.push(FloorLevel {
            horizon: h,
            fraction: above as f64 / h as f64,
            d_delta: hits as f64 / h as f64,
        });
    }
    let d_delta_lower = levels.iter().map(|l| l.d_delta).fold(f64::INFINITY, f64::min);
    let witness = cesaro_average(|n| spec.cross(n).norm_sqr(), *horizons.last().expect("non-empty"))?;
    let witness_lower_bound = eps * d_delta_lower / 2.0;
    let holds = d_clears
        && d_delta_lower > 0.0
        && levels.iter().all(|l| l.fraction > 0.0 && l.fraction >= l.d_delta / 2.0)
        && witness >= witness_lower_bound;
    Ok(WitnessFloor {
        eps,
        delta,
        levels,
        d_delta_lower,
        witness_lower_bound,
        witness,
        holds,
    })
}

/// Monte Carlo estimate of `E|⟨x*, TⁿΦ⟩|²·|⟨y*, Φ⟩|²`, with `TⁿΦ` computed
/// by applying the operator.
pub fn correlation_monte_carlo(
    op: &OperatorSpec,
    series: &SteinhausSeries,
    x: &DualFunctional,
    y: &DualFunctional,
    n: u64,
    trials: u64,
    seed: u64,
) -> Result<McEstimate> {
    if trials < 2 {
        return Err(invalid("trials", "need at least 2 trials"));
    }
    check_dim(op.dim(), series.dim())?;
    check_dim(op.dim(), x.dim())?;
    check_dim(op.dim(), y.dim())?;
    let mut rng = stream_rng(seed, 0);
    let mut stats = RunningStats::new();
    for _ in 0..trials {
        let phi = series.sample(&mut rng);
        let t_phi = op.power_apply(&phi, n)?;
        let a = pair_slices(x.entries(), t_phi.entries());
        let b = pair_slices(y.entries(), phi.entries());
        stats.push(a.norm_sqr() * b.norm_sqr());
    }
    Ok(McEstimate::from_stats(&stats, seed))
}
