//! Steinhaus variables and random eigenvector series
//! `Φ(ω) = Σ_j χ_j(ω)·a_j·x_j`.
//!
//! Since `λχ` and `χ` have the same law for `|λ| = 1`, the distribution of
//! `Φ` is invariant under any operator that has the `x_j` as eigenvectors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::eigenfields::{EigenExpansion, EigenPair};
use crate::error::{invalid, Result};
use crate::linspace::{check_dim, circle_point, pair_slices, DualFunctional, StateVector, C64};
use crate::operators::OperatorSpec;
use crate::stats::{stream_rng, McEstimate, RunningStats};

/// Minimum trial count accepted by [`khinchine_ratio`].
pub const MIN_KHINCHINE_TRIALS: u64 = 1000;

/// `n` independent points uniform on the unit circle.
pub fn sample_steinhaus<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<C64> {
    (0..n).map(|_| circle_point(rng.random::<f64>())).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesTerm {
    pub coeff: C64,
    pub pair: EigenPair,
}

/// Finite random series with pairwise distinct eigenvalue angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteinhausSeries {
    terms: Vec<SeriesTerm>,
    seed: u64,
}

impl SteinhausSeries {
    pub fn new(terms: Vec<SeriesTerm>, seed: u64) -> Result<Self> {
        let Some(first) = terms.first() else {
            return Err(invalid("terms", "series needs at least one term"));
        };
        let d = first.pair.vector().dim();
        for t in &terms {
            check_dim(d, t.pair.vector().dim())?;
            if !t.coeff.re.is_finite() || !t.coeff.im.is_finite() {
                return Err(invalid("terms", "coefficients must be finite"));
            }
        }
        let mut thetas: Vec<f64> = terms.iter().map(|t| t.pair.theta()).collect();
        thetas.sort_by(f64::total_cmp);
        if let Some(w) = thetas.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid("terms", format!("angle {} appears twice", w[0])));
        }
        Ok(Self { terms, seed })
    }

    pub fn from_parts(coeffs: &[C64], pairs: &[EigenPair], seed: u64) -> Result<Self> {
        if coeffs.len() != pairs.len() {
            return Err(invalid(
                "coeffs",
                format!("{} coefficients for {} eigenpairs", coeffs.len(), pairs.len()),
            ));
        }
        let terms = coeffs
            .iter()
            .zip(pairs)
            .map(|(&coeff, pair)| SeriesTerm { coeff, pair: pair.clone() })
            .collect();
        Self::new(terms, seed)
    }

    pub fn terms(&self) -> &[SeriesTerm] {
        &self.terms
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.terms[0].pair.vector().dim()
    }

    /// Generator for stream `stream` of this series' seed.
    pub fn rng(&self, stream: u64) -> rand_chacha::ChaCha8Rng {
        stream_rng(self.seed, stream)
    }

    /// `Σ_{j≥n} |a_j|`, the norm budget of dropping every term from `n` on.
    pub fn tail_mass(&self, n: usize) -> f64 {
        self.terms.iter().skip(n).map(|t| t.coeff.norm()).sum()
    }

    /// `Σ_j |a_j|²·|⟨f, x_j⟩|²`, the exact value of `E|⟨f, Φ⟩|²`.
    pub fn second_moment(&self, f: &DualFunctional) -> Result<f64> {
        self.terms.iter().try_fold(0.0, |acc, t| {
            let z = f.pair(t.pair.vector())?;
            Ok(acc + t.coeff.norm_sqr() * z.norm_sqr())
        })
    }

    /// The series with fixed phases, `Σ_j χ_j·a_j·x_j`, as an expansion.
    pub fn with_phases(&self, phases: &[C64]) -> Result<EigenExpansion> {
        if phases.len() != self.terms.len() {
            return Err(invalid(
                "phases",
                format!("{} phases for {} terms", phases.len(), self.terms.len()),
            ));
        }
        EigenExpansion::from_terms(
            self.dim(),
            self.terms.iter().zip(phases).map(|(t, &chi)| (chi * t.coeff, &t.pair)),
        )
    }

    /// One draw of `Φ` kept as an eigen-expansion.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> EigenExpansion {
        let chi = sample_steinhaus(rng, self.terms.len());
        self.with_phases(&chi).expect("phase count matches term count")
    }

    /// One draw of `Φ` as a vector.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> StateVector {
        self.draw(rng).evaluate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KhinchineReport {
    /// `mean|S| / sqrt(mean|S|²)`.
    pub ratio: f64,
    /// `E|S|`.
    pub first: McEstimate,
    /// `E|S|²`; its exact value is `Σ|a_n|²`.
    pub second: McEstimate,
    pub l2_norm: f64,
}

/// Estimates `E|Σ χ_n a_n| / (Σ|a_n|²)^{1/2}` from `trials` draws.
///
/// The denominator is estimated from the same draws as `E|S|²`, whose
/// expectation is exactly `Σ|a_n|²`. The self-normalized ratio has the same
/// limit and, by Cauchy–Schwarz on the empirical measure, never exceeds 1.
pub fn khinchine_ratio(coeffs: &[C64], trials: u64, seed: u64) -> Result<KhinchineReport> {
    if coeffs.is_empty() {
        return Err(invalid("coeffs", "at least one coefficient is required"));
    }
    if trials < MIN_KHINCHINE_TRIALS {
        return Err(invalid(
            "trials",
            format!("need at least {MIN_KHINCHINE_TRIALS} trials, got {trials}"),
        ));
    }
    let l2_norm = coeffs.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if l2_norm == 0.0 {
        return Err(invalid("coeffs", "coefficients must not all vanish"));
    }
    let mut rng = stream_rng(seed, 0);
    let mut first = RunningStats::new();
    let mut second = RunningStats::new();
    for _ in 0..trials {
        let s: C64 = coeffs.iter().map(|&a| circle_point(rng.random::<f64>()) * a).sum();
        first.push(s.norm());
        second.push(s.norm_sqr());
    }
    let ratio = (first.mean() / second.mean().sqrt()).min(1.0);
    Ok(KhinchineReport {
        ratio,
        first: McEstimate::from_stats(&first, seed),
        second: McEstimate::from_stats(&second, seed),
        l2_norm,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeGap {
    /// Mean of `|⟨f,TΦ⟩| − |⟨f,Φ⟩|` with its standard error.
    pub first: McEstimate,
    /// Mean of `|⟨f,TΦ⟩|² − |⟨f,Φ⟩|²` with its standard error.
    pub second: McEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub probes: Vec<ProbeGap>,
    /// Largest absolute moment gap over probes and both moments.
    pub max_gap: f64,
    /// Largest gap measured in standard errors.
    pub max_z: f64,
    pub pass: bool,
}

/// Compares the first two absolute moments of `⟨f, Φ⟩` and `⟨f, TΦ⟩` for
/// every probe `f`, pairing `Φ` and `TΦ` on the same draw.
///
/// `TΦ` is computed by applying the operator, so eigen-residuals of the
/// series terms show up in the gap. A probe passes when both gaps are
/// within 3 standard errors, plus `1e-12` for rounding when the paired
/// differences are (numerically) constant.
pub fn invariance_gap(
    op: &OperatorSpec,
    series: &SteinhausSeries,
    trials: u64,
    probes: &[DualFunctional],
    seed: u64,
) -> Result<InvarianceReport> {
    if trials < 2 {
        return Err(invalid("trials", "need at least 2 trials"));
    }
    if probes.is_empty() {
        return Err(invalid("probes", "at least one probe is required"));
    }
    check_dim(op.dim(), series.dim())?;
    for f in probes {
        check_dim(op.dim(), f.dim())?;
    }
    let mut rng = stream_rng(seed, 0);
    let mut acc = vec![(RunningStats::new(), RunningStats::new()); probes.len()];
    for _ in 0..trials {
        let phi = series.sample(&mut rng);
        let t_phi = op.apply(&phi)?;
        for (f, (s1, s2)) in probes.iter().zip(acc.iter_mut()) {
            let a = pair_slices(f.entries(), phi.entries());
            let b = pair_slices(f.entries(), t_phi.entries());
            s1.push(b.norm() - a.norm());
            s2.push(b.norm_sqr() - a.norm_sqr());
        }
    }
    let mut max_gap = 0.0f64;
    let mut max_z = 0.0f64;
    let mut pass = true;
    let probes = acc
        .iter()
        .map(|(s1, s2)| {
            let gap = ProbeGap {
                first: McEstimate::from_stats(s1, seed),
                second: McEstimate::from_stats(s2, seed),
            };
            for m in [&gap.first, &gap.second] {
                let g = m.estimate.abs();
                max_gap = max_gap.max(g);
                if m.stderr > 0.0 {
                    max_z = max_z.max(g / m.stderr);
                }
                pass &= g <= 3.0 * m.stderr + 1e-12;
            }
            gap
        })
        .collect();
    Ok(InvarianceReport {
        probes,
        max_gap,
        max_z,
        pass,
    })
}

/// Draws of `Φ` standing in for the law `m` of the series.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalMeasure {
    samples: Vec<StateVector>,
    seed: u64,
    sample_count: usize,
}

impl EmpiricalMeasure {
    pub fn draw(series: &SteinhausSeries, sample_count: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0);
        let samples = (0..sample_count).map(|_| series.sample(&mut rng)).collect();
        Self {
            samples,
            seed,
            sample_count,
        }
    }

    pub fn samples(&self) -> &[StateVector] {
        &self.samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    /// Image of the measure under `op`.
    pub fn push_forward(&self, op: &OperatorSpec) -> Result<Self> {
        let samples = self.samples.iter().map(|v| op.apply(v)).collect::<Result<_>>()?;
        Ok(Self {
            samples,
            seed: self.seed,
            sample_count: self.sample_count,
        })
    }

    /// Empirical `E|⟨f, x⟩|^k`.
    pub fn moment(&self, f: &DualFunctional, k: i32) -> Result<McEstimate> {
        let mut s = RunningStats::new();
        for v in &self.samples {
            s.push(f.pair(v)?.norm().powi(k));
        }
        Ok(McEstimate::from_stats(&s, self.seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigenfields::eigenvector_2b;

    #[test]
    fn steinhaus_draws_are_unimodular_and_centred() {
        let mut rng = stream_rng(1, 0);
        let chi = sample_steinhaus(&mut rng, 200_000);
        assert!(chi.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
        let mean: C64 = chi.iter().sum::<C64>() / chi.len() as f64;
        assert!(mean.norm() < 0.01);
    }

    #[test]
    fn single_coefficient_ratio_is_one() {
        let r = khinchine_ratio(&[C64::new(0.3, -0.4)], 1000, 3).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_trials_rejected() {
        assert!(khinchine_ratio(&[C64::new(1.0, 0.0)], 999, 0).is_err());
    }

    #[test]
    fn series_rejects_repeated_angles() {
        let p = eigenvector_2b(0.3, 2.0, 8).unwrap();
        let c = C64::new(1.0, 0.0);
        assert!(SteinhausSeries::from_parts(&[c, c], &[p.clone(), p], 0).is_err());
    }

    #[test]
    fn single_term_draw_is_a_rotation_of_e0() {
        let e0 = StateVector::basis(4, 0).unwrap();
        let pair = EigenPair::new(0.5, e0, 0.0).unwrap();
        let s = SteinhausSeries::from_parts(&[C64::new(1.0, 0.0)], &[pair], 9).unwrap();
        let v = s.sample(&mut s.rng(0));
        assert!((v.entries()[0].norm() - 1.0).abs() < 1e-15);
        assert!(v.entries()[1..].iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn draws_replay_from_seed() {
        let pairs: Vec<EigenPair> = [0.1, 0.2, 0.35].iter().map(|&t| eigenvector_2b(t, 2.0, 8).unwrap()).collect();
        let s = SteinhausSeries::from_parts(&[C64::new(1.0, 0.0); 3], &pairs, 42).unwrap();
        assert_eq!(s.sample(&mut s.rng(5)), s.sample(&mut s.rng(5)));
        assert_ne!(s.sample(&mut s.rng(5)), s.sample(&mut s.rng(6)));
    }

    #[test]
    fn tail_mass_sums_dropped_terms() {
        let pairs: Vec<EigenPair> = [0.1, 0.2, 0.35].iter().map(|&t| eigenvector_2b(t, 2.0, 8).unwrap()).collect();
        let coeffs = [C64::new(1.0, 0.0), C64::new(0.0, 0.5), C64::new(0.3, 0.4)];
        let s = SteinhausSeries::from_parts(&coeffs, &pairs, 0).unwrap();
        assert!((s.tail_mass(1) - 1.0).abs() < 1e-15);
        assert_eq!(s.tail_mass(3), 0.0);
    }
}
