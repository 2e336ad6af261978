//! Visit times `{n < N : Tⁿx ∈ U}` of eigen-expansions and finite-horizon
//! lower-density proxies.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::eigenfields::{EigenExpansion, EigenPair};
use crate::error::{invalid, Result};
use crate::linspace::{check_dim, Ball, C64};

const CHUNK: u64 = 8192;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VisitRecord {
    pub times: Vec<u64>,
    pub horizon: u64,
    pub target: Ball,
}

impl VisitRecord {
    pub fn count(&self) -> usize {
        self.times.len()
    }

    /// `|times ∩ [0, w)|`.
    pub fn count_below(&self, w: u64) -> usize {
        self.times.partition_point(|&t| t < w)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n\n");
        for t in &self.times {
            let _ = writeln!(out, "{t}");
        }
        out
    }
}

/// All `n < horizon` with `‖Tⁿx − center‖ < radius`, powers taken through
/// the eigenvalues of the expansion.
pub fn visit_times(x: &EigenExpansion, target: &Ball, horizon: u64) -> Result<VisitRecord> {
    if horizon == 0 {
        return Err(invalid("horizon", "must be at least 1"));
    }
    check_dim(x.dim(), target.center.dim())?;
    let chunks: Vec<Vec<u64>> = (0..horizon.div_ceil(CHUNK))
        .into_par_iter()
        .map(|k| {
            let mut buf = vec![C64::new(0.0, 0.0); x.dim()];
            let mut hits = Vec::new();
            for n in k * CHUNK..((k + 1) * CHUNK).min(horizon) {
                x.power_into(n, &mut buf);
                if target.contains(&buf).expect("dimensions checked") {
                    hits.push(n);
                }
            }
            hits
        })
        .collect();
    Ok(VisitRecord {
        times: chunks.concat(),
        horizon,
        target: target.clone(),
    })
}

/// `{10³, 10⁴, …} ∩ [1, N]` followed by `N` itself.
pub fn geometric_windows(horizon: u64) -> Vec<u64> {
    let mut w: Vec<u64> = std::iter::successors(Some(1000u64), |&x| x.checked_mul(10))
        .take_while(|&x| x < horizon)
        .collect();
    w.push(horizon);
    w
}

/// `min_W |times ∩ [0, W)| / W` over the windows.
pub fn lower_density_estimate(rec: &VisitRecord, windows: &[u64]) -> Result<f64> {
    if windows.is_empty() {
        return Err(invalid("windows", "at least one window is required"));
    }
    if windows.windows(2).any(|w| w[0] >= w[1]) || windows[0] == 0 {
        return Err(invalid("windows", "windows must be positive and strictly increasing"));
    }
    if *windows.last().expect("non-empty") > rec.horizon {
        return Err(invalid("windows", "windows may not exceed the horizon"));
    }
    Ok(windows
        .iter()
        .map(|&w| rec.count_below(w) as f64 / w as f64)
        .fold(f64::INFINITY, f64::min))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TargetVisits {
    pub radius: f64,
    pub visits: usize,
    pub density: f64,
    #[serde(skip)]
    pub record: VisitRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FhcReport {
    pub horizon: u64,
    pub windows: Vec<u64>,
    pub targets: Vec<TargetVisits>,
    pub min_density: f64,
    pub pass: bool,
}

/// Visit records and density proxies of `x` for every target; passes when
/// every proxy is strictly positive.
pub fn fhc_harness(x: &EigenExpansion, targets: &[Ball], horizon: u64, windows: &[u64]) -> Result<FhcReport> {
    if targets.is_empty() {
        return Err(invalid("targets", "at least one target is required"));
    }
    let targets = targets
        .iter()
        .map(|t| {
            let record = visit_times(x, t, horizon)?;
            let density = lower_density_estimate(&record, windows)?;
            Ok(TargetVisits {
                radius: t.radius,
                visits: record.count(),
                density,
                record,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let min_density = targets.iter().map(|t| t.density).fold(f64::INFINITY, f64::min);
    Ok(FhcReport {
        horizon,
        windows: windows.to_vec(),
        pass: min_density > 0.0,
        targets,
        min_density,
    })
}

/// Ball around `a·x_θ` met by `Tⁿ(a·x_θ)` exactly when `frac(nθ)` lies in
/// the arc of length `ell` centred at 0: the radius is `2|a|·sin(π·ell/2)`.
pub fn arc_calibration(a: C64, pair: &EigenPair, ell: f64) -> Result<(EigenExpansion, Ball)> {
    if !(0.0..=1.0).contains(&ell) {
        return Err(invalid("ell", "arc length must lie in [0, 1]"));
    }
    let x = EigenExpansion::from_terms(pair.vector().dim(), [(a, pair)])?;
    let radius = 2.0 * a.norm() * (std::f64::consts::PI * ell / 2.0).sin();
    let ball = Ball::new(pair.vector().scale(a), radius)?;
    Ok((x, ball))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigenfields::eigenvector_2b;

    #[test]
    fn fixed_point_visits_always() {
        let p = eigenvector_2b(1.0, 2.0, 8).unwrap();
        let x = EigenExpansion::from_terms(8, [(C64::new(0.7, 0.0), &p)]).unwrap();
        let ball = Ball::new(x.evaluate(), 1e-9).unwrap();
        let rec = visit_times(&x, &ball, 500).unwrap();
        assert_eq!(rec.times, (0..500).collect::<Vec<_>>());
        assert_eq!(lower_density_estimate(&rec, &[100, 500]).unwrap(), 1.0);
    }

    #[test]
    fn zero_radius_never_visits() {
        let p = eigenvector_2b(1.0, 2.0, 8).unwrap();
        let x = EigenExpansion::from_terms(8, [(C64::new(0.7, 0.0), &p)]).unwrap();
        let ball = Ball::new(x.evaluate(), 0.0).unwrap();
        assert!(visit_times(&x, &ball, 100).unwrap().times.is_empty());
    }

    #[test]
    fn even_times_give_one_half() {
        let ball = Ball::new(crate::StateVector::zeros(1).unwrap(), 1.0).unwrap();
        let rec = VisitRecord {
            times: (0..10_000).step_by(2).collect(),
            horizon: 10_000,
            target: ball,
        };
        assert_eq!(lower_density_estimate(&rec, &[100, 10_000]).unwrap(), 0.5);
        assert!(lower_density_estimate(&rec, &[]).is_err());
        assert!(lower_density_estimate(&rec, &[100, 100]).is_err());
    }

    #[test]
    fn arc_frequency_matches_length() {
        let theta = 2f64.sqrt().fract();
        let p = eigenvector_2b(theta, 2.0, 16).unwrap();
        let (x, ball) = arc_calibration(C64::new(0.3, 0.4), &p, 0.2).unwrap();
        let rec = visit_times(&x, &ball, 100_000).unwrap();
        // Oracle: direct count of frac(nθ) within 0.1 of an integer.
        let direct = (0..100_000u64)
            .filter(|&n| {
                let f = (n as f64 * theta).fract();
                f.min(1.0 - f) < 0.1
            })
            .count();
        assert!((rec.count() as i64 - direct as i64).abs() <= 2);
        assert!((rec.count() as f64 / 1e5 - 0.2).abs() < 0.01);
    }

    #[test]
    fn windows_ladder() {
        assert_eq!(geometric_windows(200_000), vec![1000, 10_000, 100_000, 200_000]);
        assert_eq!(geometric_windows(1000), vec![1000]);
        assert_eq!(geometric_windows(50), vec![50]);
    }
}
