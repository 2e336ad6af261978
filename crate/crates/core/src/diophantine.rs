//! Simultaneous approximation on the torus: return times `p` with
//! `|e^{2πipθ_j} − μ_j| < η` for all `j`, nets of such times covering every
//! target tuple, and the syndetic sets of returns close to 1.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linspace::{circle_point, circle_power, frac_mul, C64};

/// Scan limit used when the caller has no better one.
pub const DEFAULT_P_MAX: u64 = 1_000_000;

/// Net size above which [`return_time_net`] refuses to enumerate.
pub const DEFAULT_NET_CAP: usize = 1 << 20;

/// Simultaneous target: `|e^{2πipθ_j} − μ_j| < η` for every `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusTarget {
    angles: Vec<f64>,
    targets: Vec<C64>,
    eta: f64,
}

impl TorusTarget {
    pub fn new(angles: Vec<f64>, targets: Vec<C64>, eta: f64) -> Result<Self> {
        if angles.len() != targets.len() {
            return Err(invalid(
                "targets",
                format!("{} angles but {} targets", angles.len(), targets.len()),
            ));
        }
        if !(eta > 0.0 && eta < 2.0) {
            return Err(invalid("eta", format!("tolerance must lie in (0, 2), got {eta}")));
        }
        if angles.iter().any(|t| !t.is_finite()) {
            return Err(invalid("angles", "angles must be finite"));
        }
        if targets.iter().any(|m| !((m.norm() - 1.0).abs() <= 1e-12)) {
            return Err(invalid("targets", "targets must be unimodular"));
        }
        Ok(Self { angles, targets, eta })
    }

    /// Targets given by their angles, `μ_j = e^{2πiφ_j}`.
    pub fn from_target_angles(angles: Vec<f64>, target_angles: &[f64], eta: f64) -> Result<Self> {
        let targets = target_angles.iter().map(|&t| circle_point(t)).collect();
        Self::new(angles, targets, eta)
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn targets(&self) -> &[C64] {
        &self.targets
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Exact check of every inequality at `p`.
    pub fn holds(&self, p: u64) -> bool {
        self.angles
            .iter()
            .zip(&self.targets)
            .all(|(&t, &m)| (circle_power(t, p) - m).norm() < self.eta)
    }
}

/// Exact chord checks `|e^{2πipθ_j} − μ_j| < η_j` behind a cheap angular
/// prefilter: the chord condition is the arc condition
/// `dist(pθ_j, arg μ_j) < asin(η_j/2)/π` in turns. The margin keeps rounding
/// from discarding true solutions; every candidate is confirmed by the exact
/// chord check.
struct Scanner {
    angles: Vec<f64>,
    targets: Vec<C64>,
    tols: Vec<f64>,
    phases: Vec<f64>,
    half_widths: Vec<f64>,
}

impl Scanner {
    fn new(angles: Vec<f64>, targets: Vec<C64>, tols: Vec<f64>) -> Self {
        let phases = targets
            .iter()
            .map(|m| {
                let a = m.arg() / (2.0 * PI);
                a - a.floor()
            })
            .collect();
        let half_widths = tols.iter().map(|&e| (e / 2.0).min(1.0).asin() / PI + 1e-12).collect();
        Self {
            angles,
            targets,
            tols,
            phases,
            half_widths,
        }
    }

    fn for_target(target: &TorusTarget) -> Self {
        let tols = vec![target.eta; target.angles.len()];
        Self::new(target.angles.clone(), target.targets.clone(), tols)
    }

    fn accepts(&self, p: u64) -> bool {
        let close = (0..self.angles.len()).all(|j| {
            let x = frac_mul(self.angles[j], p) - self.phases[j];
            (x - x.round()).abs() < self.half_widths[j]
        });
        close
            && (0..self.angles.len())
                .all(|j| (circle_power(self.angles[j], p) - self.targets[j]).norm() < self.tols[j])
    }

    fn first(&self, lo: u64, hi: u64) -> Option<u64> {
        (lo..=hi).find(|&p| self.accepts(p))
    }

    fn first_parallel(&self, lo: u64, hi: u64) -> Option<u64> {
        (lo..=hi).into_par_iter().find_first(|&p| self.accepts(p))
    }
}

/// Smallest `p ∈ [1, p_max]` solving the system, or `None`.
///
/// Small `p` are scanned sequentially, then windows of doubling length are
/// scanned in parallel; the answer is the same as a plain scan.
pub fn solve_simultaneous(target: &TorusTarget, p_max: u64) -> Result<Option<u64>> {
    if p_max == 0 {
        return Err(invalid("p_max", "scan limit must be ≥ 1"));
    }
    let scanner = Scanner::for_target(target);
    let head = p_max.min(4096);
    if let Some(p) = scanner.first(1, head) {
        return Ok(Some(p));
    }
    let (mut lo, mut len) = (head + 1, 1u64 << 16);
    while lo <= p_max {
        let hi = p_max.min(lo.saturating_add(len - 1));
        if let Some(p) = scanner.first_parallel(lo, hi) {
            return Ok(Some(p));
        }
        lo = hi.saturating_add(1);
        len = len.saturating_mul(2);
        if hi == u64::MAX {
            break;
        }
    }
    Ok(None)
}

/// Sorted set of return times with its maximum `π`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "Vec<u64>", try_from = "Vec<u64>")]
pub struct ReturnTimeSet {
    times: Vec<u64>,
}

impl ReturnTimeSet {
    pub fn new(mut times: Vec<u64>) -> Result<Self> {
        if times.is_empty() {
            return Err(invalid("times", "return-time set must be nonempty"));
        }
        times.sort_unstable();
        times.dedup();
        Ok(Self { times })
    }

    pub fn times(&self) -> &[u64] {
        &self.times
    }

    pub fn pi_max(&self) -> u64 {
        *self.times.last().expect("nonempty by construction")
    }

    pub fn contains(&self, p: u64) -> bool {
        self.times.binary_search(&p).is_ok()
    }

    /// `{offset + q : q ∈ self}`.
    pub fn shifted(&self, offset: u64) -> Result<Self> {
        let times = self
            .times
            .iter()
            .map(|&q| q.checked_add(offset).ok_or_else(|| invalid("offset", "return time overflows u64")))
            .collect::<Result<_>>()?;
        Ok(Self { times })
    }
}

impl From<ReturnTimeSet> for Vec<u64> {
    fn from(s: ReturnTimeSet) -> Self {
        s.times
    }
}

impl TryFrom<Vec<u64>> for ReturnTimeSet {
    type Error = Error;
    fn try_from(times: Vec<u64>) -> Result<Self> {
        Self::new(times)
    }
}

/// Net parameters. `free` angles get a grid of targets, `anchored` angles
/// always target 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub free: Vec<f64>,
    pub anchored: Vec<f64>,
    pub eta: f64,
    pub resolution: f64,
    pub p_max: u64,
    pub max_points: usize,
}

impl NetSpec {
    /// Net over all of `angles` at mesh `η/2` with default limits.
    pub fn plain(angles: Vec<f64>, eta: f64) -> Self {
        Self {
            free: angles,
            anchored: Vec::new(),
            eta,
            resolution: eta / 2.0,
            p_max: DEFAULT_P_MAX,
            max_points: DEFAULT_NET_CAP,
        }
    }
}

/// Grid points per coordinate so that every point of the circle is within
/// chordal distance `resolution` of the grid `{k/m}`.
pub fn grid_size(resolution: f64) -> Result<u64> {
    if !(resolution > 0.0) {
        return Err(invalid("resolution", "net resolution must be > 0"));
    }
    if resolution >= 2.0 {
        return Ok(1);
    }
    Ok((PI / (2.0 * (resolution / 2.0).asin())).ceil() as u64)
}

/// Return times of a net together with the time chosen for each net point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetReturnTimes {
    pub set: ReturnTimeSet,
    /// Grid points per free coordinate; 0 when the tolerance is trivial.
    pub grid: u64,
    pub free_count: usize,
    /// Row-major over the free coordinates, first coordinate slowest.
    pub point_times: Vec<u64>,
}

impl NetReturnTimes {
    /// Return time assigned to the net point nearest to the target angles.
    /// For any target it solves the full system at tolerance `η`.
    pub fn lookup(&self, target_angles: &[f64]) -> Result<u64> {
        if target_angles.len() != self.free_count {
            return Err(invalid(
                "target_angles",
                format!("expected {} angles, got {}", self.free_count, target_angles.len()),
            ));
        }
        if self.grid == 0 {
            return Ok(self.point_times[0]);
        }
        let m = self.grid;
        let idx = target_angles.iter().fold(0u64, |acc, &phi| {
            let k = ((phi - phi.floor()) * m as f64).round() as u64 % m;
            acc * m + k
        });
        Ok(self.point_times[idx as usize])
    }
}

/// Solves every point of the product net at tolerance `η/2` in the free
/// coordinates, so that by the triangle inequality every target tuple is
/// solved at `η` by one of the returned times (`resolution ≤ η/2`).
/// Anchored coordinates only need `|λ^p − 1| < η`. Tolerances above 2 are
/// met by every `p` and give `{1}`.
pub fn return_time_net_mixed(spec: &NetSpec) -> Result<NetReturnTimes> {
    if !(spec.eta > 0.0) {
        return Err(invalid("eta", "tolerance must be > 0"));
    }
    if spec.eta > 2.0 {
        return Ok(NetReturnTimes {
            set: ReturnTimeSet::new(vec![1])?,
            grid: 0,
            free_count: spec.free.len(),
            point_times: vec![1],
        });
    }
    if !(spec.resolution <= spec.eta / 2.0) {
        return Err(invalid(
            "resolution",
            format!("net resolution {} exceeds η/2 = {}", spec.resolution, spec.eta / 2.0),
        ));
    }
    let m = grid_size(spec.resolution)?;
    let k = spec.free.len();
    let points = (m as f64).powi(k as i32);
    if points > spec.max_points as f64 {
        return Err(Error::NetTooLarge { points, cap: spec.max_points });
    }
    let count = m.pow(k as u32) as usize;
    let angles: Vec<f64> = spec.free.iter().chain(&spec.anchored).copied().collect();
    let mut tols = vec![spec.eta / 2.0; k];
    tols.extend(spec.anchored.iter().map(|_| spec.eta));
    let point_times = (0..count)
        .into_par_iter()
        .map(|idx| {
            let grid_angles = grid_point(idx as u64, m, k);
            let mut targets: Vec<C64> = grid_angles.iter().map(|&a| circle_point(a)).collect();
            targets.extend(spec.anchored.iter().map(|_| C64::new(1.0, 0.0)));
            Scanner::new(angles.clone(), targets, tols.clone())
                .first(1, spec.p_max)
                .ok_or(Error::NetPointUnsolved {
                    p_max: spec.p_max,
                    point: grid_angles,
                })
        })
        .collect::<Result<Vec<u64>>>()?;
    Ok(NetReturnTimes {
        set: ReturnTimeSet::new(point_times.clone())?,
        grid: m,
        free_count: k,
        point_times,
    })
}

fn grid_point(mut idx: u64, m: u64, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k];
    for slot in out.iter_mut().rev() {
        *slot = (idx % m) as f64 / m as f64;
        idx /= m;
    }
    out
}

/// Return times covering every target tuple for `angles` at tolerance `η`.
pub fn return_time_net(angles: &[f64], eta: f64, net_resolution: f64) -> Result<ReturnTimeSet> {
    let spec = NetSpec {
        resolution: net_resolution,
        ..NetSpec::plain(angles.to_vec(), eta)
    };
    Ok(return_time_net_mixed(&spec)?.set)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SyndeticReport {
    pub horizon: u64,
    pub eta: f64,
    /// `D = {p ≤ horizon : |λ_j^p − 1| < η ∀j}`.
    pub d: Vec<u64>,
    /// Same with `η/2`.
    pub d_prime: Vec<u64>,
    /// Largest gap of `D ∪ {0}` within the horizon.
    pub max_gap: u64,
    pub density: f64,
    /// Elements of `(D′ − D′) ∩ [1, horizon]` missing from `D`.
    pub violations: u64,
}

impl SyndeticReport {
    pub fn inclusion_holds(&self) -> bool {
        self.violations == 0
    }
}

/// Return sets near 1 for the given angles up to `horizon`, with the
/// inclusion `(D′ − D′) ∩ ℕ ⊆ D` checked exactly on bitsets.
pub fn syndetic_return_set(angles: &[f64], eta: f64, horizon: u64) -> Result<SyndeticReport> {
    if horizon < 1000 {
        return Err(invalid("horizon", format!("horizon must be ≥ 1000, got {horizon}")));
    }
    if !(eta > 0.0) {
        return Err(invalid("eta", "tolerance must be > 0"));
    }
    let within = |p: u64, tol: f64| angles.iter().all(|&t| (circle_power(t, p) - 1.0).norm() < tol);
    let d: Vec<u64> = (1..=horizon).into_par_iter().filter(|&p| within(p, eta)).collect();
    if d.is_empty() {
        return Err(Error::EmptyReturnSet { horizon });
    }
    let d_prime: Vec<u64> = d.par_iter().copied().filter(|&p| within(p, eta / 2.0)).collect();
    let max_gap = std::iter::once(0)
        .chain(d.iter().copied())
        .zip(d.iter().copied())
        .map(|(a, b)| b - a)
        .max()
        .unwrap_or(0);

    let words = (horizon as usize + 1).div_ceil(64);
    let mut d_bits = vec![0u64; words];
    let mut dp_bits = vec![0u64; words];
    for &p in &d {
        d_bits[p as usize / 64] |= 1 << (p % 64);
    }
    for &p in &d_prime {
        dp_bits[p as usize / 64] |= 1 << (p % 64);
    }
    // Differences p − q for p, q ∈ D′, p > q: union of D′ shifted down by q.
    let mut diff = vec![0u64; words];
    for &q in &d_prime {
        or_shifted_down(&mut diff, &dp_bits, q as usize);
    }
    diff[0] &= !1;
    let violations = diff
        .iter()
        .zip(&d_bits)
        .map(|(x, y)| (x & !y).count_ones() as u64)
        .sum();
    Ok(SyndeticReport {
        horizon,
        eta,
        density: d.len() as f64 / horizon as f64,
        d,
        d_prime,
        max_gap,
        violations,
    })
}

/// `acc |= bits >> shift`, treating the slices as little-endian bitsets.
fn or_shifted_down(acc: &mut [u64], bits: &[u64], shift: usize) {
    let (ws, bs) = (shift / 64, shift % 64);
    for i in 0..bits.len().saturating_sub(ws) {
        let lo = bits[i + ws] >> bs;
        let hi = if bs > 0 && i + ws + 1 < bits.len() {
            bits[i + ws + 1] << (64 - bs)
        } else {
            0
        };
        acc[i] |= lo | hi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sqrt_frac(n: f64) -> f64 {
        n.sqrt().fract()
    }

    #[test]
    fn empty_system_solved_by_one() {
        let t = TorusTarget::new(vec![], vec![], 0.1).unwrap();
        assert_eq!(solve_simultaneous(&t, 10).unwrap(), Some(1));
    }

    #[test]
    fn own_eigenvalue_solved_by_one() {
        let theta = sqrt_frac(2.0);
        let t = TorusTarget::new(vec![theta], vec![circle_point(theta)], 1e-9).unwrap();
        assert_eq!(solve_simultaneous(&t, 10).unwrap(), Some(1));
    }

    #[test]
    fn solver_matches_plain_scan() {
        let t = TorusTarget::from_target_angles(vec![sqrt_frac(2.0), sqrt_frac(3.0)], &[0.5, 0.25], 0.1)
            .unwrap();
        let oracle = (1..=1_000_000u64).find(|&p| t.holds(p));
        assert_eq!(solve_simultaneous(&t, 1_000_000).unwrap(), oracle);
        assert!(oracle.is_some());
    }

    #[test]
    fn solver_reports_not_found() {
        let t = TorusTarget::from_target_angles(vec![0.5], &[0.25], 0.1).unwrap();
        assert_eq!(solve_simultaneous(&t, 100_000).unwrap(), None);
    }

    #[test]
    fn target_validation() {
        assert!(TorusTarget::new(vec![0.1], vec![], 0.1).is_err());
        assert!(TorusTarget::new(vec![0.1], vec![C64::new(1.0, 0.0)], 2.0).is_err());
        assert!(TorusTarget::new(vec![0.1], vec![C64::new(2.0, 0.0)], 0.5).is_err());
    }

    #[test]
    fn trivial_tolerance_gives_one() {
        assert_eq!(return_time_net(&[sqrt_frac(2.0)], 2.1, 1.0).unwrap().times(), &[1]);
    }

    #[test]
    fn net_rejects_coarse_resolution() {
        assert!(return_time_net(&[sqrt_frac(2.0)], 0.2, 0.15).is_err());
    }

    #[test]
    fn net_cap_is_enforced() {
        let spec = NetSpec {
            max_points: 10,
            ..NetSpec::plain(vec![sqrt_frac(2.0), sqrt_frac(3.0)], 0.2)
        };
        assert!(matches!(return_time_net_mixed(&spec), Err(Error::NetTooLarge { .. })));
    }

    #[test]
    fn grid_mesh_is_within_resolution() {
        for res in [0.01, 0.1, 0.3, 1.0, 1.9] {
            let m = grid_size(res).unwrap() as f64;
            assert!(2.0 * (PI / (2.0 * m)).sin() <= res + 1e-15);
        }
    }

    #[test]
    fn single_angle_net_members_verify() {
        let theta = sqrt_frac(2.0);
        let net = return_time_net_mixed(&NetSpec::plain(vec![theta], 0.2)).unwrap();
        assert!(net.set.times().len() as u64 <= net.grid);
        for (idx, &p) in net.point_times.iter().enumerate() {
            let mu = circle_point(idx as f64 / net.grid as f64);
            assert!((circle_power(theta, p) - mu).norm() < 0.1);
        }
    }

    #[test]
    fn bitset_shift_matches_naive() {
        let bits = [0xdead_beef_0123_4567u64, 0x8000_0000_0000_0001, 0x0f0f];
        for shift in [0, 1, 63, 64, 65, 130] {
            let mut acc = [0u64; 3];
            or_shifted_down(&mut acc, &bits, shift);
            for pos in 0..192usize {
                let src = pos + shift;
                let expect = src < 192 && bits[src / 64] >> (src % 64) & 1 == 1;
                assert_eq!(acc[pos / 64] >> (pos % 64) & 1 == 1, expect, "shift {shift} pos {pos}");
            }
        }
    }

    #[test]
    fn no_angles_returns_everything() {
        let r = syndetic_return_set(&[], 0.5, 1000).unwrap();
        assert_eq!(r.d.len(), 1000);
        assert_eq!(r.max_gap, 1);
        assert!(r.inclusion_holds());
    }

    #[test]
    fn single_angle_syndetic_set() {
        let r = syndetic_return_set(&[sqrt_frac(2.0)], 0.5, 10_000).unwrap();
        assert!(!r.d.is_empty());
        assert!(r.max_gap < 100);
        // Exhaustive oracle for the inclusion.
        let mut violations = 0;
        for &p in &r.d_prime {
            for &q in &r.d_prime {
                if p > q && r.d.binary_search(&(p - q)).is_err() {
                    violations += 1;
                }
            }
        }
        assert_eq!(violations, 0);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn return_time_set_json_is_a_list() {
        let s = ReturnTimeSet::new(vec![5, 3, 5]).unwrap();
        assert_eq!(serde_json::to_string(&s).unwrap(), "[3,5]");
        assert_eq!(s.pi_max(), 5);
        assert!(serde_json::from_str::<ReturnTimeSet>("[]").is_err());
    }
}
