//! Block construction of a random vector `Φ = Σ_n Φ_n` whose orbit visits
//! every target ball along a finite set of return times.
//!
//! Block `n` approximates its target centre by a short eigen-combination
//! `u_n = Σ α_k x_k`, splits every `α_k` into many small parts, moves each
//! part to a fresh eigenvector close to `x_k`, and randomizes the parts with
//! independent Steinhaus phases. The return times come from a net on the
//! torus of all eigenvalue angles used so far.
//!
//! Tolerances follow a fixed order per block: `κ_n = R_n/4`,
//! `ρ_n = κ_n/‖T‖^{p_n}`, then `M_n`, then `δ_n = bound_n/(2M_n)`, then
//! `γ_n`, and `η_n = ρ_n/(2S)` with `S` the ℓ¹ mass of all coefficients so
//! far. `bound_n = 4^{-n}/‖T‖^{max π_{<n}}` is handled in log₂ form since it
//! leaves the normal floating-point range quickly.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diophantine::{
    return_time_net_mixed, syndetic_return_set, NetReturnTimes, NetSpec, ReturnTimeSet, DEFAULT_P_MAX,
};
use crate::eigenfields::{EigenExpansion, EigenFamily, EigenPair};
use crate::error::{invalid, Error, Result};
use crate::linspace::{circle_point, circle_power, singular_values, Ball, StateVector, C64};
use crate::operators::OperatorSpec;
use crate::stats::{stream_rng, McEstimate, RunningStats};

const CERT_STREAM_BASE: u64 = 1 << 40;
const SAMPLE_STREAM_BASE: u64 = 1 << 48;

/// `a = a_1 + … + a_N` with `Σ|a_j|² < ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSplit {
    pub parent: C64,
    pub parts: Vec<C64>,
    pub eps: f64,
}

impl CoefficientSplit {
    pub fn square_sum(&self) -> f64 {
        self.parts.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Left-to-right sum of the parts.
    pub fn reassemble(&self) -> C64 {
        self.parts.iter().fold(C64::new(0.0, 0.0), |acc, z| acc + z)
    }
}

/// Splits `a` into `N = ⌊|a|²/ε⌋ + 1` equal parts.
///
/// The last part absorbs the rounding of the others so that the
/// left-to-right sum gives back `a` exactly. In the rare case where that
/// pushes `Σ|a_j|²` onto `ε`, `N` is increased.
pub fn split_coefficient(a: C64, eps: f64) -> Result<CoefficientSplit> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(invalid("eps", format!("split tolerance must be > 0, got {eps}")));
    }
    if !a.re.is_finite() || !a.im.is_finite() {
        return Err(invalid("a", "coefficient must be finite"));
    }
    let ratio = a.norm_sqr() / eps;
    if ratio >= MAX_SPLIT_PARTS as f64 {
        return Err(invalid(
            "eps",
            format!("splitting |a|² = {} below {eps} needs more than {MAX_SPLIT_PARTS} parts", a.norm_sqr()),
        ));
    }
    let mut n = ratio.floor() as usize + 1;
    loop {
        let part = a / n as f64;
        let mut parts = vec![part; n];
        let head = parts[..n - 1].iter().fold(C64::new(0.0, 0.0), |acc, z| acc + z);
        parts[n - 1] = a - head;
        let split = CoefficientSplit { parent: a, parts, eps };
        if split.square_sum() < eps {
            return Ok(split);
        }
        n += 1;
    }
}

/// Upper limit on the parts of a single split.
pub const MAX_SPLIT_PARTS: usize = 1 << 22;

/// Smallest `M` with `‖Σ β_k x_k‖ ≤ M (Σ|β_k|²)^{1/2}`: the largest singular
/// value of the matrix with the vectors as columns.
pub fn basis_constant(vectors: &[&StateVector]) -> Result<f64> {
    Ok(singular_values(vectors)?[0])
}

/// How the power `p_n` that carries `u_n` into the target is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReachPolicy {
    /// `p_n = 0`. Always a return time of the earlier blocks.
    #[default]
    Zero,
    /// Smallest positive `p` in the return set `D_n` of the earlier blocks.
    FirstReturn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstructionConfig {
    /// Atoms used to approximate each target centre.
    pub max_fit_terms: usize,
    /// Draws used to certify `E‖Φ_n‖`.
    pub mc_trials: u64,
    /// Halvings of `δ_n` tried before giving up.
    pub max_tightenings: u32,
    pub p_max: u64,
    pub net_cap: usize,
    pub reach: ReachPolicy,
    /// Horizon of the return sets `D_n` of earlier blocks.
    pub syndetic_horizon: u64,
}

impl Default for ConstructionConfig {
    fn default() -> Self {
        Self {
            max_fit_terms: 3,
            mc_trials: 2000,
            max_tightenings: 8,
            p_max: DEFAULT_P_MAX,
            net_cap: 1 << 16,
            reach: ReachPolicy::Zero,
            syndetic_horizon: 10_000,
        }
    }
}

/// Tolerances of one block, in the order they are chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub kappa: f64,
    pub rho: f64,
    pub m: f64,
    pub delta: f64,
    pub gamma: f64,
    pub eta: f64,
    /// Number of times `δ` was halved.
    pub tightenings: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSchedule {
    pub entries: Vec<ScheduleEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockTerm {
    pub coeff: C64,
    pub pair: EigenPair,
    /// Index into the block's fitted atoms of the vector this term replaces.
    pub atom: usize,
}

/// Approximation of a target centre by family members.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetFit {
    /// Family indices of the atoms `x_k`.
    pub atoms: Vec<usize>,
    /// Coefficients `α_k` of `u_n`, already rotated by `λ_k^{-p_n}`.
    pub coeffs: Vec<C64>,
    /// `‖Σ α_k λ_k^{p_n} x_k − c‖`.
    pub residual: f64,
}

/// Return set of the earlier blocks used to choose `p_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyndeticSummary {
    pub eta: f64,
    pub horizon: u64,
    pub size: usize,
    pub max_gap: Option<u64>,
    pub violations: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub index: usize,
    pub terms: Vec<BlockTerm>,
    pub target: Ball,
    pub fit: TargetFit,
    pub reach_power: u64,
    /// `‖T^{p_n} v_n − c_n‖`, below `R_n/2` by construction.
    pub reach_distance: f64,
    pub schedule: ScheduleEntry,
    pub expected_norm: McEstimate,
    /// 99% upper confidence bound of `E‖Φ_n‖`.
    pub expected_norm_upper: f64,
    /// `log₂(4^{-n}/‖T‖^{max π_{<n}})`.
    pub log2_bound: f64,
    pub syndetic: Option<SyndeticSummary>,
    /// `𝒬_n` with the time chosen for every net point.
    pub net: NetReturnTimes,
    /// `𝒫_n = p_n + 𝒬_n`.
    pub return_times: ReturnTimeSet,
}

impl Block {
    pub fn pi(&self) -> u64 {
        self.return_times.pi_max()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.pair.theta()).collect()
    }

    /// `Σ_j |a_j|`.
    pub fn coefficient_mass(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.norm()).sum()
    }

    /// Whether the certified bound holds: `log₂` of the upper confidence
    /// bound lies strictly below `log2_bound`.
    pub fn bound_certified(&self) -> bool {
        self.expected_norm_upper.log2() < self.log2_bound
    }

    /// Return time designated for the phase angles `u_j` of this block's
    /// Steinhaus variables: the net time for the target `χ̄ = e^{-2πiu}`.
    pub fn designated_time(&self, phase_angles: &[f64]) -> Result<u64> {
        let conj: Vec<f64> = phase_angles.iter().map(|u| -u).collect();
        Ok(self.reach_power + self.net.lookup(&conj)?)
    }

    fn expansion(&self, phases: &[f64], dim: usize) -> Result<EigenExpansion> {
        EigenExpansion::from_terms(
            dim,
            self.terms.iter().zip(phases).map(|(t, &u)| (circle_point(u) * t.coeff, &t.pair)),
        )
    }
}

/// Blocks built so far together with the seed that drives every draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionState {
    pub norm_bound: f64,
    pub dim: usize,
    pub seed: u64,
    pub blocks: Vec<Block>,
}

impl ConstructionState {
    pub fn new(op: &OperatorSpec, seed: u64) -> Self {
        Self {
            norm_bound: op.norm_bound(),
            dim: op.dim(),
            seed,
            blocks: Vec::new(),
        }
    }

    /// `log₂(4^{-n}/‖T‖^{max π_{<n}})` for the next block `n`.
    pub fn next_log2_bound(&self) -> f64 {
        -2.0 * (self.blocks.len() + 1) as f64 - self.pi_max() as f64 * self.norm_bound.log2()
    }

    /// `max(π_1, …, π_n)`, 0 before the first block.
    pub fn pi_max(&self) -> u64 {
        self.blocks.iter().map(Block::pi).max().unwrap_or(0)
    }

    pub fn used_angles(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(Block::angles).collect()
    }

    pub fn coefficient_mass(&self) -> f64 {
        self.blocks.iter().map(Block::coefficient_mass).sum()
    }

    pub fn schedule(&self) -> ToleranceSchedule {
        ToleranceSchedule {
            entries: self.blocks.iter().map(|b| b.schedule.clone()).collect(),
        }
    }

    /// `Σ_{m>n} Σ_j |a_j^{(m)}|`, a sure bound on `‖Φ − Σ_{m≤n} Φ_m‖`.
    pub fn tail_mass(&self, n: usize) -> f64 {
        self.blocks.iter().skip(n).map(Block::coefficient_mass).sum()
    }

    /// Draw number `sample` of `Φ(ω)`. Every block has its own stream.
    pub fn sample(&self, sample: u64) -> Result<SampledPhi> {
        let mut blocks = Vec::with_capacity(self.blocks.len());
        let mut phase_angles = Vec::with_capacity(self.blocks.len());
        for (n, b) in self.blocks.iter().enumerate() {
            let mut rng = stream_rng(self.seed, SAMPLE_STREAM_BASE + sample * 1024 + n as u64);
            let u: Vec<f64> = (0..b.terms.len()).map(|_| rng.random::<f64>()).collect();
            blocks.push(b.expansion(&u, self.dim)?);
            phase_angles.push(u);
        }
        Ok(SampledPhi {
            sample,
            dim: self.dim,
            blocks,
            phase_angles,
        })
    }
}

/// One realization `Φ(ω)`, block by block.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledPhi {
    pub sample: u64,
    pub dim: usize,
    pub blocks: Vec<EigenExpansion>,
    /// Angles `u_j` of the Steinhaus variables `χ_j = e^{2πiu_j}`.
    pub phase_angles: Vec<Vec<f64>>,
}

impl SampledPhi {
    /// `Σ_{m<k} Φ_m`.
    pub fn partial(&self, k: usize) -> EigenExpansion {
        let mut e = EigenExpansion::new(self.dim).expect("dimension is positive");
        for b in &self.blocks[..k.min(self.blocks.len())] {
            e.extend(b).expect("blocks share the dimension");
        }
        e
    }

    pub fn full(&self) -> EigenExpansion {
        self.partial(self.blocks.len())
    }
}

/// First `p` in `times` with `‖T^p φ − base − c‖ < R + slack`, using the
/// eigenvalue-power fast path.
pub fn verify_visit(
    phi: &EigenExpansion,
    base: &EigenExpansion,
    times: &ReturnTimeSet,
    target: &Ball,
    slack: f64,
) -> Result<Option<u64>> {
    let base = base.evaluate();
    let ball = target.inflated(slack);
    let mut buf = vec![C64::new(0.0, 0.0); phi.dim()];
    for &p in times.times() {
        phi.power_into(p, &mut buf);
        for (z, b) in buf.iter_mut().zip(base.entries()) {
            *z -= b;
        }
        if ball.contains(&buf)? {
            return Ok(Some(p));
        }
    }
    Ok(None)
}

/// Everything of a block except its return times.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDraft {
    pub index: usize,
    pub terms: Vec<BlockTerm>,
    pub target: Ball,
    pub fit: TargetFit,
    pub reach_power: u64,
    pub reach_distance: f64,
    pub schedule: ScheduleEntry,
    pub expected_norm: McEstimate,
    pub expected_norm_upper: f64,
    pub log2_bound: f64,
    pub syndetic: Option<SyndeticSummary>,
}

fn construction_error(block: usize, reason: impl Into<String>) -> Error {
    Error::Construction {
        block,
        reason: reason.into(),
    }
}

/// Greedy atom selection followed by a least-squares refit, over family
/// members whose angle is not in `used`.
fn fit_center(
    family: &EigenFamily,
    center: &StateVector,
    used: &HashSet<u64>,
    max_terms: usize,
) -> Result<(Vec<usize>, Vec<C64>, f64)> {
    let pairs = family.pairs();
    let c = center.entries();
    let mut atoms: Vec<usize> = Vec::new();
    let mut coeffs: Vec<C64> = Vec::new();
    let mut residual: Vec<C64> = c.to_vec();
    let mut res_norm = center.norm();
    let scale = res_norm.max(f64::MIN_POSITIVE);
    for _ in 0..max_terms {
        if res_norm <= 1e-14 * scale {
            break;
        }
        let best = (0..pairs.len())
            .into_par_iter()
            .filter(|&j| !used.contains(&pairs[j].theta().to_bits()) && !atoms.contains(&j))
            .map(|j| {
                let ip: C64 = pairs[j]
                    .vector()
                    .entries()
                    .iter()
                    .zip(&residual)
                    .map(|(x, r)| x.conj() * r)
                    .sum();
                (j, ip.norm())
            })
            .reduce_with(|a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a });
        let Some((j, _)) = best else { break };
        atoms.push(j);
        let d = center.dim();
        let a = DMatrix::from_fn(d, atoms.len(), |i, k| pairs[atoms[k]].vector().entries()[i]);
        let b = DVector::from_column_slice(c);
        let sol = a
            .clone()
            .svd(true, true)
            .solve(&b, 1e-14)
            .map_err(|e| invalid("target", format!("least-squares fit failed: {e}")))?;
        coeffs = sol.iter().copied().collect();
        let fitted = &a * &sol;
        residual = c.iter().zip(fitted.iter()).map(|(x, y)| x - y).collect();
        res_norm = crate::linspace::lp_norm(&residual, center.space_p());
    }
    Ok((atoms, coeffs, res_norm))
}

/// Fits the target, splits, perturbs and certifies `E‖Φ_n‖`.
pub fn prepare_block(
    state: &ConstructionState,
    op: &OperatorSpec,
    family: &EigenFamily,
    target: &Ball,
    cfg: &ConstructionConfig,
) -> Result<BlockDraft> {
    let n = state.blocks.len() + 1;
    if family.dim() != op.dim() || target.center.dim() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            found: if family.dim() != op.dim() { family.dim() } else { target.center.dim() },
        });
    }
    if !(target.radius > 0.0) {
        return Err(construction_error(n, "target radius must be positive"));
    }
    let norm_t = op.norm_bound();
    if !(norm_t > 0.0) {
        return Err(construction_error(n, "operator norm bound must be positive"));
    }
    let log2_bound = state.next_log2_bound();
    if log2_bound < -1000.0 {
        return Err(construction_error(
            n,
            format!("E-bound 2^{log2_bound:.1} is below the floating-point range; earlier return times are too long"),
        ));
    }
    let bound = log2_bound.exp2();
    let kappa = target.radius / 4.0;

    let old_angles = state.used_angles();
    let old_mass = state.coefficient_mass();
    let (reach_power, syndetic) = choose_reach(&old_angles, old_mass, kappa, n, cfg)?;
    let rho = kappa / norm_t.powf(reach_power as f64);

    let used: HashSet<u64> = old_angles.iter().map(|t| t.to_bits()).collect();
    let (atoms, fit_coeffs, fit_residual) = fit_center(family, &target.center, &used, cfg.max_fit_terms)?;
    if fit_residual > rho / 2.0 {
        return Err(construction_error(
            n,
            format!("target centre is {fit_residual:e} from the span of {} fresh atoms, above ρ/2 = {:e}", atoms.len(), rho / 2.0),
        ));
    }
    let pairs = family.pairs();
    // u_n = Σ α_k λ_k^{-p_n} x_k, so that T^{p_n} u_n is the fitted centre.
    let alphas: Vec<C64> = atoms
        .iter()
        .zip(&fit_coeffs)
        .map(|(&k, &a)| a * circle_power(pairs[k].theta(), reach_power).conj())
        .collect();
    let atom_vectors: Vec<&StateVector> = atoms.iter().map(|&k| pairs[k].vector()).collect();
    let m = if atoms.is_empty() { 0.0 } else { basis_constant(&atom_vectors)? };
    let new_mass: f64 = alphas.iter().map(|a| a.norm()).sum();
    let total_mass = old_mass + new_mass;
    let eta = if total_mass > 0.0 { rho / (2.0 * total_mass) } else { f64::INFINITY };
    let reach_slack = target.radius / 2.0 - fit_residual;
    let gain = norm_t.powf(reach_power as f64);

    let fit = TargetFit {
        atoms: atoms.clone(),
        coeffs: alphas.clone(),
        residual: fit_residual,
    };
    if atoms.is_empty() {
        return Ok(BlockDraft {
            index: n,
            terms: Vec::new(),
            target: target.clone(),
            fit,
            reach_power,
            reach_distance: target.center.norm(),
            schedule: ScheduleEntry {
                kappa,
                rho,
                m,
                delta: f64::INFINITY,
                gamma: f64::INFINITY,
                eta,
                tightenings: 0,
            },
            expected_norm: McEstimate {
                estimate: 0.0,
                stderr: 0.0,
                trials: 0,
                seed: state.seed,
            },
            expected_norm_upper: 0.0,
            log2_bound,
            syndetic,
        });
    }

    let gamma = (bound / (2.0 * new_mass)).min(reach_slack / (gain * new_mass));
    let mut last_failure = String::new();
    for attempt in 0..=cfg.max_tightenings {
        let delta = bound / (2.0 * m) / f64::from(attempt).exp2();
        let eps = (delta / atoms.len() as f64).powi(2);
        let terms = perturb(family, &atoms, &alphas, eps, gamma, &used, n)?;
        let phi_mean = certify(&terms, state, n, attempt, cfg.mc_trials);
        let upper = phi_mean.upper_99();
        let schedule = ScheduleEntry {
            kappa,
            rho,
            m,
            delta,
            gamma,
            eta,
            tightenings: attempt,
        };
        if upper.log2() < log2_bound {
            let v = EigenExpansion::from_terms(op.dim(), terms.iter().map(|t| (t.coeff, &t.pair)))?;
            let reach_distance = target.distance_to_center(v.power(reach_power).entries())?;
            if !(reach_distance < target.radius / 2.0) {
                return Err(construction_error(
                    n,
                    format!("T^p v lands {reach_distance:e} from the centre, outside R/2"),
                ));
            }
            return Ok(BlockDraft {
                index: n,
                terms,
                target: target.clone(),
                fit,
                reach_power,
                reach_distance,
                schedule,
                expected_norm: phi_mean,
                expected_norm_upper: upper,
                log2_bound,
                syndetic,
            });
        }
        last_failure = format!(
            "E‖Φ‖ upper bound {upper:e} ≥ 2^{log2_bound:.2} with δ = {delta:e}"
        );
    }
    Err(construction_error(
        n,
        format!("bound not met after {} tightenings: {last_failure}", cfg.max_tightenings),
    ))
}

fn choose_reach(
    old_angles: &[f64],
    old_mass: f64,
    kappa: f64,
    n: usize,
    cfg: &ConstructionConfig,
) -> Result<(u64, Option<SyndeticSummary>)> {
    if old_angles.is_empty() || old_mass == 0.0 {
        let p = match cfg.reach {
            ReachPolicy::Zero => 0,
            ReachPolicy::FirstReturn => 1,
        };
        return Ok((p, None));
    }
    // |λ^p − 1| < κ/S for all old angles gives ‖T^p Φ_{<n} − Φ_{<n}‖ < κ.
    let eta = kappa / old_mass;
    if eta > 2.0 {
        let p = match cfg.reach {
            ReachPolicy::Zero => 0,
            ReachPolicy::FirstReturn => 1,
        };
        return Ok((p, None));
    }
    let summary = match syndetic_return_set(old_angles, eta, cfg.syndetic_horizon.max(1000)) {
        Ok(r) => SyndeticSummary {
            eta,
            horizon: r.horizon,
            size: r.d.len(),
            max_gap: Some(r.max_gap),
            violations: r.violations,
        },
        Err(Error::EmptyReturnSet { horizon }) => SyndeticSummary {
            eta,
            horizon,
            size: 0,
            max_gap: None,
            violations: 0,
        },
        Err(e) => return Err(e),
    };
    let p = match cfg.reach {
        ReachPolicy::Zero => 0,
        ReachPolicy::FirstReturn => {
            let r = syndetic_return_set(old_angles, eta, cfg.syndetic_horizon.max(1000))
                .map_err(|e| construction_error(n, format!("no return time for earlier blocks: {e}")))?;
            r.d[0]
        }
    };
    Ok((p, Some(summary)))
}

/// Splits every `α_k` and assigns each part a distinct unused family member
/// within `γ` of `x_k`, starting with `x_k` itself.
fn perturb(
    family: &EigenFamily,
    atoms: &[usize],
    alphas: &[C64],
    eps: f64,
    gamma: f64,
    used: &HashSet<u64>,
    n: usize,
) -> Result<Vec<BlockTerm>> {
    let pairs = family.pairs();
    let mut taken: HashSet<usize> = atoms.iter().copied().collect();
    let mut terms = Vec::new();
    for (a_idx, (&k, &alpha)) in atoms.iter().zip(alphas).enumerate() {
        let split = split_coefficient(alpha, eps)?;
        let extra = split.parts.len() - 1;
        let mut chosen = vec![k];
        if extra > 0 {
            let xk = pairs[k].vector();
            let mut near: Vec<(f64, usize)> = (0..pairs.len())
                .into_par_iter()
                .filter(|j| !taken.contains(j) && !used.contains(&pairs[*j].theta().to_bits()))
                .map(|j| (xk.distance(pairs[j].vector()).expect("family dims agree"), j))
                .filter(|&(d, _)| d < gamma)
                .collect();
            if near.len() < extra {
                return Err(construction_error(
                    n,
                    format!(
                        "atom {k} needs {} fresh eigenvectors within γ = {gamma:e}, found {}",
                        extra,
                        near.len()
                    ),
                ));
            }
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, j) in &near[..extra] {
                taken.insert(j);
                chosen.push(j);
            }
        }
        for (part, j) in split.parts.iter().zip(chosen) {
            terms.push(BlockTerm {
                coeff: *part,
                pair: pairs[j].clone(),
                atom: a_idx,
            });
        }
    }
    Ok(terms)
}

fn certify(terms: &[BlockTerm], state: &ConstructionState, n: usize, attempt: u32, trials: u64) -> McEstimate {
    let mut rng = stream_rng(state.seed, CERT_STREAM_BASE + n as u64 * 64 + u64::from(attempt));
    let mut stats = RunningStats::new();
    let mut buf = vec![C64::new(0.0, 0.0); state.dim];
    for _ in 0..trials {
        buf.fill(C64::new(0.0, 0.0));
        for t in terms {
            let z = circle_point(rng.random::<f64>()) * t.coeff;
            for (o, x) in buf.iter_mut().zip(t.pair.vector().entries()) {
                *o += z * x;
            }
        }
        stats.push(crate::linspace::lp_norm(&buf, 2.0));
    }
    McEstimate::from_stats(&stats, state.seed)
}

/// Computes `𝒬_n` from the net over all angles so far (new angles free, old
/// angles anchored at 1) and completes the block.
pub fn attach_return_times(
    state: &ConstructionState,
    draft: BlockDraft,
    cfg: &ConstructionConfig,
) -> Result<Block> {
    let spec = NetSpec {
        free: draft.terms.iter().map(|t| t.pair.theta()).collect(),
        anchored: state.used_angles(),
        eta: draft.schedule.eta,
        resolution: draft.schedule.eta / 2.0,
        p_max: cfg.p_max,
        max_points: cfg.net_cap,
    };
    let net = return_time_net_mixed(&spec)?;
    let return_times = net.set.shifted(draft.reach_power)?;
    Ok(Block {
        index: draft.index,
        terms: draft.terms,
        target: draft.target,
        fit: draft.fit,
        reach_power: draft.reach_power,
        reach_distance: draft.reach_distance,
        schedule: draft.schedule,
        expected_norm: draft.expected_norm,
        expected_norm_upper: draft.expected_norm_upper,
        log2_bound: draft.log2_bound,
        syndetic: draft.syndetic,
        net,
        return_times,
    })
}

pub fn build_block(
    state: &ConstructionState,
    op: &OperatorSpec,
    family: &EigenFamily,
    target: &Ball,
    cfg: &ConstructionConfig,
) -> Result<Block> {
    let draft = prepare_block(state, op, family, target, cfg)?;
    attach_return_times(state, draft, cfg)
}

/// Builds `n_steps` blocks for the first `n_steps` targets.
pub fn run_construction(
    op: &OperatorSpec,
    family: &EigenFamily,
    targets: &[Ball],
    n_steps: usize,
    cfg: &ConstructionConfig,
    seed: u64,
) -> Result<ConstructionState> {
    if targets.len() < n_steps {
        return Err(invalid(
            "targets",
            format!("{n_steps} steps need as many targets, got {}", targets.len()),
        ));
    }
    let mut state = ConstructionState::new(op, seed);
    for target in &targets[..n_steps] {
        let block = build_block(&state, op, family, target, cfg)?;
        state.blocks.push(block);
    }
    Ok(state)
}

/// Scale of a recipe's coefficients.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterScale {
    #[default]
    Absolute,
    /// Coefficients are multiples of the block's bound `4^{-n}/‖T‖^{max π_{<n}}`,
    /// which is only known once the earlier blocks exist.
    BoundRelative,
}

/// Target ball whose centre is an eigen-combination of family members.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetRecipe {
    pub atoms: Vec<usize>,
    pub coeffs: Vec<C64>,
    pub radius: f64,
    #[serde(default)]
    pub scale: CenterScale,
}

impl TargetRecipe {
    pub fn resolve(&self, state: &ConstructionState, family: &EigenFamily) -> Result<Ball> {
        if self.atoms.len() != self.coeffs.len() || self.atoms.is_empty() {
            return Err(invalid("recipe", "need one coefficient per atom and at least one atom"));
        }
        let factor = match self.scale {
            CenterScale::Absolute => 1.0,
            CenterScale::BoundRelative => state.next_log2_bound().exp2(),
        };
        let mut center = StateVector::zeros(family.dim())?;
        for (&k, &a) in self.atoms.iter().zip(&self.coeffs) {
            let pair = family
                .pairs()
                .get(k)
                .ok_or_else(|| invalid("recipe", format!("atom {k} outside the family")))?;
            center = center.add_scaled(a * factor, pair.vector())?;
        }
        Ball::new(center, self.radius)
    }
}

/// Like [`run_construction`], resolving each target against the blocks
/// built before it.
pub fn run_construction_recipes(
    op: &OperatorSpec,
    family: &EigenFamily,
    recipes: &[TargetRecipe],
    cfg: &ConstructionConfig,
    seed: u64,
) -> Result<ConstructionState> {
    let mut state = ConstructionState::new(op, seed);
    for recipe in recipes {
        let target = recipe.resolve(&state, family)?;
        let block = build_block(&state, op, family, &target, cfg)?;
        state.blocks.push(block);
    }
    Ok(state)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisitRate {
    pub block: usize,
    pub samples: u64,
    /// `1 − (5/3)·2^{-n}`.
    pub floor: f64,
    /// Fraction of draws with some `p ∈ 𝒫_n` and
    /// `T^pΦ − Φ ∈ U_n + B(0, 2^{-(n-1)})`.
    pub rate: f64,
    pub stderr: f64,
    /// Same with the net-designated time `p_n(ω)` only.
    pub designated_rate: f64,
    pub designated_stderr: f64,
}

impl VisitRate {
    /// `rate ≥ floor − 3·stderr`, also for the designated times.
    pub fn meets_floor(&self) -> bool {
        self.rate >= self.floor - 3.0 * self.stderr
            && self.designated_rate >= self.floor - 3.0 * self.designated_stderr
    }
}

fn rate_and_stderr(hits: u64, n: u64) -> (f64, f64) {
    let r = hits as f64 / n as f64;
    (r, (r * (1.0 - r) / n as f64).sqrt())
}

/// Visit frequencies of every block over draws `0..samples` of `Φ`.
pub fn visit_rates(state: &ConstructionState, samples: u64) -> Result<Vec<VisitRate>> {
    if samples == 0 {
        return Err(invalid("samples", "need at least one draw"));
    }
    let outcomes = (0..samples)
        .into_par_iter()
        .map(|s| {
            let phi = state.sample(s)?;
            let full = phi.full();
            state
                .blocks
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    let slack = 0.5f64.powi(i as i32);
                    let exists = verify_visit(&full, &full, &b.return_times, &b.target, slack)?.is_some();
                    let p = b.designated_time(&phi.phase_angles[i])?;
                    let single = ReturnTimeSet::new(vec![p])?;
                    let designated = verify_visit(&full, &full, &single, &b.target, slack)?.is_some();
                    Ok((exists, designated))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(state
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let hits = outcomes.iter().filter(|o| o[i].0).count() as u64;
            let dhits = outcomes.iter().filter(|o| o[i].1).count() as u64;
            let (rate, stderr) = rate_and_stderr(hits, samples);
            let (designated_rate, designated_stderr) = rate_and_stderr(dhits, samples);
            VisitRate {
                block: b.index,
                samples,
                floor: 1.0 - 5.0 / 3.0 * 0.5f64.powi(b.index as i32),
                rate,
                stderr,
                designated_rate,
                designated_stderr,
            }
        })
        .collect())
}
