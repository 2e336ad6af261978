//! Unimodular eigenpairs, eigenvector fields and the finite-scale checks of
//! the spanning and accumulation assumptions on a family of eigenvectors.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linspace::{check_dim, circle_point, circle_power, lp_norm, singular_values, StateVector, C64};
use crate::operators::{perturbation_weight, OperatorKind, OperatorSpec};

/// Relative tolerance used to decide the numerical rank of a family.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Minimum eigenvalue gap accepted by the triangular back-substitution.
pub const MIN_EIGENVALUE_GAP: f64 = 1e-8;

/// Maps an angle into `(0, 1]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let f = theta - theta.floor();
    if f == 0.0 {
        1.0
    } else {
        f
    }
}

/// Eigenvalue `e^{2πiθ}` with a unit eigenvector and the residual
/// `‖Tv − λv‖` caused by truncation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    theta: f64,
    vector: StateVector,
    residual: f64,
}

impl EigenPair {
    /// Wraps a precomputed pair. The vector must have unit norm.
    pub fn new(theta: f64, vector: StateVector, residual: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(invalid("theta", "angle must be finite"));
        }
        if (vector.norm() - 1.0).abs() > 1e-12 {
            return Err(invalid("vector", format!("eigenvector must be unit, norm {}", vector.norm())));
        }
        if !(residual >= 0.0) {
            return Err(invalid("residual", "residual must be ≥ 0"));
        }
        Ok(Self {
            theta: wrap_angle(theta),
            vector,
            residual,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn lambda(&self) -> C64 {
        circle_point(self.theta)
    }

    pub fn vector(&self) -> &StateVector {
        &self.vector
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }
}

/// Truncated eigenvector of `wB` for `λ = e^{2πiθ}`:
/// `E(λ) = normalize(Σ_{n<d} (λ/w)^n e_n)`.
///
/// The only defect of the truncation is the missing last coordinate of
/// `wB·E`, so the residual is exactly `w^{-(d-1)}/‖Σ (λ/w)^n e_n‖`.
pub fn eigenvector_2b(theta: f64, weight: f64, d: usize) -> Result<EigenPair> {
    if !(weight > 1.0) || !weight.is_finite() {
        return Err(invalid("weight", format!("shift weight must be > 1, got {weight}")));
    }
    if d == 0 {
        return Err(invalid("dimension", "dimension must be ≥ 1"));
    }
    if !theta.is_finite() {
        return Err(invalid("theta", "angle must be finite"));
    }
    let theta = wrap_angle(theta);
    let inv = weight.recip();
    let raw: Vec<C64> = (0..d)
        .map(|n| circle_power(theta, n as u64) * inv.powi(n as i32))
        .collect();
    let norm = lp_norm(&raw, 2.0);
    let tail = inv.powi(d as i32 - 1);
    let entries = raw.into_iter().map(|z| z / norm).collect();
    Ok(EigenPair {
        theta,
        vector: StateVector::from_raw(entries, 2.0),
        residual: tail / norm,
    })
}

/// Eigenvector of a perturbed diagonal operator for `λ_k`, obtained from the
/// upper-triangular system `(T − λ_k)v = 0` with `v_k = 1` and `v_j = 0` for
/// `j > k`.
pub fn perturbed_diagonal_eigenvector(op: &OperatorSpec, k: usize) -> Result<EigenPair> {
    let OperatorKind::PerturbedDiagonal { angles, epsilon } = op.kind() else {
        return Err(Error::WrongOperatorKind("perturbed_diagonal"));
    };
    let d = op.dim();
    if k >= d {
        return Err(invalid("k", format!("index {k} out of range for dimension {d}")));
    }
    let lk = circle_point(angles[k]);
    let mut v = vec![C64::new(0.0, 0.0); d];
    v[k] = C64::new(1.0, 0.0);
    for j in (0..k).rev() {
        let gap = lk - circle_point(angles[j]);
        if gap.norm() < MIN_EIGENVALUE_GAP {
            return Err(Error::IllConditioned { k, j, gap: gap.norm() });
        }
        v[j] = v[j + 1] * perturbation_weight(*epsilon, j) / gap;
    }
    let (vector, _) = StateVector::from_raw(v, 2.0).normalized()?;
    let image = op.apply(&vector)?;
    let residual = image.distance(&vector.scale(lk))?;
    Ok(EigenPair {
        theta: wrap_angle(angles[k]),
        vector,
        residual,
    })
}

/// First `k` primes by a sieve sized from the prime-counting upper bound.
pub fn first_primes(k: usize) -> Vec<u64> {
    if k == 0 {
        return Vec::new();
    }
    let kf = k.max(6) as f64;
    let limit = (kf * (kf.ln() + kf.ln().ln())).ceil() as usize + 1;
    let mut composite = vec![false; limit + 1];
    let mut primes = Vec::with_capacity(k);
    for n in 2..=limit {
        if composite[n] {
            continue;
        }
        primes.push(n as u64);
        if primes.len() == k {
            break;
        }
        let mut m = n * n;
        while m <= limit {
            composite[m] = true;
            m += n;
        }
    }
    primes
}

/// `frac(√p_j)` for the first `k` primes.
///
/// Square roots of distinct primes are linearly independent over ℚ together
/// with 1, so the angles are irrational and ℚ-independent by construction.
/// This is not (and cannot be) checked from the floating-point values.
pub fn qindependent_angles(k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(invalid("k", "at least one angle is required"));
    }
    Ok(first_primes(k).into_iter().map(|p| (p as f64).sqrt().fract()).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    SqrtPrimeAngles,
    CantorField,
    Diagonal,
}

/// Eigenpairs with pairwise distinct angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenFamily {
    pairs: Vec<EigenPair>,
    provenance: Provenance,
}

impl EigenFamily {
    pub fn new(pairs: Vec<EigenPair>, provenance: Provenance) -> Result<Self> {
        let Some(first) = pairs.first() else {
            return Err(invalid("pairs", "family must be nonempty"));
        };
        let d = first.vector.dim();
        for p in &pairs {
            check_dim(d, p.vector.dim())?;
        }
        let mut thetas: Vec<f64> = pairs.iter().map(|p| p.theta).collect();
        thetas.sort_by(f64::total_cmp);
        if let Some(w) = thetas.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid("pairs", format!("angle {} appears twice", w[0])));
        }
        Ok(Self { pairs, provenance })
    }

    /// The `wB` field sampled at the first `count` square-root-of-prime angles.
    pub fn sqrt_prime_2b(weight: f64, d: usize, count: usize) -> Result<Self> {
        let pairs = qindependent_angles(count)?
            .into_par_iter()
            .map(|t| eigenvector_2b(t, weight, d))
            .collect::<Result<Vec<_>>>()?;
        Self::new(pairs, Provenance::SqrtPrimeAngles)
    }

    /// All eigenpairs of a perturbed diagonal operator.
    pub fn diagonal(op: &OperatorSpec) -> Result<Self> {
        let pairs = (0..op.dim())
            .map(|k| perturbed_diagonal_eigenvector(op, k))
            .collect::<Result<Vec<_>>>()?;
        Self::new(pairs, Provenance::Diagonal)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.pairs[0].vector.dim()
    }

    pub fn pairs(&self) -> &[EigenPair] {
        &self.pairs
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn angles(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.theta).collect()
    }

    /// One row per pair: `theta,residual,re_0,im_0,...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,residual");
        for k in 0..self.dim() {
            let _ = write!(out, ",re_{k},im_{k}");
        }
        out.push('\n');
        for p in &self.pairs {
            let _ = write!(out, "{},{}", p.theta, p.residual);
            for z in p.vector.entries() {
                let _ = write!(out, ",{},{}", z.re, z.im);
            }
            out.push('\n');
        }
        out
    }
}

/// A vector stored as `Σ c_j x_j` over eigenpairs, so that
/// `T^n(Σ c_j x_j) = Σ c_j λ_j^n x_j` needs no matrix powers.
///
/// Truncated eigenvectors carry residuals, so the expansion is exact for the
/// eigenvalue dynamics and approximate for the truncated matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenExpansion {
    dim: usize,
    coeffs: Vec<C64>,
    thetas: Vec<f64>,
    // Row-major, one row of `dim` entries per term.
    vectors: Vec<C64>,
}

impl EigenExpansion {
    /// The empty expansion, i.e. the zero vector.
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension", "dimension must be ≥ 1"));
        }
        Ok(Self {
            dim,
            coeffs: Vec::new(),
            thetas: Vec::new(),
            vectors: Vec::new(),
        })
    }

    pub fn from_terms<'a>(
        dim: usize,
        terms: impl IntoIterator<Item = (C64, &'a EigenPair)>,
    ) -> Result<Self> {
        let mut e = Self::new(dim)?;
        for (c, p) in terms {
            e.push(c, p)?;
        }
        Ok(e)
    }

    pub fn push(&mut self, coeff: C64, pair: &EigenPair) -> Result<()> {
        check_dim(self.dim, pair.vector.dim())?;
        self.coeffs.push(coeff);
        self.thetas.push(pair.theta);
        self.vectors.extend_from_slice(pair.vector.entries());
        Ok(())
    }

    pub fn extend(&mut self, other: &EigenExpansion) -> Result<()> {
        check_dim(self.dim, other.dim)?;
        self.coeffs.extend_from_slice(&other.coeffs);
        self.thetas.extend_from_slice(&other.thetas);
        self.vectors.extend_from_slice(&other.vectors);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coefficients(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn term_vector(&self, j: usize) -> &[C64] {
        &self.vectors[j * self.dim..(j + 1) * self.dim]
    }

    /// `Σ |c_j|`, an upper bound for the norm of every power.
    pub fn coefficient_mass(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    /// Writes `Σ c_j λ_j^n x_j` into `out`.
    pub fn power_into(&self, n: u64, out: &mut [C64]) {
        debug_assert_eq!(out.len(), self.dim);
        out.fill(C64::new(0.0, 0.0));
        for (j, (c, &t)) in self.coeffs.iter().zip(&self.thetas).enumerate() {
            let z = c * circle_power(t, n);
            for (o, x) in out.iter_mut().zip(self.term_vector(j)) {
                *o += z * x;
            }
        }
    }

    pub fn power(&self, n: u64) -> StateVector {
        let mut out = vec![C64::new(0.0, 0.0); self.dim];
        self.power_into(n, &mut out);
        StateVector::from_raw(out, 2.0)
    }

    pub fn evaluate(&self) -> StateVector {
        self.power(0)
    }
}

/// Exact nearest-neighbour search over the vectors of a family.
///
/// Items are sorted by distance to a first pivot; a second pivot gives an
/// extra triangle-inequality filter. Queries scan outwards from the query's
/// position and stop once the pivot lower bound exceeds the best distance.
struct PivotIndex<'a> {
    pairs: &'a [EigenPair],
    order: Vec<usize>,
    rank: Vec<usize>,
    d0: Vec<f64>,
    d1: Vec<f64>,
}

impl<'a> PivotIndex<'a> {
    fn new(pairs: &'a [EigenPair]) -> Self {
        let n = pairs.len();
        let d0: Vec<f64> = pairs.par_iter().map(|p| vec_dist(&pairs[0], p)).collect();
        let far = (0..n).max_by(|&a, &b| d0[a].total_cmp(&d0[b])).unwrap_or(0);
        let d1: Vec<f64> = pairs.par_iter().map(|p| vec_dist(&pairs[far], p)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| d0[a].total_cmp(&d0[b]).then(a.cmp(&b)));
        let mut rank = vec![0; n];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        Self { pairs, order, rank, d0, d1 }
    }

    /// Nearest `j ≠ i` with `accept(j)`; ties go to the smaller index.
    fn nearest(&self, i: usize, accept: impl Fn(usize) -> bool) -> Option<(usize, f64)> {
        let pos = self.rank[i];
        let mut best: Option<(usize, f64)> = None;
        let (mut lo, mut hi) = (pos, pos + 1);
        let bound = |j: usize| (self.d0[j] - self.d0[i]).abs();
        loop {
            let left = (lo > 0).then(|| self.order[lo - 1]);
            let right = (hi < self.order.len()).then(|| self.order[hi]);
            let next = match (left, right) {
                (None, None) => break,
                (Some(l), None) => l,
                (None, Some(r)) => r,
                (Some(l), Some(r)) => {
                    if bound(l) <= bound(r) {
                        l
                    } else {
                        r
                    }
                }
            };
            if let Some((_, b)) = best {
                if bound(next) > b {
                    break;
                }
            }
            if Some(next) == left {
                lo -= 1;
            } else {
                hi += 1;
            }
            if next == i || !accept(next) {
                continue;
            }
            if let Some((_, b)) = best {
                if (self.d1[next] - self.d1[i]).abs() > b {
                    continue;
                }
            }
            let dist = vec_dist(&self.pairs[i], &self.pairs[next]);
            let better = match best {
                None => true,
                Some((bj, b)) => match dist.total_cmp(&b) {
                    Ordering::Less => true,
                    Ordering::Equal => next < bj,
                    Ordering::Greater => false,
                },
            };
            if better {
                best = Some((next, dist));
            }
        }
        best
    }
}

fn vec_dist(a: &EigenPair, b: &EigenPair) -> f64 {
    let x = a.vector.entries();
    let y = b.vector.entries();
    if a.vector.space_p() == 2.0 {
        return x.iter().zip(y).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>().sqrt();
    }
    let diff: Vec<C64> = x.iter().zip(y).map(|(u, v)| u - v).collect();
    lp_norm(&diff, a.vector.space_p())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeighbourWitness {
    pub index: usize,
    pub theta: f64,
    pub neighbour: Option<usize>,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AccumulationReport {
    pub pass: bool,
    pub tolerance: f64,
    pub max_distance: f64,
    pub witnesses: Vec<NeighbourWitness>,
    pub diagnostic: Option<String>,
}

/// Checks at tolerance `tol` that every member of the family is approximated
/// by another member whose angle avoids the finite set `excluded`.
///
/// Members with an excluded angle must be approximated from `A_F`, the
/// members outside the set. Members of `A_F` only need some other member
/// nearby: a member of `A_F` is trivially in the closure of `A_F`, so the
/// distinct-index neighbour is what witnesses that it is not isolated.
/// Angles are compared for exact equality with the excluded set.
pub fn check_assumption_h(family: &EigenFamily, excluded: &[f64], tol: f64) -> AccumulationReport {
    let pairs = family.pairs();
    let is_excluded: Vec<bool> = pairs
        .iter()
        .map(|p| excluded.iter().any(|&t| wrap_angle(t) == p.theta))
        .collect();
    let fail = |diagnostic: String| AccumulationReport {
        pass: false,
        tolerance: tol,
        max_distance: f64::INFINITY,
        witnesses: Vec::new(),
        diagnostic: Some(diagnostic),
    };
    if is_excluded.iter().all(|&x| x) {
        return fail("every angle of the family lies in the excluded set".into());
    }
    let index = PivotIndex::new(pairs);
    let witnesses: Vec<NeighbourWitness> = (0..pairs.len())
        .into_par_iter()
        .map(|i| {
            let found = if is_excluded[i] {
                index.nearest(i, |j| !is_excluded[j])
            } else {
                index.nearest(i, |_| true)
            };
            NeighbourWitness {
                index: i,
                theta: pairs[i].theta,
                neighbour: found.map(|(j, _)| j),
                distance: found.map_or(f64::INFINITY, |(_, d)| d),
            }
        })
        .collect();
    let max_distance = witnesses.iter().map(|w| w.distance).fold(0.0, f64::max);
    let isolated = witnesses.iter().find(|w| w.neighbour.is_none());
    let diagnostic = match isolated {
        Some(w) => Some(format!("member {} has no admissible neighbour", w.index)),
        None if max_distance > tol => {
            let w = witnesses.iter().find(|w| w.distance == max_distance).unwrap();
            Some(format!(
                "member {} (θ = {}) is at distance {} from its nearest admissible neighbour",
                w.index, w.theta, w.distance
            ))
        }
        None => None,
    };
    AccumulationReport {
        pass: diagnostic.is_none(),
        tolerance: tol,
        max_distance,
        witnesses,
        diagnostic,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpanningReport {
    pub dim: usize,
    pub rank: usize,
    pub sigma_max: f64,
    /// Smallest singular value counted towards the rank.
    pub sigma_min_kept: f64,
    pub full_rank: bool,
}

/// Numerical rank of the family's vectors with tolerance
/// `RANK_TOLERANCE·σ_max`. Full rank is the finite stand-in for density of
/// the span.
pub fn spanning_rank(family: &EigenFamily) -> Result<SpanningReport> {
    let cols: Vec<&StateVector> = family.pairs().iter().map(|p| &p.vector).collect();
    let sv = singular_values(&cols)?;
    let sigma_max = sv[0];
    let kept: Vec<f64> = sv.into_iter().filter(|&s| s > RANK_TOLERANCE * sigma_max).collect();
    let dim = family.dim();
    Ok(SpanningReport {
        dim,
        rank: kept.len(),
        sigma_max,
        sigma_min_kept: kept.last().copied().unwrap_or(0.0),
        full_rank: kept.len() == dim,
    })
}
