//! Experiment configuration, read from TOML.
//!
//! A pipeline runs when its table is present. Validation collects every
//! violation rather than stopping at the first.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::construction::TargetRecipe;
use crate::operators::OperatorKind;
use crate::C64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub dimension: usize,
    pub operator: OperatorKind,
    pub family: FamilyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub khinchine: Option<KhinchineConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ergodicity: Option<ErgodicityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diophantine: Option<DiophantineConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cantor: Option<CantorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub construct: Option<ConstructConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    /// 2B eigenvectors at `frac(√p)` for the first primes.
    #[serde(rename = "sqrt_prime_2b")]
    SqrtPrime2b,
    /// Eigenvectors of a perturbed diagonal operator.
    Diagonal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub field: FieldKind,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KhinchineConfig {
    /// Explicit coefficients; when empty, `equal` copies of 1 are used.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coefficients: Vec<C64>,
    #[serde(default)]
    pub equal: usize,
    pub trials: u64,
    /// Accepted ratio band; `[0, 1]` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicityConfig {
    /// `c_p = ⟨x*, x_p⟩`; `y* = x*`.
    pub c: Vec<C64>,
    pub angles: Vec<f64>,
    pub horizon: u64,
    /// Threshold `ε` and return radius `δ` of the density-floor check.
    pub eps: f64,
    pub delta: f64,
    /// Time `n` and trial count of the Monte Carlo cross-check; skipped
    /// when `mc_trials` is zero.
    #[serde(default)]
    pub mc_n: u64,
    #[serde(default)]
    pub mc_trials: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiophantineConfig {
    pub angles: Vec<f64>,
    pub eta: f64,
    /// Grid points per coordinate; the net has `grid^k` targets.
    pub grid: u64,
    pub p_max: u64,
    /// Syndetic check at tolerance `syndetic_eta`; skipped when zero.
    #[serde(default)]
    pub syndetic_eta: f64,
    #[serde(default)]
    pub syndetic_horizon: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CantorConfig {
    pub depth: usize,
    #[serde(default)]
    pub root: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructConfig {
    pub blocks: Vec<TargetRecipe>,
    #[serde(default = "default_fit_terms")]
    pub max_fit_terms: usize,
    #[serde(default = "default_mc_trials")]
    pub mc_trials: u64,
    pub visit_samples: u64,
}

fn default_fit_terms() -> usize {
    3
}

fn default_mc_trials() -> u64 {
    2000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub horizon: u64,
    /// Which draw of `Φ` to follow.
    #[serde(default)]
    pub sample: u64,
    /// Arc length of the equidistribution calibration; skipped when zero.
    #[serde(default)]
    pub calibration_arc: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn push(out: &mut Vec<Violation>, field: &str, message: impl Into<String>) {
    out.push(Violation {
        field: field.to_string(),
        message: message.into(),
    });
}

impl ExperimentConfig {
    pub fn seed(&self) -> u64 {
        self.seed.expect("validated configs carry a seed")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Every violated constraint, empty for a usable config.
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.seed.is_none() {
            push(&mut v, "seed", "seed is required");
        }
        if self.dimension == 0 {
            push(&mut v, "dimension", "dimension must be ≥ 1");
        }
        match &self.operator {
            OperatorKind::ScaledBackwardShift { weight } if !(*weight > 1.0 && weight.is_finite()) => {
                push(&mut v, "operator.weight", "weight must be finite and > 1");
            }
            OperatorKind::PerturbedDiagonal { angles, epsilon } => {
                if angles.len() != self.dimension {
                    push(&mut v, "operator.angles", "need one angle per dimension");
                }
                if !(*epsilon >= 0.0) {
                    push(&mut v, "operator.epsilon", "epsilon must be ≥ 0");
                }
            }
            _ => {}
        }
        if self.family.samples == 0 {
            push(&mut v, "family.samples", "sample count must be ≥ 1");
        }
        let two_b = matches!(self.operator, OperatorKind::ScaledBackwardShift { .. });
        if self.family.field == FieldKind::SqrtPrime2b && !two_b {
            push(&mut v, "family.field", "sqrt_prime_2b needs a scaled_backward_shift operator");
        }
        if self.family.field == FieldKind::Diagonal
            && !matches!(self.operator, OperatorKind::PerturbedDiagonal { .. })
        {
            push(&mut v, "family.field", "diagonal needs a perturbed_diagonal operator");
        }
        if let Some(k) = &self.khinchine {
            if k.coefficients.is_empty() && k.equal == 0 {
                push(&mut v, "khinchine", "give coefficients or a positive equal count");
            }
            if k.trials < crate::steinhaus::MIN_KHINCHINE_TRIALS {
                push(&mut v, "khinchine.trials", "need at least 1000 trials");
            }
            if let Some([lo, hi]) = k.band {
                if !(lo >= 0.0 && lo < hi) {
                    push(&mut v, "khinchine.band", "band must satisfy 0 ≤ lo < hi");
                }
            }
        }
        if let Some(e) = &self.ergodicity {
            if e.c.is_empty() || e.c.len() != e.angles.len() {
                push(&mut v, "ergodicity.c", "need one coefficient per angle, at least one");
            }
            if e.horizon < crate::ergodicity::MIN_WITNESS_HORIZON {
                push(&mut v, "ergodicity.horizon", "horizon must be ≥ 1000");
            }
            if !(e.eps > 0.0) {
                push(&mut v, "ergodicity.eps", "tolerance must be positive");
            }
            if !(e.delta > 0.0) {
                push(&mut v, "ergodicity.delta", "tolerance must be positive");
            }
            if e.mc_trials > 0 && !two_b {
                push(&mut v, "ergodicity.mc_trials", "the Monte Carlo check runs on a scaled_backward_shift");
            }
            if e.mc_trials == 1 {
                push(&mut v, "ergodicity.mc_trials", "need at least 2 trials");
            }
        }
        if let Some(d) = &self.diophantine {
            if d.angles.is_empty() {
                push(&mut v, "diophantine.angles", "at least one angle is required");
            }
            if !(d.eta > 0.0 && d.eta < 2.0) {
                push(&mut v, "diophantine.eta", "tolerance must lie in (0, 2)");
            }
            if d.grid == 0 {
                push(&mut v, "diophantine.grid", "grid must be ≥ 1");
            }
            if d.p_max == 0 {
                push(&mut v, "diophantine.p_max", "p_max must be ≥ 1");
            }
            if d.syndetic_eta != 0.0 {
                if !(d.syndetic_eta > 0.0 && d.syndetic_eta < 2.0) {
                    push(&mut v, "diophantine.syndetic_eta", "tolerance must lie in (0, 2)");
                }
                if d.syndetic_horizon < 1000 {
                    push(&mut v, "diophantine.syndetic_horizon", "horizon must be ≥ 1000");
                }
            }
        }
        if self.cantor.is_some() && self.family.field != FieldKind::SqrtPrime2b {
            push(&mut v, "cantor", "the Cantor field grows over a sqrt_prime_2b family");
        }
        if let Some(c) = &self.cantor {
            if c.root >= self.family.samples {
                push(&mut v, "cantor.root", "root index outside the family");
            }
        }
        if let Some(c) = &self.construct {
            if c.blocks.is_empty() {
                push(&mut v, "construct.blocks", "at least one block is required");
            }
            for (i, b) in c.blocks.iter().enumerate() {
                if !(b.radius > 0.0) {
                    push(&mut v, &format!("construct.blocks[{i}].radius"), "radius must be positive");
                }
                if b.atoms.is_empty() || b.atoms.len() != b.coeffs.len() {
                    push(&mut v, &format!("construct.blocks[{i}]"), "need one coefficient per atom");
                }
                if b.atoms.iter().any(|&a| a >= self.family.samples) {
                    push(&mut v, &format!("construct.blocks[{i}].atoms"), "atom outside the family");
                }
            }
            if c.max_fit_terms == 0 {
                push(&mut v, "construct.max_fit_terms", "must be ≥ 1");
            }
            if c.mc_trials < 2 {
                push(&mut v, "construct.mc_trials", "need at least 2 trials");
            }
            if c.visit_samples == 0 {
                push(&mut v, "construct.visit_samples", "need at least one sample");
            }
        }
        if let Some(d) = &self.density {
            if self.construct.is_none() {
                push(&mut v, "density", "the density pipeline follows a construct pipeline");
            }
            if d.horizon == 0 {
                push(&mut v, "density.horizon", "horizon must be ≥ 1");
            }
            if !(0.0..1.0).contains(&d.calibration_arc) {
                push(&mut v, "density.calibration_arc", "arc length must lie in [0, 1)");
            }
        }
        v
    }
}

/// Parses and checks a config. Syntax and type errors come back as a
/// single violation carrying the parser's line and column.
pub fn validate_config(text: &str) -> std::result::Result<ExperimentConfig, Vec<Violation>> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let field = match e.span() {
            Some(span) => {
                let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                format!("line {line}")
            }
            None => "config".to_string(),
        };
        vec![Violation {
            field,
            message: e.message().to_string(),
        }]
    })?;
    let v = cfg.violations();
    if v.is_empty() {
        Ok(cfg)
    } else {
        Err(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 11
dimension = 16

[operator]
kind = "scaled_backward_shift"
weight = 2.0

[family]
field = "sqrt_prime_2b"
samples = 64

[khinchine]
equal = 4
trials = 2000
"#;

    #[test]
    fn sample_round_trips() {
        let cfg = validate_config(SAMPLE).unwrap();
        let again = validate_config(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.seed(), 11);
    }

    #[test]
    fn empty_file_is_rejected() {
        assert!(!validate_config("").unwrap_err().is_empty());
    }

    #[test]
    fn zero_dimension_and_missing_seed_are_both_reported() {
        let text = SAMPLE.replace("seed = 11\n", "").replace("dimension = 16", "dimension = 0");
        let v = validate_config(&text).unwrap_err();
        assert!(v.iter().any(|x| x.message == "dimension must be ≥ 1"));
        assert!(v.iter().any(|x| x.field == "seed"));
    }

    #[test]
    fn unknown_keys_name_the_line() {
        let text = SAMPLE.replace("trials = 2000", "trials = 2000\ntrails = 3");
        let v = validate_config(&text).unwrap_err();
        assert!(v[0].field.starts_with("line "), "{v:?}");
    }
}
