//! Byzantine gradient crafting.
//!
//! The adversary is omniscient: each round it sees every honest gradient
//! (and the current global parameters) before producing the `f` malicious
//! submissions. Byzantine nodes occupy the last `f` node indices.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{rng_for, TAG_SEESAW};
use crate::vecmath::{self, common_dim, GradientVector, VecMathError};

pub const DEFAULT_LIMITED_NORM_EPSILON: f64 = 1.0;
pub const DEFAULT_SEESAW_EPSILON: f64 = 1e-3;
pub const DEFAULT_SIGN_FLIP_C: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("epsilon must be finite and >= 0, got {0}")]
    InvalidEpsilon(f64),
    #[error("amplification c must be finite and > 0, got {0}")]
    InvalidAmplification(f64),
    #[error("target_dim {target_dim} out of range for dimension {dim}")]
    TargetDimOutOfRange { target_dim: usize, dim: usize },
    #[error("attack needs at least one Byzantine node")]
    NoByzantineNodes,
    #[error(transparent)]
    Vector(#[from] VecMathError),
}

/// How the seesaw attack picks its reference gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeesawReference {
    /// The honest gradient nearest the geometric median of all honest gradients.
    #[default]
    GeometricMedianMedoid,
    /// The coordinate-wise median (generally not one of the honest gradients).
    CoordinateMedian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum AttackSpec {
    /// No adversary; Byzantine-slot nodes behave honestly.
    #[default]
    None,
    /// Honest mean shifted by `epsilon` on coordinate `target_dim`; all
    /// malicious copies identical.
    LimitedNorm {
        #[serde(default = "default_limited_epsilon")]
        epsilon: f64,
        #[serde(default)]
        target_dim: usize,
    },
    /// Near-identical copies of a median-like honest reference.
    Seesaw {
        /// Perturbation bound relative to `1 + ||reference||`.
        #[serde(default = "default_seesaw_epsilon")]
        epsilon: f64,
        #[serde(default)]
        reference: SeesawReference,
    },
    /// `-c` times the honest mean.
    SignFlip {
        #[serde(default = "default_sign_flip_c")]
        c: f64,
    },
}

fn default_limited_epsilon() -> f64 {
    DEFAULT_LIMITED_NORM_EPSILON
}

fn default_seesaw_epsilon() -> f64 {
    DEFAULT_SEESAW_EPSILON
}

fn default_sign_flip_c() -> f64 {
    DEFAULT_SIGN_FLIP_C
}

impl AttackSpec {
    pub fn limited_norm() -> Self {
        AttackSpec::LimitedNorm { epsilon: DEFAULT_LIMITED_NORM_EPSILON, target_dim: 0 }
    }

    pub fn seesaw() -> Self {
        AttackSpec::Seesaw { epsilon: DEFAULT_SEESAW_EPSILON, reference: SeesawReference::default() }
    }

    pub fn sign_flip(c: f64) -> Self {
        AttackSpec::SignFlip { c }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AttackSpec::None => "none",
            AttackSpec::LimitedNorm { .. } => "limited_norm",
            AttackSpec::Seesaw { .. } => "seesaw",
            AttackSpec::SignFlip { .. } => "sign_flip",
        }
    }

    /// Parses a strategy name into the strategy with default parameters.
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "none" => AttackSpec::None,
            "limited_norm" | "finite_norm" => AttackSpec::limited_norm(),
            "seesaw" => AttackSpec::seesaw(),
            "sign_flip" => AttackSpec::sign_flip(DEFAULT_SIGN_FLIP_C),
            _ => return None,
        })
    }

    pub fn is_none(&self) -> bool {
        matches!(self, AttackSpec::None)
    }

    /// Validates parameters against a gradient dimension.
    pub fn validate(&self, dim: usize) -> Result<(), AttackError> {
        match *self {
            AttackSpec::None => Ok(()),
            AttackSpec::LimitedNorm { epsilon, target_dim } => {
                check_epsilon(epsilon)?;
                if target_dim >= dim {
                    return Err(AttackError::TargetDimOutOfRange { target_dim, dim });
                }
                Ok(())
            }
            AttackSpec::Seesaw { epsilon, .. } => check_epsilon(epsilon),
            AttackSpec::SignFlip { c } => {
                if !c.is_finite() || c <= 0.0 {
                    return Err(AttackError::InvalidAmplification(c));
                }
                Ok(())
            }
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<(), AttackError> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(AttackError::InvalidEpsilon(epsilon));
    }
    Ok(())
}

/// Everything the adversary is allowed to see in one round.
#[derive(Debug, Clone, Copy)]
pub struct AdversaryView<'a> {
    /// The `n - f` honest submissions of this round, in node order.
    pub honest: &'a [GradientVector],
    /// Current global parameters.
    pub params: &'a [f64],
    pub round: u64,
    pub seed: u64,
}

/// Produces the `f` Byzantine submissions for `spec`. `AttackSpec::None`
/// yields an empty set.
pub fn craft(spec: &AttackSpec, view: &AdversaryView<'_>, f: usize) -> Result<Vec<GradientVector>, AttackError> {
    match *spec {
        AttackSpec::None => Ok(Vec::new()),
        AttackSpec::LimitedNorm { .. } => limited_norm_attack(view, spec, f),
        AttackSpec::Seesaw { .. } => seesaw_attack(view, spec, f),
        AttackSpec::SignFlip { .. } => sign_flip_attack(view, spec, f),
    }
}

fn preflight(view: &AdversaryView<'_>, spec: &AttackSpec, f: usize) -> Result<usize, AttackError> {
    if f == 0 {
        return Err(AttackError::NoByzantineNodes);
    }
    let dim = common_dim(view.honest)?;
    spec.validate(dim)?;
    Ok(dim)
}

pub fn limited_norm_attack(
    view: &AdversaryView<'_>,
    spec: &AttackSpec,
    f: usize,
) -> Result<Vec<GradientVector>, AttackError> {
    preflight(view, spec, f)?;
    let (epsilon, target_dim) = match *spec {
        AttackSpec::LimitedNorm { epsilon, target_dim } => (epsilon, target_dim),
        _ => (DEFAULT_LIMITED_NORM_EPSILON, 0),
    };
    let mut forged = vecmath::mean(view.honest)?.into_vec();
    forged[target_dim] += epsilon;
    let forged = GradientVector::new(forged)?;
    Ok(vec![forged; f])
}

/// The seesaw reference gradient and, in medoid mode, the index (within
/// `honest`) of the node that owns it.
pub fn seesaw_reference(
    honest: &[GradientVector],
    mode: SeesawReference,
) -> Result<(Option<usize>, GradientVector), AttackError> {
    match mode {
        SeesawReference::GeometricMedianMedoid => {
            let (owner, reference) = vecmath::medoid(honest)?;
            Ok((Some(owner), reference))
        }
        SeesawReference::CoordinateMedian => Ok((None, vecmath::coordinate_median(honest)?)),
    }
}

/// Each output is `reference + delta_i` with `delta_i` a Gaussian direction
/// scaled to `epsilon * (1 + ||reference||)`, seeded by
/// `(seed, round, i)`.
pub fn seesaw_attack(
    view: &AdversaryView<'_>,
    spec: &AttackSpec,
    f: usize,
) -> Result<Vec<GradientVector>, AttackError> {
    let dim = preflight(view, spec, f)?;
    let (epsilon, mode) = match *spec {
        AttackSpec::Seesaw { epsilon, reference } => (epsilon, reference),
        _ => (DEFAULT_SEESAW_EPSILON, SeesawReference::default()),
    };
    let (_, reference) = seesaw_reference(view.honest, mode)?;
    if epsilon == 0.0 {
        return Ok(vec![reference; f]);
    }
    // shrink a hair so rounding in reference + delta cannot exceed the bound
    let bound = epsilon * (1.0 + reference.norm()) * (1.0 - 1e-9);
    let mut direction = vec![0.0; dim];
    (0..f)
        .map(|replica| {
            let mut rng = rng_for(&[view.seed, view.round, replica as u64, TAG_SEESAW]);
            direction.iter_mut().for_each(|z| *z = StandardNormal.sample(&mut rng));
            let norm = direction.iter().map(|z| z * z).sum::<f64>().sqrt();
            let scale = if norm > 0.0 { bound / norm } else { 0.0 };
            let values = reference.as_slice().iter().zip(&direction).map(|(r, z)| r + scale * z).collect();
            GradientVector::new(values).map_err(AttackError::from)
        })
        .collect()
}

pub fn sign_flip_attack(
    view: &AdversaryView<'_>,
    spec: &AttackSpec,
    f: usize,
) -> Result<Vec<GradientVector>, AttackError> {
    preflight(view, spec, f)?;
    let c = match *spec {
        AttackSpec::SignFlip { c } => c,
        _ => DEFAULT_SIGN_FLIP_C,
    };
    let forged = vecmath::mean(view.honest)?.scaled(-c)?;
    Ok(vec![forged; f])
}
