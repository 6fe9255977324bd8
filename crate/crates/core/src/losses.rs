//! Reconstruction and adversarial objectives.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_LAMBDA_DCP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdvForm {
    Hinge,
    NonSaturating,
}

impl std::str::FromStr for AdvForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hinge" => Ok(AdvForm::Hinge),
            "non-saturating" | "nonsaturating" => Ok(AdvForm::NonSaturating),
            _ => Err(Error::Invalid(format!(
                "unknown adversarial loss `{s}` (expected hinge or non-saturating)"
            ))),
        }
    }
}

/// Mean of `1 - <gt, pred>` over valid pixels. Both fields are `[b, 3, h, w]`;
/// `mask` has one entry per `(b, y, x)`.
pub fn reconstruction<T: Scalar>(g: &mut Graph<T>, pred: Var, gt: &Tensor<T>, mask: Option<&[bool]>) -> Result<Var> {
    g.normal_loss(pred, gt, mask)
}

/// Discriminator objective on `[b, 1]` scores.
pub fn disc_loss<T: Scalar>(g: &mut Graph<T>, real: Var, fake: Var, form: AdvForm) -> Var {
    match form {
        AdvForm::Hinge => {
            let r = g.affine(real, -1.0, 1.0);
            let r = g.relu(r);
            let r = g.mean(r);
            let f = g.affine(fake, 1.0, 1.0);
            let f = g.relu(f);
            let f = g.mean(f);
            g.add(r, f).expect("scalars")
        }
        AdvForm::NonSaturating => {
            let r = g.affine(real, -1.0, 0.0);
            let r = g.softplus(r);
            let r = g.mean(r);
            let f = g.softplus(fake);
            let f = g.mean(f);
            g.add(r, f).expect("scalars")
        }
    }
}

/// Generator objective on the discriminator's scores for generated maps.
pub fn gen_loss<T: Scalar>(g: &mut Graph<T>, fake: Var, form: AdvForm) -> Var {
    match form {
        AdvForm::Hinge => {
            let m = g.mean(fake);
            g.affine(m, -1.0, 0.0)
        }
        AdvForm::NonSaturating => {
            let f = g.affine(fake, -1.0, 0.0);
            let f = g.softplus(f);
            g.mean(f)
        }
    }
}

/// `normal + lambda * adv`.
pub fn stage1_total<T: Scalar>(g: &mut Graph<T>, normal: Var, adv: Var, lambda: f64) -> Result<Var> {
    let weighted = g.affine(adv, lambda, 0.0);
    g.add(normal, weighted)
}

/// Scalar loss values logged per iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    pub normal: f64,
    pub adv: f64,
    pub total: f64,
    pub lambda_dcp: f64,
}

impl LossReport {
    pub fn stage1(normal: f64, adv: f64, lambda_dcp: f64) -> Self {
        LossReport {
            normal,
            adv,
            total: normal + lambda_dcp * adv,
            lambda_dcp,
        }
    }

    /// Refinement uses the reconstruction term only.
    pub fn stage2(normal: f64) -> Self {
        LossReport {
            normal,
            adv: 0.0,
            total: normal,
            lambda_dcp: 0.0,
        }
    }
}
