//! Focal loss and its salience-sensitive variant.
//!
//! For the probability `p_t` assigned to the true class,
//!
//! ```text
//! FL(p_t)  = -alpha * (1 - p_t)^gamma * ln(p_t)
//! SFL(p_t) = -alpha * omega * (1 - p_t)^gamma * ln(p_t)
//! ```
//!
//! where `omega > 1` applies when the candidate's nearest ground truth is
//! salient and `omega = 1` otherwise. Candidates are scored with a sigmoid, so
//! `p_t = sigmoid(z)` for object targets and `1 - sigmoid(z)` for background.

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossParams {
    /// Balance weight, `> 0`.
    pub alpha: f64,
    /// Focusing exponent, `>= 0`.
    pub gamma: f64,
    /// Salience weight, `>= 1`.
    pub omega: f64,
    /// Lower clamp for `p_t`, in `(0, 1e-6]`.
    pub epsilon: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 2.0,
            omega: 4.0,
            epsilon: 1e-12,
        }
    }
}

impl LossParams {
    pub fn check(&self) -> Result<()> {
        let fields = [self.alpha, self.gamma, self.omega, self.epsilon];
        if !fields.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("loss parameter"));
        }
        if self.alpha <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if self.gamma < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if self.omega < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "omega must be >= 1, got {}",
                self.omega
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1e-6) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be in (0, 1e-6], got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Multiplier applied for a candidate whose nearest ground truth has the
    /// given salience.
    pub fn weight(&self, salient: bool) -> f64 {
        if salient {
            self.omega
        } else {
            1.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassLabel {
    Object,
    Background,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClassTarget {
    pub label: ClassLabel,
    /// Salience of the nearest ground truth; false when there is none.
    pub salient: bool,
}

impl ClassTarget {
    pub fn new(label: ClassLabel, salient: bool) -> Self {
        Self { label, salient }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn focal_loss(p_t: f64, params: &LossParams) -> Result<f64> {
    if !p_t.is_finite() {
        return Err(Error::NonFinite("probability"));
    }
    let p = p_t.clamp(params.epsilon, 1.0);
    // `0.0 - ln(1)` is +0, keeping the result non-negative in sign too.
    let nll = 0.0 - p.ln();
    Ok(params.alpha * (1.0 - p).powf(params.gamma) * nll)
}

pub fn salience_focal_loss(p_t: f64, salient: bool, params: &LossParams) -> Result<f64> {
    Ok(params.weight(salient) * focal_loss(p_t, params)?)
}

/// Salience-sensitive focal loss of a sigmoid logit and its derivative.
///
/// With `q = 1 - p_t` and `s = +1` for object targets, `-1` for background:
///
/// ```text
/// dSFL/dz = s * alpha * omega_t * q^gamma * (gamma * p_t * ln(p_t) - q)
/// ```
///
/// The derivative is zero where the `epsilon` clamp is active.
pub fn focal_grad_logit(
    logit: f64,
    target: ClassTarget,
    params: &LossParams,
) -> Result<(f64, f64)> {
    if !logit.is_finite() {
        return Err(Error::NonFinite("logit"));
    }
    let (sign, z) = match target.label {
        ClassLabel::Object => (1.0, logit),
        ClassLabel::Background => (-1.0, -logit),
    };
    // p_t = sigmoid(z), q = sigmoid(-z), computed without cancellation.
    let log_p = -softplus(-z);
    let p = log_p.exp();
    let q = sigmoid(-z);
    let w = params.alpha * params.weight(target.salient);
    if p < params.epsilon {
        let e = params.epsilon;
        return Ok((w * (1.0 - e).powf(params.gamma) * -e.ln(), 0.0));
    }
    let q_gamma = q.powf(params.gamma);
    let loss = w * q_gamma * (0.0 - log_p);
    let grad = sign * w * q_gamma * (params.gamma * p * log_p - q);
    Ok((loss, grad))
}

/// Sum of absolute coordinate differences and its subgradient with respect to
/// the predicted coordinates (sign of the difference, 0 at equality).
pub fn box_l1_loss(pred: &BBox, gt: &BBox) -> (f64, [f64; 4]) {
    let (p, g) = (pred.coords(), gt.coords());
    let mut loss = 0.0;
    let mut grad = [0.0; 4];
    for i in 0..4 {
        let d = p[i] - g[i];
        loss += d.abs();
        grad[i] = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        };
    }
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(alpha: f64, gamma: f64, omega: f64) -> LossParams {
        LossParams {
            alpha,
            gamma,
            omega,
            ..LossParams::default()
        }
    }

    #[test]
    fn focal_examples() {
        let p = params(0.25, 2.0, 4.0);
        assert_eq!(focal_loss(1.0, &p).unwrap(), 0.0);
        // alpha = 1, gamma = 0 reduces to cross-entropy
        assert!(
            (focal_loss(0.5, &params(1.0, 0.0, 1.0)).unwrap() - std::f64::consts::LN_2).abs()
                < 1e-12
        );
        // 0.25 * 0.1^2 * -ln(0.9)
        let expect = 0.25 * 0.01 * 0.105_360_515_657_826_3;
        assert!((focal_loss(0.9, &p).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 2.634e-4).abs() < 1e-7);
    }

    #[test]
    fn salience_examples() {
        let p = params(0.25, 2.0, 4.0);
        let fl = focal_loss(0.9, &p).unwrap();
        let sfl = salience_focal_loss(0.9, true, &p).unwrap();
        assert_eq!(sfl, 4.0 * fl);
        assert!((sfl - 1.0536e-3).abs() < 1e-7);
        assert_eq!(salience_focal_loss(0.9, false, &p).unwrap(), fl);
        let p1 = params(0.25, 2.0, 1.0);
        assert_eq!(
            salience_focal_loss(0.9, true, &p1).unwrap(),
            focal_loss(0.9, &p1).unwrap()
        );
    }

    #[test]
    fn clamp_and_non_finite() {
        let p = LossParams::default();
        let floor = focal_loss(p.epsilon, &p).unwrap();
        assert_eq!(focal_loss(0.0, &p).unwrap(), floor);
        assert!(floor.is_finite() && floor > 0.0);
        assert!(matches!(focal_loss(f64::NAN, &p), Err(Error::NonFinite(_))));
        let t = ClassTarget::new(ClassLabel::Object, false);
        assert!(matches!(
            focal_grad_logit(f64::INFINITY, t, &p),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn cross_entropy_gradient_at_zero() {
        let t = ClassTarget::new(ClassLabel::Object, false);
        let (l, g) = focal_grad_logit(0.0, t, &params(1.0, 0.0, 1.0)).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((g + 0.5).abs() < 1e-15);
    }

    #[test]
    fn saturated_correct_prediction() {
        let p = LossParams::default();
        let (l, g) =
            focal_grad_logit(20.0, ClassTarget::new(ClassLabel::Object, true), &p).unwrap();
        assert!(l < 1e-20 && g.abs() < 1e-20);
        let (l, g) =
            focal_grad_logit(-20.0, ClassTarget::new(ClassLabel::Background, true), &p).unwrap();
        assert!(l < 1e-20 && g.abs() < 1e-20);
    }

    #[test]
    fn params_check() {
        assert!(LossParams::default().check().is_ok());
        assert!(params(0.0, 2.0, 4.0).check().is_err());
        assert!(params(0.25, -1.0, 4.0).check().is_err());
        assert!(params(0.25, 2.0, 0.5).check().is_err());
        assert!(LossParams {
            epsilon: 1e-3,
            ..LossParams::default()
        }
        .check()
        .is_err());
        assert!(params(f64::NAN, 2.0, 4.0).check().is_err());
    }

    #[test]
    fn box_l1_examples() {
        let gt = BBox::new(1.0, 2.0, 3.0, 4.0);
        assert_eq!(box_l1_loss(&gt, &gt), (0.0, [0.0; 4]));
        let pred = BBox::new(2.0, 2.0, 3.0, 4.0);
        assert_eq!(box_l1_loss(&pred, &gt), (1.0, [1.0, 0.0, 0.0, 0.0]));
    }

    fn arb_params() -> impl Strategy<Value = LossParams> {
        (0.01f64..2.0, 0.0f64..5.0, 1.0f64..10.0).prop_map(|(a, g, o)| params(a, g, o))
    }

    proptest! {
        #[test]
        fn focal_is_strictly_decreasing(p in arb_params(), a in 1e-6f64..0.999, b in 1e-6f64..0.999) {
            prop_assume!((a - b).abs() > 1e-9);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(focal_loss(lo, &p).unwrap() > focal_loss(hi, &p).unwrap());
        }

        #[test]
        fn higher_gamma_downweights_easy_examples(p in arb_params(), pt in 0.51f64..0.999, extra in 0.1f64..3.0) {
            let harder = LossParams { gamma: p.gamma + extra, ..p };
            prop_assert!(focal_loss(pt, &harder).unwrap() < focal_loss(pt, &p).unwrap());
        }

        #[test]
        fn losses_are_non_negative(p in arb_params(), pt in 0.0f64..=1.0, s in any::<bool>()) {
            prop_assert!(focal_loss(pt, &p).unwrap() >= 0.0);
            prop_assert!(salience_focal_loss(pt, s, &p).unwrap() >= 0.0);
        }

        #[test]
        fn box_l1_gradient_matches_finite_differences(
            a in prop::array::uniform4(0.0f64..10.0),
            g in prop::array::uniform4(0.0f64..10.0),
        ) {
            let h = 1e-5;
            let gt = BBox::from_coords(g);
            let (_, grad) = box_l1_loss(&BBox::from_coords(a), &gt);
            for i in 0..4 {
                prop_assume!((a[i] - g[i]).abs() > 1e-3);
                let (mut up, mut dn) = (a, a);
                up[i] += h;
                dn[i] -= h;
                let fd = (box_l1_loss(&BBox::from_coords(up), &gt).0
                    - box_l1_loss(&BBox::from_coords(dn), &gt).0) / (2.0 * h);
                prop_assert!((fd - grad[i]).abs() < 1e-6);
            }
        }
    }
}
