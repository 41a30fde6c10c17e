//! Pixel-mean losses on saliency maps and their gradients.

use std::fmt;
use std::hash::Hasher;
use std::str::FromStr;

use super::model::sigmoid;
use super::NnError;
use crate::saliency::SaliencyMap;
use crate::Real;

/// Probability clamp for binary cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Bce,
    L1,
    Mse,
}

impl Loss {
    pub const ALL: [Loss; 3] = [Loss::Bce, Loss::L1, Loss::Mse];

    pub fn name(self) -> &'static str {
        match self {
            Loss::Bce => "bce",
            Loss::L1 => "l1",
            Loss::Mse => "mse",
        }
    }

    fn point<T: Real>(self, g: T, p: T) -> T {
        match self {
            Loss::Bce => {
                let eps = T::of(BCE_EPS);
                let p = p.max(eps).min(T::one() - eps);
                -(g * p.ln()) - (T::one() - g) * (T::one() - p).ln()
            }
            Loss::L1 => (g - p).abs(),
            Loss::Mse => (g - p) * (g - p),
        }
    }

    /// Derivative of the pointwise loss with respect to the prediction.
    fn point_grad<T: Real>(self, g: T, p: T) -> T {
        match self {
            Loss::Bce => {
                let eps = T::of(BCE_EPS);
                if p < eps || p > T::one() - eps {
                    T::zero()
                } else {
                    (T::one() - g) / (T::one() - p) - g / p
                }
            }
            Loss::L1 => {
                if p > g {
                    T::one()
                } else if p < g {
                    -T::one()
                } else {
                    T::zero()
                }
            }
            Loss::Mse => T::of(2.0) * (p - g),
        }
    }

    /// Pixel mean of the pointwise loss.
    pub fn value<T: Real>(self, gt: &[T], pred: &[T]) -> f64 {
        assert_eq!(gt.len(), pred.len());
        let sum: f64 = gt.iter().zip(pred).map(|(&g, &p)| self.point(g, p).f64()).sum();
        sum / gt.len() as f64
    }

    /// Loss of `sigmoid(logits)` against `gt` and its gradient with respect to the logits.
    pub fn value_and_logit_grad<T: Real>(self, gt: &[T], logits: &[T]) -> (f64, Vec<T>) {
        assert_eq!(gt.len(), logits.len());
        let n = T::of(gt.len() as f64);
        let mut sum = 0.0;
        let grad = gt
            .iter()
            .zip(logits)
            .map(|(&g, &z)| {
                let p = sigmoid(z);
                sum += self.point(g, p).f64();
                self.point_grad(g, p) * p * (T::one() - p) / n
            })
            .collect();
        (sum / gt.len() as f64, grad)
    }

    /// Hash of the pointwise branch each pixel takes: the sign of the
    /// residual for L1, the clamp state for BCE.
    pub fn branch_pattern<T: Real, H: Hasher>(self, gt: &[T], logits: &[T], state: &mut H) {
        let eps = T::of(BCE_EPS);
        for (&g, &z) in gt.iter().zip(logits) {
            let p = sigmoid(z);
            let branch: u8 = match self {
                Loss::Bce => u8::from(p < eps) + 2 * u8::from(p > T::one() - eps),
                Loss::L1 => u8::from(p > g) + 2 * u8::from(p < g),
                Loss::Mse => 0,
            };
            state.write_u8(branch);
        }
    }

    pub fn between<T: Real>(self, gt: &SaliencyMap<T>, pred: &SaliencyMap<T>) -> Result<f64, NnError> {
        if gt.same_dims(pred).is_err() {
            return Err(NnError::DimensionMismatch {
                expected: gt.width() * gt.height(),
                got: pred.width() * pred.height(),
            });
        }
        Ok(self.value(gt.values(), pred.values()))
    }
}

pub fn loss_bce<T: Real>(gt: &SaliencyMap<T>, pred: &SaliencyMap<T>) -> Result<f64, NnError> {
    Loss::Bce.between(gt, pred)
}

pub fn loss_l1<T: Real>(gt: &SaliencyMap<T>, pred: &SaliencyMap<T>) -> Result<f64, NnError> {
    Loss::L1.between(gt, pred)
}

pub fn loss_mse<T: Real>(gt: &SaliencyMap<T>, pred: &SaliencyMap<T>) -> Result<f64, NnError> {
    Loss::Mse.between(gt, pred)
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Loss {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Loss::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown loss `{s}` (expected bce, l1 or mse)"))
    }
}
