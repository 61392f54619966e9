use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm1;

/// Convex regularizer Ω.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularizer {
    #[default]
    None,
    /// `λ‖x‖₁`
    L1 { lambda: f64 },
}

impl Regularizer {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Regularizer::None => Ok(()),
            Regularizer::L1 { lambda } if lambda >= 0.0 && lambda.is_finite() => Ok(()),
            Regularizer::L1 { lambda } => Err(Error::Usage(format!(
                "l1 weight must be finite and >= 0, got {lambda}"
            ))),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            Regularizer::None => 0.0,
            Regularizer::L1 { lambda } => lambda * norm1(x),
        }
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            Regularizer::None => 0.0,
            Regularizer::L1 { lambda } => lambda,
        }
    }

    /// In-place proximal map with step `t`.
    pub fn prox_in_place(&self, v: &mut [f64], t: f64) {
        if let Regularizer::L1 { lambda } = *self {
            let thr = t * lambda;
            if thr > 0.0 {
                for vi in v.iter_mut() {
                    let mag = vi.abs() - thr;
                    *vi = if mag > 0.0 { mag.copysign(*vi) } else { 0.0 };
                }
            }
        }
    }
}

/// `none`, `l1:<lambda>`
impl FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("none") {
            return Ok(Regularizer::None);
        }
        if let Some(rest) = s.strip_prefix("l1:") {
            let lambda: f64 = rest
                .parse()
                .map_err(|_| Error::Usage(format!("cannot parse l1 weight {rest:?}")))?;
            let reg = Regularizer::L1 { lambda };
            reg.validate()?;
            return Ok(reg);
        }
        Err(Error::Usage(format!(
            "unknown regularizer {s:?} (expected none or l1:<lambda>)"
        )))
    }
}

/// Proximal map of `t·Ω` at `v`.
pub fn prox(reg: &Regularizer, v: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::Usage(format!("prox step must be >= 0, got {t}")));
    }
    reg.validate()?;
    let mut out = v.to_vec();
    reg.prox_in_place(&mut out, t);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn soft_threshold_examples() {
        let l1 = Regularizer::L1 { lambda: 1.0 };
        assert_eq!(prox(&l1, &[3.0, -0.5], 1.0).unwrap(), vec![2.0, 0.0]);
        assert_eq!(prox(&l1, &[3.0, -0.5], 0.0).unwrap(), vec![3.0, -0.5]);
        assert_eq!(prox(&Regularizer::None, &[3.0, -0.5], 7.0).unwrap(), vec![3.0, -0.5]);
        assert!(prox(&l1, &[1.0], -1.0).is_err());
    }

    #[test]
    fn parses_cli_syntax() {
        assert_eq!("none".parse::<Regularizer>().unwrap(), Regularizer::None);
        assert_eq!(
            "l1:0.1".parse::<Regularizer>().unwrap(),
            Regularizer::L1 { lambda: 0.1 }
        );
        assert!("l1:-1".parse::<Regularizer>().is_err());
        assert!("l2:1".parse::<Regularizer>().is_err());
    }

    proptest! {
        #[test]
        fn prox_is_nonexpansive(
            u in prop::collection::vec(-10.0f64..10.0, 6),
            v in prop::collection::vec(-10.0f64..10.0, 6),
            lambda in 0.0f64..3.0,
            t in 0.0f64..2.0,
        ) {
            let reg = Regularizer::L1 { lambda };
            let pu = prox(&reg, &u, t).unwrap();
            let pv = prox(&reg, &v, t).unwrap();
            prop_assert!(crate::linalg::dist2(&pu, &pv) <= crate::linalg::dist2(&u, &v) + 1e-12);
        }
    }
}
