//! Method selection shared by the library entry points and the command line.

use std::fmt;
use std::str::FromStr;

use crate::butcher::Scheme;
use crate::disc_expm::discretize_expm;
use crate::disc_ode::discretize_ode;
use crate::disc_sqr::discretize_step_doubling;
use crate::error::{Error, Result};
use crate::model::{ContinuousLqModel, DiscreteLqModel};

/// `ode:<scheme>`, `expm` or `sqr:<scheme>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ode(Scheme),
    Expm,
    Sqr(Scheme),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Ode(s) => write!(f, "ode:{s}"),
            Method::Expm => f.write_str("expm"),
            Method::Sqr(s) => write!(f, "sqr:{s}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "expm" {
            return Ok(Method::Expm);
        }
        match s.split_once(':') {
            Some(("ode", sc)) => Ok(Method::Ode(sc.parse()?)),
            Some(("sqr", sc)) => Ok(Method::Sqr(sc.parse()?)),
            _ => Err(Error::InvalidArgument(format!(
                "unknown method '{s}' (expected ode:<scheme>, expm or sqr:<scheme>)"
            ))),
        }
    }
}

/// Doubling count for `steps`, which must be a power of two.
pub fn doublings_for(steps: usize) -> Result<usize> {
    if steps == 0 || !steps.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "step-doubling needs a power-of-two step count, got {steps}"
        )));
    }
    Ok(steps.trailing_zeros() as usize)
}

/// Discretize with `steps` fixed steps (ignored by `expm`).
pub fn discretize(model: &ContinuousLqModel, method: Method, steps: usize) -> Result<DiscreteLqModel> {
    match method {
        Method::Ode(sc) => discretize_ode(model, sc, steps),
        Method::Expm => discretize_expm(model),
        Method::Sqr(sc) => discretize_step_doubling(model, sc, doublings_for(steps)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_print() {
        for s in ["expm", "ode:classic_rk4", "sqr:esdirk34", "ode:implicit_trapezoidal"] {
            assert_eq!(s.parse::<Method>().unwrap().to_string(), s);
        }
        for bad in ["", "ode", "ode:", "rk4", "sqr:classic", "expm:classic_rk4"] {
            assert!(bad.parse::<Method>().is_err(), "{bad}");
        }
    }

    #[test]
    fn power_of_two_steps() {
        assert_eq!(doublings_for(1).unwrap(), 0);
        assert_eq!(doublings_for(256).unwrap(), 8);
        assert!(doublings_for(0).is_err());
        assert!(doublings_for(12).is_err());
    }
}
