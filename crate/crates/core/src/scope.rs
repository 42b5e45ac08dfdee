use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Log-domain slack applied toward inclusion whenever a solution probability
/// is compared with a threshold.
pub const LOG_SLACK: f64 = 1e-9;

/// `ps ≥ threshold`, with [`LOG_SLACK`] toward inclusion.
#[inline]
pub fn admits(log_ps: f64, threshold: f64) -> bool {
    log_ps >= threshold - LOG_SLACK
}

/// Which program units and probabilities a table or threshold belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scope {
    Global,
    PerSubset(usize),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Global => f.write_str("global"),
            Scope::PerSubset(id) => write!(f, "is:{id}"),
        }
    }
}

impl FromStr for Scope {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "global" {
            return Ok(Scope::Global);
        }
        s.strip_prefix("is:")
            .and_then(|n| n.parse().ok())
            .map(Scope::PerSubset)
            .ok_or_else(|| format!("invalid scope {s:?}"))
    }
}

/// Fixed decimal rendering with 12 significant digits.
///
/// Infinities render as `inf`/`-inf`; zero (of either sign) as `0`.
pub fn fmt_sig12(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // round first so that e.g. 9.99999999999996 lands on the right exponent
    let sci = format!("{:.11e}", x);
    let exp: i32 = sci.split_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    let decimals = (11 - exp).max(0) as usize;
    let s = format!("{:.*}", decimals, x);
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        if t == "-0" {
            "0".into()
        } else {
            t.to_string()
        }
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scope_round_trip() {
        for s in [Scope::Global, Scope::PerSubset(0), Scope::PerSubset(42)] {
            assert_eq!(s.to_string().parse::<Scope>().unwrap(), s);
        }
        assert!("is:x".parse::<Scope>().is_err());
    }

    #[test]
    fn sig12_rendering() {
        assert_eq!(fmt_sig12(0.0), "0");
        assert_eq!(fmt_sig12(-0.0), "0");
        assert_eq!(fmt_sig12(1.0), "1");
        assert_eq!(fmt_sig12(0.25f64.log10()), "-0.602059991328");
        assert_eq!(fmt_sig12(-123.456_789_012_345_7), "-123.456789012");
        assert_eq!(fmt_sig12(2.0f64.log10() * 2.0), "0.602059991328");
        assert_eq!(fmt_sig12(f64::INFINITY), "inf");
        assert_eq!(fmt_sig12(1e15), "1000000000000000");
        assert_eq!(fmt_sig12(9.999999999999996), "10");
    }

    #[test]
    fn slack_is_inclusive() {
        assert!(admits(-1.0, -1.0));
        assert!(admits(-1.0 - 1e-12, -1.0));
        assert!(!admits(-1.0 - 1e-6, -1.0));
    }
}
