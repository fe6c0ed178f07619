//! Strictly increasing speed functions `F: (0, ∞) → R` driving the flow
//! `∂_t u = F(e^{-f} det h)`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Number of log-spaced samples used when validating monotonicity.
const VALIDATION_SAMPLES: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub enum SpeedKind {
    /// `F = log ρ` (Kähler-Ricci flow).
    Log,
    /// `F = ρ`.
    Linear,
    /// `F = ρ^a`.
    Power { a: f64 },
    /// `F = 1 − 1/ρ`.
    InverseMa,
    /// `F = −scale · ρ^a`; increasing for `a < 0`.
    NegativePowerScaled { a: f64, scale: f64 },
    /// Laurent polynomial `Σ c_k ρ^k`.
    Custom { coeffs: Vec<(i32, f64)> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeedFunction {
    kind: SpeedKind,
    rho_min: f64,
}

impl SpeedFunction {
    pub fn new(kind: SpeedKind) -> Result<Self> {
        let finite = |x: f64, what: &str| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidSpeed(format!("{what} must be finite")))
            }
        };
        match &kind {
            SpeedKind::Power { a } => {
                finite(*a, "exponent")?;
                if *a == 0.0 {
                    return Err(Error::InvalidSpeed("exponent 0 gives a constant speed".into()));
                }
            }
            SpeedKind::NegativePowerScaled { a, scale } => {
                finite(*a, "exponent")?;
                finite(*scale, "scale")?;
                if *a == 0.0 || *scale == 0.0 {
                    return Err(Error::InvalidSpeed("degenerate scaled power gives a constant speed".into()));
                }
            }
            SpeedKind::Custom { coeffs } => {
                if coeffs.iter().all(|&(k, c)| k == 0 || c == 0.0) {
                    return Err(Error::InvalidSpeed("custom polynomial has no non-constant term".into()));
                }
                for &(_, c) in coeffs {
                    finite(c, "coefficient")?;
                }
            }
            _ => {}
        }
        Ok(SpeedFunction { kind, rho_min: f64::MIN_POSITIVE })
    }

    pub fn log() -> Self {
        Self::new(SpeedKind::Log).unwrap()
    }

    pub fn linear() -> Self {
        Self::new(SpeedKind::Linear).unwrap()
    }

    pub fn inverse_ma() -> Self {
        Self::new(SpeedKind::InverseMa).unwrap()
    }

    pub fn power(a: f64) -> Result<Self> {
        Self::new(SpeedKind::Power { a })
    }

    pub fn kind(&self) -> &SpeedKind {
        &self.kind
    }

    /// Tightens the domain guard; evaluations below `rho_min` are rejected.
    pub fn with_rho_min(mut self, rho_min: f64) -> Result<Self> {
        if !(rho_min > 0.0) {
            return Err(Error::InvalidSpeed(format!("rho_min must be positive, got {rho_min}")));
        }
        self.rho_min = rho_min;
        Ok(self)
    }

    fn guard(&self, rho: f64) -> Result<()> {
        if rho.is_nan() || rho <= 0.0 || rho < self.rho_min {
            return Err(Error::Domain { rho });
        }
        Ok(())
    }

    /// `(F, F', F'')` at `rho` without the parabolicity check.
    fn jet(&self, rho: f64) -> (f64, f64, f64) {
        match &self.kind {
            SpeedKind::Log => (rho.ln(), 1.0 / rho, -1.0 / (rho * rho)),
            SpeedKind::Linear => (rho, 1.0, 0.0),
            SpeedKind::Power { a } => power_jet(1.0, *a, rho),
            SpeedKind::InverseMa => (1.0 - 1.0 / rho, 1.0 / (rho * rho), -2.0 / (rho * rho * rho)),
            SpeedKind::NegativePowerScaled { a, scale } => power_jet(-scale, *a, rho),
            SpeedKind::Custom { coeffs } => coeffs.iter().fold((0.0, 0.0, 0.0), |acc, &(k, c)| {
                let (v, d, dd) = power_jet(c, k as f64, rho);
                (acc.0 + v, acc.1 + d, acc.2 + dd)
            }),
        }
    }

    pub fn eval(&self, rho: f64) -> Result<f64> {
        self.guard(rho)?;
        Ok(self.jet(rho).0)
    }

    /// Exact derivative; a non-positive value is a loss of parabolicity.
    pub fn deriv(&self, rho: f64) -> Result<f64> {
        self.guard(rho)?;
        let deriv = self.jet(rho).1;
        if !(deriv > 0.0) {
            return Err(Error::Parabolicity { rho, deriv });
        }
        Ok(deriv)
    }

    pub fn second_deriv(&self, rho: f64) -> Result<f64> {
        self.guard(rho)?;
        Ok(self.jet(rho).2)
    }

    /// Checks `F' > 0` and strict growth of `F` on `VALIDATION_SAMPLES`
    /// log-spaced points of `[lo, hi]`.
    pub fn validate_on(&self, lo: f64, hi: f64) -> Result<()> {
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::InvalidSpeed(format!("bad operating range [{lo}, {hi}]")));
        }
        let (llo, lhi) = (lo.ln(), hi.ln());
        let mut prev = f64::NEG_INFINITY;
        for i in 0..VALIDATION_SAMPLES {
            let s = i as f64 / (VALIDATION_SAMPLES - 1) as f64;
            let rho = (llo + s * (lhi - llo)).exp();
            self.deriv(rho)?;
            let value = self.eval(rho)?;
            if hi > lo && value <= prev {
                return Err(Error::InvalidSpeed(format!("F is not strictly increasing near rho = {rho:e}")));
            }
            prev = value;
        }
        Ok(())
    }
}

fn power_jet(coef: f64, a: f64, rho: f64) -> (f64, f64, f64) {
    if a == 0.0 {
        return (coef, 0.0, 0.0);
    }
    let v = coef * rho.powf(a);
    (v, a * v / rho, a * (a - 1.0) * v / (rho * rho))
}

/// Exponent `a = (n−2)β / (2n−2−nβ)` of the speed `±ρ^a` produced by the
/// conformally Kähler reduction of the modified zero-slope Anomaly flow.
pub fn beta_to_exponent(beta: f64, n: usize) -> Result<f64> {
    let nf = n as f64;
    let denom = 2.0 * nf - 2.0 - nf * beta;
    if denom == 0.0 || !beta.is_finite() {
        return Err(Error::SingularReduction { n, beta });
    }
    let a = (nf - 2.0) * beta / denom;
    if a == 0.0 {
        return Err(Error::InvalidSpeed(format!(
            "beta = {beta}, n = {n} gives exponent 0, a constant speed"
        )));
    }
    Ok(a)
}

impl fmt::Display for SpeedFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            SpeedKind::Log => write!(f, "log"),
            SpeedKind::Linear => write!(f, "linear"),
            SpeedKind::Power { a } => write!(f, "power:{a}"),
            SpeedKind::InverseMa => write!(f, "inverse_ma"),
            SpeedKind::NegativePowerScaled { a, scale } => write!(f, "negative_power:{a}:{scale}"),
            SpeedKind::Custom { coeffs } => {
                write!(f, "custom")?;
                for (k, c) in coeffs {
                    write!(f, ":{k}={c}")?;
                }
                Ok(())
            }
        }
    }
}

/// Parses the short form used on the command line: `log`, `linear`,
/// `power:<a>`, `inverse_ma`, `negative_power:<a>:<scale>`,
/// `custom:<k>=<c>:...`.
impl FromStr for SpeedFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let head = parts.next().unwrap_or_default();
        let rest: Vec<&str> = parts.collect();
        let num = |t: &str| {
            t.parse::<f64>().map_err(|_| Error::InvalidSpeed(format!("bad number `{t}` in `{s}`")))
        };
        let kind = match (head, rest.as_slice()) {
            ("log", []) => SpeedKind::Log,
            ("linear", []) => SpeedKind::Linear,
            ("inverse_ma", []) => SpeedKind::InverseMa,
            ("power", [a]) => SpeedKind::Power { a: num(a)? },
            ("negative_power", [a, scale]) => SpeedKind::NegativePowerScaled { a: num(a)?, scale: num(scale)? },
            ("custom", terms) if !terms.is_empty() => {
                let mut coeffs = Vec::new();
                for t in terms {
                    let (k, c) = t
                        .split_once('=')
                        .ok_or_else(|| Error::InvalidSpeed(format!("custom term `{t}` is not k=c")))?;
                    let k = k.parse::<i32>().map_err(|_| Error::InvalidSpeed(format!("bad power `{k}`")))?;
                    coeffs.push((k, num(c)?));
                }
                SpeedKind::Custom { coeffs }
            }
            _ => return Err(Error::InvalidSpeed(format!("unrecognized speed `{s}`"))),
        };
        SpeedFunction::new(kind)
    }
}

/// Config-file form: `{ kind = "...", a = <real>, scale = <real>, coeffs = [[k, c], ...] }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<(i32, f64)>>,
}

impl SpeedSpec {
    pub fn build(&self) -> Result<SpeedFunction> {
        let need = |v: Option<f64>, key: &str| {
            v.ok_or_else(|| Error::Config { key: format!("speed.{key}"), msg: format!("required for kind `{}`", self.kind) })
        };
        let kind = match self.kind.as_str() {
            "log" => SpeedKind::Log,
            "linear" => SpeedKind::Linear,
            "inverse_ma" => SpeedKind::InverseMa,
            "power" => SpeedKind::Power { a: need(self.a, "a")? },
            "negative_power" => SpeedKind::NegativePowerScaled {
                a: need(self.a, "a")?,
                scale: self.scale.unwrap_or(1.0),
            },
            "custom" => SpeedKind::Custom {
                coeffs: self.coeffs.clone().ok_or_else(|| Error::Config {
                    key: "speed.coeffs".into(),
                    msg: "required for kind `custom`".into(),
                })?,
            },
            other => {
                return Err(Error::Config { key: "speed.kind".into(), msg: format!("unknown kind `{other}`") })
            }
        };
        SpeedFunction::new(kind).map_err(|e| Error::Config { key: "speed".into(), msg: e.to_string() })
    }

    pub fn from_function(speed: &SpeedFunction) -> Self {
        let mut spec = SpeedSpec { kind: String::new(), a: None, scale: None, coeffs: None };
        spec.kind = match speed.kind() {
            SpeedKind::Log => "log".into(),
            SpeedKind::Linear => "linear".into(),
            SpeedKind::InverseMa => "inverse_ma".into(),
            SpeedKind::Power { a } => {
                spec.a = Some(*a);
                "power".into()
            }
            SpeedKind::NegativePowerScaled { a, scale } => {
                spec.a = Some(*a);
                spec.scale = Some(*scale);
                "negative_power".into()
            }
            SpeedKind::Custom { coeffs } => {
                spec.coeffs = Some(coeffs.clone());
                "custom".into()
            }
        };
        spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_speeds() -> Vec<SpeedFunction> {
        vec![
            SpeedFunction::log(),
            SpeedFunction::linear(),
            SpeedFunction::power(2.0).unwrap(),
            SpeedFunction::power(0.5).unwrap(),
            SpeedFunction::inverse_ma(),
            SpeedFunction::new(SpeedKind::NegativePowerScaled { a: -1.0, scale: 1.0 }).unwrap(),
            SpeedFunction::new(SpeedKind::Custom { coeffs: vec![(1, 1.0), (-1, -0.5), (3, 0.1)] }).unwrap(),
        ]
    }

    #[test]
    fn named_values() {
        let log = SpeedFunction::log();
        assert_eq!(log.eval(1.0).unwrap(), 0.0);
        assert_eq!(log.deriv(1.0).unwrap(), 1.0);
        let inv = SpeedFunction::inverse_ma();
        assert_eq!(inv.eval(2.0).unwrap(), 0.5);
        assert_eq!(inv.deriv(2.0).unwrap(), 0.25);
        let sq = SpeedFunction::power(2.0).unwrap();
        assert!((sq.eval(3.0).unwrap() - 9.0).abs() < 1e-14);
        assert!((sq.deriv(3.0).unwrap() - 6.0).abs() < 1e-14);
    }

    #[test]
    fn dual_anomaly_speed() {
        // n = 2: F = -(1/(n-1)) rho^{-1}
        let f = SpeedFunction::new(SpeedKind::NegativePowerScaled { a: -1.0, scale: 1.0 }).unwrap();
        assert_eq!(f.eval(1.0).unwrap(), -1.0);
        assert_eq!(f.deriv(1.0).unwrap(), 1.0);
    }

    #[test]
    fn domain_and_parabolicity_errors() {
        let log = SpeedFunction::log();
        assert!(matches!(log.eval(0.0), Err(Error::Domain { .. })));
        assert!(matches!(log.eval(-1.0), Err(Error::Domain { .. })));
        let dec = SpeedFunction::power(-1.0).unwrap();
        assert!(matches!(dec.deriv(1.0), Err(Error::Parabolicity { .. })));
        assert!(dec.validate_on(0.5, 2.0).is_err());
        let guarded = SpeedFunction::log().with_rho_min(0.1).unwrap();
        assert!(matches!(guarded.eval(0.05), Err(Error::Domain { .. })));
    }

    #[test]
    fn custom_validation_depends_on_range() {
        // ρ − ρ²/4 increases only for ρ < 2
        let f = SpeedFunction::new(SpeedKind::Custom { coeffs: vec![(1, 1.0), (2, -0.25)] }).unwrap();
        assert!(f.validate_on(0.5, 1.5).is_ok());
        assert!(f.validate_on(0.5, 3.0).is_err());
    }

    #[test]
    fn degenerate_speeds_rejected() {
        assert!(SpeedFunction::power(0.0).is_err());
        assert!(SpeedFunction::new(SpeedKind::Custom { coeffs: vec![(0, 3.0)] }).is_err());
    }

    #[test]
    fn exponent_from_beta() {
        assert_eq!(beta_to_exponent(1.0, 3).unwrap(), 1.0);
        assert_eq!(beta_to_exponent(2.0, 3).unwrap(), -1.0);
        assert!(beta_to_exponent(0.0, 4).is_err());
        assert!(matches!(beta_to_exponent(4.0 / 3.0, 3), Err(Error::SingularReduction { .. })));
    }

    #[test]
    fn short_form_round_trip() {
        for s in all_speeds() {
            let parsed: SpeedFunction = s.to_string().parse().unwrap();
            assert_eq!(parsed, s);
            assert_eq!(SpeedSpec::from_function(&s).build().unwrap(), s);
        }
        assert!("power".parse::<SpeedFunction>().is_err());
        assert!("cubic".parse::<SpeedFunction>().is_err());
    }

    #[test]
    fn derivative_matches_centered_difference() {
        for s in all_speeds() {
            for i in 0..100 {
                let rho = 10f64.powf(-0.5 + i as f64 / 99.0);
                let h = 1e-5 * rho;
                let fd = (s.eval(rho + h).unwrap() - s.eval(rho - h).unwrap()) / (2.0 * h);
                let d = s.jet(rho).1;
                assert!((fd - d).abs() <= 1e-6 * d.abs().max(1e-12), "{s} at {rho}: {fd} vs {d}");
                let fd2 = (s.jet(rho + h).1 - s.jet(rho - h).1) / (2.0 * h);
                let dd = s.second_deriv(rho).unwrap();
                assert!((fd2 - dd).abs() <= 1e-6 * dd.abs().max(1.0), "{s} F'' at {rho}");
            }
        }
    }

    proptest! {
        #[test]
        fn validated_speeds_are_increasing(lo in 0.05f64..1.0, width in 1.0f64..10.0, pick in 0usize..7) {
            let s = &all_speeds()[pick];
            let hi = lo * width;
            if s.validate_on(lo, hi).is_ok() {
                let mut prev = f64::NEG_INFINITY;
                for i in 0..50 {
                    let rho = lo + (hi - lo) * i as f64 / 49.0;
                    let v = s.eval(rho).unwrap();
                    prop_assert!(v > prev);
                    prev = v;
                }
            }
        }
    }
}
