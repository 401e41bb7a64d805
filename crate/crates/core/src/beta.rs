//! Confidence radii: the bandit and MDP confidence-set widths, the tuned
//! logarithmic schedule, and the LinUCB ellipsoid radius.

use crate::error::{CoreError, Result};

/// Discretization scale α used by the covering argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha {
    /// `1 / (k·M·T)`.
    Auto,
    Value(f64),
}

impl Alpha {
    pub fn resolve(self, k: usize, tasks: usize, horizon: usize) -> f64 {
        match self {
            Alpha::Auto => 1.0 / (k as f64 * tasks as f64 * horizon as f64),
            Alpha::Value(a) => a,
        }
    }
}

/// How the confidence radius β is chosen each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaMode {
    /// The high-probability formula.
    Theory,
    /// `a · ln(b·t + c)`.
    Tuned { a: f64, b: f64, c: f64 },
    /// A constant radius (may be `+∞`).
    Fixed(f64),
}

impl BetaMode {
    pub const TUNED_BANDIT: BetaMode = BetaMode::Tuned {
        a: 0.4,
        b: 0.5,
        c: 2.0,
    };
    pub const TUNED_MDP: BetaMode = BetaMode::Tuned {
        a: 0.1,
        b: 0.5,
        c: 2.0,
    };

    pub fn validate(&self) -> Result<()> {
        match *self {
            BetaMode::Theory => Ok(()),
            BetaMode::Tuned { a, b, c } => {
                if !(a >= 0.0) || !(b >= 0.0) || !(c >= 1.0) {
                    return Err(CoreError::Parameter(format!(
                        "tuned schedule needs a ≥ 0, b ≥ 0, c ≥ 1 (got {a}, {b}, {c})"
                    )));
                }
                Ok(())
            }
            BetaMode::Fixed(v) => {
                if !(v >= 0.0) {
                    return Err(CoreError::Parameter(format!(
                        "fixed beta must be ≥ 0, got {v}"
                    )));
                }
                Ok(())
            }
        }
    }
}

pub fn beta_tuned(a: f64, b: f64, c: f64, t: usize) -> f64 {
    a * (b * t as f64 + c).ln()
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(CoreError::Parameter(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    Ok(())
}

fn check_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(CoreError::Parameter(format!("{name} must be at least 1")));
    }
    Ok(())
}

/// `β_t = 12Mk + 12·ln(N/δ) + 8α·√(Mtk·(Mt + ln(2Mt²/δ)))`.
pub fn beta_bandit(
    tasks: usize,
    k: usize,
    t: usize,
    log_cover: f64,
    alpha: f64,
    delta: f64,
) -> Result<f64> {
    check_positive("M", tasks)?;
    check_positive("k", k)?;
    check_positive("t", t)?;
    check_delta(delta)?;
    if !(alpha >= 0.0) || !(log_cover >= 0.0) {
        return Err(CoreError::Parameter(
            "alpha and log_cover must be nonnegative".into(),
        ));
    }
    let (m, k, t) = (tasks as f64, k as f64, t as f64);
    let mt = m * t;
    let tail = 8.0 * alpha * (mt * k * (mt + (2.0 * m * t * t / delta).ln())).sqrt();
    Ok(12.0 * m * k + 12.0 * (log_cover - delta.ln()) + tail)
}

/// `β = (B₁ + √(MT)·I + √B₂)²` with `B₁ = √(2Mk + ln(N/δ)) + 1` and
/// `B₂ = 2√(MT + ln(2MT²/δ))`.
pub fn beta_mdp(
    tasks: usize,
    k: usize,
    episodes: usize,
    log_cover: f64,
    delta: f64,
    ibe: f64,
) -> Result<f64> {
    check_positive("M", tasks)?;
    check_positive("k", k)?;
    check_positive("T", episodes)?;
    check_delta(delta)?;
    if !(log_cover >= 0.0) || !(ibe >= 0.0) {
        return Err(CoreError::Parameter(
            "log_cover and ibe must be nonnegative".into(),
        ));
    }
    let (m, k, t) = (tasks as f64, k as f64, episodes as f64);
    let b1 = (2.0 * m * k + log_cover - delta.ln()).sqrt() + 1.0;
    let b2 = 2.0 * (m * t + (2.0 * m * t * t / delta).ln()).sqrt();
    let r = b1 + (m * t).sqrt() * ibe + b2.sqrt();
    Ok(r * r)
}

/// LinUCB radius `√(λk) + √(2 ln(1/δ) + k·ln(1 + s/(kλ)))`.
pub fn linucb_radius(lambda: f64, k: usize, delta: f64, s: usize) -> Result<f64> {
    check_positive("k", k)?;
    check_delta(delta)?;
    if !(lambda > 0.0) {
        return Err(CoreError::Parameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let kf = k as f64;
    let inner = 2.0 * (1.0 / delta).ln() + kf * (1.0 + s as f64 / (kf * lambda)).ln();
    Ok((lambda * kf).sqrt() + inner.sqrt())
}

/// Bandit β for step `t` of a `horizon`-step run.
pub fn bandit_beta_for(
    mode: BetaMode,
    tasks: usize,
    k: usize,
    t: usize,
    horizon: usize,
    log_cover: f64,
    alpha: Alpha,
    delta: f64,
) -> Result<f64> {
    match mode {
        BetaMode::Theory => beta_bandit(
            tasks,
            k,
            t,
            log_cover,
            alpha.resolve(k, tasks, horizon),
            delta,
        ),
        BetaMode::Tuned { a, b, c } => Ok(beta_tuned(a, b, c, t)),
        BetaMode::Fixed(v) => Ok(v),
    }
}

/// MDP β for episode `t` of a `horizon`-episode run.
pub fn mdp_beta_for(
    mode: BetaMode,
    tasks: usize,
    k: usize,
    t: usize,
    horizon: usize,
    log_cover: f64,
    delta: f64,
    ibe: f64,
) -> Result<f64> {
    match mode {
        BetaMode::Theory => beta_mdp(tasks, k, horizon, log_cover, delta, ibe),
        BetaMode::Tuned { a, b, c } => Ok(beta_tuned(a, b, c, t)),
        BetaMode::Fixed(v) => Ok(v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values below were evaluated independently at high precision
    // (50-digit arithmetic) from the closed forms.

    #[test]
    fn bandit_base_case_is_twelve() {
        for t in [1, 7, 1000] {
            assert_eq!(beta_bandit(1, 1, t, 0.0, 0.0, 1.0).unwrap(), 12.0);
        }
    }

    #[test]
    fn bandit_log_cover_case() {
        // 72 + 12 ln 80
        let v = beta_bandit(2, 3, 10, 8f64.ln(), 0.0, 0.1).unwrap();
        assert!((v - 124.584_319_616_086_58).abs() < 1e-9, "{v}");
    }

    #[test]
    fn bandit_alpha_case() {
        // 12 + 0.08·√(100·(100 + ln 20000))
        let v = beta_bandit(1, 1, 100, 0.0, 0.01, 1.0).unwrap();
        assert!((v - 20.386_789_137_305_36).abs() < 1e-9, "{v}");
    }

    #[test]
    fn bandit_rejects_bad_delta() {
        assert!(beta_bandit(1, 1, 1, 0.0, 0.0, 0.0).is_err());
        assert!(beta_bandit(1, 1, 1, 0.0, 0.0, -0.5).is_err());
        assert!(beta_bandit(1, 1, 1, 0.0, 0.0, 1.5).is_err());
    }

    #[test]
    fn mdp_base_case() {
        // (√2 + 1 + √(2√(1 + ln 2)))²
        let v = beta_mdp(1, 1, 1, 0.0, 1.0, 0.0).unwrap();
        assert!((v - 16.220_073_838_428_00).abs() < 1e-9, "{v}");
    }

    #[test]
    fn mdp_monotone_in_ibe_and_t() {
        let a = beta_mdp(10, 2, 10, 1.0, 0.1, 0.0).unwrap();
        let b = beta_mdp(10, 2, 10, 1.0, 0.1, 0.1).unwrap();
        assert!(b > a);
        let t1 = beta_mdp(1, 1, 1, 0.0, 1.0, 0.0).unwrap();
        let t4 = beta_mdp(1, 1, 4, 0.0, 1.0, 0.0).unwrap();
        // (√2+1+√(2√(4+ln 32)))² at T=4
        assert!((t4 - 22.580_394_837_833_03).abs() < 1e-9, "{t4}");
        assert!(t4 >= t1);
    }

    #[test]
    fn linucb_radius_values() {
        assert_eq!(linucb_radius(1.0, 1, 1.0, 0).unwrap(), 1.0);
        // √2 + √(2 ln 10 + 2 ln 51)
        let v = linucb_radius(1.0, 2, 0.1, 100).unwrap();
        assert!((v - 4.945_335_402_728_755).abs() < 1e-9, "{v}");
    }

    #[test]
    fn auto_alpha() {
        assert_eq!(Alpha::Auto.resolve(2, 5, 10), 0.01);
        assert_eq!(Alpha::Value(0.3).resolve(2, 5, 10), 0.3);
    }

    #[test]
    fn tuned_schedule() {
        let v =
            bandit_beta_for(BetaMode::TUNED_BANDIT, 3, 2, 4, 10, 1.0, Alpha::Auto, 0.1).unwrap();
        assert!((v - 0.4 * 4f64.ln()).abs() < 1e-15);
        assert!(BetaMode::Tuned {
            a: 1.0,
            b: 1.0,
            c: 0.5
        }
        .validate()
        .is_err());
        assert!(BetaMode::Fixed(-1.0).validate().is_err());
        assert!(BetaMode::Fixed(f64::INFINITY).validate().is_ok());
    }
}
