//! Step-size and temperature sequences indexed by per-state visit counts.
//!
//! Counts are 1-based: the first visit to a state uses `α_1 = β_1 = 1` and
//! `τ_1 = τ̄`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::ValidationReport;

/// Cap on the exact integer scan in [`prop2_threshold`].
pub const THRESHOLD_SCAN_CAP: u64 = 1_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureMode {
    /// `τ_c = τ̄/c + (1 - 1/c) ε`, decreasing to `ε`.
    ToEpsilon,
    /// `τ_c = τ̄ / (1 + τ̄ ρ_α ρ log(c) / (4D))`, decreasing to zero.
    ToZero,
    /// `max{ε, ToZero}`.
    MaxEpsilon,
}

/// Schedule parameters as they appear in experiment configs. The bound `D`
/// comes from the game and is attached with [`ScheduleParams::with_d_bound`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub rho_alpha: f64,
    pub rho_beta: f64,
    #[serde(default)]
    pub rho: f64,
    pub tau_bar: f64,
    #[serde(default)]
    pub epsilon: f64,
    pub mode: TemperatureMode,
}

impl ScheduleParams {
    pub fn with_d_bound(self, d_bound: f64) -> ScheduleConfig {
        ScheduleConfig {
            rho_alpha: self.rho_alpha,
            rho_beta: self.rho_beta,
            rho: self.rho,
            tau_bar: self.tau_bar,
            epsilon: self.epsilon,
            mode: self.mode,
            d_bound,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub rho_alpha: f64,
    pub rho_beta: f64,
    pub rho: f64,
    pub tau_bar: f64,
    pub epsilon: f64,
    pub mode: TemperatureMode,
    pub d_bound: f64,
}

fn nonzero(c: u64) -> Result<()> {
    if c == 0 {
        Err(Error::InvalidArgument("visit counts start at 1".into()))
    } else {
        Ok(())
    }
}

impl ScheduleConfig {
    pub fn params(&self) -> ScheduleParams {
        ScheduleParams {
            rho_alpha: self.rho_alpha,
            rho_beta: self.rho_beta,
            rho: self.rho,
            tau_bar: self.tau_bar,
            epsilon: self.epsilon,
            mode: self.mode,
        }
    }

    /// `α_c = c^{-ρ_α}`.
    pub fn alpha(&self, c: u64) -> Result<f64> {
        nonzero(c)?;
        Ok(self.alpha_at(c as f64))
    }

    /// `β_c = c^{-ρ_β}`.
    pub fn beta(&self, c: u64) -> Result<f64> {
        nonzero(c)?;
        Ok(self.beta_at(c as f64))
    }

    pub fn tau(&self, c: u64) -> Result<f64> {
        nonzero(c)?;
        Ok(self.tau_at(c as f64))
    }

    // The `_at` forms accept real-valued counts ≥ 1.

    pub(crate) fn alpha_at(&self, c: f64) -> f64 {
        c.powf(-self.rho_alpha)
    }

    pub(crate) fn beta_at(&self, c: f64) -> f64 {
        c.powf(-self.rho_beta)
    }

    fn tau_to_zero(&self, ln_c: f64) -> f64 {
        let rate = self.rho_alpha * self.rho / (4.0 * self.d_bound);
        self.tau_bar / (1.0 + self.tau_bar * rate * ln_c)
    }

    pub(crate) fn tau_at(&self, c: f64) -> f64 {
        match self.mode {
            TemperatureMode::ToEpsilon => self.tau_bar / c + (1.0 - 1.0 / c) * self.epsilon,
            TemperatureMode::ToZero => self.tau_to_zero(c.ln()),
            TemperatureMode::MaxEpsilon => self.epsilon.max(self.tau_to_zero(c.ln())),
        }
    }

    /// `lim τ_c`: `ε`, or zero for [`TemperatureMode::ToZero`].
    pub fn tau_limit(&self) -> f64 {
        match self.mode {
            TemperatureMode::ToZero => 0.0,
            _ => self.epsilon,
        }
    }

    /// `(τ_{c+1} - τ_c) / α_c`.
    pub fn tau_drift(&self, c: u64) -> Result<f64> {
        Ok((self.tau(c + 1)? - self.tau(c)?) / self.alpha(c)?)
    }

    /// `log(α_c exp(2D/τ_c))`, evaluated without overflow.
    pub fn ln_clamp_factor(&self, c: u64) -> Result<f64> {
        nonzero(c)?;
        Ok(self.ln_clamp_factor_at(c as f64))
    }

    fn ln_clamp_factor_at(&self, c: f64) -> f64 {
        -self.rho_alpha * c.ln() + 2.0 * self.d_bound / self.tau_at(c)
    }
}

/// Which convergence regime a schedule certifies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Temperature settles at `ε > 0`; values converge to a neighbourhood.
    Neighbourhood,
    /// Temperature vanishes; values converge exactly.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub report: ValidationReport,
    pub regime: Option<Regime>,
    /// Polynomial constant `C` for the vanishing-temperature condition.
    pub poly_constant: Option<f64>,
    /// `log C'` with `C' = exp(4D/τ̄)`.
    pub ln_c_prime: Option<f64>,
    /// `C'` itself; may overflow to infinity for tiny `τ̄`.
    pub c_prime: Option<f64>,
    /// Exponent whose sum `Σ α_c^p` must converge (`2` or `2 - ρ`).
    pub summable_power: Option<f64>,
}

impl ScheduleReport {
    pub fn is_valid(&self) -> bool {
        self.report.is_empty()
    }
}

/// Checks the sufficient parameter constraints for the step-size and
/// temperature assumptions and reports which regime they certify.
pub fn validate_schedule(cfg: &ScheduleConfig) -> ScheduleReport {
    let mut report = ValidationReport::new();
    let finite =
        [cfg.rho_alpha, cfg.rho_beta, cfg.rho, cfg.tau_bar, cfg.epsilon, cfg.d_bound].iter().all(|x| x.is_finite());
    if !finite {
        report.push("schedule parameters must be finite");
    }
    if !(0.5 < cfg.rho_alpha && cfg.rho_alpha < cfg.rho_beta && cfg.rho_beta <= 1.0) {
        report.push(format!(
            "need 1/2 < rho_alpha < rho_beta <= 1, got rho_alpha = {}, rho_beta = {}",
            cfg.rho_alpha, cfg.rho_beta
        ));
    }
    if !(cfg.tau_bar > 0.0) {
        report.push(format!("tau_bar = {} must be positive", cfg.tau_bar));
    }
    if !(cfg.d_bound > 0.0) {
        report.push(format!("d_bound = {} must be positive", cfg.d_bound));
    }

    let mut out = ScheduleReport {
        report: ValidationReport::new(),
        regime: None,
        poly_constant: None,
        ln_c_prime: None,
        c_prime: None,
        summable_power: None,
    };
    match cfg.mode {
        TemperatureMode::ToEpsilon | TemperatureMode::MaxEpsilon => {
            if !(cfg.epsilon > 0.0) {
                report.push(format!("epsilon = {} must be positive for {:?}", cfg.epsilon, cfg.mode));
            }
            if cfg.mode == TemperatureMode::ToEpsilon && cfg.tau_bar < cfg.epsilon {
                report.push(format!(
                    "tau_bar = {} below epsilon = {} makes the temperature increase",
                    cfg.tau_bar, cfg.epsilon
                ));
            }
            if cfg.mode == TemperatureMode::MaxEpsilon && !(cfg.rho > 0.0) {
                report.push(format!("rho = {} must be positive", cfg.rho));
            }
            if !(2.0 * cfg.rho_alpha > 1.0) {
                report.push("sum of alpha_c^2 diverges (need 2 rho_alpha > 1)");
            }
            out.summable_power = Some(2.0);
            out.regime = Some(Regime::Neighbourhood);
        }
        TemperatureMode::ToZero => {
            let upper = 2.0 - 1.0 / cfg.rho_alpha;
            if !(cfg.rho > 0.0 && cfg.rho < upper) {
                report.push(format!("need 0 < rho < 2 - 1/rho_alpha = {upper}, got rho = {}", cfg.rho));
            }
            if !((2.0 - cfg.rho) * cfg.rho_alpha > 1.0) {
                report.push(format!(
                    "sum of alpha_c^(2 - rho) diverges: (2 - rho) rho_alpha = {}",
                    (2.0 - cfg.rho) * cfg.rho_alpha
                ));
            }
            let ln_c_prime = 4.0 * cfg.d_bound / cfg.tau_bar;
            out.ln_c_prime = Some(ln_c_prime);
            out.c_prime = Some(ln_c_prime.exp());
            out.poly_constant = Some(1.0);
            out.summable_power = Some(2.0 - cfg.rho);
            out.regime = Some(Regime::Exact);
        }
    }
    if !report.is_empty() {
        out.regime = None;
    }
    out.report = report;
    out
}

/// Visit count beyond which the normalized step `α_c / π̄[a]` never needs
/// clamping at a state with `n1 x n2` actions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prop2Threshold {
    /// The count itself when it fits in a `u64`.
    pub visits: Option<u64>,
    /// Natural log of the count.
    pub ln_visits: f64,
    /// True when no smaller count works; otherwise a certified upper bound.
    pub minimal: bool,
}

impl Prop2Threshold {
    pub fn covers(&self, c: u64) -> bool {
        match self.visits {
            Some(v) => c >= v,
            None => (c as f64).ln() >= self.ln_visits,
        }
    }
}

/// Smallest `C_s` (or a certified bound on it) with
/// `α_c exp(2D/τ_c) < min{1/n1, 1/n2}` for every `c ≥ C_s`.
///
/// Past some point `log α_c + 2D/τ_c` is strictly decreasing; that point is
/// located in closed form (exactly for the vanishing temperature, through
/// `τ_c ≥ ε` otherwise). When it lies below [`THRESHOLD_SCAN_CAP`] the exact
/// minimal count is found by scanning down from it. Beyond the cap only the
/// logarithm of the count is reported, since the counts involved can exceed
/// any machine integer.
pub fn prop2_threshold(cfg: &ScheduleConfig, n1: usize, n2: usize) -> Result<Prop2Threshold> {
    let schedule = validate_schedule(cfg);
    if !schedule.is_valid() {
        return Err(Error::InvalidSchedule(schedule.report));
    }
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidArgument("action counts must be positive".into()));
    }
    let ln_n = (n1.max(n2) as f64).ln();
    let holds = |c: f64| cfg.ln_clamp_factor_at(c) < -ln_n;

    let (ln_tail, exact_tail) = match cfg.mode {
        TemperatureMode::ToZero => {
            let slope = cfg.rho_alpha * (1.0 - cfg.rho / 2.0);
            ((2.0 * cfg.d_bound / cfg.tau_bar + ln_n) / slope, true)
        }
        TemperatureMode::ToEpsilon | TemperatureMode::MaxEpsilon => {
            ((2.0 * cfg.d_bound / cfg.epsilon + ln_n) / cfg.rho_alpha, false)
        }
    };
    if !ln_tail.is_finite() {
        return Err(Error::ThresholdCap(THRESHOLD_SCAN_CAP));
    }
    let ln_tail = ln_tail.max(0.0);

    if ln_tail <= (THRESHOLD_SCAN_CAP as f64).ln() {
        // every c strictly above the tail point satisfies the condition
        let top = ln_tail.exp().floor() as u64 + 1;
        let mut c = top;
        while c > 1 && holds((c - 1) as f64) {
            c -= 1;
        }
        debug_assert!(holds(c as f64));
        return Ok(Prop2Threshold { visits: Some(c), ln_visits: (c as f64).ln(), minimal: true });
    }

    let visits = if ln_tail < (u64::MAX as f64).ln() - 1.0 { Some(ln_tail.exp().floor() as u64 + 1) } else { None };
    Ok(Prop2Threshold { visits, ln_visits: ln_tail, minimal: exact_tail })
}
