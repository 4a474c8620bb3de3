//! Deterministic synthetic panels with planted ground truth.
//!
//! The generator plants a known search-volume exposure in every security so
//! downstream estimates can be checked against truth. All randomness comes
//! from a single ChaCha8 stream seeded from [`SynthConfig::seed`]; the same
//! config reproduces the same dataset bit for bit.
//!
//! # Generative equations
//!
//! Search volume follows a positive log-AR(1):
//!
//! ```text
//! log SVI_t = base + u_t,     u_t = φ·u_{t−1} + η_t,   η_t ~ N(0, σ_η²)
//! ```
//!
//! with `u_1` drawn from the stationary distribution `N(0, σ_η²/(1−φ²))`, so
//! `ΔSVI_t = u_t − u_{t−1}` exists for every month after the first.
//!
//! Monthly returns are
//!
//! ```text
//! R_it = RF + α_i + (λ_i/100)·β_i + β_i·ΔSVI_t + ν_it
//! ```
//!
//! where `β_i ~ N(β_mean, β_sd²)`, `λ_i` is the premium in percent per month
//! (per unit of exposure) after side multipliers, `ν_it = σ_noise·ε_it` with
//! `ε_it ~ N(0,1)`, and `ΔSVI` is taken as zero in the first month. Market
//! caps are log-normal in the cross-section and follow a slow random walk
//! over months; book equity is a persistent per-security multiple of the
//! December cap (negative for a configurable share of securities).
//!
//! # Draw order
//!
//! From one `ChaCha8Rng::seed_from_u64(seed)` stream, in this order:
//! 1. SVI innovations, one per month;
//! 2. per security, in id order: `β_i`, `α_i`, the size draw, the BE/ME draw;
//! 3. cap-walk innovations, security-major;
//! 4. return noise `ε_it`, security-major.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calendar::MonthStamp;
use crate::error::{Error, Result};
use crate::ingest::SviSeries;
use crate::panel::{BookEquityRecord, ReturnPanel, RiskFreeSeries, SecurityId};
use crate::stats::median;

/// Name of the random generator backing [`generate`], recorded in output
/// metadata so datasets can be reproduced elsewhere.
pub const GENERATOR_NAME: &str = "chacha8";

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Log-AR(1) process for the search-volume index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SviProcess {
    /// AR(1) coefficient `φ`; must satisfy `|φ| < 1`.
    pub phi: f64,
    /// Innovation standard deviation `σ_η ≥ 0`.
    pub innovation_sd: f64,
    /// Mean log level of the index.
    pub base_log_level: f64,
}

impl Default for SviProcess {
    fn default() -> Self {
        SviProcess { phi: 0.5, innovation_sd: 0.25, base_log_level: 4.0 }
    }
}

/// Normal distribution for the true per-security exposure `β_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaDistribution {
    /// Mean exposure.
    pub mean: f64,
    /// Standard deviation; `≥ 0`.
    pub sd: f64,
}

impl Default for BetaDistribution {
    fn default() -> Self {
        BetaDistribution { mean: 1.0, sd: 0.15 }
    }
}

/// Market-cap generation: log-normal cross-section with a per-month random
/// walk so caps persist but are not constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeParams {
    /// Mean of initial log cap.
    pub log_mean: f64,
    /// Cross-sectional sd of initial log cap; `≥ 0`.
    pub log_sd: f64,
    /// Monthly sd of the log-cap random walk; `≥ 0`.
    pub walk_sd: f64,
}

impl Default for SizeParams {
    fn default() -> Self {
        SizeParams { log_mean: 18.0, log_sd: 1.0, walk_sd: 0.02 }
    }
}

/// Book-equity generation: each security carries a persistent BE/ME multiple
/// applied to its December cap; a configurable share of securities has
/// negative book equity instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BemeParams {
    /// Mean of log BE/ME for positive-book firms.
    pub log_mean: f64,
    /// Sd of log BE/ME; `≥ 0`.
    pub log_sd: f64,
    /// Share of securities given negative book equity, in `[0, 0.5]`. Kept
    /// above zero by default so the negative-book-equity dummy varies in the
    /// cross-section.
    pub negative_share: f64,
}

impl Default for BemeParams {
    fn default() -> Self {
        BemeParams { log_mean: -0.5, log_sd: 0.5, negative_share: 0.05 }
    }
}

/// Premium multipliers by median side, for planting a premium in only part
/// of the cross-section. A security's effective premium is
/// `λ · size-side multiplier · BE/ME-side multiplier`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PremiumMultipliers {
    /// Multiplier for securities above the initial size median.
    pub big: f64,
    /// Multiplier for securities below the initial size median.
    pub small: f64,
    /// Multiplier for securities above the BE/ME median.
    pub value: f64,
    /// Multiplier for securities below the BE/ME median.
    pub growth: f64,
}

impl Default for PremiumMultipliers {
    fn default() -> Self {
        PremiumMultipliers { big: 1.0, small: 1.0, value: 1.0, growth: 1.0 }
    }
}

/// Full generator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// RNG seed; same seed, same dataset.
    pub seed: u64,
    /// Number of securities.
    pub n_securities: usize,
    /// Number of consecutive months.
    pub n_months: usize,
    /// First month of the sample.
    pub start: MonthStamp,
    /// Search-volume process parameters.
    pub svi: SviProcess,
    /// True exposure distribution.
    pub beta: BetaDistribution,
    /// Premium `λ` in percent per month per unit of exposure.
    pub premium_lambda: f64,
    /// Side multipliers applied to `λ`.
    pub premium_multipliers: PremiumMultipliers,
    /// Market-cap process parameters.
    pub size: SizeParams,
    /// Book-equity parameters.
    pub beme: BemeParams,
    /// Sd of the per-security intercept `α_i`; `≥ 0`.
    pub alpha_sd: f64,
    /// Sd of monthly return noise; `≥ 0`.
    pub noise_sd: f64,
    /// Constant monthly risk-free rate (fraction).
    pub rf_monthly: f64,
    /// Estimation window the dataset should support; the sample must cover
    /// it plus one holding year.
    pub window_months: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            n_securities: 200,
            n_months: 180,
            start: MonthStamp::new(2004, 1).expect("valid month"),
            svi: SviProcess::default(),
            beta: BetaDistribution::default(),
            premium_lambda: 0.5,
            premium_multipliers: PremiumMultipliers::default(),
            size: SizeParams::default(),
            beme: BemeParams::default(),
            alpha_sd: 0.0,
            noise_sd: 0.05,
            rf_monthly: 0.0003,
            window_months: 72,
        }
    }
}

impl SynthConfig {
    /// Validates every field, naming the offender in the error.
    pub fn validate(&self) -> Result<()> {
        fn nonneg(name: &str, v: f64) -> Result<()> {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
            Ok(())
        }
        if self.n_securities == 0 {
            return Err(Error::validation("n_securities must be at least 1"));
        }
        if !(self.svi.phi.is_finite() && self.svi.phi.abs() < 1.0) {
            return Err(Error::validation(format!(
                "svi.phi must satisfy |phi| < 1 for a stationary process, got {}",
                self.svi.phi
            )));
        }
        if !self.svi.base_log_level.is_finite() {
            return Err(Error::validation("svi.base_log_level must be finite"));
        }
        nonneg("svi.innovation_sd", self.svi.innovation_sd)?;
        if !self.beta.mean.is_finite() {
            return Err(Error::validation("beta.mean must be finite"));
        }
        nonneg("beta.sd", self.beta.sd)?;
        if !self.premium_lambda.is_finite() {
            return Err(Error::validation("premium_lambda must be finite"));
        }
        nonneg("premium_multipliers.big", self.premium_multipliers.big)?;
        nonneg("premium_multipliers.small", self.premium_multipliers.small)?;
        nonneg("premium_multipliers.value", self.premium_multipliers.value)?;
        nonneg("premium_multipliers.growth", self.premium_multipliers.growth)?;
        if !self.size.log_mean.is_finite() {
            return Err(Error::validation("size.log_mean must be finite"));
        }
        nonneg("size.log_sd", self.size.log_sd)?;
        nonneg("size.walk_sd", self.size.walk_sd)?;
        if !self.beme.log_mean.is_finite() {
            return Err(Error::validation("beme.log_mean must be finite"));
        }
        nonneg("beme.log_sd", self.beme.log_sd)?;
        if !(self.beme.negative_share.is_finite()
            && (0.0..=0.5).contains(&self.beme.negative_share))
        {
            return Err(Error::validation(format!(
                "beme.negative_share must lie in [0, 0.5], got {}",
                self.beme.negative_share
            )));
        }
        nonneg("alpha_sd", self.alpha_sd)?;
        nonneg("noise_sd", self.noise_sd)?;
        if !self.rf_monthly.is_finite() {
            return Err(Error::validation("rf_monthly must be finite"));
        }
        if self.window_months == 0 {
            return Err(Error::validation("window_months must be at least 1"));
        }
        let needed = self.window_months as usize + 12;
        if self.n_months < needed {
            return Err(Error::validation(format!(
                "n_months must cover the estimation window plus one holding year \
                 ({needed} months for window {}), got {}",
                self.window_months, self.n_months
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

/// Which side of the initial size median a security fell on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SizeSide {
    /// Above the median initial cap.
    Big,
    /// At or below the median initial cap.
    Small,
}

impl fmt::Display for SizeSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SizeSide::Big => "big",
            SizeSide::Small => "small",
        })
    }
}

/// Which side of the BE/ME median a security fell on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BemeSide {
    /// Above the median BE/ME multiple.
    Value,
    /// At or below the median BE/ME multiple.
    Growth,
}

impl fmt::Display for BemeSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BemeSide::Value => "value",
            BemeSide::Growth => "growth",
        })
    }
}

/// Planted parameters for one security, plus its realized noise path so the
/// panel can be reconstructed exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SecurityTruth {
    /// True search-volume exposure `β_i`.
    pub beta_svi: f64,
    /// True intercept `α_i`.
    pub alpha: f64,
    /// Effective premium in percent per month, after side multipliers.
    pub lambda: f64,
    /// Size side at generation time.
    pub size_side: SizeSide,
    /// BE/ME side at generation time.
    pub beme_side: BemeSide,
    /// Whether the security was assigned negative book equity.
    pub negative_be: bool,
    /// Realized noise contributions `ν_it = σ_noise·ε_it`, one per month.
    pub noise: Vec<f64>,
}

/// Everything needed to verify or regenerate a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Seed the stream was initialized with.
    pub seed: u64,
    /// Base premium `λ` (percent per month) before multipliers.
    pub lambda: f64,
    /// The sample months, in order.
    pub months: Vec<MonthStamp>,
    /// Per-security truth, keyed by id.
    pub securities: BTreeMap<SecurityId, SecurityTruth>,
}

impl GroundTruth {
    /// Recomputes every return from the planted parameters, the SVI path,
    /// and the recorded noise. The result is bitwise equal to the generated
    /// panel's returns.
    pub fn reproduce_returns(
        &self,
        svi: &SviSeries,
        rf: &RiskFreeSeries,
    ) -> Result<BTreeMap<(SecurityId, MonthStamp), f64>> {
        let dsvi = delta_log_svi(svi, &self.months)?;
        let mut out = BTreeMap::new();
        for (id, truth) in &self.securities {
            if truth.noise.len() != self.months.len() {
                return Err(Error::data(format!(
                    "noise path for {id} has {} entries, expected {}",
                    truth.noise.len(),
                    self.months.len()
                )));
            }
            for (t, &month) in self.months.iter().enumerate() {
                let ret =
                    return_value(rf.require(month)?, truth, dsvi[t], truth.noise[t]);
                out.insert((id.clone(), month), ret);
            }
        }
        Ok(out)
    }
}

/// The return equation, shared by generation and reproduction so both sides
/// agree bit for bit.
fn return_value(rf: f64, truth: &SecurityTruth, dsvi: f64, noise: f64) -> f64 {
    rf + truth.alpha + truth.lambda * truth.beta_svi / 100.0 + truth.beta_svi * dsvi + noise
}

/// Log differences of the SVI along `months`, with zero in the first month.
fn delta_log_svi(svi: &SviSeries, months: &[MonthStamp]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(months.len());
    for (t, &month) in months.iter().enumerate() {
        if t == 0 {
            out.push(0.0);
            continue;
        }
        let prev = svi
            .get(months[t - 1])
            .ok_or_else(|| Error::data(format!("svi missing {}", months[t - 1])))?;
        let cur = svi.get(month).ok_or_else(|| Error::data(format!("svi missing {month}")))?;
        out.push(cur.ln() - prev.ln());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// A complete synthetic dataset.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    /// Monthly returns and market caps.
    pub panel: ReturnPanel,
    /// The search-volume index.
    pub svi: SviSeries,
    /// Constant risk-free series over the sample months.
    pub risk_free: RiskFreeSeries,
    /// One book record per security per fiscal year with a December in the
    /// sample.
    pub books: Vec<BookEquityRecord>,
    /// Planted parameters and noise.
    pub truth: GroundTruth,
}

/// Generates a dataset from the config. Same config, same bytes.
pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let months: Vec<MonthStamp> = {
        let mut m = Vec::with_capacity(config.n_months);
        let mut cur = config.start;
        for _ in 0..config.n_months {
            m.push(cur);
            cur = cur.next();
        }
        m
    };

    // 1. SVI path.
    let phi = config.svi.phi;
    let stationary_sd = config.svi.innovation_sd / (1.0 - phi * phi).sqrt();
    let mut u = Vec::with_capacity(config.n_months);
    for t in 0..config.n_months {
        let eta: f64 = rng.sample(StandardNormal);
        if t == 0 {
            u.push(stationary_sd * eta);
        } else {
            u.push(phi * u[t - 1] + config.svi.innovation_sd * eta);
        }
    }
    let svi_rows: Vec<(MonthStamp, f64)> = months
        .iter()
        .zip(&u)
        .map(|(&m, &ut)| (m, (config.svi.base_log_level + ut).exp()))
        .collect();
    let svi = SviSeries::from_rows(svi_rows)?;
    let dsvi = delta_log_svi(&svi, &months)?;

    // 2. Per-security statics, in id order.
    let ids: Vec<SecurityId> = (1..=config.n_securities)
        .map(|i| SecurityId::new(format!("S{i:05}")).expect("non-empty id"))
        .collect();
    let mut betas = Vec::with_capacity(config.n_securities);
    let mut alphas = Vec::with_capacity(config.n_securities);
    let mut log_caps0 = Vec::with_capacity(config.n_securities);
    let mut beme_mults = Vec::with_capacity(config.n_securities);
    for _ in 0..config.n_securities {
        let zb: f64 = rng.sample(StandardNormal);
        let za: f64 = rng.sample(StandardNormal);
        let zs: f64 = rng.sample(StandardNormal);
        let zm: f64 = rng.sample(StandardNormal);
        betas.push(config.beta.mean + config.beta.sd * zb);
        alphas.push(config.alpha_sd * za);
        log_caps0.push(config.size.log_mean + config.size.log_sd * zs);
        beme_mults.push((config.beme.log_mean + config.beme.log_sd * zm).exp());
    }

    // Sides from the initial cross-section; strictly above the median counts
    // as big/value, matching the downstream subsample convention.
    let size_median = median(&log_caps0)?;
    let beme_median = median(&beme_mults)?;
    let n_negative =
        ((config.beme.negative_share * config.n_securities as f64).round() as usize)
            .min(config.n_securities);

    // 3. Cap random walks, security-major.
    let mut log_caps: Vec<Vec<f64>> = Vec::with_capacity(config.n_securities);
    for i in 0..config.n_securities {
        let mut path = Vec::with_capacity(config.n_months);
        let mut cur = log_caps0[i];
        path.push(cur);
        for _ in 1..config.n_months {
            let w: f64 = rng.sample(StandardNormal);
            cur += config.size.walk_sd * w;
            path.push(cur);
        }
        log_caps.push(path);
    }

    // 4. Noise, security-major; stored as realized contributions.
    let mut truths: BTreeMap<SecurityId, SecurityTruth> = BTreeMap::new();
    let mut panel_rows = Vec::with_capacity(config.n_securities * config.n_months);
    for i in 0..config.n_securities {
        let size_side =
            if log_caps0[i] > size_median { SizeSide::Big } else { SizeSide::Small };
        let beme_side =
            if beme_mults[i] > beme_median { BemeSide::Value } else { BemeSide::Growth };
        let size_mult = match size_side {
            SizeSide::Big => config.premium_multipliers.big,
            SizeSide::Small => config.premium_multipliers.small,
        };
        let beme_mult = match beme_side {
            BemeSide::Value => config.premium_multipliers.value,
            BemeSide::Growth => config.premium_multipliers.growth,
        };
        let mut noise = Vec::with_capacity(config.n_months);
        for _ in 0..config.n_months {
            let eps: f64 = rng.sample(StandardNormal);
            noise.push(config.noise_sd * eps);
        }
        let truth = SecurityTruth {
            beta_svi: betas[i],
            alpha: alphas[i],
            lambda: config.premium_lambda * size_mult * beme_mult,
            size_side,
            beme_side,
            negative_be: i < n_negative,
            noise,
        };
        for (t, &month) in months.iter().enumerate() {
            let ret = return_value(config.rf_monthly, &truth, dsvi[t], truth.noise[t]);
            panel_rows.push((ids[i].clone(), month, ret, log_caps[i][t].exp()));
        }
        truths.insert(ids[i].clone(), truth);
    }
    let panel = ReturnPanel::from_observations(panel_rows)?;
    let risk_free =
        RiskFreeSeries::from_rows(months.iter().map(|&m| (m, config.rf_monthly)))?;

    // Books: one record per fiscal year whose December falls in the sample.
    // BE/ME is the persistent multiple exactly: equity = multiple × Dec cap.
    let mut books = Vec::new();
    for (t, &month) in months.iter().enumerate() {
        if !month.is_december() {
            continue;
        }
        for i in 0..config.n_securities {
            let dec_cap = log_caps[i][t].exp();
            let equity = if i < n_negative {
                -beme_mults[i] * dec_cap
            } else {
                beme_mults[i] * dec_cap
            };
            books.push(BookEquityRecord::new(
                ids[i].clone(),
                month.year(),
                equity,
                0.0,
                dec_cap,
            )?);
        }
    }

    let truth = GroundTruth {
        seed: config.seed,
        lambda: config.premium_lambda,
        months,
        securities: truths,
    };
    Ok(SynthDataset { panel, svi, risk_free, books, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exposure::{estimate_hse, ExposureConfig};
    use crate::ingest::{compute_beme, compute_delta_svi, BeMe};
    use crate::stats::WinsorSpec;
    use approx::assert_relative_eq;

    fn small_config() -> SynthConfig {
        SynthConfig {
            n_securities: 12,
            n_months: 48,
            window_months: 36,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_reproduces_the_dataset_bit_for_bit() {
        let config = small_config();
        let a = generate(&config).unwrap();
        let b = generate(&config).unwrap();
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.panel.rows().collect::<Vec<_>>(), b.panel.rows().collect::<Vec<_>>());
        for (&m, _) in a.panel.calendar().iter().zip(b.panel.calendar()) {
            assert_eq!(a.svi.get(m), b.svi.get(m));
        }
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate(&small_config()).unwrap();
        let b = generate(&SynthConfig { seed: 43, ..small_config() }).unwrap();
        assert_ne!(a.panel.rows().collect::<Vec<_>>(), b.panel.rows().collect::<Vec<_>>());
    }

    #[test]
    fn svi_is_positive_and_delta_is_defined_everywhere() {
        let data = generate(&small_config()).unwrap();
        let months = data.truth.months.clone();
        for &m in &months {
            assert!(data.svi.get(m).unwrap() > 0.0);
        }
        let (dsvi, skipped) = compute_delta_svi(&data.svi).unwrap();
        assert!(skipped.skipped.is_empty());
        assert_eq!(dsvi.len(), months.len() - 1);
    }

    #[test]
    fn recorded_noise_reproduces_the_panel_returns_exactly() {
        let data = generate(&small_config()).unwrap();
        let reproduced = data.truth.reproduce_returns(&data.svi, &data.risk_free).unwrap();
        let mut checked = 0;
        for (id, month, obs) in data.panel.rows() {
            let again = reproduced[&(id.clone(), month)];
            assert_eq!(obs.ret.to_bits(), again.to_bits(), "{id} {month}");
            checked += 1;
        }
        assert_eq!(checked, 12 * 48);
    }

    #[test]
    fn noiseless_generation_recovers_every_beta_exactly() {
        let config = SynthConfig {
            noise_sd: 0.0,
            alpha_sd: 0.0,
            n_securities: 10,
            n_months: 60,
            window_months: 48,
            ..SynthConfig::default()
        };
        let data = generate(&config).unwrap();
        let (dsvi, _) = compute_delta_svi(&data.svi).unwrap();
        // Formation at the first June at least `window` months in; window 48
        // starting 2004-01 puts 2008-06 fully inside the sample.
        let formation = MonthStamp::new(2008, 6).unwrap();
        let cfg = ExposureConfig {
            window_months: 48,
            min_obs: 24,
            winsor: WinsorSpec::identity(),
            ..ExposureConfig::default()
        };
        let outcome = estimate_hse(&data.panel, &dsvi, formation, &cfg).unwrap();
        assert_eq!(outcome.records.len(), 10);
        for rec in &outcome.records {
            let truth = &data.truth.securities[&rec.security];
            assert_relative_eq!(rec.beta_svi, truth.beta_svi, max_relative = 1e-10);
        }
    }

    #[test]
    fn sides_split_the_cross_section_in_half() {
        let data = generate(&small_config()).unwrap();
        let big = data
            .truth
            .securities
            .values()
            .filter(|t| t.size_side == SizeSide::Big)
            .count();
        let small = data.truth.securities.len() - big;
        // 12 distinct continuous draws: exactly half strictly above the
        // type-7 median.
        assert_eq!(big, 6);
        assert_eq!(small, 6);
    }

    #[test]
    fn negative_share_marks_books_and_truth_consistently() {
        let config = SynthConfig {
            beme: BemeParams { negative_share: 0.25, ..BemeParams::default() },
            ..small_config()
        };
        let data = generate(&config).unwrap();
        let n_neg_truth =
            data.truth.securities.values().filter(|t| t.negative_be).count();
        assert_eq!(n_neg_truth, 3); // 0.25 * 12
        let first_year = data.books.iter().map(|b| b.fiscal_year).min().unwrap();
        let neg_books: Vec<_> = data
            .books
            .iter()
            .filter(|b| b.fiscal_year == first_year)
            .filter(|b| matches!(compute_beme(b), BeMe::NegativeBe))
            .collect();
        assert_eq!(neg_books.len(), 3);
        for book in neg_books {
            assert!(data.truth.securities[&book.security].negative_be);
        }
    }

    #[test]
    fn positive_books_carry_the_persistent_multiple() {
        let data = generate(&small_config()).unwrap();
        // Group one security's records; its BE/ME is the same multiple every
        // fiscal year.
        let positive =
            data.truth.securities.iter().find(|(_, t)| !t.negative_be).unwrap().0.clone();
        let ratios: Vec<f64> = data
            .books
            .iter()
            .filter(|b| b.security == positive)
            .map(|b| match compute_beme(b) {
                BeMe::Ratio(r) => r,
                BeMe::NegativeBe => panic!("expected positive book equity"),
            })
            .collect();
        assert!(ratios.len() >= 2);
        for pair in ratios.windows(2) {
            assert_relative_eq!(pair[0], pair[1], max_relative = 1e-12);
        }
    }

    #[test]
    fn premium_multipliers_scale_lambda_by_side() {
        let config = SynthConfig {
            premium_lambda: 0.8,
            premium_multipliers: PremiumMultipliers {
                big: 2.0,
                small: 0.0,
                ..PremiumMultipliers::default()
            },
            ..small_config()
        };
        let data = generate(&config).unwrap();
        for truth in data.truth.securities.values() {
            let expected = match truth.size_side {
                SizeSide::Big => 1.6,
                SizeSide::Small => 0.0,
            };
            assert_relative_eq!(truth.lambda, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn validation_names_the_offending_field() {
        let bad_sd = SynthConfig {
            noise_sd: -0.1,
            ..SynthConfig::default()
        };
        let err = generate(&bad_sd).unwrap_err();
        assert!(err.to_string().contains("noise_sd"), "{err}");

        let bad_phi = SynthConfig {
            svi: SviProcess { phi: 1.0, ..SviProcess::default() },
            ..SynthConfig::default()
        };
        let err = generate(&bad_phi).unwrap_err();
        assert!(err.to_string().contains("phi"), "{err}");

        let short = SynthConfig { n_months: 80, window_months: 72, ..SynthConfig::default() };
        let err = generate(&short).unwrap_err();
        assert!(err.to_string().contains("n_months"), "{err}");

        let bad_share = SynthConfig {
            beme: BemeParams { negative_share: 0.9, ..BemeParams::default() },
            ..SynthConfig::default()
        };
        let err = generate(&bad_share).unwrap_err();
        assert!(err.to_string().contains("negative_share"), "{err}");
    }

    #[test]
    fn config_round_trips_through_toml() {
        let config = SynthConfig { seed: 9, n_securities: 7, ..SynthConfig::default() };
        let text = toml::to_string(&config).unwrap();
        let back: SynthConfig = toml::from_str(&text).unwrap();
        assert_eq!(config, back);
    }
}
