//! Downlink MRT precoding and the per-user SINR: closed form at finite `M`,
//! its large-array limit, and a Monte-Carlo estimate of the definitional
//! ratio `|E[h't]|^2 bP / (var[h't] bP + sum E|h't'|^2 bP' + noise)`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel_attack::{
    correlation_params, draw_trial, ls_estimate, AttackPlan, CorrelationParams,
};
use crate::error::{Error, Result};
use crate::model::{Antennas, GainModel, NetworkConfig, SinrTargets};
use crate::pilot_design::PilotSet;

/// Number of batches behind the Monte-Carlo confidence interval.
pub const MC_BATCHES: usize = 20;

/// How cross-link gains enter the closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainNormalization {
    /// `Xi^2 = p_lk * beta_lki` and the literal `beta` factors.
    #[default]
    AsDefined,
    /// Every `Xi^2 * beta` and `beta` factor set to one.
    Unit,
}

/// MRT precoder `t = h_hat / sqrt(M * alpha)`.
pub fn mrt_precoder(h_hat: &[Complex64], alpha: f64, antennas: usize) -> Result<Vec<Complex64>> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("correlation parameter {alpha} must be positive")));
    }
    if antennas == 0 {
        return Err(Error::Domain("antenna count must be at least 1".into()));
    }
    let scale = 1.0 / (antennas as f64 * alpha).sqrt();
    Ok(h_hat.iter().map(|h| h * scale).collect())
}

struct Gains<'a> {
    cfg: &'a NetworkConfig,
    gains: &'a GainModel,
    norm: GainNormalization,
}

impl Gains<'_> {
    /// `beta_lkl` in the numerator.
    fn direct(&self, l: usize, k: usize) -> f64 {
        match self.norm {
            GainNormalization::AsDefined => self.gains.beta.get(l, k, l),
            GainNormalization::Unit => 1.0,
        }
    }

    /// `Xi^2_lki * beta_lki` weighting interferer powers from BS `i`.
    fn leakage(&self, l: usize, k: usize, i: usize) -> f64 {
        match self.norm {
            GainNormalization::AsDefined => {
                let b = self.gains.beta.get(l, k, i);
                self.gains.p(self.cfg, l, k) * b * b
            }
            GainNormalization::Unit => 1.0,
        }
    }

    /// `beta_lki` in the total received power.
    fn received(&self, l: usize, k: usize, i: usize) -> f64 {
        match self.norm {
            GainNormalization::AsDefined => self.gains.beta.get(l, k, i),
            GainNormalization::Unit => 1.0,
        }
    }
}

fn check_powers(cfg: &NetworkConfig, powers: &[f64]) -> Result<()> {
    if powers.len() != cfg.total_users() {
        return Err(Error::Dimension {
            what: "downlink powers",
            expected: cfg.total_users(),
            found: powers.len(),
        });
    }
    if let Some(p) = powers.iter().find(|p| !(**p >= 0.0)) {
        return Err(Error::Domain(format!("downlink power {p} must be non-negative")));
    }
    Ok(())
}

/// Closed-form SINR for every user from precomputed correlation parameters.
pub fn closed_form_from_params(
    cfg: &NetworkConfig,
    gains: &GainModel,
    corr: &CorrelationParams,
    powers: &[f64],
    antennas: Antennas,
    norm: GainNormalization,
) -> Result<Vec<f64>> {
    check_powers(cfg, powers)?;
    if antennas == Antennas::Finite(0) {
        return Err(Error::Domain("antenna count must be at least 1".into()));
    }
    let m = antennas.as_f64();
    let g = Gains { cfg, gains, norm };
    let mut out = Vec::with_capacity(cfg.total_users());
    for l in 0..cfg.cells {
        for k in 0..cfg.users {
            let lk = cfg.user_index(l, k);
            let a_lk = corr.alpha_bar[lk];
            let mut interference = 0.0;
            let mut received = cfg.downlink_noise;
            for i in 0..cfg.cells {
                for j in 0..cfg.users {
                    let ij = cfg.user_index(i, j);
                    received += g.received(l, k, i) * powers[ij];
                    if ij != lk {
                        let r = corr.rho[(lk, ij)];
                        interference += r * r * g.leakage(l, k, i) * powers[ij] / corr.alpha_bar[ij];
                    }
                }
            }
            let noise_term = if m.is_infinite() { 0.0 } else { a_lk * received / m };
            let den = a_lk * interference + noise_term;
            let num = g.direct(l, k) * powers[lk];
            out.push(if den > 0.0 { num / den } else { f64::INFINITY });
        }
    }
    Ok(out)
}

/// Closed-form downlink SINR at `cfg.antennas`, flat `(cell, user)` order.
pub fn closed_form_sinr(
    cfg: &NetworkConfig,
    gains: &GainModel,
    pilots: &PilotSet,
    plan: &AttackPlan,
    powers: &[f64],
) -> Result<Vec<f64>> {
    let corr = correlation_params(cfg, pilots, plan, gains)?;
    closed_form_from_params(cfg, gains, &corr, powers, cfg.antennas, GainNormalization::AsDefined)
}

/// Large-array SINR; `+inf` where no interference survives.
pub fn asymptotic_sinr(
    cfg: &NetworkConfig,
    gains: &GainModel,
    pilots: &PilotSet,
    plan: &AttackPlan,
    powers: &[f64],
) -> Result<Vec<f64>> {
    let corr = correlation_params(cfg, pilots, plan, gains)?;
    closed_form_from_params(cfg, gains, &corr, powers, Antennas::Infinite, GainNormalization::AsDefined)
}

/// Large-array SINR in the unit-gain normalization,
/// `P_lk / (alpha_lk * sum_ij rho^2 P_ij / alpha_ij - P_lk)`.
pub fn asymptotic_sinr_unit(corr: &CorrelationParams, powers: &[f64]) -> Vec<f64> {
    let n = powers.len();
    (0..n)
        .map(|a| {
            let total: f64 = (0..n)
                .map(|b| corr.rho[(a, b)].powi(2) * powers[b] / corr.alpha_bar[b])
                .sum();
            let den = corr.alpha_bar[a] * total - powers[a];
            if den > 0.0 {
                powers[a] / den
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

/// Monte-Carlo SINR estimate with a batch-means confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    /// 95% half-width; infinite when too few trials for two batches.
    pub ci: f64,
}

#[derive(Clone, Copy, Default)]
struct Moments {
    signal: Complex64,
    signal_sq: f64,
    interference: f64,
    count: f64,
}

impl Moments {
    fn add(&mut self, a: Complex64, interference: f64) {
        self.signal += a;
        self.signal_sq += a.norm_sqr();
        self.interference += interference;
        self.count += 1.0;
    }

    fn merge(&mut self, o: &Moments) {
        self.signal += o.signal;
        self.signal_sq += o.signal_sq;
        self.interference += o.interference;
        self.count += o.count;
    }

    fn ratio(&self, direct: f64, noise: f64) -> f64 {
        let mean = self.signal / self.count;
        let var = if self.count > 1.0 {
            (self.signal_sq - self.count * mean.norm_sqr()) / (self.count - 1.0)
        } else {
            0.0
        };
        let den = var.max(0.0) * direct + self.interference / self.count + noise;
        mean.norm_sqr() * direct / den
    }
}

/// Two-sided 97.5% Student-t quantiles for 1..=19 degrees of freedom.
const T975: [f64; 19] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160,
    2.145, 2.131, 2.120, 2.110, 2.101, 2.093,
];

/// One trial: `(h_lkl' t_lk, sum beta_lki P_ij |h_lki' t_ij|^2)` per user.
#[allow(clippy::too_many_arguments)]
fn trial_samples(
    cfg: &NetworkConfig,
    gains: &GainModel,
    pilots: &PilotSet,
    plan: &AttackPlan,
    alpha_bar: &[f64],
    powers: &[f64],
    seed: u64,
    trial: u64,
) -> Result<Vec<(Complex64, f64)>> {
    let real = draw_trial(cfg, seed, trial)?;
    let m = real.antennas;
    let mut precoders = Vec::with_capacity(cfg.total_users());
    for i in 0..cfg.cells {
        for j in 0..cfg.users {
            let est = ls_estimate(&real, pilots, plan, gains, cfg, (i, j))?.total();
            precoders.push(mrt_precoder(&est, alpha_bar[cfg.user_index(i, j)], m)?);
        }
    }
    let inner = |h: &[Complex64], t: &[Complex64]| -> Complex64 {
        h.iter().zip(t).map(|(a, b)| a.conj() * b).sum()
    };
    let mut out = Vec::with_capacity(cfg.total_users());
    for l in 0..cfg.cells {
        for k in 0..cfg.users {
            let lk = cfg.user_index(l, k);
            let a = inner(real.user_link(l, k, l), &precoders[lk]);
            let mut interference = 0.0;
            for i in 0..cfg.cells {
                let h = real.user_link(l, k, i);
                let b = gains.beta.get(l, k, i);
                for j in 0..cfg.users {
                    let ij = cfg.user_index(i, j);
                    if ij != lk {
                        interference += b * powers[ij] * inner(h, &precoders[ij]).norm_sqr();
                    }
                }
            }
            out.push((a, interference));
        }
    }
    Ok(out)
}

/// Estimates each expectation in the definitional SINR by sample averages
/// over independent fading and estimation-noise draws.
///
/// Trials run in parallel on per-trial substreams and are reduced in trial
/// order, so the estimate depends only on `seed` and `trials`.
pub fn monte_carlo_sinr(
    cfg: &NetworkConfig,
    gains: &GainModel,
    pilots: &PilotSet,
    plan: &AttackPlan,
    powers: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    if trials == 0 {
        return Err(Error::Domain("Monte-Carlo needs at least one trial".into()));
    }
    check_powers(cfg, powers)?;
    let corr = correlation_params(cfg, pilots, plan, gains)?;
    let samples: Vec<Vec<(Complex64, f64)>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| trial_samples(cfg, gains, pilots, plan, &corr.alpha_bar, powers, seed, t))
        .collect::<Result<_>>()?;

    let users = cfg.total_users();
    let batches = MC_BATCHES.min(trials / 2).max(1);
    let mut per_batch = vec![vec![Moments::default(); users]; batches];
    for (t, row) in samples.iter().enumerate() {
        let b = t * batches / trials;
        for (u, &(a, i)) in row.iter().enumerate() {
            per_batch[b][u].add(a, i);
        }
    }

    let mut out = Vec::with_capacity(users);
    for l in 0..cfg.cells {
        for k in 0..cfg.users {
            let u = cfg.user_index(l, k);
            let direct = gains.beta.get(l, k, l) * powers[u];
            let mut all = Moments::default();
            for batch in &per_batch {
                all.merge(&batch[u]);
            }
            let mean = all.ratio(direct, cfg.downlink_noise);
            let ci = if batches >= 2 {
                let vals: Vec<f64> = per_batch
                    .iter()
                    .map(|b| b[u].ratio(direct, cfg.downlink_noise))
                    .collect();
                let avg = vals.iter().sum::<f64>() / batches as f64;
                let var = vals.iter().map(|v| (v - avg).powi(2)).sum::<f64>()
                    / (batches - 1) as f64;
                T975[batches - 2] * (var / batches as f64).sqrt()
            } else {
                f64::INFINITY
            };
            out.push(McEstimate { mean, ci });
        }
    }
    Ok(out)
}

/// One user's row of a [`SinrReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct UserSinr {
    pub cell: usize,
    pub user: usize,
    pub gamma: f64,
    pub theta_closed: f64,
    pub theta_asymptotic: f64,
    pub theta_mc: Option<McEstimate>,
    /// `theta_closed >= gamma`.
    pub satisfied: bool,
}

/// Per-user SINRs of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrReport {
    pub rows: Vec<UserSinr>,
}

/// Closed-form, asymptotic and (optionally) Monte-Carlo SINRs for every user.
pub fn sinr_report(
    cfg: &NetworkConfig,
    gains: &GainModel,
    pilots: &PilotSet,
    plan: &AttackPlan,
    powers: &[f64],
    targets: &SinrTargets,
    monte_carlo: Option<(usize, u64)>,
) -> Result<SinrReport> {
    let closed = closed_form_sinr(cfg, gains, pilots, plan, powers)?;
    let asym = asymptotic_sinr(cfg, gains, pilots, plan, powers)?;
    let mc = match monte_carlo {
        Some((trials, seed)) => Some(monte_carlo_sinr(cfg, gains, pilots, plan, powers, trials, seed)?),
        None => None,
    };
    let mut rows = Vec::with_capacity(cfg.total_users());
    for l in 0..cfg.cells {
        for k in 0..cfg.users {
            let u = cfg.user_index(l, k);
            let gamma = targets.gamma[l][k];
            rows.push(UserSinr {
                cell: l,
                user: k,
                gamma,
                theta_closed: closed[u],
                theta_asymptotic: asym[u],
                theta_mc: mc.as_ref().map(|m| m[u]),
                satisfied: closed[u] >= gamma,
            });
        }
    }
    Ok(SinrReport { rows })
}
