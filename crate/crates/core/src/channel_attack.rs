//! Fading draws, uplink training under a pilot-contamination attack, and the
//! correlation parameters the precoder normalizes by.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{GainModel, Invariant, NetworkConfig, ValidationReport};
use crate::pilot_design::PilotSet;
use crate::rng::{complex_gaussian_vec, substream};

/// Tolerance on unit pilot norms.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// How an attacker picks its pilot.
#[derive(Debug, Clone, PartialEq)]
pub enum PilotMode {
    /// Replay the target's pilot.
    KnownPilot,
    /// Conjugate of the target's pilot (identical for real pilots).
    Conjugate,
    /// Caller-supplied unit-norm pilot.
    Custom(DVector<f64>),
}

impl PilotMode {
    pub fn name(&self) -> &'static str {
        match self {
            PilotMode::KnownPilot => "known-pilot",
            PilotMode::Conjugate => "conjugate",
            PilotMode::Custom(_) => "custom",
        }
    }
}

/// The first pilot axis `[1, 0, ..., 0]`, usable without knowing `S`.
pub fn structural_pilot(tau: usize) -> DVector<f64> {
    let mut s = DVector::zeros(tau);
    if tau > 0 {
        s[0] = 1.0;
    }
    s
}

/// Chooses an attacker pilot against `target = (cell, user)`.
pub fn select_eve_pilot(
    pilots: &PilotSet,
    target: (usize, usize),
    mode: &PilotMode,
) -> Result<DVector<f64>> {
    let (l, k) = target;
    if l >= pilots.cells.len() || k >= pilots.cells[l].users() {
        return Err(Error::Domain(format!("attack target ({l}, {k}) out of range")));
    }
    match mode {
        // real pilots: conjugation is the identity
        PilotMode::KnownPilot | PilotMode::Conjugate => Ok(pilots.pilot(l, k).into_owned()),
        PilotMode::Custom(s) => {
            if s.len() != pilots.pilot_len() {
                return Err(Error::Dimension {
                    what: "custom attacker pilot",
                    expected: pilots.pilot_len(),
                    found: s.len(),
                });
            }
            if (s.norm() - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::Domain(format!(
                    "custom attacker pilot has norm {}, expected 1",
                    s.norm()
                )));
            }
            Ok(s.clone())
        }
    }
}

/// One attacker's pilot and target.
#[derive(Debug, Clone, PartialEq)]
pub struct EveAssignment {
    pub target: (usize, usize),
    pub mode: PilotMode,
    pub pilot: DVector<f64>,
}

/// Pilots and targets of all `L * N` attackers in flat `(cell, eve)` order.
/// Transmit powers live in [`GainModel::eve_power`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttackPlan {
    pub eves: Vec<EveAssignment>,
}

impl AttackPlan {
    /// No attackers.
    pub fn none() -> Self {
        AttackPlan { eves: Vec::new() }
    }

    /// Every attacker in every cell hits the same target with the same mode.
    pub fn targeted(
        cfg: &NetworkConfig,
        pilots: &PilotSet,
        target: (usize, usize),
        mode: PilotMode,
    ) -> Result<Self> {
        let pilot = select_eve_pilot(pilots, target, &mode)?;
        Ok(AttackPlan {
            eves: (0..cfg.total_eves())
                .map(|_| EveAssignment {
                    target,
                    mode: mode.clone(),
                    pilot: pilot.clone(),
                })
                .collect(),
        })
    }

    pub fn eve(&self, cfg: &NetworkConfig, cell: usize, eve: usize) -> &EveAssignment {
        &self.eves[cfg.eve_index(cell, eve)]
    }

    fn check_len(&self, cfg: &NetworkConfig) -> Result<()> {
        if self.eves.len() != cfg.total_eves() {
            return Err(Error::Dimension {
                what: "attack plan",
                expected: cfg.total_eves(),
                found: self.eves.len(),
            });
        }
        Ok(())
    }
}

/// Checks the attacker power and pilot constraints.
///
/// Power must satisfy `0 < p_eve <= max_k p_lk` over the target cell `l`;
/// with `gains.eve_constraint`, also `p_eve * beta_eve(l) <= 1` toward the
/// attacked BS.
pub fn validate_attack(
    cfg: &NetworkConfig,
    plan: &AttackPlan,
    gains: &GainModel,
) -> Result<ValidationReport> {
    plan.check_len(cfg)?;
    let mut report = ValidationReport::default();
    let (mut zero, mut over, mut received, mut non_unit) = (vec![], vec![], vec![], vec![]);
    for i in 0..cfg.cells {
        for n in 0..cfg.eves {
            let a = plan.eve(cfg, i, n);
            let (l, _) = a.target;
            let p = gains.p_eve(cfg, i, n);
            let cap = (0..cfg.users)
                .map(|k| gains.p(cfg, l, k))
                .fold(f64::NEG_INFINITY, f64::max);
            if !(p > 0.0) {
                zero.push(vec![i, n]);
            }
            if p > cap * (1.0 + 1e-12) {
                over.push(vec![i, n]);
            }
            if gains.eve_constraint && p * gains.beta_eve.get(i, n, l) > 1.0 + 1e-12 {
                received.push(vec![i, n, l]);
            }
            if (a.pilot.norm() - 1.0).abs() > UNIT_NORM_TOL || a.pilot.len() != cfg.pilot_len {
                non_unit.push(vec![i, n]);
            }
        }
    }
    report.push(Invariant::EveStrictPositivity, zero, "attacker power must be positive".into());
    report.push(
        Invariant::EvePowerBound,
        over,
        "attacker power exceeds the strongest user pilot power".into(),
    );
    report.push(
        Invariant::EveReceivedPower,
        received,
        "p_eve * beta_eve exceeds 1".into(),
    );
    report.push(Invariant::UnitPilot, non_unit, "attacker pilot is not unit-norm".into());
    Ok(report)
}

/// Correlations and normalization terms for every user.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationParams {
    /// `alpha_lk` without attackers, flat `(cell, user)` order.
    pub alpha: Vec<f64>,
    /// `alpha_lk` including attacker energy.
    pub alpha_bar: Vec<f64>,
    /// `rho[(a, b)]` between users `a` and `b` (flat indices).
    pub rho: DMatrix<f64>,
    /// `rho_eve[(e, b)]` between attacker `e` and user `b`.
    pub rho_eve: DMatrix<f64>,
}

impl CorrelationParams {
    /// Attacker contribution `alpha_bar - alpha` per user.
    pub fn attack_energy(&self) -> Vec<f64> {
        self.alpha_bar
            .iter()
            .zip(&self.alpha)
            .map(|(b, a)| b - a)
            .collect()
    }
}

/// Computes `alpha`, `alpha_bar` and the pilot correlation tables.
pub fn correlation_params(
    cfg: &NetworkConfig,
    pilots: &PilotSet,
    plan: &AttackPlan,
    gains: &GainModel,
) -> Result<CorrelationParams> {
    plan.check_len(cfg)?;
    let total = cfg.total_users();
    let stacked = pilots.stacked();
    if stacked.ncols() != total {
        return Err(Error::Dimension {
            what: "pilot set users",
            expected: total,
            found: stacked.ncols(),
        });
    }
    let rho = stacked.transpose() * &stacked;
    let rho_eve = DMatrix::from_fn(cfg.total_eves(), total, |e, b| {
        plan.eves[e].pilot.dot(&stacked.column(b))
    });

    let mut alpha = vec![0.0; total];
    let mut alpha_bar = vec![0.0; total];
    for l in 0..cfg.cells {
        for k in 0..cfg.users {
            let lk = cfg.user_index(l, k);
            let mut bob = cfg.uplink_noise;
            for i in 0..cfg.cells {
                for j in 0..cfg.users {
                    let r = rho[(cfg.user_index(i, j), lk)];
                    bob += gains.p(cfg, i, j) * gains.beta.get(i, j, l) * r * r;
                }
            }
            let mut eve = 0.0;
            for i in 0..cfg.cells {
                for n in 0..cfg.eves {
                    let r = rho_eve[(cfg.eve_index(i, n), lk)];
                    eve += gains.p_eve(cfg, i, n) * gains.beta_eve.get(i, n, l) * r * r;
                }
            }
            alpha[lk] = bob;
            alpha_bar[lk] = bob + eve;
        }
    }
    Ok(CorrelationParams {
        alpha,
        alpha_bar,
        rho,
        rho_eve,
    })
}

/// Small-scale fading and uplink noise for one coherence interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub antennas: usize,
    pub cells: usize,
    pub users: usize,
    pub eves: usize,
    pub pilot_len: usize,
    /// `h[(i*K + j)*L + l]`: user `(i, j)` to BS `l`.
    pub h: Vec<Vec<Complex64>>,
    /// `h_eve[(i*N + n)*L + l]`: attacker `(i, n)` to BS `l`.
    pub h_eve: Vec<Vec<Complex64>>,
    /// Received pilot-block noise per BS, `tau` rows of `M` samples, row-major.
    pub noise: Vec<Vec<Complex64>>,
    pub seed: u64,
    pub trial: u64,
}

impl ChannelRealization {
    pub fn user_link(&self, i: usize, j: usize, l: usize) -> &[Complex64] {
        &self.h[(i * self.users + j) * self.cells + l]
    }

    pub fn eve_link(&self, i: usize, n: usize, l: usize) -> &[Complex64] {
        &self.h_eve[(i * self.eves + n) * self.cells + l]
    }
}

/// Draws all fading vectors with `trial = 0`.
pub fn draw_channels(cfg: &NetworkConfig, seed: u64) -> Result<ChannelRealization> {
    draw_trial(cfg, seed, 0)
}

/// Draws all fading vectors for one trial. Each link uses its own substream
/// keyed by `(seed, trial, link)`.
pub fn draw_trial(cfg: &NetworkConfig, seed: u64, trial: u64) -> Result<ChannelRealization> {
    let m = cfg
        .antennas
        .finite()
        .ok_or_else(|| Error::Domain("channel draws need a finite antenna count".into()))?;
    let links = cfg.total_users() * cfg.cells;
    let eve_links = cfg.total_eves() * cfg.cells;
    let h = (0..links)
        .map(|s| complex_gaussian_vec(&mut substream(seed, trial, s as u64), m, 1.0))
        .collect();
    let h_eve = (0..eve_links)
        .map(|s| {
            complex_gaussian_vec(&mut substream(seed, trial, (links + s) as u64), m, 1.0)
        })
        .collect();
    let noise = (0..cfg.cells)
        .map(|l| {
            let stream = (links + eve_links + l) as u64;
            complex_gaussian_vec(
                &mut substream(seed, trial, stream),
                cfg.pilot_len * m,
                cfg.uplink_noise,
            )
        })
        .collect();
    Ok(ChannelRealization {
        antennas: m,
        cells: cfg.cells,
        users: cfg.users,
        eves: cfg.eves,
        pilot_len: cfg.pilot_len,
        h,
        h_eve,
        noise,
        seed,
        trial,
    })
}

/// LS estimate split into its legitimate, attacker and noise parts.
#[derive(Debug, Clone, PartialEq)]
pub struct LsEstimate {
    pub bob_term: Vec<Complex64>,
    pub eve_term: Vec<Complex64>,
    pub noise_term: Vec<Complex64>,
}

impl LsEstimate {
    pub fn total(&self) -> Vec<Complex64> {
        self.bob_term
            .iter()
            .zip(&self.eve_term)
            .zip(&self.noise_term)
            .map(|((a, b), c)| a + b + c)
            .collect()
    }
}

fn axpy(acc: &mut [Complex64], scale: f64, x: &[Complex64]) {
    if scale != 0.0 {
        for (a, v) in acc.iter_mut().zip(x) {
            *a += v * scale;
        }
    }
}

/// Despreads the received pilot block at BS `target.0` with user
/// `target`'s pilot.
pub fn ls_estimate(
    real: &ChannelRealization,
    pilots: &PilotSet,
    plan: &AttackPlan,
    gains: &GainModel,
    cfg: &NetworkConfig,
    target: (usize, usize),
) -> Result<LsEstimate> {
    plan.check_len(cfg)?;
    let (l, k) = target;
    let m = real.antennas;
    let s_lk = pilots.pilot(l, k);
    let mut bob_term = vec![Complex64::default(); m];
    for i in 0..cfg.cells {
        for j in 0..cfg.users {
            let rho = s_lk.dot(&pilots.pilot(i, j));
            let amp = (gains.p(cfg, i, j) * gains.beta.get(i, j, l)).sqrt();
            axpy(&mut bob_term, amp * rho, real.user_link(i, j, l));
        }
    }
    let mut eve_term = vec![Complex64::default(); m];
    for i in 0..cfg.cells {
        for n in 0..cfg.eves {
            let rho = s_lk.dot(&plan.eve(cfg, i, n).pilot);
            let amp = (gains.p_eve(cfg, i, n) * gains.beta_eve.get(i, n, l)).sqrt();
            axpy(&mut eve_term, amp * rho, real.eve_link(i, n, l));
        }
    }
    let mut noise_term = vec![Complex64::default(); m];
    for (r, s) in s_lk.iter().enumerate() {
        axpy(&mut noise_term, *s, &real.noise[l][r * m..(r + 1) * m]);
    }
    Ok(LsEstimate {
        bob_term,
        eve_term,
        noise_term,
    })
}

/// The `tau x M` pilot block received at BS `l`, row-major.
pub fn received_pilot_block(
    real: &ChannelRealization,
    pilots: &PilotSet,
    plan: &AttackPlan,
    gains: &GainModel,
    cfg: &NetworkConfig,
    l: usize,
) -> Vec<Complex64> {
    let m = real.antennas;
    let mut y = real.noise[l].clone();
    for r in 0..cfg.pilot_len {
        let row = &mut y[r * m..(r + 1) * m];
        for i in 0..cfg.cells {
            for j in 0..cfg.users {
                let amp = (gains.p(cfg, i, j) * gains.beta.get(i, j, l)).sqrt();
                axpy(row, amp * pilots.pilot(i, j)[r], real.user_link(i, j, l));
            }
            for n in 0..cfg.eves {
                let amp = (gains.p_eve(cfg, i, n) * gains.beta_eve.get(i, n, l)).sqrt();
                axpy(row, amp * plan.eve(cfg, i, n).pilot[r], real.eve_link(i, n, l));
            }
        }
    }
    y
}

/// Variance of the attacker-induced estimation error,
/// `M * sum p_eve * beta_eve * rho^2`.
pub fn estimation_error_variance(
    cfg: &NetworkConfig,
    pilots: &PilotSet,
    plan: &AttackPlan,
    gains: &GainModel,
    target: (usize, usize),
) -> Result<f64> {
    plan.check_len(cfg)?;
    let (l, k) = target;
    let energy: f64 = (0..cfg.cells)
        .flat_map(|i| (0..cfg.eves).map(move |n| (i, n)))
        .map(|(i, n)| {
            let rho = pilots.pilot(l, k).dot(&plan.eve(cfg, i, n).pilot);
            gains.p_eve(cfg, i, n) * gains.beta_eve.get(i, n, l) * rho * rho
        })
        .sum();
    if energy == 0.0 {
        return Ok(0.0);
    }
    Ok(cfg.antennas.as_f64() * energy)
}
