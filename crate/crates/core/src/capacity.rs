//! User-capacity bounds and effective-bandwidth regions under attack.
//!
//! With `N` attackers per cell the budget on summed effective bandwidths
//! shrinks from `tau` to `tau / (LN + 1)`.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{NetworkConfig, SinrTargets};
use crate::pilot_design::effective_bandwidth;
use crate::rng::substream;

/// Lower edge of the bisection bracket.
pub const BISECT_LO: f64 = 1e-12;
/// Upper edge of the bisection bracket.
pub const BISECT_HI: f64 = 1e6;
/// Bisection stops once the bracket is this narrow.
pub const BISECT_TOL: f64 = 1e-9;

const UNIT_TOL: f64 = 1e-9;
const VOLUME_CHUNK: usize = 4096;

/// Which sum the budget constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scope {
    /// Each cell's bandwidths separately.
    #[default]
    PerCell,
    /// All bandwidths in the network together.
    Network,
}

impl Scope {
    pub fn name(self) -> &'static str {
        match self {
            Scope::PerCell => "per-cell",
            Scope::Network => "network",
        }
    }
}

impl std::str::FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-cell" => Ok(Scope::PerCell),
            "network" => Ok(Scope::Network),
            other => Err(Error::Parse(format!(
                "unknown scope '{other}', expected per-cell or network"
            ))),
        }
    }
}

/// Budget and presentation settings for region computations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionSpec {
    pub scope: Scope,
    /// `tau / (LN + 1)`.
    pub budget: f64,
    /// Proactive margin subtracted from the budget.
    pub margin: f64,
    /// Display cap applied to solved SINRs.
    pub cap: Option<f64>,
}

/// `tau / (LN + 1)`.
pub fn attack_budget(cfg: &NetworkConfig) -> f64 {
    cfg.pilot_len as f64 / (cfg.cells * cfg.eves + 1) as f64
}

impl RegionSpec {
    /// Budget of `cfg` with no margin and no cap.
    pub fn for_config(cfg: &NetworkConfig, scope: Scope) -> Self {
        Self {
            scope,
            budget: attack_budget(cfg),
            margin: 0.0,
            cap: None,
        }
    }

    pub fn with_margin(self, margin: f64) -> Self {
        Self { margin, ..self }
    }

    pub fn with_cap(self, cap: Option<f64>) -> Self {
        Self { cap, ..self }
    }

    /// Budget left after the margin.
    pub fn effective_budget(&self) -> f64 {
        self.budget - self.margin
    }

    fn check(&self, tau: usize) -> Result<()> {
        if !(self.budget > 0.0) {
            return Err(Error::Domain(format!("budget {} must be positive", self.budget)));
        }
        if !(self.margin >= 0.0 && self.margin < tau as f64) {
            return Err(Error::Domain(format!(
                "margin {} must lie in [0, {tau})",
                self.margin
            )));
        }
        if let Some(c) = self.cap {
            if !(c > 0.0) {
                return Err(Error::Domain(format!("cap {c} must be positive")));
            }
        }
        Ok(())
    }

    fn apply_cap(&self, gamma: f64) -> f64 {
        match self.cap {
            Some(c) => gamma.min(c),
            None => gamma,
        }
    }
}

/// Bound on the total number of users supporting given targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityBound {
    pub bound: f64,
    pub total_users: usize,
    /// `total_users <= bound`.
    pub satisfied: bool,
}

/// `sqrt(tau/(LN+1) * sum (1+g)/g)` against the user count.
pub fn capacity_bound(targets: &SinrTargets, cfg: &NetworkConfig) -> Result<CapacityBound> {
    let mut sum = 0.0;
    for g in targets.iter() {
        if !(g > 0.0) {
            return Err(Error::Domain(format!("SINR target {g} must be positive")));
        }
        sum += (1.0 + g) / g;
    }
    let bound = (attack_budget(cfg) * sum).sqrt();
    let total_users = targets.gamma.iter().map(Vec::len).sum();
    Ok(CapacityBound {
        bound,
        total_users,
        satisfied: total_users as f64 <= bound,
    })
}

/// Outcome of a region membership test.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionCheck {
    /// Summed bandwidths per constrained group (one per cell, or one total).
    pub sums: Vec<f64>,
    /// Budget after the margin.
    pub budget: f64,
    /// `budget - max(sums)`.
    pub slack: f64,
    pub inside: bool,
}

/// Tests whether targets lie inside the effective-bandwidth region.
pub fn region_check(targets: &SinrTargets, cfg: &NetworkConfig, spec: &RegionSpec) -> Result<RegionCheck> {
    spec.check(cfg.pilot_len)?;
    let per_cell: Vec<f64> = targets
        .gamma
        .iter()
        .map(|cell| cell.iter().map(|&g| effective_bandwidth(g)).sum())
        .collect();
    let sums = match spec.scope {
        Scope::PerCell => per_cell,
        Scope::Network => vec![per_cell.iter().sum()],
    };
    let budget = spec.effective_budget();
    let worst = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = budget - worst;
    Ok(RegionCheck {
        sums,
        budget,
        slack,
        inside: slack >= 0.0,
    })
}

/// Largest common SINR for `users` per cell: `b / (K - b)`.
///
/// Under network scope the budget is shared by `L * users`.
/// Returns `+inf` (before capping) when the budget covers every user.
pub fn max_common_sinr(users: usize, cfg: &NetworkConfig, spec: &RegionSpec) -> Result<f64> {
    if users == 0 {
        return Err(Error::Domain("need at least one user per cell".into()));
    }
    spec.check(cfg.pilot_len)?;
    let b = spec.effective_budget();
    let k = match spec.scope {
        Scope::PerCell => users,
        Scope::Network => users * cfg.cells,
    } as f64;
    let gamma = if b >= k { f64::INFINITY } else { b / (k - b) };
    Ok(spec.apply_cap(gamma))
}

/// Per-cell multipliers `[1, ..., 1, eta]` then `[eta; K]`, the two-cell
/// pattern where one user of the first cell and all of the second are scaled.
pub fn eta_pattern(users: usize, eta: f64) -> Vec<Vec<f64>> {
    let mut first = vec![1.0; users];
    if let Some(last) = first.last_mut() {
        *last = eta;
    }
    vec![first, vec![eta; users]]
}

/// Largest `g` with every cell's targets `m * g` inside the region.
pub fn max_scaled_sinr(pattern: &[Vec<f64>], cfg: &NetworkConfig, spec: &RegionSpec) -> Result<f64> {
    spec.check(cfg.pilot_len)?;
    if pattern.is_empty() || pattern.iter().any(Vec::is_empty) {
        return Err(Error::Domain("multiplier pattern must be non-empty".into()));
    }
    if let Some(m) = pattern.iter().flatten().find(|m| !(**m > 0.0 && m.is_finite())) {
        return Err(Error::Domain(format!("multiplier {m} must be positive")));
    }
    let budget = spec.effective_budget();
    let load = |g: f64| -> f64 {
        let cells = pattern
            .iter()
            .map(|ms| ms.iter().map(|m| effective_bandwidth(m * g)).sum::<f64>());
        match spec.scope {
            Scope::PerCell => cells.fold(f64::NEG_INFINITY, f64::max),
            Scope::Network => cells.sum(),
        }
    };
    if load(BISECT_HI) <= budget {
        return Ok(spec.apply_cap(f64::INFINITY));
    }
    if load(BISECT_LO) > budget {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (BISECT_LO, BISECT_HI);
    while hi - lo > BISECT_TOL * lo.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if load(mid) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(spec.apply_cap(lo))
}

/// Monte-Carlo volume of `{g in [0, cap]^d : sum f(g) + preload <= budget}`.
pub fn region_volume(
    preload: f64,
    free_dims: usize,
    budget: f64,
    cap: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples < 10_000 {
        return Err(Error::Domain(format!("need at least 10^4 samples, got {samples}")));
    }
    if free_dims == 0 {
        return Err(Error::Domain("need at least one free dimension".into()));
    }
    if !(cap > 0.0 && cap.is_finite()) {
        return Err(Error::Domain(format!("cap {cap} must be positive and finite")));
    }
    let room = budget - preload;
    if room <= 0.0 {
        return Ok(0.0);
    }
    let chunks = samples.div_ceil(VOLUME_CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, c as u64, 0);
            let n = VOLUME_CHUNK.min(samples - c * VOLUME_CHUNK);
            (0..n)
                .filter(|_| {
                    let used: f64 = (0..free_dims)
                        .map(|_| effective_bandwidth(rng.random::<f64>() * cap))
                        .sum();
                    used <= room
                })
                .count()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(cap.powi(free_dims as i32) * hits as f64 / samples as f64)
}

/// `1 - volume / reference`, zero when the reference is empty.
pub fn volume_reduction(volume: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        1.0 - volume / reference
    } else {
        0.0
    }
}

/// Frame-potential comparison for a stacked pilot matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchCheck {
    /// `tr(R R)` with `R = S' S`.
    pub trace: f64,
    /// `K_tot^2 / tau`.
    pub bound: f64,
    pub pass: bool,
}

/// Checks `tr((S'S)^2) >= K^2/tau` for unit-norm columns.
pub fn welch_check(stacked: &DMatrix<f64>) -> Result<WelchCheck> {
    let (tau, k) = stacked.shape();
    if tau == 0 || k == 0 {
        return Err(Error::Domain("empty pilot matrix".into()));
    }
    for (c, col) in stacked.column_iter().enumerate() {
        let n = col.norm();
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::Domain(format!("pilot column {c} has norm {n}")));
        }
    }
    let r = stacked.transpose() * stacked;
    let trace = r.iter().map(|v| v * v).sum::<f64>();
    let bound = (k * k) as f64 / tau as f64;
    Ok(WelchCheck {
        trace,
        bound,
        pass: trace >= bound * (1.0 - 1e-12),
    })
}

/// `sum (1+t)/t` over asymptotic SINRs against `(LN+1) K_tot^2 / tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumRateBound {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Evaluates the sum bound; `None` when some SINR is unbounded.
pub fn sum_inverse_bound(theta_inf: &[f64], cfg: &NetworkConfig) -> Option<SumRateBound> {
    if theta_inf.iter().any(|t| !t.is_finite()) {
        return None;
    }
    let lhs = theta_inf.iter().map(|t| (1.0 + t) / t).sum::<f64>();
    let k = theta_inf.len() as f64;
    let rhs = (cfg.cells * cfg.eves + 1) as f64 * k * k / cfg.pilot_len as f64;
    Some(SumRateBound {
        lhs,
        rhs,
        holds: lhs >= rhs * (1.0 - 1e-12),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Antennas;
    use approx::assert_abs_diff_eq;

    fn cfg(users: usize, eves: usize) -> NetworkConfig {
        NetworkConfig {
            users,
            ..NetworkConfig::default_two_cell(eves, Antennas::Infinite)
        }
    }

    fn per_cell(c: &NetworkConfig) -> RegionSpec {
        RegionSpec::for_config(c, Scope::PerCell)
    }

    #[test]
    fn bound_examples() {
        let c = cfg(4, 0);
        let ones = SinrTargets::uniform(2, 4, 1.0);
        let b = capacity_bound(&ones, &c).unwrap();
        assert_abs_diff_eq!(b.bound, 48f64.sqrt(), epsilon = 1e-12);
        assert!(!b.satisfied);
        let t = capacity_bound(&SinrTargets::default_two_cell(), &c).unwrap();
        assert_abs_diff_eq!(t.bound, (3.0f64 * 25.866_06).sqrt(), epsilon = 1e-3);
        assert!(t.satisfied);
        let many = capacity_bound(&ones, &cfg(4, 1_000_000)).unwrap();
        assert!(many.bound < 0.01);
    }

    #[test]
    fn region_examples() {
        let c = cfg(4, 0);
        let t = SinrTargets::default_two_cell();
        let net = region_check(&t, &c, &RegionSpec::for_config(&c, Scope::Network)).unwrap();
        assert_abs_diff_eq!(net.sums[0], 2.89106, epsilon = 1e-4);
        assert_abs_diff_eq!(net.slack, 0.10894, epsilon = 1e-4);
        assert!(net.inside);
        let c1 = cfg(4, 1);
        assert!(!region_check(&t, &c1, &RegionSpec::for_config(&c1, Scope::Network)).unwrap().inside);
        let shrunk = region_check(&t, &c, &RegionSpec::for_config(&c, Scope::Network).with_margin(0.5)).unwrap();
        assert_abs_diff_eq!(net.slack - shrunk.slack, 0.5, epsilon = 1e-12);
        assert!(region_check(&t, &c, &per_cell(&c).with_margin(3.0)).is_err());
    }

    #[test]
    fn common_sinr_endpoints() {
        let c = cfg(10, 0);
        assert_abs_diff_eq!(max_common_sinr(10, &c, &per_cell(&c)).unwrap(), 3.0 / 7.0, epsilon = 1e-12);
        let c = cfg(4, 10);
        assert_abs_diff_eq!(max_common_sinr(4, &c, &per_cell(&c)).unwrap(), 0.037037, epsilon = 1e-6);
        let c = cfg(6, 2);
        assert_abs_diff_eq!(max_common_sinr(6, &c, &per_cell(&c)).unwrap(), 0.111111, epsilon = 1e-6);
        let c = cfg(24, 2);
        assert_abs_diff_eq!(max_common_sinr(24, &c, &per_cell(&c)).unwrap(), 0.025641, epsilon = 1e-6);
        let c = cfg(3, 0);
        assert!(max_common_sinr(3, &c, &per_cell(&c)).unwrap().is_infinite());
        assert_eq!(max_common_sinr(3, &c, &per_cell(&c).with_cap(Some(1.0))).unwrap(), 1.0);
        assert!(max_common_sinr(0, &c, &per_cell(&c)).is_err());
    }

    #[test]
    fn common_sinr_decreases_in_attackers_and_users() {
        for k in 4..=10 {
            let mut prev = f64::INFINITY;
            for n in 0..=10 {
                let c = cfg(k, n);
                let g = max_common_sinr(k, &c, &per_cell(&c)).unwrap();
                assert!(g < prev);
                prev = g;
            }
        }
        for n in 0..=10 {
            let mut prev = f64::INFINITY;
            for k in 4..=24 {
                let c = cfg(k, n);
                let g = max_common_sinr(k, &c, &per_cell(&c)).unwrap();
                assert!(g < prev);
                prev = g;
            }
        }
    }

    #[test]
    fn scaled_sinr_examples() {
        let c = cfg(4, 2);
        let unit = max_scaled_sinr(&eta_pattern(4, 1.0), &c, &per_cell(&c)).unwrap();
        assert_abs_diff_eq!(unit, max_common_sinr(4, &c, &per_cell(&c)).unwrap(), epsilon = 1e-8);
        let low = max_scaled_sinr(&eta_pattern(4, 0.01), &c, &per_cell(&c)).unwrap();
        assert_abs_diff_eq!(low, 0.249, epsilon = 1e-3);
        let c10 = cfg(4, 10);
        let far = max_scaled_sinr(&eta_pattern(4, 0.01), &c10, &per_cell(&c10)).unwrap();
        assert_abs_diff_eq!(far, 0.050, epsilon = 1e-3);
        let high = max_scaled_sinr(&eta_pattern(4, 10.0), &c, &per_cell(&c)).unwrap();
        assert_abs_diff_eq!(high, 0.01765, epsilon = 1e-4);
        assert!(max_scaled_sinr(&[vec![1.0, 0.0]], &c, &per_cell(&c)).is_err());
    }

    #[test]
    fn volume_behaviour() {
        assert_eq!(region_volume(1.0, 3, 0.9, 1.0, 10_000, 1).unwrap(), 0.0);
        assert!(region_volume(0.0, 3, 3.0, 1.0, 100, 1).is_err());
        // every point of the unit cube fits when the budget covers 3 * 1/2
        assert_abs_diff_eq!(region_volume(0.0, 3, 1.5, 1.0, 10_000, 1).unwrap(), 1.0, epsilon = 1e-12);
        let a = region_volume(1.0, 3, 1.6, 1.0, 50_000, 9).unwrap();
        let b = region_volume(1.0, 3, 2.2, 1.0, 50_000, 9).unwrap();
        assert!(b >= a);
        assert_eq!(a, region_volume(1.0, 3, 1.6, 1.0, 50_000, 9).unwrap());
        assert_abs_diff_eq!(volume_reduction(0.25, 1.0), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn welch_examples() {
        let eye = DMatrix::<f64>::identity(3, 3);
        let w = welch_check(&eye).unwrap();
        assert_abs_diff_eq!(w.trace, 3.0, epsilon = 1e-12);
        assert!(w.pass);
        let pair = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let w = welch_check(&pair).unwrap();
        assert_abs_diff_eq!(w.trace, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.bound, 4.0, epsilon = 1e-12);
        assert!(welch_check(&DMatrix::from_row_slice(1, 2, &[2.0, 1.0])).is_err());
    }

    #[test]
    fn sum_bound_skips_unbounded() {
        let c = cfg(2, 0);
        assert!(sum_inverse_bound(&[f64::INFINITY, 1.0], &c).is_none());
        let one_cell = NetworkConfig { cells: 1, pilot_len: 1, ..c };
        let b = sum_inverse_bound(&[1.0, 1.0], &one_cell).unwrap();
        assert_abs_diff_eq!(b.lhs, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.rhs, 4.0, epsilon = 1e-12);
        assert!(b.holds);
    }

    #[test]
    fn scope_parses() {
        assert_eq!("network".parse::<Scope>().unwrap(), Scope::Network);
        assert_eq!("per-cell".parse::<Scope>().unwrap(), Scope::PerCell);
        assert!("cell".parse::<Scope>().is_err());
    }
}
