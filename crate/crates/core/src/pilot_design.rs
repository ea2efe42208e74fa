//! User-capacity-achieving pilot construction.
//!
//! Per cell, SINR targets become effective bandwidths `b = g/(1+g)`, which
//! are scaled onto the region boundary `sum(b) = tau`. A chain of
//! T-transforms carries the majorizing vector `x = [1; tau] ++ [0; K-tau]`
//! onto the scaled bandwidths. Each T-transform is realized as a Givens
//! rotation, and their product `W` satisfies `diag(W' diag(x) W) = b`. The
//! pilots are the normalized columns of the first `tau` rows of `W`, which
//! gives the generalized Welch-bound-equality identity `S diag(b) S' = I`.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::model::{NetworkConfig, SinrTargets};

/// Residual below which a chain coordinate counts as matched.
pub const CHAIN_TOL: f64 = 1e-12;

/// Slack allowed on sum comparisons against `tau`.
const SUM_TOL: f64 = 1e-12;

/// Effective bandwidth of one target.
#[inline]
pub fn effective_bandwidth(gamma: f64) -> f64 {
    if gamma.is_infinite() {
        1.0
    } else {
        gamma / (1.0 + gamma)
    }
}

/// SINR corresponding to an effective bandwidth; `+inf` at 1.
#[inline]
pub fn sinr_from_bandwidth(b: f64) -> f64 {
    if b >= 1.0 {
        f64::INFINITY
    } else {
        b / (1.0 - b)
    }
}

/// Raw and boundary-normalized effective bandwidths of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveBandwidths {
    /// `g/(1+g)` of the requested targets.
    pub raw: Vec<f64>,
    /// Bandwidths scaled so they sum to `tau`.
    pub scaled: Vec<f64>,
    /// Modified targets `b/(1-b)` of the scaled bandwidths.
    pub gamma_hat: Vec<f64>,
    /// Rule that produced `scaled`.
    pub rule: BoundaryRule,
}

/// How raw bandwidths are lifted onto `sum = tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryRule {
    /// `b * tau / sum(b)`; fails if any entry reaches 1.
    Proportional,
    /// `max(b, level)` with the level chosen so the sum is `tau`.
    /// Always feasible for `tau < K` and keeps `max(b)` as small as possible.
    LevelFill,
    /// Proportional, falling back to level fill when that is infeasible.
    #[default]
    Auto,
}

impl EffectiveBandwidths {
    pub fn total(&self) -> f64 {
        self.scaled.iter().sum()
    }
}

/// Maps targets to effective bandwidths element-wise.
pub fn effective_bandwidths(gamma: &[f64]) -> Result<Vec<f64>> {
    gamma
        .iter()
        .map(|&g| {
            if g.is_finite() && g > 0.0 {
                Ok(effective_bandwidth(g))
            } else {
                Err(Error::Domain(format!(
                    "SINR target must be finite and positive, got {g}"
                )))
            }
        })
        .collect()
}

/// Scales raw bandwidths proportionally onto `sum = tau`.
///
/// With `tau == K` the only boundary point is all-ones (orthogonal pilots),
/// whose modified targets are unbounded.
pub fn normalize_to_boundary(raw: &[f64], tau: usize) -> Result<EffectiveBandwidths> {
    if tau == 0 || tau > raw.len() {
        return Err(Error::Domain(format!(
            "pilot length {tau} must lie in 1..={}",
            raw.len()
        )));
    }
    if let Some(b) = raw.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
        return Err(Error::Domain(format!(
            "effective bandwidth {b} outside (0, 1)"
        )));
    }
    let sum: f64 = raw.iter().sum();
    let budget = tau as f64;
    if sum > budget + SUM_TOL {
        return Err(Error::RegionViolation { sum, budget });
    }
    if tau == raw.len() {
        return Ok(EffectiveBandwidths {
            raw: raw.to_vec(),
            scaled: vec![1.0; tau],
            gamma_hat: vec![f64::INFINITY; tau],
            rule: BoundaryRule::Proportional,
        });
    }
    let scale = budget / sum;
    let scaled: Vec<f64> = raw.iter().map(|b| b * scale).collect();
    if let Some((user, &value)) = scaled.iter().enumerate().find(|(_, b)| **b >= 1.0) {
        return Err(Error::InfeasibleModification { user, value });
    }
    let gamma_hat = scaled.iter().map(|&b| sinr_from_bandwidth(b)).collect();
    Ok(EffectiveBandwidths {
        raw: raw.to_vec(),
        scaled,
        gamma_hat,
        rule: BoundaryRule::Proportional,
    })
}

/// Raises the smallest bandwidths to a common level until the sum is `tau`.
pub fn level_fill_to_boundary(raw: &[f64], tau: usize) -> Result<EffectiveBandwidths> {
    // reuse the proportional checks for domain and region errors
    match normalize_to_boundary(raw, tau) {
        Err(Error::InfeasibleModification { .. }) | Ok(_) => {}
        Err(e) => return Err(e),
    }
    let k = raw.len();
    let mut asc = raw.to_vec();
    asc.sort_by(|a, b| a.total_cmp(b));
    let budget = tau as f64;
    let mut level = budget / k as f64;
    for m in 1..=k {
        let rest: f64 = asc[m..].iter().sum();
        let cand = (budget - rest) / m as f64;
        if cand >= asc[m - 1] && (m == k || cand <= asc[m]) {
            level = cand;
            break;
        }
    }
    let scaled: Vec<f64> = raw.iter().map(|&b| b.max(level)).collect();
    if let Some((user, &value)) = scaled.iter().enumerate().find(|(_, b)| **b >= 1.0) {
        return Err(Error::InfeasibleModification { user, value });
    }
    let gamma_hat = scaled.iter().map(|&b| sinr_from_bandwidth(b)).collect();
    Ok(EffectiveBandwidths {
        raw: raw.to_vec(),
        scaled,
        gamma_hat,
        rule: BoundaryRule::LevelFill,
    })
}

/// Applies `rule` to lift raw bandwidths onto the boundary.
pub fn lift_to_boundary(raw: &[f64], tau: usize, rule: BoundaryRule) -> Result<EffectiveBandwidths> {
    match rule {
        BoundaryRule::Proportional => normalize_to_boundary(raw, tau),
        BoundaryRule::LevelFill => level_fill_to_boundary(raw, tau),
        BoundaryRule::Auto => match normalize_to_boundary(raw, tau) {
            Err(Error::InfeasibleModification { .. }) => level_fill_to_boundary(raw, tau),
            r => r,
        },
    }
}

/// `[1; tau] ++ [0; K - tau]`, which majorizes every boundary point.
pub fn majorization_source(users: usize, tau: usize) -> Result<Vec<f64>> {
    if tau == 0 || tau > users {
        return Err(Error::Domain(format!(
            "pilot length {tau} must lie in 1..={users}"
        )));
    }
    Ok((0..users).map(|k| if k < tau { 1.0 } else { 0.0 }).collect())
}

/// One T-transform step on sorted coordinates `(i, j)`, `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    pub i: usize,
    pub j: usize,
    /// Mixing weight; the Givens angle satisfies `cos^2 = lambda`.
    pub lambda: f64,
}

/// Ordered T-transform chain and the orthogonal matrix realizing it.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationChain {
    /// Steps in application order, indexed in descending-sorted coordinates.
    pub rotations: Vec<Rotation>,
    /// `K x K` orthogonal matrix with columns in the caller's user order.
    pub w: DMatrix<f64>,
    /// Majorizing source vector `x`.
    pub source: Vec<f64>,
    /// `order[p]` is the original index of the `p`-th largest target.
    pub order: Vec<usize>,
}

impl RotationChain {
    /// `diag(W' diag(x) W)`, the vector the chain reaches.
    pub fn reached(&self) -> Vec<f64> {
        let k = self.w.ncols();
        (0..k)
            .map(|c| {
                (0..k)
                    .map(|r| self.source[r] * self.w[(r, c)] * self.w[(r, c)])
                    .sum()
            })
            .collect()
    }
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    // stable sort keeps ties in original index order
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

fn check_majorization(source: &[f64], target: &[f64]) -> Result<()> {
    let mut src: Vec<f64> = source.to_vec();
    src.sort_by(|a, b| b.total_cmp(a));
    let mut tgt: Vec<f64> = target.to_vec();
    tgt.sort_by(|a, b| b.total_cmp(a));
    let tol = 1e-9 * (1.0 + src.iter().map(|v| v.abs()).sum::<f64>());
    let (mut s, mut t) = (0.0, 0.0);
    for m in 0..src.len() {
        s += src[m];
        t += tgt[m];
        if s + tol < t {
            return Err(Error::Majorization {
                index: m + 1,
                source_sum: s,
                target_sum: t,
            });
        }
    }
    if (s - t).abs() > tol {
        return Err(Error::Majorization {
            index: src.len(),
            source_sum: s,
            target_sum: t,
        });
    }
    Ok(())
}

/// Builds the T-transform chain taking `source` to `target`.
///
/// `source` must be sorted descending. The target is sorted internally and
/// each step picks the largest `i` still above its target and the smallest
/// `j > i` still below it, matching at least one coordinate per step.
pub fn t_transform_chain(source: &[f64], target: &[f64]) -> Result<RotationChain> {
    let k = source.len();
    if target.len() != k {
        return Err(Error::Dimension {
            what: "chain target",
            expected: k,
            found: target.len(),
        });
    }
    if source.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Domain("majorization source must be sorted descending".into()));
    }
    check_majorization(source, target)?;

    let order = descending_order(target);
    let goal: Vec<f64> = order.iter().map(|&o| target[o]).collect();
    let mut v = source.to_vec();
    let mut w = DMatrix::<f64>::identity(k, k);
    let mut rotations = Vec::new();

    while v
        .iter()
        .zip(&goal)
        .any(|(a, b)| (a - b).abs() > CHAIN_TOL)
    {
        if rotations.len() >= k.saturating_sub(1) {
            return Err(Error::Internal(format!(
                "T-transform chain exceeded {} steps",
                k.saturating_sub(1)
            )));
        }
        let i = (0..k)
            .rev()
            .find(|&i| v[i] - goal[i] > CHAIN_TOL)
            .ok_or_else(|| Error::Internal("no coordinate above target".into()))?;
        let j = (i + 1..k)
            .find(|&j| goal[j] - v[j] > CHAIN_TOL)
            .ok_or_else(|| Error::Internal(format!("no partner below target after {i}")))?;
        let excess = v[i] - goal[i];
        let deficit = goal[j] - v[j];
        let delta = excess.min(deficit);
        let spread = v[i] - v[j];
        let lambda = (1.0 - delta / spread).clamp(0.0, 1.0);
        let (vi, vj) = (v[i], v[j]);
        v[i] = lambda * vi + (1.0 - lambda) * vj;
        v[j] = lambda * vj + (1.0 - lambda) * vi;
        if excess <= deficit {
            v[i] = goal[i];
        }
        if deficit <= excess {
            v[j] = goal[j];
        }

        let c = lambda.sqrt();
        let s = (1.0 - lambda).sqrt();
        for r in 0..k {
            let (a, b) = (w[(r, i)], w[(r, j)]);
            w[(r, i)] = a * c + b * s;
            w[(r, j)] = -a * s + b * c;
        }
        rotations.push(Rotation { i, j, lambda });
    }

    let mut unsorted = DMatrix::<f64>::zeros(k, k);
    for (p, &orig) in order.iter().enumerate() {
        unsorted.set_column(orig, &w.column(p));
    }
    Ok(RotationChain {
        rotations,
        w: unsorted,
        source: source.to_vec(),
        order,
    })
}

/// `tau x K` pilot matrix, one unit-norm column per user.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotMatrix(pub DMatrix<f64>);

impl PilotMatrix {
    pub fn pilot_len(&self) -> usize {
        self.0.nrows()
    }

    pub fn users(&self) -> usize {
        self.0.ncols()
    }

    pub fn column(&self, user: usize) -> DVectorView<'_, f64> {
        self.0.column(user)
    }

    /// `s_a' s_b`.
    pub fn correlation(&self, a: usize, b: usize) -> f64 {
        self.0.column(a).dot(&self.0.column(b))
    }

    /// `S diag(weights) S'`.
    pub fn weighted_frame(&self, weights: &[f64]) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.0.nrows(), self.0.ncols(), |r, c| {
            self.0[(r, c)] * weights[c]
        });
        &scaled * self.0.transpose()
    }

    /// Finds a column equal to `+-e_p`, returning `(user, p)`.
    pub fn basis_column(&self, tol: f64) -> Option<(usize, usize)> {
        (0..self.users()).find_map(|u| {
            let col = self.0.column(u);
            let p = col.iamax();
            let is_basis = col.iter().enumerate().all(|(r, v)| {
                if r == p {
                    (v.abs() - 1.0).abs() <= tol
                } else {
                    v.abs() <= tol
                }
            });
            is_basis.then_some((u, p))
        })
    }
}

/// Forms `normc(sqrt(B) V Z^(-1/2))` from the first `tau` rows of `W`.
pub fn build_pilot_matrix(
    chain: &RotationChain,
    bandwidths: &[f64],
    tau: usize,
) -> Result<PilotMatrix> {
    let k = bandwidths.len();
    if chain.w.ncols() != k || tau == 0 || tau > k {
        return Err(Error::Dimension {
            what: "pilot matrix users",
            expected: chain.w.ncols(),
            found: k,
        });
    }
    if let Some(b) = bandwidths.iter().find(|b| !(**b > 0.0)) {
        return Err(Error::Domain(format!(
            "effective bandwidth {b} must be positive"
        )));
    }
    let total: f64 = bandwidths.iter().sum();
    let v = chain.w.rows(0, tau);
    let mut s = DMatrix::from_fn(tau, k, |r, c| {
        total.sqrt() * v[(r, c)] / bandwidths[c].sqrt()
    });
    for mut col in s.column_iter_mut() {
        let norm = col.norm();
        if norm == 0.0 {
            return Err(Error::Internal("zero pilot column".into()));
        }
        col /= norm;
    }
    Ok(PilotMatrix(s))
}

/// Full design for one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDesign {
    pub pilots: PilotMatrix,
    pub bandwidths: EffectiveBandwidths,
    pub chain: RotationChain,
}

/// Designs pilots for one cell from its targets.
pub fn design_cell(gamma: &[f64], tau: usize) -> Result<CellDesign> {
    design_cell_with(gamma, tau, BoundaryRule::Auto)
}

pub fn design_cell_with(gamma: &[f64], tau: usize, rule: BoundaryRule) -> Result<CellDesign> {
    let raw = effective_bandwidths(gamma)?;
    let mut bandwidths = lift_to_boundary(&raw, tau, rule)?;
    // users whose bandwidth was left alone keep their exact target
    for (k, g) in gamma.iter().enumerate() {
        if bandwidths.scaled[k] == bandwidths.raw[k] {
            bandwidths.gamma_hat[k] = *g;
        }
    }
    let source = majorization_source(gamma.len(), tau)?;
    let chain = t_transform_chain(&source, &bandwidths.scaled)?;
    let pilots = build_pilot_matrix(&chain, &bandwidths.scaled, tau)?;
    Ok(CellDesign {
        pilots,
        bandwidths,
        chain,
    })
}

/// Independent per-cell designs for the whole network.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotDesign {
    pub cells: Vec<CellDesign>,
}

impl PilotDesign {
    pub fn pilot_set(&self) -> PilotSet {
        PilotSet {
            cells: self.cells.iter().map(|c| c.pilots.clone()).collect(),
        }
    }

    /// Modified targets in flat `(cell, user)` order.
    pub fn gamma_hat(&self) -> Vec<f64> {
        self.cells
            .iter()
            .flat_map(|c| c.bandwidths.gamma_hat.iter().copied())
            .collect()
    }
}

/// Designs every cell with [`BoundaryRule::Auto`].
pub fn design_pilots(targets: &SinrTargets, cfg: &NetworkConfig) -> Result<PilotDesign> {
    design_pilots_with(targets, cfg, BoundaryRule::Auto)
}

/// Designs every cell; fails on the first cell outside its region.
pub fn design_pilots_with(
    targets: &SinrTargets,
    cfg: &NetworkConfig,
    rule: BoundaryRule,
) -> Result<PilotDesign> {
    if targets.gamma.len() != cfg.cells {
        return Err(Error::Dimension {
            what: "target cells",
            expected: cfg.cells,
            found: targets.gamma.len(),
        });
    }
    let cells = targets
        .gamma
        .iter()
        .map(|g| {
            if g.len() != cfg.users {
                return Err(Error::Dimension {
                    what: "target users",
                    expected: cfg.users,
                    found: g.len(),
                });
            }
            design_cell_with(g, cfg.pilot_len, rule)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PilotDesign { cells })
}

/// Downlink powers `P = alpha * g / (1 + g)`.
pub fn power_allocation(gamma_hat: &[f64], alpha: &[f64]) -> Result<Vec<f64>> {
    if gamma_hat.len() != alpha.len() {
        return Err(Error::Dimension {
            what: "power allocation",
            expected: gamma_hat.len(),
            found: alpha.len(),
        });
    }
    gamma_hat
        .iter()
        .zip(alpha)
        .map(|(&g, &a)| {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Domain(format!("power scaling {a} must be positive")));
            }
            Ok(a * effective_bandwidth(g))
        })
        .collect()
}

/// Pilots of every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSet {
    pub cells: Vec<PilotMatrix>,
}

impl PilotSet {
    /// Orthonormal pilots (`tau = K`) in every cell.
    pub fn orthogonal(cells: usize, users: usize) -> Self {
        PilotSet {
            cells: vec![PilotMatrix(DMatrix::identity(users, users)); cells],
        }
    }

    pub fn pilot(&self, cell: usize, user: usize) -> DVectorView<'_, f64> {
        self.cells[cell].column(user)
    }

    pub fn pilot_len(&self) -> usize {
        self.cells.first().map_or(0, PilotMatrix::pilot_len)
    }

    /// `rho_{ijlk} = s_lk' s_ij`.
    pub fn rho(&self, i: usize, j: usize, l: usize, k: usize) -> f64 {
        self.pilot(l, k).dot(&self.pilot(i, j))
    }

    /// `s_lk' s` for an arbitrary pilot `s`.
    pub fn rho_with(&self, l: usize, k: usize, s: &DVector<f64>) -> f64 {
        self.pilot(l, k).dot(s)
    }

    /// All cells side by side, `tau x K_tot`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let tau = self.pilot_len();
        let total: usize = self.cells.iter().map(PilotMatrix::users).sum();
        let mut out = DMatrix::zeros(tau, total);
        let mut c = 0;
        for cell in &self.cells {
            for u in 0..cell.users() {
                out.set_column(c, &cell.column(u));
                c += 1;
            }
        }
        out
    }
}
