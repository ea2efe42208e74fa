//! Network configuration, large-scale gains, SINR targets and their validation.
//!
//! Users are addressed by zero-based `(cell, user)` pairs. Link tables are
//! indexed `(source cell, source node, receiving BS)`, so `beta.get(i, j, l)`
//! is the gain from user `j` of cell `i` to the base station of cell `l`.

use std::fmt;

use crate::error::{Error, Result};

/// Tolerance used when checking the inverse power-control equality.
pub const POWER_CONTROL_TOL: f64 = 1e-9;

/// Converts a dB value to linear power.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts linear power to dB.
pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Base-station array size. `Infinite` selects the large-array limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Antennas {
    Finite(usize),
    Infinite,
}

impl Antennas {
    /// Antenna count as a float; `f64::INFINITY` for the limit.
    pub fn as_f64(self) -> f64 {
        match self {
            Antennas::Finite(m) => m as f64,
            Antennas::Infinite => f64::INFINITY,
        }
    }

    pub fn finite(self) -> Option<usize> {
        match self {
            Antennas::Finite(m) => Some(m),
            Antennas::Infinite => None,
        }
    }
}

impl fmt::Display for Antennas {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Antennas::Finite(m) => write!(f, "{m}"),
            Antennas::Infinite => f.write_str("inf"),
        }
    }
}

/// Cell, user and attacker counts plus noise levels.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Number of cells `L`.
    pub cells: usize,
    /// Users per cell `K`.
    pub users: usize,
    /// Attackers per cell `N` (may be zero).
    pub eves: usize,
    /// BS antenna count `M`.
    pub antennas: Antennas,
    /// Pilot length `tau`.
    pub pilot_len: usize,
    /// Uplink noise variance per complex element after despreading.
    pub uplink_noise: f64,
    /// Downlink noise variance at each user.
    pub downlink_noise: f64,
}

impl NetworkConfig {
    /// The default two-cell scenario: `L=2, K=4, tau=3`, noise variances 0.1.
    pub fn default_two_cell(eves: usize, antennas: Antennas) -> Self {
        NetworkConfig {
            cells: 2,
            users: 4,
            eves,
            antennas,
            pilot_len: 3,
            uplink_noise: 0.1,
            downlink_noise: 0.1,
        }
    }

    /// `K_tot = L * K`.
    pub fn total_users(&self) -> usize {
        self.cells * self.users
    }

    pub fn total_eves(&self) -> usize {
        self.cells * self.eves
    }

    /// Flat index of `(cell, user)`.
    #[inline]
    pub fn user_index(&self, cell: usize, user: usize) -> usize {
        cell * self.users + user
    }

    /// Flat index of `(cell, eve)`.
    #[inline]
    pub fn eve_index(&self, cell: usize, eve: usize) -> usize {
        cell * self.eves + eve
    }

    pub fn with_eves(&self, eves: usize) -> Self {
        NetworkConfig {
            eves,
            ..self.clone()
        }
    }

    pub fn with_antennas(&self, antennas: Antennas) -> Self {
        NetworkConfig {
            antennas,
            ..self.clone()
        }
    }
}

/// Dense `(source cell, source node, receiving BS)` table of linear gains.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkTable {
    cells: usize,
    nodes: usize,
    stations: usize,
    values: Vec<f64>,
}

impl LinkTable {
    pub fn from_fn(
        cells: usize,
        nodes: usize,
        stations: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(cells * nodes * stations);
        for i in 0..cells {
            for j in 0..nodes {
                for l in 0..stations {
                    values.push(f(i, j, l));
                }
            }
        }
        LinkTable {
            cells,
            nodes,
            stations,
            values,
        }
    }

    /// Builds a table from nested `[i][j][l]` vectors, rejecting ragged input.
    pub fn from_nested(nested: &[Vec<Vec<f64>>], what: &'static str) -> Result<Self> {
        let cells = nested.len();
        let nodes = nested.first().map_or(0, Vec::len);
        let stations = nested
            .first()
            .and_then(|c| c.first())
            .map_or(0, Vec::len);
        for cell in nested {
            if cell.len() != nodes {
                return Err(Error::Dimension {
                    what,
                    expected: nodes,
                    found: cell.len(),
                });
            }
            for node in cell {
                if node.len() != stations {
                    return Err(Error::Dimension {
                        what,
                        expected: stations,
                        found: node.len(),
                    });
                }
            }
        }
        Ok(LinkTable::from_fn(cells, nodes, stations, |i, j, l| {
            nested[i][j][l]
        }))
    }

    /// `(cells, nodes, stations)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.cells, self.nodes, self.stations)
    }

    #[inline]
    pub fn get(&self, cell: usize, node: usize, station: usize) -> f64 {
        self.values[(cell * self.nodes + node) * self.stations + station]
    }

    pub fn set(&mut self, cell: usize, node: usize, station: usize, value: f64) {
        self.values[(cell * self.nodes + node) * self.stations + station] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Large-scale gains and uplink pilot powers.
#[derive(Debug, Clone, PartialEq)]
pub struct GainModel {
    /// `beta[i][j][l]`: user `(i, j)` to BS `l`.
    pub beta: LinkTable,
    /// `beta_eve[i][n][l]`: attacker `(i, n)` to BS `l`.
    pub beta_eve: LinkTable,
    /// Uplink pilot power per user, flat `(cell, user)` order.
    pub pilot_power: Vec<f64>,
    /// Uplink pilot power per attacker, flat `(cell, eve)` order.
    pub eve_power: Vec<f64>,
    /// Enforce `p_lk * beta_lkl = 1`.
    pub power_control: bool,
    /// Enforce `p_eve * beta_eve <= 1` toward every BS.
    pub eve_constraint: bool,
}

impl GainModel {
    /// Synthetic geometry: unit same-cell gains with unit pilot power,
    /// `cross_gain` between cells, attackers at unit gain toward
    /// `attacked_bs` and `cross_gain` elsewhere, all transmitting `eve_power`.
    pub fn synthetic(
        cfg: &NetworkConfig,
        cross_gain: f64,
        eve_power: f64,
        attacked_bs: usize,
    ) -> Self {
        let beta = LinkTable::from_fn(cfg.cells, cfg.users, cfg.cells, |i, _, l| {
            if i == l {
                1.0
            } else {
                cross_gain
            }
        });
        let beta_eve = LinkTable::from_fn(cfg.cells, cfg.eves, cfg.cells, |_, _, l| {
            if l == attacked_bs {
                1.0
            } else {
                cross_gain
            }
        });
        GainModel {
            beta,
            beta_eve,
            pilot_power: vec![1.0; cfg.total_users()],
            eve_power: vec![eve_power; cfg.total_eves()],
            power_control: true,
            eve_constraint: true,
        }
    }

    #[inline]
    pub fn p(&self, cfg: &NetworkConfig, cell: usize, user: usize) -> f64 {
        self.pilot_power[cfg.user_index(cell, user)]
    }

    #[inline]
    pub fn p_eve(&self, cfg: &NetworkConfig, cell: usize, eve: usize) -> f64 {
        self.eve_power[cfg.eve_index(cell, eve)]
    }

    /// Copy with every attacker transmitting `power`.
    pub fn with_eve_power(&self, power: f64) -> Self {
        GainModel {
            eve_power: vec![power; self.eve_power.len()],
            ..self.clone()
        }
    }
}

/// Per-cell SINR targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrTargets {
    pub gamma: Vec<Vec<f64>>,
}

impl SinrTargets {
    pub fn new(gamma: Vec<Vec<f64>>) -> Self {
        SinrTargets { gamma }
    }

    /// Two-cell targets used for the finite-array sweeps.
    pub fn default_two_cell() -> Self {
        SinrTargets {
            gamma: vec![vec![0.91, 0.74, 0.64, 0.23], vec![0.94, 0.82, 0.45, 0.20]],
        }
    }

    /// Same target for every user.
    pub fn uniform(cells: usize, users: usize, gamma: f64) -> Self {
        SinrTargets {
            gamma: vec![vec![gamma; users]; cells],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.gamma.iter().flatten().copied()
    }
}

/// Which invariant a [`Violation`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Invariant {
    PositiveCounts,
    PilotLength,
    Antennas,
    NoiseVariance,
    PositiveGain,
    NonNegativePower,
    PowerControl,
    EvePowerBound,
    EveStrictPositivity,
    EveReceivedPower,
    PositiveTarget,
    UnitPilot,
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Invariant::PositiveCounts => "positive-counts",
            Invariant::PilotLength => "pilot-length",
            Invariant::Antennas => "antennas",
            Invariant::NoiseVariance => "noise-variance",
            Invariant::PositiveGain => "positive-gain",
            Invariant::NonNegativePower => "non-negative-power",
            Invariant::PowerControl => "power-control",
            Invariant::EvePowerBound => "eve-power-bound",
            Invariant::EveStrictPositivity => "eve-strict-positivity",
            Invariant::EveReceivedPower => "eve-received-power",
            Invariant::PositiveTarget => "positive-target",
            Invariant::UnitPilot => "unit-pilot",
        };
        f.write_str(s)
    }
}

/// One failed invariant with the offending indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub invariant: Invariant,
    pub indices: Vec<Vec<usize>>,
    pub detail: String,
}

/// Outcome of a report-style validation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn fails(&self, invariant: Invariant) -> bool {
        self.violations.iter().any(|v| v.invariant == invariant)
    }

    pub(crate) fn push(&mut self, invariant: Invariant, indices: Vec<Vec<usize>>, detail: String) {
        if !indices.is_empty() {
            self.violations.push(Violation {
                invariant,
                indices,
                detail,
            });
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return f.write_str("pass");
        }
        for v in &self.violations {
            writeln!(f, "{}: {} at {:?}", v.invariant, v.detail, v.indices)?;
        }
        Ok(())
    }
}

fn check_dims(gains: &GainModel, targets: &SinrTargets, cfg: &NetworkConfig) -> Result<()> {
    let (bc, bk, bl) = gains.beta.shape();
    for (what, expected, found) in [
        ("beta cells", cfg.cells, bc),
        ("beta users", cfg.users, bk),
        ("beta stations", cfg.cells, bl),
        ("pilot_power", cfg.total_users(), gains.pilot_power.len()),
        ("eve_power", cfg.total_eves(), gains.eve_power.len()),
        ("target cells", cfg.cells, targets.gamma.len()),
    ] {
        if expected != found {
            return Err(Error::Dimension {
                what,
                expected,
                found,
            });
        }
    }
    let (ec, en, el) = gains.beta_eve.shape();
    // An empty attacker table may be stored with zero cells.
    if cfg.eves > 0 || ec * en * el > 0 {
        for (what, expected, found) in [
            ("beta_eve cells", cfg.cells, ec),
            ("beta_eve eves", cfg.eves, en),
            ("beta_eve stations", cfg.cells, el),
        ] {
            if expected != found {
                return Err(Error::Dimension {
                    what,
                    expected,
                    found,
                });
            }
        }
    }
    for cell in &targets.gamma {
        if cell.len() != cfg.users {
            return Err(Error::Dimension {
                what: "target users",
                expected: cfg.users,
                found: cell.len(),
            });
        }
    }
    Ok(())
}

/// Checks every configuration invariant and reports the failures.
///
/// Shape mismatches between the tables and `(L, K, N)` are structural and
/// returned as [`Error::Dimension`]; everything else lands in the report.
pub fn validate_config(
    cfg: &NetworkConfig,
    gains: &GainModel,
    targets: &SinrTargets,
) -> Result<ValidationReport> {
    check_dims(gains, targets, cfg)?;
    let mut report = ValidationReport::default();

    if cfg.cells == 0 || cfg.users == 0 {
        report.push(
            Invariant::PositiveCounts,
            vec![vec![cfg.cells, cfg.users]],
            "cells and users must be at least 1".into(),
        );
    }
    if cfg.pilot_len == 0 || cfg.pilot_len > cfg.users {
        report.push(
            Invariant::PilotLength,
            vec![vec![cfg.pilot_len]],
            format!("need 1 <= tau <= K = {}", cfg.users),
        );
    }
    if cfg.antennas == Antennas::Finite(0) {
        report.push(Invariant::Antennas, vec![vec![0]], "M must be at least 1".into());
    }
    let bad_noise: Vec<Vec<usize>> = [cfg.uplink_noise, cfg.downlink_noise]
        .iter()
        .enumerate()
        .filter(|(_, v)| !(v.is_finite() && **v >= 0.0))
        .map(|(i, _)| vec![i])
        .collect();
    report.push(
        Invariant::NoiseVariance,
        bad_noise,
        "noise variances must be finite and non-negative".into(),
    );

    let mut bad_gain = Vec::new();
    for i in 0..cfg.cells {
        for j in 0..cfg.users {
            for l in 0..cfg.cells {
                let b = gains.beta.get(i, j, l);
                if !(b.is_finite() && b > 0.0) {
                    bad_gain.push(vec![i, j, l]);
                }
            }
        }
        for n in 0..cfg.eves {
            for l in 0..cfg.cells {
                let b = gains.beta_eve.get(i, n, l);
                if !(b.is_finite() && b > 0.0) {
                    bad_gain.push(vec![i, n, l]);
                }
            }
        }
    }
    report.push(
        Invariant::PositiveGain,
        bad_gain,
        "gains must be finite and positive".into(),
    );

    let bad_power: Vec<Vec<usize>> = gains
        .pilot_power
        .iter()
        .chain(&gains.eve_power)
        .enumerate()
        .filter(|(_, p)| !(p.is_finite() && **p >= 0.0))
        .map(|(i, _)| vec![i])
        .collect();
    report.push(
        Invariant::NonNegativePower,
        bad_power,
        "powers must be finite and non-negative".into(),
    );

    if gains.power_control {
        let mut bad = Vec::new();
        for l in 0..cfg.cells {
            for k in 0..cfg.users {
                let prod = gains.p(cfg, l, k) * gains.beta.get(l, k, l);
                if (prod - 1.0).abs() > POWER_CONTROL_TOL {
                    bad.push(vec![l, k]);
                }
            }
        }
        report.push(
            Invariant::PowerControl,
            bad,
            "p_lk * beta_lkl must equal 1".into(),
        );
    }
    if gains.eve_constraint {
        let mut bad = Vec::new();
        for i in 0..cfg.cells {
            for n in 0..cfg.eves {
                for l in 0..cfg.cells {
                    if gains.p_eve(cfg, i, n) * gains.beta_eve.get(i, n, l) > 1.0 + POWER_CONTROL_TOL {
                        bad.push(vec![i, n, l]);
                    }
                }
            }
        }
        report.push(
            Invariant::EveReceivedPower,
            bad,
            "p_eve * beta_eve must not exceed 1".into(),
        );
    }

    let bad_targets: Vec<Vec<usize>> = targets
        .gamma
        .iter()
        .enumerate()
        .flat_map(|(l, cell)| {
            cell.iter()
                .enumerate()
                .filter(|(_, g)| !(g.is_finite() && **g > 0.0))
                .map(move |(k, _)| vec![l, k])
        })
        .collect();
    report.push(
        Invariant::PositiveTarget,
        bad_targets,
        "targets must be finite and positive".into(),
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (NetworkConfig, GainModel, SinrTargets) {
        let cfg = NetworkConfig::default_two_cell(1, Antennas::Finite(128));
        let gains = GainModel::synthetic(&cfg, 0.1, 1.0, 0);
        (cfg, gains, SinrTargets::default_two_cell())
    }

    #[test]
    fn well_formed_passes() {
        let (cfg, gains, targets) = setup();
        let report = validate_config(&cfg, &gains, &targets).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn broken_power_control_is_flagged() {
        let (cfg, mut gains, targets) = setup();
        gains.pilot_power[0] = 0.5;
        let report = validate_config(&cfg, &gains, &targets).unwrap();
        assert!(report.fails(Invariant::PowerControl));
        let v = &report.violations[0];
        assert_eq!(v.indices, vec![vec![0, 0]]);
    }

    #[test]
    fn power_control_disabled_accepts_any_power() {
        let (cfg, mut gains, targets) = setup();
        gains.pilot_power[0] = 0.5;
        gains.power_control = false;
        assert!(validate_config(&cfg, &gains, &targets).unwrap().passed());
    }

    #[test]
    fn beta_sized_for_fewer_users_is_dimension_error() {
        let (cfg, _, targets) = setup();
        let small = NetworkConfig { users: 3, ..cfg.clone() };
        let gains = GainModel::synthetic(&small, 0.1, 1.0, 0);
        let err = validate_config(&cfg, &gains, &targets).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }), "{err}");
    }

    #[test]
    fn pilot_longer_than_users_fails() {
        let (mut cfg, gains, targets) = setup();
        cfg.pilot_len = 5;
        assert!(validate_config(&cfg, &gains, &targets)
            .unwrap()
            .fails(Invariant::PilotLength));
    }

    #[test]
    fn eve_received_power_bound() {
        let (cfg, gains, targets) = setup();
        let hot = gains.with_eve_power(1.2);
        assert!(validate_config(&cfg, &hot, &targets)
            .unwrap()
            .fails(Invariant::EveReceivedPower));
    }

    #[test]
    fn non_positive_target_flagged() {
        let (cfg, gains, mut targets) = setup();
        targets.gamma[1][2] = 0.0;
        let report = validate_config(&cfg, &gains, &targets).unwrap();
        assert!(report.fails(Invariant::PositiveTarget));
    }

    #[test]
    fn validation_is_idempotent() {
        let (cfg, mut gains, targets) = setup();
        gains.pilot_power[3] = 2.0;
        let a = validate_config(&cfg, &gains, &targets).unwrap();
        let b = validate_config(&cfg, &gains, &targets).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn db_round_trip() {
        assert!((db_to_linear(0.0) - 1.0).abs() < 1e-15);
        assert!((db_to_linear(-20.0) - 0.01).abs() < 1e-15);
        assert!((linear_to_db(db_to_linear(3.3)) - 3.3).abs() < 1e-12);
    }
}
