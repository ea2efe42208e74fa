//! TOML scenario files and the end-to-end design pipeline they drive.
//!
//! Cell, user, attacker and station indices in files are 1-based. Any scalar
//! power or gain may be given in dB through a `_db` suffixed key instead.

use std::path::Path;

use nalgebra::DVector;
use serde::Deserialize;

use crate::channel_attack::{correlation_params, structural_pilot, AttackPlan, CorrelationParams, EveAssignment, PilotMode, select_eve_pilot};
use crate::error::{Error, Result};
use crate::model::{db_to_linear, Antennas, GainModel, LinkTable, NetworkConfig, SinrTargets};
use crate::pilot_design::{design_pilots_with, power_allocation, BoundaryRule, PilotDesign, PilotSet};

/// How gains are produced for a given network size.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSpec {
    pub cross_gain: f64,
    pub eve_power: f64,
    /// Zero-based BS the attackers are close to; defaults to the target cell.
    pub attacked_bs: Option<usize>,
    pub power_control: bool,
    pub eve_constraint: bool,
    /// Explicit user gains; synthetic when absent.
    pub beta: Option<LinkTable>,
    /// Explicit attacker gains; synthetic when absent.
    pub beta_eve: Option<LinkTable>,
    /// Explicit pilot powers in flat order; `1 / beta_lkl` when absent.
    pub pilot_power: Option<Vec<f64>>,
}

impl Default for GainSpec {
    fn default() -> Self {
        GainSpec {
            cross_gain: 0.1,
            eve_power: 1.0,
            attacked_bs: None,
            power_control: true,
            eve_constraint: true,
            beta: None,
            beta_eve: None,
            pilot_power: None,
        }
    }
}

impl GainSpec {
    /// Gains sized for `cfg`, with attackers near `attacked_bs`.
    pub fn build(&self, cfg: &NetworkConfig, default_bs: usize) -> Result<GainModel> {
        let bs = self.attacked_bs.unwrap_or(default_bs);
        let mut g = GainModel::synthetic(cfg, self.cross_gain, self.eve_power, bs);
        g.power_control = self.power_control;
        g.eve_constraint = self.eve_constraint;
        if let Some(beta) = &self.beta {
            let want = (cfg.cells, cfg.users, cfg.cells);
            if beta.shape() != want {
                return Err(Error::Dimension {
                    what: "beta table",
                    expected: want.0 * want.1 * want.2,
                    found: beta.values().len(),
                });
            }
            g.beta = beta.clone();
            g.pilot_power = (0..cfg.cells)
                .flat_map(|l| (0..cfg.users).map(move |k| (l, k)))
                .map(|(l, k)| 1.0 / g.beta.get(l, k, l))
                .collect();
        }
        if let Some(be) = &self.beta_eve {
            let want = (cfg.cells, cfg.eves, cfg.cells);
            if be.shape() != want {
                return Err(Error::Dimension {
                    what: "beta_eve table",
                    expected: want.0 * want.1 * want.2,
                    found: be.values().len(),
                });
            }
            g.beta_eve = be.clone();
        }
        if let Some(p) = &self.pilot_power {
            if p.len() != cfg.total_users() {
                return Err(Error::Dimension {
                    what: "pilot_power table",
                    expected: cfg.total_users(),
                    found: p.len(),
                });
            }
            g.pilot_power = p.clone();
        }
        Ok(g)
    }
}

/// Attacker pilot choice as written in a scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum ModeSpec {
    Known,
    Conjugate,
    /// The first pilot axis, available without knowledge of `S`.
    Structural,
    Custom(Vec<f64>),
}

impl ModeSpec {
    fn resolve(&self, tau: usize) -> PilotMode {
        match self {
            ModeSpec::Known => PilotMode::KnownPilot,
            ModeSpec::Conjugate => PilotMode::Conjugate,
            ModeSpec::Structural => PilotMode::Custom(structural_pilot(tau)),
            ModeSpec::Custom(v) => PilotMode::Custom(DVector::from_vec(v.clone())),
        }
    }
}

/// Per-attacker override, zero-based.
#[derive(Debug, Clone, PartialEq)]
pub struct EveOverride {
    pub cell: usize,
    pub eve: usize,
    pub target: (usize, usize),
    pub mode: ModeSpec,
}

/// Attack layout; zero-based target.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    pub target: (usize, usize),
    pub mode: ModeSpec,
    pub overrides: Vec<EveOverride>,
}

impl Default for AttackSpec {
    fn default() -> Self {
        AttackSpec {
            target: (0, 0),
            mode: ModeSpec::Known,
            overrides: Vec::new(),
        }
    }
}

/// A complete scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub network: NetworkConfig,
    pub gains: GainSpec,
    pub targets: SinrTargets,
    pub attack: AttackSpec,
    pub boundary: BoundaryRule,
}

impl Default for Scenario {
    /// Two cells of four users on three pilots, 128 antennas, no attackers.
    fn default() -> Self {
        Scenario {
            network: NetworkConfig::default_two_cell(0, Antennas::Finite(128)),
            gains: GainSpec::default(),
            targets: SinrTargets::default_two_cell(),
            attack: AttackSpec::default(),
            boundary: BoundaryRule::Auto,
        }
    }
}

/// Everything needed to evaluate SINRs for one network configuration.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub cfg: NetworkConfig,
    pub gains: GainModel,
    pub design: PilotDesign,
    pub pilots: PilotSet,
    pub plan: AttackPlan,
    pub corr: CorrelationParams,
    /// Downlink powers `alpha * g_hat / (1 + g_hat)` from attack-free `alpha`.
    pub powers: Vec<f64>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        raw.into_scenario()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Designs pilots, places attackers and allocates power for `cfg`.
    pub fn prepare(&self, cfg: &NetworkConfig) -> Result<Prepared> {
        self.prepare_with_power(cfg, None)
    }

    /// As [`Scenario::prepare`], with every attacker at `eve_power` if given.
    pub fn prepare_with_power(&self, cfg: &NetworkConfig, eve_power: Option<f64>) -> Result<Prepared> {
        let mut gains = self.gains.build(cfg, self.attack.target.0)?;
        if let Some(p) = eve_power {
            gains = gains.with_eve_power(p);
        }
        let design = design_pilots_with(&self.targets, cfg, self.boundary)?;
        let pilots = design.pilot_set();
        let plan = self.plan(cfg, &pilots)?;
        let corr = correlation_params(cfg, &pilots, &plan, &gains)?;
        let powers = power_allocation(&design.gamma_hat(), &corr.alpha)?;
        Ok(Prepared {
            cfg: cfg.clone(),
            gains,
            design,
            pilots,
            plan,
            corr,
            powers,
        })
    }

    fn plan(&self, cfg: &NetworkConfig, pilots: &PilotSet) -> Result<AttackPlan> {
        if cfg.eves == 0 {
            return Ok(AttackPlan::none());
        }
        let mut plan = AttackPlan::targeted(
            cfg,
            pilots,
            self.attack.target,
            self.attack.mode.resolve(cfg.pilot_len),
        )?;
        for o in &self.attack.overrides {
            if o.cell >= cfg.cells || o.eve >= cfg.eves {
                continue;
            }
            let mode = o.mode.resolve(cfg.pilot_len);
            let pilot = select_eve_pilot(pilots, o.target, &mode)?;
            plan.eves[cfg.eve_index(o.cell, o.eve)] = EveAssignment {
                target: o.target,
                mode,
                pilot,
            };
        }
        Ok(plan)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    network: RawNetwork,
    #[serde(default)]
    gains: RawGains,
    targets: Option<RawTargets>,
    #[serde(default)]
    attack: RawAttack,
    #[serde(default)]
    design: RawDesign,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawAntennas {
    Count(i64),
    Word(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    cells: usize,
    users: usize,
    #[serde(default)]
    eves: usize,
    antennas: Option<RawAntennas>,
    pilot_len: usize,
    uplink_noise: Option<f64>,
    uplink_noise_db: Option<f64>,
    downlink_noise: Option<f64>,
    downlink_noise_db: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawGains {
    cross_gain: Option<f64>,
    cross_gain_db: Option<f64>,
    eve_power: Option<f64>,
    eve_power_db: Option<f64>,
    attacked_bs: Option<usize>,
    power_control: Option<bool>,
    eve_constraint: Option<bool>,
    beta: Option<Vec<Vec<Vec<f64>>>>,
    beta_db: Option<Vec<Vec<Vec<f64>>>>,
    beta_eve: Option<Vec<Vec<Vec<f64>>>>,
    beta_eve_db: Option<Vec<Vec<Vec<f64>>>>,
    pilot_power: Option<Vec<Vec<f64>>>,
    pilot_power_db: Option<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTargets {
    gamma: Option<Vec<Vec<f64>>>,
    gamma_db: Option<Vec<Vec<f64>>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawAttack {
    target: Option<[usize; 2]>,
    mode: Option<String>,
    pilot: Option<Vec<f64>>,
    #[serde(default)]
    eve: Vec<RawOverride>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOverride {
    cell: usize,
    index: usize,
    target: [usize; 2],
    mode: Option<String>,
    pilot: Option<Vec<f64>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawDesign {
    boundary: Option<String>,
}

fn pick(linear: Option<f64>, db: Option<f64>, key: &str) -> Result<Option<f64>> {
    match (linear, db) {
        (Some(_), Some(_)) => Err(Error::Parse(format!("both {key} and {key}_db given"))),
        (Some(x), None) => Ok(Some(x)),
        (None, Some(d)) => Ok(Some(db_to_linear(d))),
        (None, None) => Ok(None),
    }
}

fn pick_nested<T, F>(linear: Option<T>, db: Option<T>, key: &str, convert: F) -> Result<Option<T>>
where
    F: Fn(T) -> T,
{
    match (linear, db) {
        (Some(_), Some(_)) => Err(Error::Parse(format!("both {key} and {key}_db given"))),
        (Some(x), None) => Ok(Some(x)),
        (None, Some(d)) => Ok(Some(convert(d))),
        (None, None) => Ok(None),
    }
}

fn db_table(t: Vec<Vec<Vec<f64>>>) -> Vec<Vec<Vec<f64>>> {
    t.into_iter()
        .map(|c| c.into_iter().map(|n| n.into_iter().map(db_to_linear).collect()).collect())
        .collect()
}

fn db_rows(t: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    t.into_iter()
        .map(|r| r.into_iter().map(db_to_linear).collect())
        .collect()
}

fn one_based(v: usize, key: &str) -> Result<usize> {
    v.checked_sub(1)
        .ok_or_else(|| Error::Parse(format!("{key} is 1-based, got 0")))
}

fn parse_mode(mode: Option<&str>, pilot: Option<Vec<f64>>, key: &str) -> Result<ModeSpec> {
    match (mode.unwrap_or("known"), pilot) {
        ("known", None) => Ok(ModeSpec::Known),
        ("conjugate", None) => Ok(ModeSpec::Conjugate),
        ("structural", None) => Ok(ModeSpec::Structural),
        ("custom", Some(p)) => Ok(ModeSpec::Custom(p)),
        ("custom", None) => Err(Error::Parse(format!("{key}: custom mode needs a pilot"))),
        (m @ ("known" | "conjugate" | "structural"), Some(_)) => {
            Err(Error::Parse(format!("{key}: pilot given with mode {m}")))
        }
        (other, _) => Err(Error::Parse(format!(
            "{key}: unknown mode '{other}', expected known, conjugate, structural or custom"
        ))),
    }
}

impl RawScenario {
    fn into_scenario(self) -> Result<Scenario> {
        let n = self.network;
        let antennas = match n.antennas {
            None => Antennas::Finite(128),
            Some(RawAntennas::Count(m)) if m >= 1 => Antennas::Finite(m as usize),
            Some(RawAntennas::Count(m)) => {
                return Err(Error::Parse(format!("network.antennas must be at least 1, got {m}")))
            }
            Some(RawAntennas::Word(w)) if w == "inf" => Antennas::Infinite,
            Some(RawAntennas::Word(w)) => {
                return Err(Error::Parse(format!("network.antennas: expected an integer or \"inf\", got \"{w}\"")))
            }
        };
        let network = NetworkConfig {
            cells: n.cells,
            users: n.users,
            eves: n.eves,
            antennas,
            pilot_len: n.pilot_len,
            uplink_noise: pick(n.uplink_noise, n.uplink_noise_db, "network.uplink_noise")?.unwrap_or(0.1),
            downlink_noise: pick(n.downlink_noise, n.downlink_noise_db, "network.downlink_noise")?
                .unwrap_or(0.1),
        };
        if network.cells == 0 || network.users == 0 {
            return Err(Error::Parse("network.cells and network.users must be positive".into()));
        }
        if network.pilot_len == 0 || network.pilot_len > network.users {
            return Err(Error::Parse(format!(
                "network.pilot_len must lie in 1..={}, got {}",
                network.users, network.pilot_len
            )));
        }

        let g = self.gains;
        let defaults = GainSpec::default();
        let beta = pick_nested(g.beta, g.beta_db, "gains.beta", db_table)?
            .map(|t| LinkTable::from_nested(&t, "gains.beta"))
            .transpose()?;
        let beta_eve = pick_nested(g.beta_eve, g.beta_eve_db, "gains.beta_eve", db_table)?
            .map(|t| LinkTable::from_nested(&t, "gains.beta_eve"))
            .transpose()?;
        let pilot_power = pick_nested(g.pilot_power, g.pilot_power_db, "gains.pilot_power", db_rows)?
            .map(|rows| rows.into_iter().flatten().collect());
        let gains = GainSpec {
            cross_gain: pick(g.cross_gain, g.cross_gain_db, "gains.cross_gain")?.unwrap_or(defaults.cross_gain),
            eve_power: pick(g.eve_power, g.eve_power_db, "gains.eve_power")?.unwrap_or(defaults.eve_power),
            attacked_bs: g.attacked_bs.map(|b| one_based(b, "gains.attacked_bs")).transpose()?,
            power_control: g.power_control.unwrap_or(true),
            eve_constraint: g.eve_constraint.unwrap_or(true),
            beta,
            beta_eve,
            pilot_power,
        };

        let targets = match self.targets {
            None => SinrTargets::default_two_cell(),
            Some(t) => SinrTargets::new(
                pick_nested(t.gamma, t.gamma_db, "targets.gamma", db_rows)?
                    .ok_or_else(|| Error::Parse("targets needs gamma or gamma_db".into()))?,
            ),
        };
        if targets.gamma.len() != network.cells || targets.gamma.iter().any(|c| c.len() != network.users) {
            return Err(Error::Parse(format!(
                "targets.gamma must be {} rows of {} values",
                network.cells, network.users
            )));
        }

        let a = self.attack;
        let target = match a.target {
            None => (0, 0),
            Some([l, k]) => (one_based(l, "attack.target")?, one_based(k, "attack.target")?),
        };
        let mode = parse_mode(a.mode.as_deref(), a.pilot, "attack")?;
        let overrides = a
            .eve
            .into_iter()
            .map(|o| {
                Ok(EveOverride {
                    cell: one_based(o.cell, "attack.eve.cell")?,
                    eve: one_based(o.index, "attack.eve.index")?,
                    target: (
                        one_based(o.target[0], "attack.eve.target")?,
                        one_based(o.target[1], "attack.eve.target")?,
                    ),
                    mode: parse_mode(o.mode.as_deref(), o.pilot, "attack.eve")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let boundary = match self.design.boundary.as_deref() {
            None | Some("auto") => BoundaryRule::Auto,
            Some("proportional") => BoundaryRule::Proportional,
            Some("level-fill") => BoundaryRule::LevelFill,
            Some(other) => {
                return Err(Error::Parse(format!(
                    "design.boundary: unknown rule '{other}', expected auto, proportional or level-fill"
                )))
            }
        };

        Ok(Scenario {
            network,
            gains,
            targets,
            attack: AttackSpec {
                target,
                mode,
                overrides,
            },
            boundary,
        })
    }
}
