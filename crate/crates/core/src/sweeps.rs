//! Parameter sweeps and per-command tables. Cell and user indices in the
//! emitted tables are 1-based.

use crate::capacity::{
    attack_budget, eta_pattern, max_common_sinr, max_scaled_sinr, region_volume, volume_reduction,
    RegionSpec, Scope,
};
use crate::channel_attack::estimation_error_variance;
use crate::error::Result;
use crate::model::{db_to_linear, Antennas, NetworkConfig};
use crate::pilot_design::{effective_bandwidth, sinr_from_bandwidth};
use crate::scenario::{Prepared, Scenario};
use crate::sinr::{closed_form_from_params, GainNormalization, McEstimate, SinrReport};
use crate::table::{Table, Value};

/// Cells, users, attackers and pilot length of a capacity-only network.
pub fn capacity_config(cells: usize, users: usize, eves: usize, pilot_len: usize) -> NetworkConfig {
    NetworkConfig {
        cells,
        users,
        eves,
        antennas: Antennas::Infinite,
        pilot_len,
        uplink_noise: 0.1,
        downlink_noise: 0.1,
    }
}

/// Shared settings of the capacity sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacitySweep {
    pub cells: usize,
    pub pilot_len: usize,
    pub scope: Scope,
    pub cap: Option<f64>,
}

impl Default for CapacitySweep {
    fn default() -> Self {
        CapacitySweep {
            cells: 2,
            pilot_len: 3,
            scope: Scope::PerCell,
            cap: Some(1.0),
        }
    }
}

impl CapacitySweep {
    fn spec(&self, cfg: &NetworkConfig) -> RegionSpec {
        RegionSpec::for_config(cfg, self.scope).with_cap(self.cap)
    }
}

/// Maximum common SINR over attackers and users per cell.
pub fn capacity_vs_eves(sweep: &CapacitySweep, eves: &[usize], users: &[usize]) -> Result<Table> {
    let mut t = Table::new(["n", "k", "gamma_max", "budget", "scope"]);
    for &k in users {
        for &n in eves {
            let cfg = capacity_config(sweep.cells, k, n, sweep.pilot_len);
            let spec = sweep.spec(&cfg);
            let g = max_common_sinr(k, &cfg, &spec)?;
            t.push(vec![n.into(), k.into(), g.into(), spec.budget.into(), sweep.scope.name().into()]);
        }
    }
    Ok(t)
}

/// Maximum SINR when one user of the first cell and all of the second
/// require `eta` times the common target.
pub fn capacity_vs_eta(sweep: &CapacitySweep, etas: &[f64], eves: &[usize], users: usize) -> Result<Table> {
    let mut t = Table::new(["eta", "n", "gamma_max", "budget", "scope"]);
    for &n in eves {
        for &eta in etas {
            let cfg = capacity_config(sweep.cells, users, n, sweep.pilot_len);
            let spec = sweep.spec(&cfg);
            let mut pattern = eta_pattern(users, eta);
            pattern.resize(sweep.cells, vec![eta; users]);
            pattern.truncate(sweep.cells);
            let g = max_scaled_sinr(&pattern, &cfg, &spec)?;
            t.push(vec![eta.into(), n.into(), g.into(), spec.budget.into(), sweep.scope.name().into()]);
        }
    }
    Ok(t)
}

/// Maximum common SINR over pilot loading factors `K / tau`.
pub fn capacity_vs_loading(sweep: &CapacitySweep, loadings: &[usize], eves: &[usize]) -> Result<Table> {
    let mut t = Table::new(["loading", "k", "n", "gamma_max", "budget", "scope"]);
    for &n in eves {
        for &r in loadings {
            let k = r * sweep.pilot_len;
            let cfg = capacity_config(sweep.cells, k, n, sweep.pilot_len);
            let spec = sweep.spec(&cfg);
            let g = max_common_sinr(k, &cfg, &spec)?;
            t.push(vec![r.into(), k.into(), n.into(), g.into(), spec.budget.into(), sweep.scope.name().into()]);
        }
    }
    Ok(t)
}

/// Setup of the capacity-region surface: two users fixed at SINR 1,
/// three free users, display cap 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionSurface {
    pub cells: usize,
    pub users: usize,
    pub pilot_len: usize,
    pub fixed_users: usize,
    pub cap: f64,
}

impl Default for RegionSurface {
    fn default() -> Self {
        RegionSurface {
            cells: 2,
            users: 5,
            pilot_len: 3,
            fixed_users: 2,
            cap: 1.0,
        }
    }
}

impl RegionSurface {
    fn free_dims(&self) -> usize {
        self.users - self.fixed_users
    }

    fn preload(&self) -> f64 {
        self.fixed_users as f64 * effective_bandwidth(1.0)
    }

    fn budget(&self, eves: usize) -> f64 {
        attack_budget(&capacity_config(self.cells, self.users, eves, self.pilot_len))
    }
}

/// Upper boundary of the third free SINR over a grid of the first two.
pub fn region_surface(surface: &RegionSurface, eves: &[usize], steps: usize) -> Table {
    let mut t = Table::new(["n", "gamma_1", "gamma_2", "gamma_3_max", "feasible"]);
    for &n in eves {
        let room = surface.budget(n) - surface.preload();
        for a in 0..=steps {
            for b in 0..=steps {
                let g1 = surface.cap * a as f64 / steps as f64;
                let g2 = surface.cap * b as f64 / steps as f64;
                let left = room - effective_bandwidth(g1) - effective_bandwidth(g2);
                let (g3, ok) = if left >= 0.0 {
                    (sinr_from_bandwidth(left).min(surface.cap), true)
                } else {
                    (0.0, false)
                };
                t.push(vec![n.into(), g1.into(), g2.into(), g3.into(), ok.into()]);
            }
        }
    }
    t
}

/// Region volume per attacker count and its reduction against `N = 0`.
pub fn region_volumes(
    surface: &RegionSurface,
    eves: &[usize],
    reported: &[(usize, f64)],
    samples: usize,
    seed: u64,
) -> Result<Table> {
    let mut t = Table::new(["n", "budget", "volume", "reduction", "reported_reduction"]);
    let reference = region_volume(
        surface.preload(),
        surface.free_dims(),
        surface.budget(0),
        surface.cap,
        samples,
        seed,
    )?;
    for &n in eves {
        let budget = surface.budget(n);
        let v = region_volume(surface.preload(), surface.free_dims(), budget, surface.cap, samples, seed)?;
        let quoted = reported
            .iter()
            .find(|(m, _)| *m == n)
            .map_or(f64::NAN, |(_, r)| *r);
        t.push(vec![
            n.into(),
            budget.into(),
            v.into(),
            volume_reduction(v, reference).into(),
            quoted.into(),
        ]);
    }
    Ok(t)
}

fn sinr_at(p: &Prepared, antennas: Antennas) -> Result<Vec<f64>> {
    closed_form_from_params(&p.cfg, &p.gains, &p.corr, &p.powers, antennas, GainNormalization::AsDefined)
}

/// Closed-form SINR of the attacked user against attacker power in dB.
pub fn sinr_vs_eve_power(scn: &Scenario, powers_db: &[f64], eves: &[usize], antennas: Antennas) -> Result<Table> {
    let (l, k) = scn.attack.target;
    let mut t = Table::new(["p_eve_db", "n", "m", "cell", "user", "theta", "theta_no_attack", "reduction"]);
    let base = scn.network.with_antennas(antennas);
    let clean = scn.prepare(&base.with_eves(0))?;
    let u0 = clean.cfg.user_index(l, k);
    let reference = sinr_at(&clean, antennas)?[u0];
    for &n in eves {
        for &db in powers_db {
            let p = scn.prepare_with_power(&base.with_eves(n), Some(db_to_linear(db)))?;
            let theta = sinr_at(&p, antennas)?[u0];
            t.push(vec![
                db.into(),
                n.into(),
                antennas.to_string().into(),
                (l + 1).into(),
                (k + 1).into(),
                theta.into(),
                reference.into(),
                (1.0 - theta / reference).into(),
            ]);
        }
    }
    Ok(t)
}

/// Closed-form SINR of the given cell's users against the antenna count.
pub fn sinr_vs_antennas(scn: &Scenario, antennas: &[usize], eves: &[usize], users: &[usize]) -> Result<Table> {
    let cell = scn.attack.target.0;
    let mut t = Table::new(["m", "n", "cell", "user", "theta", "theta_no_attack", "reduction", "gamma"]);
    for &n in eves {
        let attacked = scn.prepare(&scn.network.with_eves(n))?;
        let clean = scn.prepare(&scn.network.with_eves(0))?;
        for &m in antennas {
            let a = Antennas::Finite(m);
            let hit = sinr_at(&attacked, a)?;
            let base = sinr_at(&clean, a)?;
            for &k in users {
                let u = attacked.cfg.user_index(cell, k);
                t.push(vec![
                    m.into(),
                    n.into(),
                    (cell + 1).into(),
                    (k + 1).into(),
                    hit[u].into(),
                    base[u].into(),
                    (1.0 - hit[u] / base[u]).into(),
                    scn.targets.gamma[cell][k].into(),
                ]);
            }
        }
    }
    Ok(t)
}

/// Designed pilots, one row per user.
pub fn design_table(p: &Prepared) -> Table {
    let tau = p.cfg.pilot_len;
    let mut header: Vec<String> = ["cell", "user", "gamma", "gamma_hat", "b_raw", "b_hat", "power"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=tau).map(|r| format!("s_{r}")));
    let mut t = Table::new(header);
    for (l, cell) in p.design.cells.iter().enumerate() {
        for k in 0..p.cfg.users {
            let mut row: Vec<Value> = vec![
                (l + 1).into(),
                (k + 1).into(),
                sinr_from_bandwidth(cell.bandwidths.raw[k]).into(),
                cell.bandwidths.gamma_hat[k].into(),
                cell.bandwidths.raw[k].into(),
                cell.bandwidths.scaled[k].into(),
                p.powers[p.cfg.user_index(l, k)].into(),
            ];
            row.extend(cell.pilots.column(k).iter().map(|&v| Value::Float(v)));
            t.push(row);
        }
    }
    t
}

/// Per-user SINR rows.
pub fn sinr_table(p: &Prepared, report: &SinrReport) -> Table {
    let mut t = Table::new([
        "cell",
        "user",
        "m",
        "n",
        "theta_closed",
        "theta_asymptotic",
        "theta_mc",
        "ci",
        "gamma",
        "satisfied",
    ]);
    for r in &report.rows {
        let (mc, ci) = match r.theta_mc {
            Some(McEstimate { mean, ci }) => (mean, ci),
            None => (f64::NAN, f64::NAN),
        };
        t.push(vec![
            (r.cell + 1).into(),
            (r.user + 1).into(),
            p.cfg.antennas.to_string().into(),
            p.cfg.eves.into(),
            r.theta_closed.into(),
            r.theta_asymptotic.into(),
            mc.into(),
            ci.into(),
            r.gamma.into(),
            r.satisfied.into(),
        ]);
    }
    t
}

/// Correlation parameters and estimation-error variances per user.
pub fn audit_table(p: &Prepared) -> Result<Table> {
    let mut t = Table::new(["cell", "user", "alpha", "alpha_bar", "attack_energy", "error_variance", "rho_eve_max"]);
    let energy = p.corr.attack_energy();
    for l in 0..p.cfg.cells {
        for k in 0..p.cfg.users {
            let u = p.cfg.user_index(l, k);
            let var = match p.cfg.antennas {
                Antennas::Finite(_) => estimation_error_variance(&p.cfg, &p.pilots, &p.plan, &p.gains, (l, k))?,
                Antennas::Infinite => f64::INFINITY,
            };
            let rho_max = (0..p.cfg.total_eves())
                .map(|e| p.corr.rho_eve[(e, u)].abs())
                .fold(0.0, f64::max);
            t.push(vec![
                (l + 1).into(),
                (k + 1).into(),
                p.corr.alpha[u].into(),
                p.corr.alpha_bar[u].into(),
                energy[u].into(),
                var.into(),
                rho_max.into(),
            ]);
        }
    }
    Ok(t)
}

/// Pairwise pilot correlations `rho` in flat user order.
pub fn correlation_table(p: &Prepared) -> Table {
    let mut t = Table::new(["cell_a", "user_a", "cell_b", "user_b", "rho"]);
    for la in 0..p.cfg.cells {
        for ka in 0..p.cfg.users {
            for lb in 0..p.cfg.cells {
                for kb in 0..p.cfg.users {
                    let r = p.corr.rho[(p.cfg.user_index(la, ka), p.cfg.user_index(lb, kb))];
                    t.push(vec![(la + 1).into(), (ka + 1).into(), (lb + 1).into(), (kb + 1).into(), r.into()]);
                }
            }
        }
    }
    t
}

/// Evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// Log-spaced values from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    linspace(lo.log10(), hi.log10(), points)
        .into_iter()
        .map(|e| 10f64.powf(e))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn spacing_helpers() {
        assert_eq!(linspace(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
        let l = logspace(0.01, 10.0, 4);
        assert_abs_diff_eq!(l[0], 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(l[3], 10.0, epsilon = 1e-12);
        assert!(linspace(0.0, 1.0, 0).is_empty());
    }

    #[test]
    fn eves_sweep_endpoints() {
        let t = capacity_vs_eves(&CapacitySweep::default(), &[0, 10], &[4, 10]).unwrap();
        let g = t.floats("gamma_max");
        assert_eq!(g.len(), 4);
        assert_eq!(g[0], 1.0);
        assert_abs_diff_eq!(g[1], 1.0 / 27.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[2], 3.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn eta_and_loading_sweeps() {
        let s = CapacitySweep::default();
        let t = capacity_vs_eta(&s, &[0.01, 10.0], &[2], 4).unwrap();
        let g = t.floats("gamma_max");
        assert_abs_diff_eq!(g[0], 0.249, epsilon = 1e-3);
        assert_abs_diff_eq!(g[1], 0.01765, epsilon = 1e-4);
        let t = capacity_vs_loading(&s, &[2, 8], &[2]).unwrap();
        let g = t.floats("gamma_max");
        assert_abs_diff_eq!(g[0], 1.0 / 9.0, epsilon = 1e-9);
        assert_abs_diff_eq!(g[1], 0.025641, epsilon = 1e-6);
    }

    #[test]
    fn surface_is_empty_once_budget_is_spent() {
        let s = RegionSurface::default();
        let t = region_surface(&s, &[0, 1], 4);
        assert_eq!(t.rows.len(), 50);
        let feasible = t.column("feasible").unwrap();
        assert!(t.rows[..25].iter().all(|r| r[feasible] == Value::Bool(true)));
        // two cells with one attacker each leave a budget of exactly the preload
        let first_n1 = &t.rows[25];
        assert_eq!(first_n1[feasible], Value::Bool(true));
        assert!(t.rows[26..].iter().all(|r| r[feasible] == Value::Bool(false)));
        let v = region_volumes(&s, &[0, 1, 2], &[(1, 0.93), (2, 0.99)], 10_000, 1).unwrap();
        let red = v.floats("reduction");
        assert_eq!(red, vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn antenna_sweep_reduction_shrinks_with_array() {
        let scn = Scenario::default();
        let t = sinr_vs_antennas(&scn, &[100, 800], &[3], &[0]).unwrap();
        let red = t.floats("reduction");
        assert!(red[0] > red[1] && red[1] > 0.0, "{red:?}");
    }

    #[test]
    fn eve_power_sweep_decreases() {
        let scn = Scenario::default();
        let t = sinr_vs_eve_power(&scn, &linspace(-20.0, 0.0, 5), &[1], Antennas::Finite(800)).unwrap();
        let th = t.floats("theta");
        assert!(th.windows(2).all(|w| w[1] < w[0]), "{th:?}");
    }
}
