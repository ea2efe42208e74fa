//! One PASS/FAIL line per acceptance criterion.
//!
//! Criteria listed in `KNOWN_UNATTAINABLE` are evaluated like every other
//! one and print FAIL; they only stop failing the run while they keep
//! failing. If one starts passing, the run fails so the list gets updated.

use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::DVector;
use pcsim_core::capacity::{
    eta_pattern, max_common_sinr, max_scaled_sinr, sum_inverse_bound, welch_check, RegionSpec, Scope,
};
use pcsim_core::channel_attack::{correlation_params, estimation_error_variance, AttackPlan, PilotMode};
use pcsim_core::model::{Antennas, GainModel, NetworkConfig, SinrTargets};
use pcsim_core::pilot_design::{design_cell, power_allocation, PilotSet};
use pcsim_core::rng::substream;
use pcsim_core::sinr::{asymptotic_sinr, closed_form_sinr, monte_carlo_sinr};
use pcsim_core::sweeps::{capacity_config, linspace, sinr_vs_antennas, sinr_vs_eve_power};
use pcsim_core::Scenario;
use rand::Rng;

const KNOWN_UNATTAINABLE: &[&str] = &["sum-inverse-sinr-bound"];

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, detail }
}

fn per_cell(cfg: &NetworkConfig) -> RegionSpec {
    RegionSpec::for_config(cfg, Scope::PerCell)
}

fn capacity_endpoints() -> Outcome {
    let common = |k: usize, n: usize| {
        let cfg = capacity_config(2, k, n, 3);
        max_common_sinr(k, &cfg, &per_cell(&cfg)).unwrap()
    };
    let scaled = |eta: f64, n: usize| {
        let cfg = capacity_config(2, 4, n, 3);
        max_scaled_sinr(&eta_pattern(4, eta), &cfg, &per_cell(&cfg)).unwrap()
    };
    let checks = [
        ("K=10,N=0", common(10, 0), 0.43, 0.01),
        ("K=4,N=10", common(4, 10), 0.03, 0.01),
        ("K/tau=2,N=2", common(6, 2), 0.1, 0.02),
        ("K/tau=8,N=2", common(24, 2), 0.03, 0.02),
        ("eta=0.01,N=2", scaled(0.01, 2), 0.24, 0.02),
        ("eta=0.01,N=10", scaled(0.01, 10), 0.05, 0.02),
    ];
    let pass = checks.iter().all(|(_, got, want, tol)| (got - want).abs() <= *tol);
    let detail = checks
        .iter()
        .map(|(n, got, want, _)| format!("{n}: {got:.4} vs {want}"))
        .collect::<Vec<_>>()
        .join("; ");
    outcome("capacity-endpoints", pass, detail)
}

/// Targets with summed effective bandwidth inside `tau`.
fn random_targets(rng: &mut impl Rng) -> (Vec<f64>, usize) {
    let k = rng.random_range(2..=8);
    let tau = rng.random_range(1..=k);
    let mut b: Vec<f64> = (0..k).map(|_| rng.random_range(0.02..0.98)).collect();
    let sum: f64 = b.iter().sum();
    if sum > tau as f64 {
        let shrink = rng.random_range(0.3..1.0) * tau as f64 / sum;
        b.iter_mut().for_each(|x| *x *= shrink);
    }
    (b.iter().map(|x| x / (1.0 - x)).collect(), tau)
}

fn pilot_identities() -> Outcome {
    let start = Instant::now();
    let mut rng = substream(2024, 0, 0);
    let instances = 200;
    let mut bad = Vec::new();
    for i in 0..instances {
        let (gamma, tau) = random_targets(&mut rng);
        let k = gamma.len();
        let d = match design_cell(&gamma, tau) {
            Ok(d) => d,
            Err(e) => {
                bad.push(format!("#{i}: {e}"));
                continue;
            }
        };
        let unit = (0..k).all(|c| (d.pilots.0.column(c).norm() - 1.0).abs() < 1e-12);
        let frame = d.pilots.weighted_frame(&d.bandwidths.scaled);
        let frame_ok = (0..tau).all(|r| {
            (0..tau).all(|c| (frame[(r, c)] - if r == c { 1.0 } else { 0.0 }).abs() < 1e-9)
        });
        let steps_ok = d.chain.rotations.len() < k;
        let diag_ok = d
            .chain
            .reached()
            .iter()
            .zip(&d.bandwidths.scaled)
            .all(|(a, b)| (a - b).abs() < 1e-10);
        let lifted = d.bandwidths.gamma_hat.iter().zip(&gamma).all(|(h, g)| *h >= *g);
        let welch_single = welch_check(&d.pilots.0).map(|w| w.pass).unwrap_or(false);
        let other = design_cell(&gamma.iter().map(|g| g * 0.7).collect::<Vec<_>>(), tau).unwrap();
        let stacked = PilotSet { cells: vec![d.pilots.clone(), other.pilots] }.stacked();
        let welch_net = welch_check(&stacked).map(|w| w.pass).unwrap_or(false);
        if !(unit && frame_ok && steps_ok && diag_ok && lifted && welch_single && welch_net) {
            bad.push(format!(
                "#{i} K={k} tau={tau}: unit={unit} frame={frame_ok} steps={steps_ok} diag={diag_ok} lifted={lifted} welch={welch_single}/{welch_net}"
            ));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = bad.is_empty() && secs < 10.0;
    outcome(
        "pilot-design-identities",
        pass,
        format!("{instances} instances, {} failures, {secs:.2}s {}", bad.len(), bad.first().cloned().unwrap_or_default()),
    )
}

fn design_achieves_targets() -> Outcome {
    let mut rng = substream(2024, 1, 0);
    let mut worst: f64 = 0.0;
    let instances = 100;
    for _ in 0..instances {
        let (gamma, tau) = random_targets(&mut rng);
        let k = gamma.len();
        let cfg = NetworkConfig {
            cells: 1,
            users: k,
            eves: 0,
            antennas: Antennas::Infinite,
            pilot_len: tau,
            uplink_noise: 0.1,
            downlink_noise: 0.1,
        };
        let gains = GainModel::synthetic(&cfg, 0.1, 1.0, 0);
        let d = design_cell(&gamma, tau).unwrap();
        let pilots = PilotSet { cells: vec![d.pilots.clone()] };
        let corr = correlation_params(&cfg, &pilots, &AttackPlan::none(), &gains).unwrap();
        let p = power_allocation(&d.bandwidths.gamma_hat, &corr.alpha).unwrap();
        let theta = asymptotic_sinr(&cfg, &gains, &pilots, &AttackPlan::none(), &p).unwrap();
        for (t, gh) in theta.iter().zip(&d.bandwidths.gamma_hat) {
            let err = if gh.is_infinite() {
                if t.is_infinite() { 0.0 } else { f64::INFINITY }
            } else {
                (t - gh).abs() / gh.max(1.0)
            };
            worst = worst.max(err);
        }
    }
    outcome(
        "design-achieves-targets",
        worst <= 1e-6,
        format!("{instances} single-cell instances, worst relative error {worst:.2e}"),
    )
}

fn monte_carlo_oracle() -> Outcome {
    let start = Instant::now();
    let scn = Scenario::default();
    let mut worst: f64 = 0.0;
    for n in [0, 3] {
        let p = scn.prepare(&scn.network.with_eves(n).with_antennas(Antennas::Finite(128))).unwrap();
        let closed = closed_form_sinr(&p.cfg, &p.gains, &p.pilots, &p.plan, &p.powers).unwrap();
        let mc = monte_carlo_sinr(&p.cfg, &p.gains, &p.pilots, &p.plan, &p.powers, 10_000, 7).unwrap();
        for (c, m) in closed.iter().zip(&mc) {
            worst = worst.max((m.mean - c).abs() / c);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        "closed-form-vs-monte-carlo",
        worst <= 0.05 && secs <= 120.0,
        format!("M=128, 10^4 trials, N in {{0,3}}: worst relative gap {worst:.4}, {secs:.1}s"),
    )
}

fn attack_effects() -> Outcome {
    let scn = Scenario::default();
    let mut notes = Vec::new();

    let powers = linspace(-20.0, 0.0, 21);
    let t = sinr_vs_eve_power(&scn, &powers, &[1, 2, 3], Antennas::Finite(800)).unwrap();
    let theta = t.floats("theta");
    let base = t.floats("theta_no_attack");
    let in_power = theta.chunks(powers.len()).all(|c| c.windows(2).all(|w| w[1] < w[0]));
    notes.push(format!("decreasing in p_eve: {in_power}"));

    let ms: Vec<usize> = (100..=800).step_by(50).collect();
    let t = sinr_vs_antennas(&scn, &ms, &[0, 1, 2, 3], &[0]).unwrap();
    let by_n: Vec<Vec<f64>> = t.floats("theta").chunks(ms.len()).map(<[f64]>::to_vec).collect();
    let in_n = (0..ms.len()).all(|i| (1..4).all(|n| by_n[n][i] < by_n[n - 1][i]));
    notes.push(format!("decreasing in N: {in_n}"));

    let below = theta.iter().zip(&base).all(|(a, b)| a < b)
        && (1..4).all(|n| (0..ms.len()).all(|i| by_n[n][i] < by_n[0][i]));
    notes.push(format!("attacked below clean: {below}"));

    let red: Vec<Vec<f64>> = t.floats("reduction").chunks(ms.len()).map(<[f64]>::to_vec).collect();
    let shrinking = (1..4).all(|n| red[n][0] > red[n][ms.len() - 1]);
    notes.push(format!(
        "reduction N=3 at M=100 {:.4} > M=800 {:.4}: {shrinking}",
        red[3][0],
        red[3][ms.len() - 1]
    ));
    outcome("attack-effect-properties", in_power && in_n && below && shrinking, notes.join("; "))
}

fn error_variance_maximality() -> Outcome {
    let cfg = NetworkConfig::default_two_cell(3, Antennas::Finite(100));
    let gains = GainModel::synthetic(&cfg, 0.1, 1.0, 0);
    let scn = Scenario::default();
    let p = scn.prepare(&cfg).unwrap();
    let target = (0, 0);
    let eval = |s: DVector<f64>| {
        let plan = AttackPlan::targeted(&cfg, &p.pilots, target, PilotMode::Custom(s)).unwrap();
        estimation_error_variance(&cfg, &p.pilots, &plan, &gains, target).unwrap()
    };
    let known = {
        let plan = AttackPlan::targeted(&cfg, &p.pilots, target, PilotMode::KnownPilot).unwrap();
        estimation_error_variance(&cfg, &p.pilots, &plan, &gains, target).unwrap()
    };
    let mut best_other = f64::NEG_INFINITY;
    for l in 0..cfg.cells {
        for k in 0..cfg.users {
            best_other = best_other.max(eval(p.pilots.pilot(l, k).into_owned()));
        }
    }
    let mut rng = substream(2024, 2, 0);
    for _ in 0..1000 {
        let v = DVector::from_fn(cfg.pilot_len, |_, _| rng.random_range(-1.0..1.0));
        if v.norm() > 1e-9 {
            best_other = best_other.max(eval(v.normalize()));
        }
    }
    let boundary = cfg.antennas.as_f64() * (cfg.cells * cfg.eves) as f64;
    let pass = known >= best_other * (1.0 - 1e-12) && (known - boundary).abs() <= 1e-9 * boundary;
    outcome(
        "error-variance-maximality",
        pass,
        format!("known pilot {known:.6}, best other candidate {best_other:.6}, M*L*N = {boundary}"),
    )
}

fn sum_inverse_sinr_bound() -> Outcome {
    let mut checked = 0;
    let mut violations = Vec::new();
    let mut record = |label: String, theta: &[f64], cfg: &NetworkConfig| {
        if let Some(b) = sum_inverse_bound(theta, cfg) {
            checked += 1;
            if !b.holds {
                violations.push(format!("{label}: {:.3} < {:.3}", b.lhs, b.rhs));
            }
        }
    };

    // one cell, two users on a single pilot, one replaying attacker
    let cfg = NetworkConfig {
        cells: 1,
        users: 2,
        eves: 1,
        antennas: Antennas::Infinite,
        pilot_len: 1,
        uplink_noise: 0.1,
        downlink_noise: 0.1,
    };
    let gains = GainModel::synthetic(&cfg, 0.1, 1.0, 0);
    let d = design_cell(&[1.0, 1.0], 1).unwrap();
    let pilots = PilotSet { cells: vec![d.pilots.clone()] };
    let plan = AttackPlan::targeted(&cfg, &pilots, (0, 0), PilotMode::KnownPilot).unwrap();
    let corr = correlation_params(&cfg, &pilots, &plan, &gains).unwrap();
    let p = power_allocation(&d.bandwidths.gamma_hat, &corr.alpha).unwrap();
    let theta = asymptotic_sinr(&cfg, &gains, &pilots, &plan, &p).unwrap();
    record("K=2,tau=1,N=1".into(), &theta, &cfg);

    let mut scn = Scenario::default();
    let mut rng = substream(2024, 3, 0);
    for trial in 0..20 {
        if trial > 0 {
            scn.targets = SinrTargets::new(
                (0..2)
                    .map(|_| (0..4).map(|_| rng.random_range(0.05..2.0)).collect())
                    .collect(),
            );
        }
        for n in 0..=3 {
            let p = scn.prepare(&scn.network.with_eves(n)).unwrap();
            let theta = asymptotic_sinr(&p.cfg, &p.gains, &p.pilots, &p.plan, &p.powers).unwrap();
            record(format!("two-cell #{trial} N={n}"), &theta, &p.cfg);
        }
    }
    outcome(
        "sum-inverse-sinr-bound",
        violations.is_empty(),
        format!(
            "{} of {checked} scenarios violate it; first: {}",
            violations.len(),
            violations.first().cloned().unwrap_or_default()
        ),
    )
}

fn reproduce_is_deterministic() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut bodies = Vec::new();
    for d in &dirs {
        let status = Command::new(env!("CARGO_BIN_EXE_pcsim"))
            .args(["reproduce", "fig3", "--seed", "5", "--out"])
            .arg(d.path())
            .output()
            .unwrap();
        if !status.status.success() {
            return outcome(
                "reproduce-determinism",
                false,
                String::from_utf8_lossy(&status.stderr).into_owned(),
            );
        }
        bodies.push(std::fs::read(d.path().join("fig3.csv")).unwrap());
    }
    outcome(
        "reproduce-determinism",
        bodies[0] == bodies[1] && !bodies[0].is_empty(),
        format!("two runs, {} bytes each, identical: {}", bodies[0].len(), bodies[0] == bodies[1]),
    )
}

fn main() -> ExitCode {
    let checks: [fn() -> Outcome; 8] = [
        capacity_endpoints,
        pilot_identities,
        design_achieves_targets,
        monte_carlo_oracle,
        attack_effects,
        error_variance_maximality,
        sum_inverse_sinr_bound,
        reproduce_is_deterministic,
    ];
    let mut unexpected = 0;
    for check in checks {
        let o = check();
        let known = KNOWN_UNATTAINABLE.contains(&o.name);
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let note = if known { " (known unattainable)" } else { "" };
        println!("{tag} {}{note}: {}", o.name, o.detail);
        if o.pass == known {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        println!("{unexpected} criteria did not match their expected outcome");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
