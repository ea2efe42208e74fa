use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use pcsim_core::capacity::Scope;
use pcsim_core::channel_attack::validate_attack;
use pcsim_core::model::{validate_config, Antennas};
use pcsim_core::sinr::{monte_carlo_sinr, sinr_report};
use pcsim_core::sweeps::{
    audit_table, capacity_vs_eta, capacity_vs_eves, capacity_vs_loading, correlation_table, design_table,
    linspace, logspace, region_surface, region_volumes, sinr_table, sinr_vs_antennas, sinr_vs_eve_power,
    CapacitySweep, RegionSurface,
};
use pcsim_core::table::Table;
use pcsim_core::{Prepared, Scenario};

#[derive(Parser)]
#[command(name = "pcsim", version, about = "Pilot-contamination attack analysis for correlated-pilot massive MIMO")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario TOML file; built-in two-cell defaults when absent.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Monte-Carlo trials.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Region scope for capacity computations.
    #[arg(long, global = true, value_enum)]
    scope: Option<ScopeArg>,
    /// SINR display cap, or "none".
    #[arg(long, global = true)]
    cap: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    PerCell,
    Network,
}

impl From<ScopeArg> for Scope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::PerCell => Scope::PerCell,
            ScopeArg::Network => Scope::Network,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Design pilots and powers for the scenario.
    Design,
    /// Maximum achievable SINR sweeps.
    Capacity {
        /// Attackers per cell, "a:b" or "a,b,c".
        #[arg(long, default_value = "0:10")]
        n_range: String,
        /// Users per cell, "a:b" or "a,b,c".
        #[arg(long)]
        k_range: Option<String>,
        /// Target scaling, "lo:hi:points" (log-spaced) or "a,b,c".
        #[arg(long)]
        eta_range: Option<String>,
        /// Pilot loading factors K/tau, "a:b" or "a,b,c".
        #[arg(long)]
        loading_range: Option<String>,
    },
    /// Per-user SINRs; Monte-Carlo columns filled when --trials > 0.
    Sinr,
    /// Correlation parameters and estimation-error variances under attack.
    AttackAudit,
    /// Compare Monte-Carlo and closed-form SINRs.
    McValidate {
        /// Attackers per cell to evaluate.
        #[arg(long, default_value = "0,3")]
        eves: String,
        /// Relative tolerance for the pass column.
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
    },
    /// Regenerate the data behind one figure.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Figure {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
}

impl Figure {
    fn name(self) -> &'static str {
        match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::Fig7 => "fig7",
            Figure::Fig8 => "fig8",
        }
    }
}

fn parse_usizes(spec: &str) -> Result<Vec<usize>> {
    if let Some((a, b)) = spec.split_once(':') {
        let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty range {spec}");
        }
        return Ok((a..=b).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<usize>().with_context(|| format!("bad integer in '{spec}'")))
        .collect()
}

fn parse_floats(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let lo: f64 = parts[0].trim().parse()?;
        let hi: f64 = parts[1].trim().parse()?;
        let n: usize = parts[2].trim().parse()?;
        if !(lo > 0.0 && hi >= lo) || n == 0 {
            bail!("log range needs 0 < lo <= hi and points >= 1, got '{spec}'");
        }
        return Ok(logspace(lo, hi, n));
    }
    spec.split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad number in '{spec}'")))
        .collect()
}

fn parse_cap(cap: Option<&str>, default: Option<f64>) -> Result<Option<f64>> {
    match cap {
        None => Ok(default),
        Some("none") => Ok(None),
        Some(v) => {
            let c: f64 = v.parse().with_context(|| format!("--cap expects a number or none, got '{v}'"))?;
            if c.is_nan() || c <= 0.0 {
                bail!("--cap must be positive");
            }
            Ok(Some(c))
        }
    }
}

struct Loaded {
    scenario: Scenario,
    /// Bytes the config hash is taken over.
    source: String,
}

fn load(common: &Common) -> Result<Loaded> {
    match &common.scenario {
        Some(path) => {
            let source = fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
            let scenario = Scenario::from_toml_str(&source).with_context(|| format!("in {}", path.display()))?;
            Ok(Loaded { scenario, source })
        }
        None => {
            let scenario = Scenario::default();
            let source = format!("{scenario:?}");
            Ok(Loaded { scenario, source })
        }
    }
}

fn prepare_checked(scn: &Scenario, cfg: &pcsim_core::NetworkConfig) -> Result<Prepared> {
    let p = scn.prepare(cfg)?;
    let report = validate_config(&p.cfg, &p.gains, &scn.targets)?;
    let mut attack = validate_attack(&p.cfg, &p.plan, &p.gains)?;
    // Both validators check received Eve power; report it once.
    attack
        .violations
        .retain(|v| !report.violations.iter().any(|r| r.invariant == v.invariant));
    if !report.passed() || !attack.passed() {
        let mut msg = String::from("scenario fails validation:\n");
        for r in [&report, &attack].into_iter().filter(|r| !r.passed()) {
            msg.push_str(&r.to_string());
        }
        bail!("{}", msg.trim_end());
    }
    Ok(p)
}

/// Runs a command to completion, returning named tables to write.
fn run(cli: &Cli) -> Result<(String, Vec<(String, Table)>)> {
    let common = &cli.common;
    let loaded = load(common)?;
    let scn = &loaded.scenario;
    let scope: Scope = common.scope.map(Into::into).unwrap_or_default();
    let seed = common.seed;
    let tables = match &cli.command {
        Command::Design => {
            let p = prepare_checked(scn, &scn.network)?;
            vec![("design".into(), design_table(&p)), ("correlations".into(), correlation_table(&p))]
        }
        Command::Capacity {
            n_range,
            k_range,
            eta_range,
            loading_range,
        } => {
            let sweep = CapacitySweep {
                cells: scn.network.cells,
                pilot_len: scn.network.pilot_len,
                scope,
                cap: parse_cap(common.cap.as_deref(), None)?,
            };
            let eves = parse_usizes(n_range)?;
            let mut out = Vec::new();
            let users = match k_range {
                Some(k) => parse_usizes(k)?,
                None => vec![scn.network.users],
            };
            out.push(("capacity".to_string(), capacity_vs_eves(&sweep, &eves, &users)?));
            if let Some(e) = eta_range {
                out.push(("capacity_eta".into(), capacity_vs_eta(&sweep, &parse_floats(e)?, &eves, scn.network.users)?));
            }
            if let Some(l) = loading_range {
                out.push(("capacity_loading".into(), capacity_vs_loading(&sweep, &parse_usizes(l)?, &eves)?));
            }
            out
        }
        Command::Sinr => {
            let p = prepare_checked(scn, &scn.network)?;
            let trials = common.trials.unwrap_or(0);
            let mc = (trials > 0).then_some((trials, seed));
            let report = sinr_report(&p.cfg, &p.gains, &p.pilots, &p.plan, &p.powers, &scn.targets, mc)?;
            vec![("sinr".into(), sinr_table(&p, &report))]
        }
        Command::AttackAudit => {
            let p = prepare_checked(scn, &scn.network)?;
            vec![("attack_audit".into(), audit_table(&p)?), ("correlations".into(), correlation_table(&p))]
        }
        Command::McValidate { eves, tolerance } => {
            let trials = common.trials.unwrap_or(10_000);
            let mut t = Table::new([
                "n", "m", "cell", "user", "theta_closed", "theta_mc", "ci", "rel_error", "pass",
            ]);
            for n in parse_usizes(eves)? {
                let p = prepare_checked(scn, &scn.network.with_eves(n))?;
                if p.cfg.antennas == Antennas::Infinite {
                    bail!("mc-validate needs a finite antenna count");
                }
                let closed = pcsim_core::sinr::closed_form_sinr(&p.cfg, &p.gains, &p.pilots, &p.plan, &p.powers)?;
                let mc = monte_carlo_sinr(&p.cfg, &p.gains, &p.pilots, &p.plan, &p.powers, trials, seed)?;
                for l in 0..p.cfg.cells {
                    for k in 0..p.cfg.users {
                        let u = p.cfg.user_index(l, k);
                        let rel = (mc[u].mean - closed[u]).abs() / closed[u];
                        t.push(vec![
                            n.into(),
                            p.cfg.antennas.to_string().into(),
                            (l + 1).into(),
                            (k + 1).into(),
                            closed[u].into(),
                            mc[u].mean.into(),
                            mc[u].ci.into(),
                            rel.into(),
                            (rel <= *tolerance).into(),
                        ]);
                    }
                }
            }
            vec![("mc_validate".into(), t)]
        }
        Command::Reproduce { figure } => reproduce(*figure, scn, common, scope)?,
    };
    Ok((loaded.source, tables))
}

fn reproduce(figure: Figure, scn: &Scenario, common: &Common, scope: Scope) -> Result<Vec<(String, Table)>> {
    let sweep = CapacitySweep {
        cells: 2,
        pilot_len: 3,
        scope,
        cap: parse_cap(common.cap.as_deref(), Some(1.0))?,
    };
    let name = figure.name().to_string();
    Ok(match figure {
        Figure::Fig2 => {
            let surface = RegionSurface {
                cap: sweep.cap.unwrap_or(1.0),
                ..RegionSurface::default()
            };
            let samples = common.trials.unwrap_or(1_000_000).max(10_000);
            vec![
                (name, region_surface(&surface, &[0, 1, 2], 20)),
                (
                    "fig2_volume".into(),
                    region_volumes(&surface, &[0, 1, 2], &[(1, 0.93), (2, 0.99)], samples, common.seed)?,
                ),
            ]
        }
        Figure::Fig3 => vec![(name, capacity_vs_eves(&sweep, &(0..=10).collect::<Vec<_>>(), &[4, 6, 8, 10])?)],
        Figure::Fig4 => vec![(name, capacity_vs_eta(&sweep, &logspace(0.01, 10.0, 31), &[0, 2, 4, 6, 8, 10], 4)?)],
        Figure::Fig5 => vec![(name, capacity_vs_loading(&sweep, &(1..=8).collect::<Vec<_>>(), &[0, 1, 2, 3])?)],
        Figure::Fig6 => {
            prepare_checked(scn, &scn.network.with_eves(3))?;
            vec![(name, sinr_vs_eve_power(scn, &linspace(-20.0, 0.0, 21), &[1, 2, 3], Antennas::Finite(800))?)]
        }
        Figure::Fig7 => {
            prepare_checked(scn, &scn.network.with_eves(3))?;
            let m: Vec<usize> = (100..=800).step_by(50).collect();
            vec![(name, sinr_vs_antennas(scn, &m, &[0, 1, 2, 3], &[0])?)]
        }
        Figure::Fig8 => {
            prepare_checked(scn, &scn.network.with_eves(3))?;
            let m: Vec<usize> = (100..=800).step_by(50).collect();
            let users: Vec<usize> = (0..scn.network.users).collect();
            vec![(name, sinr_vs_antennas(scn, &m, &[0, 3], &users)?)]
        }
    })
}

fn command_name(c: &Command) -> String {
    match c {
        Command::Design => "design".into(),
        Command::Capacity { .. } => "capacity".into(),
        Command::Sinr => "sinr".into(),
        Command::AttackAudit => "attack-audit".into(),
        Command::McValidate { .. } => "mc-validate".into(),
        Command::Reproduce { figure } => format!("reproduce {}", figure.name()),
    }
}

/// Writes every file under a temporary name first so a failure leaves no
/// partial CSV behind.
fn write_outputs(out: &Path, files: &[(String, String)]) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut staged = Vec::new();
    for (name, body) in files {
        let tmp = out.join(format!(".{name}.tmp"));
        if let Err(e) = fs::write(&tmp, body) {
            for t in &staged {
                let _ = fs::remove_file(t);
            }
            let _ = fs::remove_file(&tmp);
            return Err(e).with_context(|| format!("writing {}", tmp.display()));
        }
        staged.push(tmp);
    }
    for (tmp, (name, _)) in staged.iter().zip(files) {
        fs::rename(tmp, out.join(name)).with_context(|| format!("finalizing {name}"))?;
    }
    Ok(())
}

fn manifest(cli: &Cli, source: &str, names: &[String]) -> String {
    let hash = Sha256::digest(source.as_bytes());
    let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let scenario = cli
        .common
        .scenario
        .as_ref()
        .map_or("default".to_string(), |p| p.display().to_string());
    format!(
        "command={}\nscenario={}\nconfig_sha256={}\nseed={}\ntrials={}\nversion={}\nfiles={}\ncreated_unix={}\n",
        command_name(&cli.command),
        scenario,
        hex,
        cli.common.seed,
        cli.common.trials.map_or("default".to_string(), |t| t.to_string()),
        env!("CARGO_PKG_VERSION"),
        names.join(";"),
        created,
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok((source, tables)) => {
            let mut files: Vec<(String, String)> = tables
                .iter()
                .map(|(name, t)| (format!("{name}.csv"), t.to_csv()))
                .collect();
            let names: Vec<String> = files.iter().map(|(n, _)| n.clone()).collect();
            files.push(("manifest.txt".into(), manifest(&cli, &source, &names)));
            if let Err(e) = write_outputs(&cli.common.out, &files) {
                eprintln!("error: {e:#}");
                return ExitCode::FAILURE;
            }
            for n in &names {
                println!("{}", cli.common.out.join(n).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
