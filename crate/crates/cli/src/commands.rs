//! One function per subcommand, each producing a CSV table.

use jscc_core::achievability::{achievability_bound, AchievabilityResult};
use jscc_core::converse::{converse_bound, BoundResult, Exactness};
use jscc_core::rd::{solve_rd, RdOptions};
use jscc_core::sim::{run_trials, Scheme, SimResult};
use jscc_core::DistortionSpec;
use log::info;

use crate::config::Problem;
use crate::{CliError, LogBase};

/// Header plus rows of preformatted cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out);
        w.write_record(&self.header).map_err(|e| CliError::Internal(e.to_string()))?;
        for row in &self.rows {
            w.write_record(row).map_err(|e| CliError::Internal(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::Internal(e.to_string()))
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn exactness(e: Exactness) -> &'static str {
    match e {
        Exactness::Exact => "exact",
        Exactness::Heuristic => "heuristic",
    }
}

fn spec_at(p: &Problem, (d_s, d_x): (f64, f64)) -> Result<DistortionSpec<f64>, CliError> {
    p.distortion.with_thresholds(d_s, d_x).map_err(|e| CliError::Config(format!("thresholds: {e}")))
}

fn converse_at(p: &Problem, spec: &DistortionSpec<f64>) -> Result<BoundResult<f64>, CliError> {
    Ok(converse_bound(&p.source, p.channel.kernel(), spec, &p.converse)?)
}

fn achievability_at(p: &Problem, spec: &DistortionSpec<f64>) -> Result<AchievabilityResult<f64>, CliError> {
    let cfg = p
        .achievability
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs an achievability section".into()))?;
    Ok(achievability_bound(&p.source, &p.channel, spec, cfg)?)
}

fn simulate_at(
    p: &Problem,
    spec: &DistortionSpec<f64>,
    witness: Option<&AchievabilityResult<f64>>,
) -> Result<Option<SimResult<f64>>, CliError> {
    let Some(sim) = &p.simulation else {
        return Ok(None);
    };
    let scheme = match (&sim.scheme, witness) {
        (Some(s), _) => s.clone(),
        (None, Some(a)) => Scheme {
            m1: a.best.m1 as usize,
            m2: a.best.m2 as usize,
            p_hat: a.best.p_hat.clone(),
            p12: a.best.p12.clone(),
        },
        (None, None) => {
            let a = achievability_at(p, spec)?;
            return simulate_at(p, spec, Some(&a));
        }
    };
    Ok(Some(run_trials(&p.source, &p.channel, spec, &scheme, sim.trials, p.master_seed, sim.mode)?))
}

/// `D_s, D_x, rate_*, lambda_s, lambda_x, iterations, kkt_residual`.
pub fn cmd_rd(p: &Problem, base: LogBase) -> Result<Table, CliError> {
    let mut t = Table::new(&["D_s", "D_x", base.rate_column(), "lambda_s", "lambda_x", "iterations", "kkt_residual"]);
    for &point in &p.grid {
        let spec = spec_at(p, point)?;
        let sol = solve_rd(&p.source, &spec, &RdOptions::default())?;
        info!("rd at {point:?}: {} nats", sol.rate);
        t.rows.push(vec![
            num(point.0),
            num(point.1),
            num(base.convert(sol.rate)),
            num(base.convert(sol.multipliers.state())),
            num(base.convert(sol.multipliers.observation())),
            sol.iterations.to_string(),
            num(sol.kkt_residual),
        ]);
    }
    Ok(t)
}

/// `D_s, D_x, relaxation, value, gamma_star, exactness`; one row per grid
/// point and relaxation.
pub fn cmd_converse(p: &Problem, base: LogBase) -> Result<Table, CliError> {
    let mut t = Table::new(&["D_s", "D_x", "relaxation", "value", "gamma_star", "exactness"]);
    for &point in &p.grid {
        let spec = spec_at(p, point)?;
        for r in &p.relaxations {
            let mut cfg = p.converse.clone();
            cfg.relaxations = vec![r.clone()];
            let b = converse_bound(&p.source, p.channel.kernel(), &spec, &cfg)?;
            info!("converse at {point:?} with {}: {}", r.label(), b.value);
            t.rows.push(vec![
                num(point.0),
                num(point.1),
                r.label(),
                num(b.value),
                num(base.convert(b.gamma_star)),
                exactness(b.exactness).to_string(),
            ]);
        }
    }
    Ok(t)
}

/// `D_s, D_x, M, M1, M2, T1, T2, T3, T4, value` for the best factorization.
pub fn cmd_achieve(p: &Problem) -> Result<Table, CliError> {
    let mut t = Table::new(&["D_s", "D_x", "M", "M1", "M2", "T1", "T2", "T3", "T4", "value"]);
    for &point in &p.grid {
        let spec = spec_at(p, point)?;
        let a = achievability_at(p, &spec)?;
        let b = &a.best;
        info!("achievability at {point:?}: {}", a.value);
        t.rows.push(vec![
            num(point.0),
            num(point.1),
            (b.m1 * b.m2).to_string(),
            b.m1.to_string(),
            b.m2.to_string(),
            num(b.first_layer),
            num(b.covering),
            num(b.second_layer),
            num(b.semantic),
            num(a.value),
        ]);
    }
    Ok(t)
}

/// `D_s, D_x, mode, trials, estimate, wilson_lo, wilson_hi, seed`.
pub fn cmd_simulate(p: &Problem) -> Result<Table, CliError> {
    if p.simulation.is_none() {
        return Err(CliError::Config("this command needs a simulation section".into()));
    }
    let mut t = Table::new(&["D_s", "D_x", "mode", "trials", "estimate", "wilson_lo", "wilson_hi", "seed"]);
    for &point in &p.grid {
        let spec = spec_at(p, point)?;
        let r = simulate_at(p, &spec, None)?.expect("simulation section present");
        info!("simulation at {point:?}: {}/{}", r.excess_count, r.trials);
        t.rows.push(vec![
            num(point.0),
            num(point.1),
            r.mode.label().to_string(),
            r.trials.to_string(),
            num(r.estimate),
            num(r.wilson_95.0),
            num(r.wilson_95.1),
            r.master_seed.to_string(),
        ]);
    }
    Ok(t)
}

/// Converse, achievability and simulation side by side per grid point.
/// Columns of a section absent from the config are left empty.
pub fn cmd_sweep(p: &Problem, base: LogBase) -> Result<Table, CliError> {
    let mut t = Table::new(&[
        "D_s",
        "D_x",
        "converse",
        "converse_exactness",
        "gamma_star",
        "achievability",
        "M1",
        "M2",
        "sim_estimate",
        "sim_wilson_lo",
        "sim_wilson_hi",
    ]);
    for &point in &p.grid {
        let spec = spec_at(p, point)?;
        let c = converse_at(p, &spec)?;
        let a = p.achievability.as_ref().map(|_| achievability_at(p, &spec)).transpose()?;
        let s = simulate_at(p, &spec, a.as_ref())?;
        info!("sweep at {point:?}: converse {} achievability {:?}", c.value, a.as_ref().map(|a| a.value));
        let mut row = vec![
            num(point.0),
            num(point.1),
            num(c.value),
            exactness(c.exactness).to_string(),
            num(base.convert(c.gamma_star)),
        ];
        match &a {
            Some(a) => row.extend([num(a.value), a.best.m1.to_string(), a.best.m2.to_string()]),
            None => row.extend([String::new(), String::new(), String::new()]),
        }
        match &s {
            Some(s) => row.extend([num(s.estimate), num(s.wilson_95.0), num(s.wilson_95.1)]),
            None => row.extend([String::new(), String::new(), String::new()]),
        }
        t.rows.push(row);
    }
    Ok(t)
}
