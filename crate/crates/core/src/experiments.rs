//! Scenario sweeps: the evaluation suite and the alpha reliability sweep.
//!
//! Runs are independent and fan out over a rayon pool; rows come back in
//! scenario order regardless of scheduling.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::AttackKind;
use crate::config::ScenarioConfig;
use crate::error::Error;
use crate::metrics::{summarize_default, RunSummary};
use crate::sim;

pub const CSV_HEADER: &str = "scenario_id,seed,node_count,attack_kind,attackers,alpha,data_loss,avg_delay_s,overhead_pct,tp_rate,fp_rate,detect_latency_slots";

/// A named configuration; its seed is replaced per run.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub config: ScenarioConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario_id: String,
    pub seed: u64,
    pub node_count: usize,
    pub attack_kind: AttackKind,
    pub attackers: usize,
    pub alpha: f64,
    pub summary: RunSummary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    pub base: ScenarioConfig,
    pub seeds: Vec<u64>,
    pub sizes: Vec<usize>,
    /// Fractions of malicious nodes for the multi-attacker rows.
    pub multi_fractions: Vec<f64>,
    pub multi_size: usize,
}

impl SuiteConfig {
    pub fn new(base: ScenarioConfig) -> Self {
        SuiteConfig {
            base,
            seeds: (1..=10).collect(),
            sizes: vec![25, 50, 100],
            multi_fractions: vec![0.01, 0.05, 0.10],
            multi_size: 50,
        }
    }
}

/// Every scenario of the evaluation suite, in a fixed order.
pub fn suite_scenarios(suite: &SuiteConfig) -> Vec<Scenario> {
    let mut out = Vec::new();
    let with = |f: &dyn Fn(&mut ScenarioConfig)| {
        let mut c = suite.base.clone();
        f(&mut c);
        c
    };
    let baseline_size = suite.sizes.first().copied().unwrap_or(suite.base.node_count);
    for defense in [true, false] {
        out.push(Scenario {
            id: format!("baseline_n{baseline_size}_{}", on_off(defense)),
            config: with(&|c| {
                c.node_count = baseline_size;
                c.attack_kind = AttackKind::None;
                c.defense = defense;
            }),
        });
    }
    for kind in AttackKind::ROUTING_ATTACKS {
        for &n in &suite.sizes {
            out.push(Scenario {
                id: format!("{kind}_n{n}_single"),
                config: with(&|c| {
                    c.node_count = n;
                    c.attack_kind = kind;
                    c.attackers = 1;
                    c.attacker_ids.clear();
                    c.defense = true;
                }),
            });
        }
    }
    for &n in &suite.sizes {
        out.push(Scenario {
            id: format!("blackhole_n{n}_single_defense_off"),
            config: with(&|c| {
                c.node_count = n;
                c.attack_kind = AttackKind::Blackhole;
                c.attackers = 1;
                c.attacker_ids.clear();
                c.defense = false;
            }),
        });
    }
    for kind in AttackKind::ROUTING_ATTACKS {
        for &f in &suite.multi_fractions {
            let n = suite.multi_size;
            let count = ((f * n as f64).ceil() as usize).max(1);
            out.push(Scenario {
                id: format!("{kind}_n{n}_multi{count}"),
                config: with(&|c| {
                    c.node_count = n;
                    c.attack_kind = kind;
                    c.attackers = count;
                    c.attacker_ids.clear();
                    c.defense = true;
                }),
            });
        }
    }
    out
}

fn on_off(b: bool) -> &'static str {
    if b {
        "defense_on"
    } else {
        "defense_off"
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, Error> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(crate::ConfigError::Other(e.to_string())))
}

/// Runs one scenario with one seed and summarises it over the default window.
pub fn run_one(scenario: &Scenario, seed: u64) -> Result<SummaryRow, Error> {
    let mut cfg = scenario.config.clone();
    cfg.seed = seed;
    let wrap = |e: Error| Error::Scenario {
        scenario: format!("{} (seed {seed})\n{}", scenario.id, cfg.to_kv()),
        source: Box::new(e),
    };
    log::info!("running {} seed {seed}", scenario.id);
    let log = sim::run(&cfg).map_err(wrap)?;
    let summary = summarize_default(&log).map_err(wrap)?;
    Ok(SummaryRow {
        scenario_id: scenario.id.clone(),
        seed,
        node_count: cfg.node_count,
        attack_kind: cfg.attack_kind,
        attackers: log.meta().map_or(0, |m| m.attackers.len()),
        alpha: cfg.alpha,
        summary,
    })
}

/// Runs every scenario under every seed. The first failure aborts the batch.
pub fn run_scenarios(
    scenarios: &[Scenario],
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<SummaryRow>, Error> {
    let tasks: Vec<(&Scenario, u64)> = scenarios
        .iter()
        .flat_map(|s| seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    pool(jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|(s, seed)| run_one(s, *seed))
            .collect()
    })
}

pub fn run_suite(suite: &SuiteConfig, jobs: usize) -> Result<Vec<SummaryRow>, Error> {
    run_scenarios(&suite_scenarios(suite), &suite.seeds, jobs)
}

/// One point of the reliability curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaPoint {
    pub alpha: f64,
    pub tp_rate: f64,
    pub fp_rate: f64,
}

/// For each alpha, runs the three routing attacks with a single attacker
/// under every seed and averages TP and FP over all runs.
pub fn sweep_alpha(
    base: &ScenarioConfig,
    alphas: &[f64],
    seeds: &[u64],
    jobs: usize,
) -> Result<(Vec<AlphaPoint>, Vec<SummaryRow>), Error> {
    for &a in alphas {
        if !(a > 0.0 && a < 1.0) {
            return Err(crate::ConfigError::invalid("alphas", format!("{a} is outside (0, 1)")).into());
        }
    }
    let mut scenarios = Vec::new();
    for &alpha in alphas {
        for kind in AttackKind::ROUTING_ATTACKS {
            let mut c = base.clone();
            c.alpha = alpha;
            c.attack_kind = kind;
            c.attackers = 1;
            c.attacker_ids.clear();
            scenarios.push(Scenario {
                id: format!("{kind}_alpha{}", fmt_g(alpha)),
                config: c,
            });
        }
    }
    let rows = run_scenarios(&scenarios, seeds, jobs)?;
    let points = alphas
        .iter()
        .map(|&alpha| {
            let sel: Vec<&SummaryRow> = rows.iter().filter(|r| r.alpha == alpha).collect();
            let n = sel.len().max(1) as f64;
            AlphaPoint {
                alpha,
                tp_rate: sel.iter().map(|r| r.summary.tp_rate.unwrap_or(0.0)).sum::<f64>() / n,
                fp_rate: sel.iter().map(|r| r.summary.fp_rate).sum::<f64>() / n,
            }
        })
        .collect();
    Ok((points, rows))
}

/// `%g`-style formatting with 6 significant digits.
pub fn fmt_g(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    // Exponent after rounding to 6 significant digits.
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_g).unwrap_or_default()
}

pub fn write_csv<W: Write>(rows: &[SummaryRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        let s = &r.summary;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario_id,
            r.seed,
            r.node_count,
            r.attack_kind,
            r.attackers,
            fmt_g(r.alpha),
            fmt_g(s.data_loss),
            fmt_g(s.avg_delay),
            fmt_g(s.overhead_pct),
            opt(s.tp_rate),
            fmt_g(s.fp_rate),
            opt(s.detect_latency_slots),
        )?;
    }
    Ok(())
}

pub fn write_alpha_csv<W: Write>(points: &[AlphaPoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "alpha,tp_rate,fp_rate")?;
    for p in points {
        writeln!(w, "{},{},{}", fmt_g(p.alpha), fmt_g(p.tp_rate), fmt_g(p.fp_rate))?;
    }
    Ok(())
}
