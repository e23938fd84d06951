//! Seeded stochastic time series and load sweeps built on the analytic
//! steady state.
//!
//! Each block draws photon-count statistics for the signal, decoy and vacuum
//! classes from Poisson laws whose means come from the analytic pipeline,
//! draws the error counts binomially, and re-derives the block's key rate
//! from the sampled counts.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::document::{ScenarioDocument, Toggles};
use crate::error::{Error, Result};
use crate::model::{Evaluation, Model, Tunables};
use crate::qkd::{key_rate_from_observation, DecoyObservation, DecoyParams};
use crate::topology::NodeId;

/// Generator behind every trace; recorded in each summary.
pub const RNG_NAME: &str = "ChaCha20 (rand_chacha 0.9): seed_from_u64(seed), stream = block index";

pub const HISTOGRAM_BINS: usize = 20;

/// A runnable scenario: compiled model, parameters and run settings.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: Model,
    pub tunables: Tunables,
    pub active: Vec<usize>,
    pub duration_s: f64,
    pub block_s: f64,
    pub seed: u64,
    pub toggles: Toggles,
}

impl Scenario {
    pub fn from_document(doc: &ScenarioDocument) -> Result<Self> {
        let model = Model::compile(doc)?;
        let active = model.select(&doc.scenario.active_onts)?;
        let s = &doc.scenario;
        Ok(Scenario {
            tunables: Tunables::from_document(doc)?,
            model,
            active,
            duration_s: s.duration_s,
            block_s: s.block_s,
            seed: s.seed,
            toggles: s.toggles,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.block_s > 0.0 && self.block_s <= self.duration_s && self.duration_s.is_finite()) {
            return Err(Error::Scenario(format!(
                "need 0 < block_s <= duration_s (got block_s = {}, duration_s = {})",
                self.block_s, self.duration_s
            )));
        }
        Ok(())
    }

    pub fn evaluate(&self) -> Result<Evaluation> {
        self.model.evaluate(&self.tunables, &self.active, self.toggles)
    }

    /// Number of whole blocks in the run.
    pub fn block_count(&self) -> usize {
        // Guard against 3.0 / 1.0 landing just under an integer.
        ((self.duration_s / self.block_s) * (1.0 + 1e-12)).floor() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Block {
    pub t_s: f64,
    pub skr_bps: f64,
    pub qber_percent: f64,
    pub sifted: u64,
    pub errors: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeries {
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` ascending bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn of(values: &[f64], bins: usize) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if values.is_empty() || bins == 0 {
            return Histogram {
                edges: Vec::new(),
                counts: Vec::new(),
            };
        }
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0u64; bins];
        for v in values {
            let i = (((v - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        Histogram { edges, counts }
    }
}

/// Steady-state values the samples scatter around.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analytic {
    pub skr_bps: f64,
    pub qber_percent: f64,
    pub y0: f64,
    pub eta: f64,
    pub back_reflection_dbm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub rng: &'static str,
    pub seed: u64,
    pub active_onts: Vec<NodeId>,
    pub duration_s: f64,
    pub block_s: f64,
    pub blocks: usize,
    pub mean_skr_bps: f64,
    pub std_skr_bps: f64,
    pub mean_qber_percent: f64,
    pub analytic: Analytic,
    pub skr_histogram: Histogram,
}

fn poisson(mean: f64, rng: &mut ChaCha20Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
}

fn binomial(n: u64, p: f64, rng: &mut ChaCha20Rng) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    Binomial::new(n, p.min(1.0)).expect("probability in [0, 1]").sample(rng)
}

fn sample_block(d: &DecoyParams, e: &Evaluation, block_s: f64, t_s: f64, rng: &mut ChaCha20Rng) -> Result<Block> {
    let r = &e.report;
    let pulses = |p: f64| d.sifted_pulse_rate(p) * block_s;
    let (n_mu, n_nu, n_vac) = (pulses(d.p_signal), pulses(d.p_decoy), pulses(d.p_vacuum));

    let sifted = poisson(r.q_mu * n_mu, rng);
    let errors = binomial(sifted, r.e_mu, rng);
    let decoy = poisson(r.q_nu * n_nu, rng);
    let decoy_errors = binomial(decoy, r.e_nu, rng);
    let vacuum = poisson(e.channel.y0 * n_vac, rng);

    let ratio = |k: u64, n: u64| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let per_pulse = |k: u64, n: f64| if n > 0.0 { k as f64 / n } else { 0.0 };
    let obs = DecoyObservation {
        q_mu: per_pulse(sifted, n_mu),
        e_mu: ratio(errors, sifted),
        q_nu: per_pulse(decoy, n_nu),
        e_nu: ratio(decoy_errors, decoy),
        y0: per_pulse(vacuum, n_vac),
    };
    let skr_bps = if sifted == 0 {
        0.0
    } else {
        key_rate_from_observation(d, &obs)?.skr_bps
    };
    Ok(Block {
        t_s,
        skr_bps,
        qber_percent: 100.0 * obs.e_mu,
        sifted,
        errors,
    })
}

/// Runs one scenario. Identical inputs give bit-identical outputs.
pub fn run_scenario(s: &Scenario) -> Result<(TimeSeries, Summary)> {
    s.validate()?;
    let eval = s.evaluate()?;
    let d = DecoyParams {
        rate_scale: s.tunables.rate_scale,
        ..*s.model.decoy()
    };
    let n = s.block_count();
    let blocks: Vec<Block> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha20Rng::seed_from_u64(s.seed);
            rng.set_stream(i as u64);
            sample_block(&d, &eval, s.block_s, i as f64 * s.block_s, &mut rng)
        })
        .collect::<Result<_>>()?;

    let skr: Vec<f64> = blocks.iter().map(|b| b.skr_bps).collect();
    let mean = skr.iter().sum::<f64>() / n as f64;
    let var = skr.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
    let mean_qber = blocks.iter().map(|b| b.qber_percent).sum::<f64>() / n as f64;
    let summary = Summary {
        rng: RNG_NAME,
        seed: s.seed,
        active_onts: eval.active_onts.clone(),
        duration_s: s.duration_s,
        block_s: s.block_s,
        blocks: n,
        mean_skr_bps: mean,
        std_skr_bps: var.sqrt(),
        mean_qber_percent: mean_qber,
        analytic: Analytic {
            skr_bps: eval.report.skr_bps,
            qber_percent: eval.report.qber_percent,
            y0: eval.channel.y0,
            eta: eval.channel.eta,
            back_reflection_dbm: eval.back_reflection_dbm,
        },
        skr_histogram: Histogram::of(&skr, HISTOGRAM_BINS),
    };
    Ok((TimeSeries { blocks }, summary))
}

/// One row of a load sweep, shaped like the measurement table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n_onts: usize,
    pub qber_percent: f64,
    pub skr_bps: f64,
    pub back_refl_dbm: Option<f64>,
    pub summary: Summary,
}

/// Runs `base` once per ONT count, lighting the first `n` ONTs in document
/// order. Row `i` uses seed `base.seed ^ i`.
pub fn sweep(base: &Scenario, counts: &[usize]) -> Result<Vec<SweepRow>> {
    counts
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let s = Scenario {
                active: base.model.first(n)?,
                seed: base.seed ^ i as u64,
                ..base.clone()
            };
            let (_, summary) = run_scenario(&s)?;
            Ok(SweepRow {
                n_onts: n,
                qber_percent: summary.mean_qber_percent,
                skr_bps: summary.mean_skr_bps,
                back_refl_dbm: summary.analytic.back_reflection_dbm,
                summary,
            })
        })
        .collect()
}

pub fn write_time_series_csv<W: Write>(ts: &TimeSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_s", "skr_bps", "qber_percent", "sifted", "errors"])
        .map_err(csv_error)?;
    for b in &ts.blocks {
        w.write_record([
            b.t_s.to_string(),
            b.skr_bps.to_string(),
            b.qber_percent.to_string(),
            b.sifted.to_string(),
            b.errors.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n_onts", "qber", "skr_bps", "back_refl_dbm"])
        .map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.n_onts.to_string(),
            r.qber_percent.to_string(),
            r.skr_bps.to_string(),
            r.back_refl_dbm.map_or(String::new(), |v| v.to_string()),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}
