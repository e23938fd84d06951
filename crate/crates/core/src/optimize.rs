//! Box-constrained Nelder–Mead with seeded multi-start.
//!
//! The search runs in the unit hypercube; callers map their parameters into
//! it. Vertices that leave the cube are projected back onto it. The
//! adaptive coefficients of Gao & Han keep the simplex from degenerating in
//! higher dimensions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Objective evaluations allowed per start.
    pub max_evals: usize,
    /// Initial simplex edge, in unit-cube coordinates.
    pub initial_step: f64,
    /// Stop once every vertex lies within this distance of the best one.
    pub xtol: f64,
    /// Stop once the objective spread falls below `ftol_abs + ftol_rel * |f_best|`.
    pub ftol_rel: f64,
    pub ftol_abs: f64,
    /// Fresh simplices built around the incumbent after convergence; cheap
    /// insurance against a collapsed simplex.
    pub polish_rounds: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_evals: 6000,
            initial_step: 0.1,
            xtol: 1e-10,
            ftol_rel: 1e-13,
            ftol_abs: 1e-24,
            polish_rounds: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

fn project(x: &mut [f64]) {
    for v in x {
        *v = v.clamp(0.0, 1.0);
    }
}

/// One Nelder–Mead descent from `x0`, with polishing restarts.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let mut x = x0.to_vec();
    project(&mut x);
    let mut best = Minimum {
        f: f(&x),
        x,
        evals: 1,
        converged: false,
    };
    let mut step = opts.initial_step;
    for round in 0..=opts.polish_rounds {
        let budget = opts.max_evals.saturating_sub(best.evals);
        if budget == 0 {
            best.converged = false;
            break;
        }
        let run = descend(&f, &best.x, best.f, step, budget, opts);
        best.evals += run.evals;
        let improved = run.f < best.f;
        let gain = best.f - run.f;
        if improved {
            best.x = run.x;
            best.f = run.f;
        }
        best.converged = run.converged;
        if !run.converged {
            break;
        }
        // Stop polishing once a fresh simplex no longer finds anything.
        if round > 0 && gain <= opts.ftol_abs + opts.ftol_rel * best.f.abs() {
            break;
        }
        step = (step * 0.1).max(1e3 * opts.xtol);
    }
    best
}

fn descend<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: &[f64],
    f0: f64,
    step: f64,
    budget: usize,
    opts: &NelderMeadOptions,
) -> Minimum {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let mut evals = 0usize;
    let eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] = if v[i] + step <= 1.0 { v[i] + step } else { v[i] - step };
        let fv = eval(&v, &mut evals);
        simplex.push((v, fv));
    }

    let mut converged = false;
    while evals < budget {
        // Stable sort keeps the result deterministic under ties.
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let f_best = simplex[0].1;
        let f_worst = simplex[n].1;
        let spread = f_worst - f_best;
        let diameter = simplex[1..]
            .iter()
            .map(|(v, _)| {
                v.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diameter <= opts.xtol || spread <= opts.ftol_abs + opts.ftol_rel * f_best.abs() {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect();
            project(&mut p);
            p
        };

        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(alpha * beta);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let xc = along(alpha * gamma);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-gamma);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for (v, fv) in simplex.iter_mut().skip(1) {
            for (x, b) in v.iter_mut().zip(&best) {
                *x = b + delta * (*x - b);
            }
            *fv = eval(v, &mut evals);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    Minimum {
        x,
        f: fx,
        evals,
        converged,
    }
}

/// Outcome of a multi-start search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiStart {
    pub best: Minimum,
    /// Index of the start that produced `best`.
    pub best_start: usize,
    pub starts: Vec<Minimum>,
}

/// Runs `1 + restarts` descents: the first from `x0`, the rest from points
/// drawn uniformly from the cube with a ChaCha20 stream per start. Starts
/// run in parallel; the winner is the lowest objective, ties going to the
/// lowest start index, so the result does not depend on scheduling.
pub fn multi_start<F>(f: F, x0: &[f64], restarts: usize, seed: u64, opts: &NelderMeadOptions) -> MultiStart
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let starts: Vec<Vec<f64>> = (0..=restarts)
        .map(|i| {
            if i == 0 {
                x0.to_vec()
            } else {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                (0..x0.len()).map(|_| rng.random::<f64>()).collect()
            }
        })
        .collect();
    let results: Vec<Minimum> = starts.par_iter().map(|s| nelder_mead(&f, s, opts)).collect();
    let mut best_start = 0;
    for (i, r) in results.iter().enumerate() {
        if r.f < results[best_start].f {
            best_start = i;
        }
    }
    MultiStart {
        best: results[best_start].clone(),
        best_start,
        starts: results,
    }
}
