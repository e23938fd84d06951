//! Independent reference computations shared by the oracle and acceptance
//! suites. Nothing here calls the closed forms it is used to check.

#![allow(dead_code)]

use ponqkd::noise::{raman_noise_power_dbm, RamanDirection, RamanModel};
use ponqkd::optics::AttenuationModel;
use ponqkd::qkd::{e1_upper_bound, gain_and_qber, y1_lower_bound, ChannelParams};
use ponqkd::topology::FiberType;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub const E0: f64 = 0.5;

/// Gain and QBER by explicit summation over photon-number classes,
/// truncated at `n <= 60`.
pub fn poisson_sum_gain_qber(eta: f64, m: f64, y0: f64, e_det: f64) -> (f64, f64) {
    let mut pmf = (-m).exp();
    let (mut q, mut eq) = (0.0, 0.0);
    for n in 0..=60 {
        if n > 0 {
            pmf *= m / n as f64;
        }
        let signal = 1.0 - (1.0 - eta).powi(n);
        let y_n = 1.0 - (1.0 - y0) * (1.0 - signal);
        q += pmf * y_n;
        eq += pmf * (E0 * y0 + e_det * (1.0 - y0) * signal);
    }
    (q, eq / q)
}

/// Largest absolute disagreement between the closed-form gain/QBER and the
/// Poisson sum over a 10 x 10 x 5 grid of (eta, m, Y0).
pub fn gain_qber_grid_max_error() -> (f64, usize) {
    let etas: Vec<f64> = (0..10).map(|i| 10f64.powf(-4.0 + 4.0 * i as f64 / 9.0)).collect();
    let ms: Vec<f64> = (0..10).map(|i| 0.05 + 0.95 * i as f64 / 9.0).collect();
    let y0s = [0.0, 1e-6, 1e-5, 1e-4, 1e-3];
    let e_det = 0.015;
    let mut worst = 0.0f64;
    let mut points = 0;
    for &eta in &etas {
        for &m in &ms {
            for &y0 in &y0s {
                let ch = ChannelParams { eta, y0, e_det };
                let (q, e) = gain_and_qber(m, &ch);
                let (qo, eo) = poisson_sum_gain_qber(eta, m, y0, e_det);
                worst = worst.max((q - qo).abs()).max((e - eo).abs());
                points += 1;
            }
        }
    }
    (worst, points)
}

/// Spontaneous Raman power leaving a span, by midpoint integration over
/// `slices` fibre slices. Pump and scattered light both attenuate at
/// `alpha_db_per_km`.
pub fn raman_slices_dbm(
    launch_dbm: f64,
    length_km: f64,
    alpha_db_per_km: f64,
    rho: f64,
    bw_nm: f64,
    backward: bool,
    slices: usize,
) -> f64 {
    let a = alpha_db_per_km * std::f64::consts::LN_10 / 10.0;
    let p0 = 10f64.powf(launch_dbm / 10.0);
    let dz = length_km / slices as f64;
    let mut total = 0.0;
    for i in 0..slices {
        let z = (i as f64 + 0.5) * dz;
        let generated = p0 * (-a * z).exp() * rho * bw_nm * dz;
        let escape = if backward { z } else { length_km - z };
        total += generated * (-a * escape).exp();
    }
    10.0 * total.log10()
}

/// Largest |closed form - slice integral| in dB over `draws` random spans.
pub fn raman_max_error_db(seed: u64, draws: usize) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let att = AttenuationModel::default();
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let launch = rng.random_range(-10.0..10.0);
        let length = rng.random_range(0.05..40.0);
        let rho = 10f64.powf(rng.random_range(-11.0..-8.0));
        let bw = rng.random_range(0.1..5.0);
        let fiber = if rng.random_bool(0.5) {
            FiberType::G652D
        } else {
            FiberType::G657A1
        };
        let pump = [1490.0, 1529.0, 1550.0][rng.random_range(0..3)];
        // Stay inside the modelled Raman reach of every pump.
        let quantum = rng.random_range(1305.0..1330.0);
        let backward = rng.random_bool(0.5);
        let dir = if backward {
            RamanDirection::Backward
        } else {
            RamanDirection::Forward
        };
        let closed = raman_noise_power_dbm(
            launch,
            length,
            fiber,
            pump,
            quantum,
            bw,
            dir,
            &RamanModel::Flat(rho),
            &att,
        );
        let alpha = att.db_per_km(fiber, quantum);
        let oracle = raman_slices_dbm(launch, length, alpha, rho, bw, backward, 10_000);
        worst = worst.max((closed - oracle).abs());
    }
    worst
}

/// Counts draws where either decoy bound falls on the wrong side of the
/// true single-photon yield or error rate.
pub fn decoy_bound_violations(seed: u64, draws: usize) -> usize {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..draws {
        // Transmittance spans four decades, so draw it log-uniformly.
        let eta = 10f64.powf(rng.random_range(-4.0..=0.0));
        let y0 = rng.random_range(0.0..=1e-3);
        let e_det = rng.random_range(0.0..=0.05);
        let nu = rng.random_range(1e-6..0.3);
        let mu = loop {
            let m = rng.random_range(nu..=1.0);
            if m > nu {
                break m;
            }
        };
        let ch = ChannelParams { eta, y0, e_det };
        let (q_mu, _) = gain_and_qber(mu, &ch);
        let (q_nu, e_nu) = gain_and_qber(nu, &ch);
        let y1_true = 1.0 - (1.0 - y0) * (1.0 - eta);
        let e1_true = (E0 * y0 + e_det * eta) / (y0 + eta);
        let y1 = y1_lower_bound(q_mu, q_nu, y0, mu, nu).expect("nu < mu");
        // No certified single-photon yield means the worst-case error rate.
        let e1 = e1_upper_bound(e_nu, q_nu, y0, nu, y1).unwrap_or(E0);
        if y1 > y1_true || e1 < e1_true {
            violations += 1;
        }
    }
    violations
}
