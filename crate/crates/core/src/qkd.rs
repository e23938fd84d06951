//! Asymptotic vacuum + weak decoy-state BB84 key-rate engine.
//!
//! Detection statistics follow the usual independent-background channel
//! model: an `n`-photon pulse clicks with probability
//! `Y_n = 1 - (1 - Y0)(1 - eta)^n`, and erroneous clicks come from
//! background (error rate `e0 = 1/2`) or from signal photons misaligned in
//! the interferometer (`e_det`). The secure key rate is the GLLP-style
//! expression evaluated with the single-photon yield and error bounds
//! obtained from the signal and weak-decoy gains.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Error rate of a click caused purely by background light.
pub const E0: f64 = 0.5;

/// Protocol intensities, state probabilities and post-processing figures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoyParams {
    pub mu: f64,
    pub nu: f64,
    pub p_signal: f64,
    pub p_decoy: f64,
    pub p_vacuum: f64,
    /// Fraction of signal detections that survive basis sifting.
    pub sifting_q: f64,
    /// Error-correction inefficiency (>= 1).
    pub f_ec: f64,
    pub clock_rate_hz: f64,
    /// Dimensionless multiplier on `clock * sifting`, absorbing
    /// protocol overheads of the real system. Scenario documents carry it
    /// in the `physics` block, next to the other fitted parameters.
    #[serde(skip)]
    pub rate_scale: f64,
}

impl Default for DecoyParams {
    fn default() -> Self {
        DecoyParams {
            mu: 0.5,
            nu: 0.1,
            p_signal: 0.9,
            p_decoy: 0.05,
            p_vacuum: 0.05,
            sifting_q: 0.9,
            f_ec: 1.16,
            clock_rate_hz: 1e9,
            rate_scale: 1.0,
        }
    }
}

impl DecoyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu < self.mu) {
            return Err(Error::DegenerateDecoy {
                mu: self.mu,
                nu: self.nu,
            });
        }
        if self.nu >= 1.0 {
            return Err(Error::domain("nu", self.nu, "nu < 1"));
        }
        for (name, p) in [
            ("p_signal", self.p_signal),
            ("p_decoy", self.p_decoy),
            ("p_vacuum", self.p_vacuum),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::domain(name, p, "probability in [0, 1]"));
            }
        }
        let total = self.p_signal + self.p_decoy + self.p_vacuum;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(
                "p_signal + p_decoy + p_vacuum",
                total,
                "state probabilities summing to 1",
            ));
        }
        if !(self.sifting_q > 0.0 && self.sifting_q <= 1.0) {
            return Err(Error::domain("sifting_q", self.sifting_q, "in (0, 1]"));
        }
        if !(self.f_ec >= 1.0) {
            return Err(Error::domain("f_ec", self.f_ec, ">= 1"));
        }
        if !(self.clock_rate_hz > 0.0) {
            return Err(Error::domain("clock_rate_hz", self.clock_rate_hz, "> 0"));
        }
        if !(self.rate_scale > 0.0) {
            return Err(Error::domain("rate_scale", self.rate_scale, "> 0"));
        }
        Ok(())
    }

    /// Emitted pulses per second of the given class that survive sifting.
    pub fn sifted_pulse_rate(&self, class_probability: f64) -> f64 {
        class_probability * self.sifting_q * self.clock_rate_hz * self.rate_scale
    }
}

/// Effective channel seen by the key-rate engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// End-to-end transmittance, including receiver loss and detector efficiency.
    pub eta: f64,
    /// Background yield per gate.
    pub y0: f64,
    pub e_det: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::domain("eta", self.eta, "in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.y0) {
            return Err(Error::domain("Y0", self.y0, "in [0, 1)"));
        }
        if !(0.0..=0.5).contains(&self.e_det) {
            return Err(Error::domain("e_det", self.e_det, "in [0, 0.5]"));
        }
        Ok(())
    }
}

/// Why a report carries a zero key rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoKey {
    /// The single-photon yield bound collapsed to zero.
    SinglePhotonYieldVanished,
    /// Error-correction leakage exceeds the privacy-amplified single-photon term.
    ErrorCorrectionExceedsKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    pub q_mu: f64,
    pub e_mu: f64,
    pub q_nu: f64,
    pub e_nu: f64,
    pub y1_lower: f64,
    pub e1_upper: f64,
    pub q1_lower: f64,
    pub skr_bps: f64,
    pub qber_percent: f64,
    pub no_key: Option<NoKey>,
}

/// Binary Shannon entropy.
pub fn h2(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain("x", x, "probability in [0, 1]"));
    }
    Ok(h2_unchecked(x))
}

fn h2_unchecked(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Overall gain and QBER for a coherent state of mean photon number `m`.
pub fn gain_and_qber(m: f64, ch: &ChannelParams) -> (f64, f64) {
    // -expm1 keeps precision when eta * m is tiny.
    let signal = -(-ch.eta * m).exp_m1();
    let q = ch.y0 + (1.0 - ch.y0) * signal;
    if q <= 0.0 {
        return (0.0, E0);
    }
    let eq = E0 * ch.y0 + ch.e_det * (1.0 - ch.y0) * signal;
    (q, eq / q)
}

/// Lower bound on the single-photon yield from vacuum + weak decoy gains,
/// clamped to `[0, 1]`.
pub fn y1_lower_bound(q_mu: f64, q_nu: f64, y0: f64, mu: f64, nu: f64) -> Result<f64> {
    if !(nu > 0.0 && nu < mu) {
        return Err(Error::DegenerateDecoy { mu, nu });
    }
    let mu2 = mu * mu;
    let nu2 = nu * nu;
    let bracket = q_nu * nu.exp() - q_mu * mu.exp() * nu2 / mu2 - (mu2 - nu2) / mu2 * y0;
    Ok((mu / (mu * nu - nu2) * bracket).clamp(0.0, 1.0))
}

/// Upper bound on the single-photon error rate, clamped to `[0, 1/2]`.
///
/// Returns `None` when `y1_lower` is zero: no key can be certified.
pub fn e1_upper_bound(e_nu: f64, q_nu: f64, y0: f64, nu: f64, y1_lower: f64) -> Option<f64> {
    if y1_lower <= 0.0 {
        return None;
    }
    let bound = (e_nu * q_nu * nu.exp() - E0 * y0) / (y1_lower * nu);
    Some(bound.clamp(0.0, 0.5))
}

/// Measured (or modelled) statistics the rate formula consumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyObservation {
    pub q_mu: f64,
    pub e_mu: f64,
    pub q_nu: f64,
    pub e_nu: f64,
    pub y0: f64,
}

/// Key rate from observed gains and error rates.
pub fn key_rate_from_observation(d: &DecoyParams, obs: &DecoyObservation) -> Result<KeyRateReport> {
    let y1_lower = y1_lower_bound(obs.q_mu, obs.q_nu, obs.y0, d.mu, d.nu)?;
    let e_mu = obs.e_mu.clamp(0.0, 0.5);
    let mut report = KeyRateReport {
        q_mu: obs.q_mu,
        e_mu,
        q_nu: obs.q_nu,
        e_nu: obs.e_nu,
        y1_lower,
        e1_upper: 0.5,
        q1_lower: 0.0,
        skr_bps: 0.0,
        qber_percent: 100.0 * e_mu,
        no_key: None,
    };
    let Some(e1_upper) = e1_upper_bound(obs.e_nu, obs.q_nu, obs.y0, d.nu, y1_lower) else {
        report.no_key = Some(NoKey::SinglePhotonYieldVanished);
        return Ok(report);
    };
    report.e1_upper = e1_upper;
    report.q1_lower = y1_lower * d.mu * (-d.mu).exp();
    let per_pulse = report.q1_lower * (1.0 - h2_unchecked(e1_upper)) - d.f_ec * obs.q_mu * h2_unchecked(e_mu);
    if per_pulse > 0.0 {
        report.skr_bps = d.sifted_pulse_rate(d.p_signal) * per_pulse;
    } else {
        report.no_key = Some(NoKey::ErrorCorrectionExceedsKey);
    }
    Ok(report)
}

/// Asymptotic secure key rate for the given protocol and channel.
pub fn secure_key_rate(d: &DecoyParams, ch: &ChannelParams) -> Result<KeyRateReport> {
    d.validate()?;
    ch.validate()?;
    let (q_mu, e_mu) = gain_and_qber(d.mu, ch);
    let (q_nu, e_nu) = gain_and_qber(d.nu, ch);
    key_rate_from_observation(
        d,
        &DecoyObservation {
            q_mu,
            e_mu,
            q_nu,
            e_nu,
            y0: ch.y0,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn channel(eta: f64, y0: f64, e_det: f64) -> ChannelParams {
        ChannelParams { eta, y0, e_det }
    }

    #[test]
    fn h2_reference_points() {
        assert_eq!(h2(0.0).unwrap(), 0.0);
        assert_eq!(h2(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(h2(0.5).unwrap(), 1.0, epsilon = 1e-15);
        // 30-digit evaluation: 0.499915958164527995...
        assert_abs_diff_eq!(h2(0.11).unwrap(), 0.499_915_958_164_528, epsilon = 1e-14);
        assert!(h2(-0.1).is_err());
        assert!(h2(1.5).is_err());
    }

    #[test]
    fn vacuum_pulse_sees_only_background() {
        let (q, e) = gain_and_qber(0.0, &channel(0.1, 1e-5, 0.015));
        assert_eq!(q, 1e-5);
        assert_eq!(e, E0);
    }

    #[test]
    fn bright_noiseless_limit() {
        let (q, e) = gain_and_qber(1e4, &channel(0.5, 0.0, 0.02));
        assert_abs_diff_eq!(q, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e, 0.02, epsilon = 1e-12);
    }

    #[test]
    fn qber_lies_between_component_error_rates() {
        for &(eta, m, y0, ed) in &[(1e-3, 0.5, 4e-5, 0.015), (0.3, 0.1, 1e-3, 0.05), (1.0, 1.0, 0.0, 0.0)] {
            let (_, e) = gain_and_qber(m, &channel(eta, y0, ed));
            assert!(e >= ed.min(E0) - 1e-15 && e <= ed.max(E0) + 1e-15);
        }
    }

    #[test]
    fn y1_bound_on_lossless_channel() {
        let ch = channel(1.0, 0.0, 0.0);
        let (q_mu, _) = gain_and_qber(0.5, &ch);
        let (q_nu, _) = gain_and_qber(0.1, &ch);
        let y1 = y1_lower_bound(q_mu, q_nu, 0.0, 0.5, 0.1).unwrap();
        assert!((0.9..=1.0).contains(&y1), "y1 = {y1}");
    }

    #[test]
    fn y1_bound_vanishes_without_detections() {
        let ch = channel(1e-15, 0.0, 0.0);
        let (q_mu, _) = gain_and_qber(0.5, &ch);
        let (q_nu, _) = gain_and_qber(0.1, &ch);
        assert!(y1_lower_bound(q_mu, q_nu, 0.0, 0.5, 0.1).unwrap() < 1e-14);
        assert!(y1_lower_bound(q_mu, q_nu, 0.0, 0.1, 0.1).is_err());
    }

    #[test]
    fn e1_bound_clamps_and_signals_no_key() {
        assert_eq!(e1_upper_bound(0.01, 1e-4, 1e-3, 0.1, 0.5), Some(0.0));
        assert_eq!(e1_upper_bound(0.01, 1e-4, 1e-5, 0.1, 0.0), None);
    }

    #[test]
    fn e1_bound_tends_to_e_det_without_background() {
        let e1_at = |y0: f64, nu: f64| {
            let ch = channel(0.01, y0, 0.02);
            let (q_mu, _) = gain_and_qber(0.5, &ch);
            let (q_nu, e_nu) = gain_and_qber(nu, &ch);
            let y1 = y1_lower_bound(q_mu, q_nu, y0, 0.5, nu).unwrap();
            (e1_upper_bound(e_nu, q_nu, y0, nu, y1).unwrap(), y1)
        };
        // Without background the bound reduces to e_det scaled by the
        // looseness of the single-photon yield bound.
        let (e1, y1) = e1_at(0.0, 0.1);
        let closed = 0.02 * -(-0.01f64 * 0.1).exp_m1() * 0.1f64.exp() / (0.1 * y1);
        assert!((e1 - closed).abs() < 1e-12);
        assert!((e1_at(1e-9, 0.1).0 - e1).abs() < 1e-5);
        // ... and that looseness vanishes as the decoy gets weaker.
        let (weak, _) = e1_at(0.0, 1e-3);
        assert!((weak - 0.02).abs() < 0.02 * 0.01, "e1 = {weak}");
        assert!(weak < e1);
    }

    #[test]
    fn zero_transmittance_gives_no_key() {
        let r = secure_key_rate(&DecoyParams::default(), &channel(0.0, 1e-5, 0.015)).unwrap();
        assert_eq!(r.skr_bps, 0.0);
        assert!(r.no_key.is_some());
    }

    #[test]
    fn rate_vanishes_past_the_error_threshold() {
        let d = DecoyParams::default();
        let mut y0 = 1e-6;
        let crossing = loop {
            let r = secure_key_rate(&d, &channel(1e-3, y0, 0.015)).unwrap();
            if r.skr_bps == 0.0 {
                break r.e_mu;
            }
            y0 *= 1.05;
            assert!(y0 < 0.5);
        };
        // Key disappears at a QBER of several percent: below the ideal
        // 11 % of single-photon BB84 because of the multi-photon fraction
        // and the error-correction inefficiency.
        assert!(crossing > 0.05 && crossing < 0.11, "crossing at E = {crossing}");
    }

    #[test]
    fn rejects_bad_protocol_parameters() {
        let bad = DecoyParams {
            nu: 0.6,
            ..DecoyParams::default()
        };
        assert!(matches!(bad.validate(), Err(Error::DegenerateDecoy { .. })));
        let bad = DecoyParams {
            p_vacuum: 0.2,
            ..DecoyParams::default()
        };
        assert!(bad.validate().is_err());
        assert!(channel(1.5, 0.0, 0.0).validate().is_err());
    }
}
