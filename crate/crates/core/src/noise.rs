//! Noise photons per detector gate at Bob: spontaneous Raman scattering of
//! the classical carriers, ONT back-reflection leaking through the bandpass
//! filter, and intrinsic dark counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{
    bob_filter, bpf_transmission_db, dbm_to_mw, mw_to_dbm, path_loss_db, reflection_paths, AttenuationModel,
};
use crate::physics::Physics;
use crate::topology::{ChannelPlan, ElementKind, FiberType, Topology};

/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s.
pub const LIGHT_SPEED: f64 = 299_792_458.0;
/// Raman offsets beyond this are treated as uncoupled.
pub const RAMAN_REACH_NM: f64 = 250.0;

/// Spontaneous Raman coefficient, per km per nm of acceptance bandwidth,
/// as a function of `lambda_scatter - lambda_pump`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RamanModel {
    /// The same coefficient at every offset within reach.
    Flat(f64),
    /// `(offset_nm, rho)` anchors, strictly increasing in offset; negative
    /// offsets are the anti-Stokes branch.
    Table(Vec<(f64, f64)>),
}

impl Default for RamanModel {
    fn default() -> Self {
        RamanModel::Flat(5e-10)
    }
}

impl RamanModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            RamanModel::Flat(r) if *r >= 0.0 => Ok(()),
            RamanModel::Flat(r) => Err(Error::domain("raman_rho", *r, ">= 0")),
            RamanModel::Table(t) => {
                if t.is_empty() || t.iter().any(|&(_, r)| !(r >= 0.0)) {
                    return Err(Error::Invalid("Raman table needs non-negative anchors".into()));
                }
                if t.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return Err(Error::Invalid("Raman anchors must increase in offset".into()));
                }
                Ok(())
            }
        }
    }

    pub fn rho(&self, offset_nm: f64) -> f64 {
        if offset_nm.abs() > RAMAN_REACH_NM {
            return 0.0;
        }
        match self {
            RamanModel::Flat(r) => *r,
            RamanModel::Table(t) => {
                if offset_nm < t[0].0 || offset_nm > t[t.len() - 1].0 {
                    0.0
                } else {
                    crate::optics::interpolate_clamped(t, offset_nm)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorParams {
    pub efficiency: f64,
    pub dark_count_prob_per_gate: f64,
    pub gate_rate_hz: f64,
    pub gate_width_s: f64,
    pub intrinsic_error_e_det: f64,
    pub receiver_insertion_loss_db: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            efficiency: 0.20,
            dark_count_prob_per_gate: 1e-5,
            gate_rate_hz: 1e9,
            gate_width_s: 100e-12,
            intrinsic_error_e_det: 0.015,
            receiver_insertion_loss_db: 2.0,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("efficiency", self.efficiency),
            ("dark_count_prob_per_gate", self.dark_count_prob_per_gate),
            ("intrinsic_error_e_det", self.intrinsic_error_e_det),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(name, v, "fraction in [0, 1]"));
            }
        }
        if !(self.gate_rate_hz > 0.0 && self.gate_width_s > 0.0) {
            return Err(Error::Invalid("gate rate and width must be > 0".into()));
        }
        if self.gate_width_s > 1.0 / self.gate_rate_hz {
            return Err(Error::Invalid(format!(
                "gate width {} s exceeds the gate period {} s",
                self.gate_width_s,
                1.0 / self.gate_rate_hz
            )));
        }
        if !(self.receiver_insertion_loss_db >= 0.0) {
            return Err(Error::domain(
                "receiver_insertion_loss_db",
                self.receiver_insertion_loss_db,
                ">= 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RamanDirection {
    /// Scattered light co-propagating with the pump, collected at the far end.
    Forward,
    /// Scattered light counter-propagating, collected at the launch end.
    Backward,
}

/// Spontaneous Raman power emerging from one fiber span.
#[allow(clippy::too_many_arguments)]
pub fn raman_noise_power_dbm(
    launch_dbm: f64,
    length_km: f64,
    fiber: FiberType,
    pump_nm: f64,
    quantum_nm: f64,
    filter_bw_nm: f64,
    direction: RamanDirection,
    raman: &RamanModel,
    attenuation: &AttenuationModel,
) -> f64 {
    let rho = raman.rho(quantum_nm - pump_nm);
    if rho == 0.0 || length_km <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let alpha = attenuation.db_per_km(fiber, quantum_nm) * std::f64::consts::LN_10 / 10.0;
    let base = dbm_to_mw(launch_dbm) * rho * filter_bw_nm;
    let mw = match direction {
        RamanDirection::Forward => base * length_km * (-alpha * length_km).exp(),
        RamanDirection::Backward => base * -(-2.0 * alpha * length_km).exp_m1() / (2.0 * alpha),
    };
    mw_to_dbm(mw)
}

/// Energy of one photon at `nm`, in joules.
pub fn photon_energy_j(nm: f64) -> f64 {
    PLANCK * LIGHT_SPEED / (nm * 1e-9)
}

/// Mean number of detected photons per gate for a steady optical power at
/// Bob's receiver input.
pub fn photons_per_gate(power_dbm: f64, nm: f64, det: &DetectorParams) -> f64 {
    if power_dbm == f64::NEG_INFINITY {
        return 0.0;
    }
    let watts = dbm_to_mw(power_dbm) * 1e-3;
    watts / photon_energy_j(nm) * det.gate_width_s * det.efficiency * 10f64.powf(-det.receiver_insertion_loss_db / 10.0)
}

/// Probability of at least one click per gate from a Poisson photon stream.
pub fn click_probability(mean_photons: f64) -> f64 {
    -(-mean_photons).exp_m1()
}

/// Per-mechanism click probabilities per gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    pub raman_forward: f64,
    pub raman_backward: f64,
    pub reflection_leakage: f64,
    pub dark: f64,
    pub y0_background: f64,
}

impl NoiseBudget {
    pub fn new(raman_forward: f64, raman_backward: f64, reflection_leakage: f64, dark: f64) -> Self {
        // 1 - prod(1 - p) evaluated without cancellation for tiny p.
        let log_none: f64 = [raman_forward, raman_backward, reflection_leakage, dark]
            .iter()
            .map(|p| (-p).ln_1p())
            .sum();
        NoiseBudget {
            raman_forward,
            raman_backward,
            reflection_leakage,
            dark,
            y0_background: -log_none.exp_m1(),
        }
    }
}

/// Which noise mechanisms are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Mechanisms {
    pub raman: bool,
    pub reflections: bool,
}

impl Default for Mechanisms {
    fn default() -> Self {
        Mechanisms {
            raman: true,
            reflections: true,
        }
    }
}

/// An ONT transmitting during the evaluated interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveOnt {
    pub id: String,
    pub wavelength_nm: f64,
    /// Launch power while the ONT's burst is on.
    pub burst_dbm: f64,
    /// Fraction of time the ONT transmits.
    pub duty: f64,
}

impl ActiveOnt {
    pub fn average_dbm(&self) -> f64 {
        self.burst_dbm + 10.0 * self.duty.log10()
    }
}

/// Noise at Bob from every mechanism, driven by time-averaged powers.
pub fn noise_budget(
    t: &Topology,
    plan: &ChannelPlan,
    physics: &Physics,
    active: &[ActiveOnt],
    mechanisms: Mechanisms,
) -> Result<NoiseBudget> {
    let det = &physics.detector;
    let terms = t.terminals();
    let (alice, bob) = (terms.alice.as_str(), terms.bob.as_str());
    let q_nm = plan.quantum_wavelength_nm();
    let filter = bob_filter(t, physics)?;
    let bw = filter.noise_bandwidth_nm();
    let in_band_dbm = |p: f64| p - bpf_transmission_db(filter, q_nm);
    let conn = if physics.span_end_connectors {
        physics.connector_insertion_db
    } else {
        0.0
    };

    let trunk: Vec<(String, f64, FiberType)> = t
        .path_between(alice, bob)?
        .hops
        .into_iter()
        .filter_map(|h| match t.kind(&h.node) {
            Ok(ElementKind::FiberSpan { length_km, fiber_type }) => Some((h.node, *length_km, *fiber_type)),
            _ => None,
        })
        .collect();

    let mut forward_mw = 0.0;
    let mut backward_mw = 0.0;
    if mechanisms.raman {
        for ch in plan.downstream_classical() {
            let Some(launch) = ch.launch_power_dbm else {
                continue;
            };
            for (span, km, fiber) in &trunk {
                let pump = launch - path_loss_db(t, physics, alice, span, ch.wavelength_nm)? - conn;
                let raman = raman_noise_power_dbm(
                    pump,
                    *km,
                    *fiber,
                    ch.wavelength_nm,
                    q_nm,
                    bw,
                    RamanDirection::Forward,
                    &physics.raman_rho,
                    &physics.alpha_db_per_km,
                );
                let at_bob = raman - conn - path_loss_db(t, physics, span, bob, q_nm)?;
                forward_mw += dbm_to_mw(in_band_dbm(at_bob));
            }
        }
        for ont in active {
            let (nm, avg) = upstream_drive(plan, ont);
            let above: Vec<&str> = t.ancestors(&ont.id)?;
            for (span, km, fiber) in &trunk {
                if !above.contains(&span.as_str()) {
                    continue;
                }
                let pump = avg - path_loss_db(t, physics, &ont.id, span, nm)? - conn;
                let raman = raman_noise_power_dbm(
                    pump,
                    *km,
                    *fiber,
                    nm,
                    q_nm,
                    bw,
                    RamanDirection::Backward,
                    &physics.raman_rho,
                    &physics.alpha_db_per_km,
                );
                let at_bob = raman - conn - path_loss_db(t, physics, span, bob, q_nm)?;
                backward_mw += dbm_to_mw(in_band_dbm(at_bob));
            }
        }
    }

    let mut leakage_mean = 0.0;
    if mechanisms.reflections {
        for ont in active {
            let (nm, avg) = upstream_drive(plan, ont);
            let paths = reflection_paths(t, physics, &ont.id, bob)?;
            let reflected = crate::optics::reflected_power_dbm(&paths, avg);
            let through = reflected - bpf_transmission_db(filter, nm);
            leakage_mean += photons_per_gate(through, nm, det);
        }
    }

    Ok(NoiseBudget::new(
        click_probability(photons_per_gate(mw_to_dbm(forward_mw), q_nm, det)),
        click_probability(photons_per_gate(mw_to_dbm(backward_mw), q_nm, det)),
        click_probability(leakage_mean),
        det.dark_count_prob_per_gate,
    ))
}

/// Wavelength and time-averaged power of an ONT's upstream carrier. An
/// explicit upstream channel overrides the ONT's wavelength.
fn upstream_drive(plan: &ChannelPlan, ont: &ActiveOnt) -> (f64, f64) {
    let nm = plan.upstream_of(&ont.id).map_or(ont.wavelength_nm, |c| c.wavelength_nm);
    (nm, ont.average_dbm())
}
