//! The analytic steady-state pipeline for one scenario:
//! optics → GPON drive → noise → key rate.
//!
//! A [`Model`] precomputes every loss that does not depend on the tunable
//! parameters ([`Tunables`]), so repeated evaluations during calibration
//! only combine a few dozen cached terms.

use serde::Serialize;

use crate::document::{ScenarioDocument, Toggles};
use crate::error::{Error, Result};
use crate::gpon::{ont_launch_power_dbm, DbaLoad, DbaMode, PlsuPolicy};
use crate::noise::{click_probability, photons_per_gate, DetectorParams, NoiseBudget, RamanModel};
use crate::optics::{
    bob_filter, bpf_transmission_db, db_to_fraction, dbm_to_mw, mw_to_dbm, path_loss_db, reflection_paths, BpfModel,
    Reflector,
};
use crate::physics::Physics;
use crate::qkd::{secure_key_rate, ChannelParams, DecoyParams, KeyRateReport};
use crate::topology::{ElementKind, NodeId};

/// The parameters a calibration may move, in their native form.
#[derive(Debug, Clone, PartialEq)]
pub struct Tunables {
    pub raman: RamanModel,
    pub bpf: BpfModel,
    pub splitter_return_loss_db: f64,
    pub coupler_return_loss_db: f64,
    pub connector_return_loss_db: f64,
    pub plsu: PlsuPolicy,
    pub rate_scale: f64,
}

impl Tunables {
    pub fn from_document(doc: &ScenarioDocument) -> Result<Self> {
        let p = &doc.physics;
        let mut plsu = doc.gpon.plsu.clone();
        if let (Some(slope), PlsuPolicy::Continuous { db_per_added_ont, .. }) = (p.plsu_db_per_ont, &mut plsu) {
            *db_per_added_ont = slope;
        }
        Ok(Tunables {
            raman: p.raman_rho.clone(),
            bpf: *bob_filter(&doc.topology, p)?,
            splitter_return_loss_db: p.splitter_return_loss_db,
            coupler_return_loss_db: p.coupler_return_loss_db,
            connector_return_loss_db: p.connector_return_loss_db,
            plsu,
            rate_scale: p.rate_scale,
        })
    }
}

/// Spontaneous Raman reaching Bob from one pump over one span, per unit of
/// `rho * bandwidth` and (for upstream pumps) per mW of average ONT power.
#[derive(Debug, Clone)]
struct RamanTerm {
    pump_nm: f64,
    /// Index into `Model::onts` for upstream pumps; `None` for head-end pumps.
    ont: Option<usize>,
    gain: f64,
}

#[derive(Debug, Clone)]
struct Reflection {
    fixed_loss_db: f64,
    reflector: Reflector,
    own_return_loss_db: Option<f64>,
}

#[derive(Debug, Clone)]
struct OntInfo {
    id: NodeId,
    nm: f64,
    nominal_dbm: f64,
    reflections: Vec<Reflection>,
}

/// A scenario compiled for fast repeated evaluation.
#[derive(Debug, Clone)]
pub struct Model {
    quantum_nm: f64,
    trunk_loss_db: f64,
    detector: DetectorParams,
    decoy: DecoyParams,
    dba: DbaMode,
    forward: Vec<RamanTerm>,
    backward: Vec<RamanTerm>,
    onts: Vec<OntInfo>,
}

/// Steady-state outcome of one scenario evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub active_onts: Vec<NodeId>,
    /// Burst launch power of each active ONT after power levelling.
    pub launch_dbm: Vec<f64>,
    pub noise: NoiseBudget,
    pub channel: ChannelParams,
    pub report: KeyRateReport,
    /// Strongest single-ONT burst of back-reflected light at Bob's input,
    /// before the filter; `None` with no ONT active.
    pub back_reflection_dbm: Option<f64>,
}

impl Model {
    pub fn compile(doc: &ScenarioDocument) -> Result<Self> {
        doc.check()?;
        let t = &doc.topology;
        let physics: &Physics = &doc.physics;
        let plan = &doc.channels;
        let terms = t.terminals();
        let (alice, bob) = (terms.alice.as_str(), terms.bob.as_str());
        let q_nm = plan.quantum_wavelength_nm();
        let conn = if physics.span_end_connectors {
            physics.connector_insertion_db
        } else {
            0.0
        };

        let mut onts = Vec::with_capacity(terms.onts.len());
        for id in &terms.onts {
            let ElementKind::Ont {
                wavelength_nm,
                nominal_power_dbm,
                ..
            } = t.kind(id)?
            else {
                return Err(Error::Invalid(format!("`{id}` is not an ONT")));
            };
            let nm = plan.upstream_of(id).map_or(*wavelength_nm, |c| c.wavelength_nm);
            let nominal_dbm = plan
                .upstream_of(id)
                .and_then(|c| c.launch_power_dbm)
                .unwrap_or(*nominal_power_dbm);
            let reflections = reflection_paths(t, physics, id, bob)?
                .into_iter()
                .map(|p| Reflection {
                    fixed_loss_db: p.forward_loss_db + p.backward_loss_db,
                    reflector: p.reflector,
                    own_return_loss_db: (!p.default_return_loss).then_some(p.return_loss_db),
                })
                .collect();
            onts.push(OntInfo {
                id: id.clone(),
                nm,
                nominal_dbm,
                reflections,
            });
        }

        let alpha_np =
            |fiber, km: f64| physics.alpha_db_per_km.db_per_km(fiber, q_nm) * std::f64::consts::LN_10 / 10.0 * km;
        let mut forward = Vec::new();
        let mut backward = Vec::new();
        for hop in t.path_between(alice, bob)?.hops {
            let ElementKind::FiberSpan { length_km, fiber_type } = t.kind(&hop.node)? else {
                continue;
            };
            let span = hop.node.as_str();
            let to_bob = db_to_fraction(conn + path_loss_db(t, physics, span, bob, q_nm)?);
            let a_l = alpha_np(*fiber_type, *length_km);
            let fwd_shape = length_km * (-a_l).exp();
            let bwd_shape = -(-2.0 * a_l).exp_m1() / (2.0 * a_l / length_km);
            for ch in plan.downstream_classical() {
                let Some(launch) = ch.launch_power_dbm else {
                    continue;
                };
                let pump = launch - path_loss_db(t, physics, alice, span, ch.wavelength_nm)? - conn;
                forward.push(RamanTerm {
                    pump_nm: ch.wavelength_nm,
                    ont: None,
                    gain: dbm_to_mw(pump) * fwd_shape * to_bob,
                });
            }
            for (i, o) in onts.iter().enumerate() {
                if !t.ancestors(&o.id)?.contains(&span) {
                    continue;
                }
                let reach = db_to_fraction(path_loss_db(t, physics, &o.id, span, o.nm)? + conn);
                backward.push(RamanTerm {
                    pump_nm: o.nm,
                    ont: Some(i),
                    gain: reach * bwd_shape * to_bob,
                });
            }
        }

        Ok(Model {
            quantum_nm: q_nm,
            trunk_loss_db: path_loss_db(t, physics, alice, bob, q_nm)?,
            detector: physics.detector,
            decoy: doc.decoy(),
            dba: doc.gpon.dba.clone(),
            forward,
            backward,
            onts,
        })
    }

    pub fn ont_ids(&self) -> impl Iterator<Item = &str> {
        self.onts.iter().map(|o| o.id.as_str())
    }

    pub fn ont_count(&self) -> usize {
        self.onts.len()
    }

    /// End-to-end transmittance of the quantum channel at `bpf`.
    pub fn eta(&self, bpf: &BpfModel) -> f64 {
        let loss =
            self.trunk_loss_db + bpf_transmission_db(bpf, self.quantum_nm) + self.detector.receiver_insertion_loss_db;
        db_to_fraction(loss) * self.detector.efficiency
    }

    /// Indices of the ONTs with the given ids.
    pub fn select(&self, ids: &[NodeId]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| {
                self.onts
                    .iter()
                    .position(|o| &o.id == id)
                    .ok_or_else(|| Error::Scenario(format!("`{id}` is not an ONT terminal")))
            })
            .collect()
    }

    /// The first `n` ONTs in document order.
    pub fn first(&self, n: usize) -> Result<Vec<usize>> {
        if n > self.onts.len() {
            return Err(Error::Scenario(format!(
                "{n} active ONTs requested but the plant has {}",
                self.onts.len()
            )));
        }
        Ok((0..n).collect())
    }

    fn reflection_fraction(&self, ont: &OntInfo, k: &Tunables) -> f64 {
        ont.reflections
            .iter()
            .map(|r| {
                let rl = r.own_return_loss_db.unwrap_or(match r.reflector {
                    Reflector::SplitterBody => k.splitter_return_loss_db,
                    Reflector::CouplerBody => k.coupler_return_loss_db,
                    Reflector::PortConnector | Reflector::SpanEndConnector | Reflector::Connector => {
                        k.connector_return_loss_db
                    }
                });
                db_to_fraction(r.fixed_loss_db + rl)
            })
            .sum()
    }

    pub fn evaluate(&self, k: &Tunables, active: &[usize], toggles: Toggles) -> Result<Evaluation> {
        let n = active.len();
        let ids: Vec<NodeId> = active.iter().map(|&i| self.onts[i].id.clone()).collect();
        let plsu = if toggles.plsu { k.plsu.clone() } else { PlsuPolicy::Off };
        let load = DbaLoad::resolve(&self.dba, &ids, self.onts.len())?;
        let mut launch_dbm = Vec::with_capacity(n);
        let mut avg_mw = vec![0.0; self.onts.len()];
        for (&i, id) in active.iter().zip(&ids) {
            let launch = ont_launch_power_dbm(&plsu, n, self.onts[i].nominal_dbm)?;
            launch_dbm.push(launch);
            avg_mw[i] = dbm_to_mw(launch) * load.duty(id).unwrap_or(0.0);
        }

        let bw = k.bpf.noise_bandwidth_nm();
        let in_band = db_to_fraction(bpf_transmission_db(&k.bpf, self.quantum_nm));
        let det = &self.detector;
        let raman_p = |mw: f64| click_probability(photons_per_gate(mw_to_dbm(mw), self.quantum_nm, det));
        let (mut fwd_mw, mut bwd_mw) = (0.0, 0.0);
        if toggles.raman {
            for term in &self.forward {
                fwd_mw += term.gain * k.raman.rho(self.quantum_nm - term.pump_nm) * bw * in_band;
            }
            for term in &self.backward {
                let pump = avg_mw[term.ont.expect("upstream term")];
                if pump > 0.0 {
                    bwd_mw += pump * term.gain * k.raman.rho(self.quantum_nm - term.pump_nm) * bw * in_band;
                }
            }
        }

        let mut leak_mean = 0.0;
        let mut peak_mw: Option<f64> = None;
        for (&i, &launch) in active.iter().zip(&launch_dbm) {
            let ont = &self.onts[i];
            let frac = self.reflection_fraction(ont, k);
            let burst = dbm_to_mw(launch) * frac;
            peak_mw = Some(peak_mw.map_or(burst, |p| p.max(burst)));
            if toggles.reflections {
                let through = avg_mw[i] * frac * db_to_fraction(bpf_transmission_db(&k.bpf, ont.nm));
                leak_mean += photons_per_gate(mw_to_dbm(through), ont.nm, det);
            }
        }

        let noise = NoiseBudget::new(
            raman_p(fwd_mw),
            raman_p(bwd_mw),
            click_probability(leak_mean),
            det.dark_count_prob_per_gate,
        );
        let channel = ChannelParams {
            eta: self.eta(&k.bpf),
            y0: noise.y0_background,
            e_det: det.intrinsic_error_e_det,
        };
        let decoy = DecoyParams {
            rate_scale: k.rate_scale,
            ..self.decoy
        };
        let report = secure_key_rate(&decoy, &channel)?;
        Ok(Evaluation {
            active_onts: ids,
            launch_dbm,
            noise,
            channel,
            report,
            back_reflection_dbm: peak_mw.map(mw_to_dbm),
        })
    }

    pub fn decoy(&self) -> &DecoyParams {
        &self.decoy
    }
}

/// Evaluates a document's own scenario block.
pub fn evaluate_document(doc: &ScenarioDocument) -> Result<Evaluation> {
    let model = Model::compile(doc)?;
    let active = model.select(&doc.scenario.active_onts)?;
    model.evaluate(&Tunables::from_document(doc)?, &active, doc.scenario.toggles)
}
