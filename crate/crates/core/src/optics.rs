//! Wavelength-dependent element losses, end-to-end path budgets and the
//! single-bounce reflection paths that carry ONT light back to Bob.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::Physics;
use crate::topology::{Channel, ChannelPlan, Direction, ElementKind, FiberType, NodeId, Topology, Traversal};

pub const SUPPORTED_NM: (f64, f64) = (1250.0, 1600.0);

fn check_wavelength(nm: f64) -> Result<()> {
    if (SUPPORTED_NM.0..=SUPPORTED_NM.1).contains(&nm) {
        Ok(())
    } else {
        Err(Error::WavelengthOutOfRange(nm))
    }
}

/// Converts a (positive) loss in dB to a linear power fraction.
pub fn db_to_fraction(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Fiber attenuation anchors per fiber type, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttenuationModel {
    #[serde(rename = "G652D")]
    pub g652d: Vec<(f64, f64)>,
    #[serde(rename = "G657A1")]
    pub g657a1: Vec<(f64, f64)>,
}

impl Default for AttenuationModel {
    fn default() -> Self {
        let itu = vec![(1310.0, 0.35), (1490.0, 0.24), (1550.0, 0.21)];
        AttenuationModel {
            g652d: itu.clone(),
            g657a1: itu,
        }
    }
}

impl AttenuationModel {
    pub fn anchors(&self, fiber: FiberType) -> &[(f64, f64)] {
        match fiber {
            FiberType::G652D => &self.g652d,
            FiberType::G657A1 => &self.g657a1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for anchors in [&self.g652d, &self.g657a1] {
            if anchors.is_empty() {
                return Err(Error::Invalid("attenuation table has no anchors".into()));
            }
            if anchors.iter().any(|&(_, a)| !(a > 0.0)) {
                return Err(Error::Invalid("attenuation must be > 0 dB/km".into()));
            }
            if anchors.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                return Err(Error::Invalid(
                    "attenuation anchors must be strictly increasing in wavelength".into(),
                ));
            }
        }
        Ok(())
    }

    /// dB/km at `nm`; clamps to the nearest anchor outside the table.
    pub fn db_per_km(&self, fiber: FiberType, nm: f64) -> f64 {
        interpolate_clamped(self.anchors(fiber), nm)
    }
}

pub(crate) fn interpolate_clamped(table: &[(f64, f64)], x: f64) -> f64 {
    let first = table[0];
    let last = table[table.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let k = table.partition_point(|&(tx, _)| tx <= x);
    let (x0, y0) = table[k - 1];
    let (x1, y1) = table[k];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Bob's bandpass filter, piecewise linear in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BpfModel {
    pub center_nm: f64,
    pub passband_halfwidth_nm: f64,
    pub passband_loss_db: f64,
    pub floor_isolation_db: f64,
    pub edge_slope_db_per_nm: f64,
}

impl Default for BpfModel {
    fn default() -> Self {
        BpfModel {
            center_nm: 1310.0,
            passband_halfwidth_nm: 1.0,
            passband_loss_db: 0.5,
            floor_isolation_db: 60.0,
            edge_slope_db_per_nm: 15.0,
        }
    }
}

impl BpfModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.passband_loss_db >= 0.0 && self.floor_isolation_db > self.passband_loss_db) {
            return Err(Error::Invalid(format!(
                "BPF needs floor_isolation_db ({}) > passband_loss_db ({}) >= 0",
                self.floor_isolation_db, self.passband_loss_db
            )));
        }
        if !(self.passband_halfwidth_nm > 0.0 && self.edge_slope_db_per_nm > 0.0) {
            return Err(Error::Invalid("BPF halfwidth and edge slope must be > 0".into()));
        }
        Ok(())
    }

    /// Width of the band over which broadband noise is accepted.
    pub fn noise_bandwidth_nm(&self) -> f64 {
        2.0 * self.passband_halfwidth_nm
    }
}

/// Attenuation of the filter at `nm`, in dB.
pub fn bpf_transmission_db(f: &BpfModel, nm: f64) -> f64 {
    let outside = ((nm - f.center_nm).abs() - f.passband_halfwidth_nm).max(0.0);
    (f.passband_loss_db + f.edge_slope_db_per_nm * outside).min(f.floor_isolation_db)
}

/// Loss of the element body alone (no implicit connectors).
pub fn element_loss_db(e: &ElementKind, nm: f64, traversal: Traversal, physics: &Physics) -> Result<f64> {
    check_wavelength(nm)?;
    let crossings = if matches!(traversal, Traversal::Turn { .. }) {
        2.0
    } else {
        1.0
    };
    Ok(match e {
        ElementKind::FiberSpan { length_km, fiber_type } => {
            crossings * physics.alpha_db_per_km.db_per_km(*fiber_type, nm) * length_km
        }
        ElementKind::Splitter {
            ports, excess_loss_db, ..
        } => {
            let excess = excess_loss_db.unwrap_or(physics.splitter_excess_db);
            crossings * (10.0 * f64::from(*ports).log10() + excess)
        }
        ElementKind::Coupler { ratio, .. } => {
            let (a, b) = ratio.unwrap_or((0.5, 0.5));
            let branch = |port: usize| -> Result<f64> {
                match port {
                    0 => Ok(-10.0 * a.log10()),
                    1 => Ok(-10.0 * b.log10()),
                    p => Err(Error::Invalid(format!("coupler has no port {p}"))),
                }
            };
            match traversal {
                Traversal::Up { port } | Traversal::Down { port } => branch(port)?,
                Traversal::Turn { in_port, out_port } => branch(in_port)? + branch(out_port)?,
            }
        }
        ElementKind::Connector { insertion_loss_db, .. } => {
            crossings * insertion_loss_db.unwrap_or(physics.connector_insertion_db)
        }
        ElementKind::OltHead | ElementKind::QkdTx | ElementKind::QkdRx { .. } | ElementKind::Ont { .. } => 0.0,
    })
}

/// Number of mated connectors implicitly crossed when traversing `e`.
pub fn implicit_connectors(e: &ElementKind, physics: &Physics) -> usize {
    match e {
        ElementKind::Splitter { .. } | ElementKind::Coupler { .. } if physics.port_connectors => 2,
        ElementKind::FiberSpan { .. } if physics.span_end_connectors => 2,
        _ => 0,
    }
}

/// One row of a link budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetLine {
    pub node: NodeId,
    pub kind: &'static str,
    pub traversal: &'static str,
    pub element_db: f64,
    pub connectors_db: f64,
}

impl BudgetLine {
    pub fn total_db(&self) -> f64 {
        self.element_db + self.connectors_db
    }
}

/// Element-by-element budget of the path from `a` to `b`.
pub fn path_budget(t: &Topology, physics: &Physics, a: &str, b: &str, nm: f64) -> Result<Vec<BudgetLine>> {
    check_wavelength(nm)?;
    let path = t.path_between(a, b)?;
    path.hops
        .iter()
        .map(|hop| {
            let kind = t.kind(&hop.node)?;
            Ok(BudgetLine {
                node: hop.node.clone(),
                kind: kind.name(),
                traversal: match hop.traversal {
                    Traversal::Up { .. } => "up",
                    Traversal::Down { .. } => "down",
                    Traversal::Turn { .. } => "turn",
                },
                element_db: element_loss_db(kind, nm, hop.traversal, physics)?,
                connectors_db: implicit_connectors(kind, physics) as f64 * physics.connector_insertion_db,
            })
        })
        .collect()
}

/// End-to-end loss between two nodes at `nm`.
pub fn path_loss_db(t: &Topology, physics: &Physics, a: &str, b: &str, nm: f64) -> Result<f64> {
    Ok(path_budget(t, physics, a, b, nm)?
        .iter()
        .map(BudgetLine::total_db)
        // `sum` of an empty f64 iterator is -0.0.
        .fold(0.0, |acc, x| acc + x))
}

/// Bob's filter: the node's own model if given, else the physics default.
pub fn bob_filter<'a>(t: &'a Topology, physics: &'a Physics) -> Result<&'a BpfModel> {
    match t.kind(&t.terminals().bob)? {
        ElementKind::QkdRx { bpf: Some(f) } => Ok(f),
        _ => Ok(&physics.bpf),
    }
}

fn channel_source<'a>(t: &'a Topology, ch: &'a Channel) -> Result<&'a str> {
    match ch.direction {
        Direction::Downstream => Ok(&t.terminals().alice),
        Direction::Upstream => ch
            .source
            .as_deref()
            .ok_or_else(|| Error::Invalid("upstream channel without a source".into())),
    }
}

/// Power of `channel` arriving at `sink`, after Bob's filter if the sink is Bob.
pub fn received_power_dbm(
    t: &Topology,
    _plan: &ChannelPlan,
    physics: &Physics,
    channel: &Channel,
    sink: &str,
) -> Result<f64> {
    let launch = channel
        .launch_power_dbm
        .ok_or_else(|| Error::Invalid(format!("channel at {} nm has no launch power", channel.wavelength_nm)))?;
    let source = channel_source(t, channel)?;
    let mut p = launch - path_loss_db(t, physics, source, sink, channel.wavelength_nm)?;
    if sink == t.terminals().bob {
        p -= bpf_transmission_db(bob_filter(t, physics)?, channel.wavelength_nm);
    }
    Ok(p)
}

/// Which return-loss figure governs a reflective interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reflector {
    SplitterBody,
    CouplerBody,
    PortConnector,
    SpanEndConnector,
    Connector,
}

/// A single-bounce path from an ONT to Bob's input (before the filter).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReflectionPath {
    pub reflection_point: NodeId,
    pub reflector: Reflector,
    pub forward_loss_db: f64,
    pub return_loss_db: f64,
    pub backward_loss_db: f64,
    pub wavelength_nm: f64,
    /// True when the return loss comes from the physics defaults rather
    /// than the element itself.
    #[serde(skip)]
    pub default_return_loss: bool,
}

impl ReflectionPath {
    pub fn total_suppression_db(&self) -> f64 {
        self.forward_loss_db + self.return_loss_db + self.backward_loss_db
    }
}

fn ont_wavelength(t: &Topology, ont: &str) -> Result<f64> {
    match t.kind(ont)? {
        ElementKind::Ont { wavelength_nm, .. } => Ok(*wavelength_nm),
        other => Err(Error::Invalid(format!("`{ont}` is a {}, not an ONT", other.name()))),
    }
}

fn branching_return_loss(e: &ElementKind, physics: &Physics) -> Option<(Reflector, f64, bool)> {
    match e {
        ElementKind::Splitter { return_loss_db, .. } => Some((
            Reflector::SplitterBody,
            return_loss_db.unwrap_or(physics.splitter_return_loss_db),
            return_loss_db.is_none(),
        )),
        ElementKind::Coupler { return_loss_db, .. } => Some((
            Reflector::CouplerBody,
            return_loss_db.unwrap_or(physics.coupler_return_loss_db),
            return_loss_db.is_none(),
        )),
        _ => None,
    }
}

/// Every reflective interface at or above the branch point shared by `ont`
/// and `bob`, with its losses at the ONT wavelength.
///
/// Interfaces below the branch point only reflect back toward the ONT and are
/// not listed.
pub fn reflection_paths(t: &Topology, physics: &Physics, ont: &str, bob: &str) -> Result<Vec<ReflectionPath>> {
    let nm = ont_wavelength(t, ont)?;
    check_wavelength(nm)?;
    if ont == bob {
        return Err(Error::Invalid("ONT and Bob must be distinct".into()));
    }
    let split = t.common_ancestor(ont, bob)?.to_string();
    let split_kind = t.kind(&split)?;
    let conn = physics.connector_insertion_db;
    let port_conn = if physics.port_connectors { conn } else { 0.0 };

    let hop_loss = |id: &str, traversal: Traversal| -> Result<f64> {
        let k = t.kind(id)?;
        Ok(element_loss_db(k, nm, traversal, physics)? + implicit_connectors(k, physics) as f64 * conn)
    };

    // ONT up to the ONT-side port of the branch point.
    let mut forward = 0.0;
    let mut below = ont.to_string();
    for anc in t.ancestors(ont)? {
        if anc == split {
            break;
        }
        forward += hop_loss(
            anc,
            Traversal::Up {
                port: t.port(anc, &below)?,
            },
        )?;
        below = anc.to_string();
    }
    let ont_port = t.port(&split, &below)?;

    // Branch point down to Bob.
    let to_bob = t.path_between(&split, bob)?;
    let mut backward = 0.0;
    for hop in &to_bob.hops {
        backward += hop_loss(&hop.node, hop.traversal)?;
    }
    let bob_side = match to_bob.hops.first() {
        Some(h) => h.node.clone(),
        None => bob.to_string(),
    };
    let bob_port = t.port(&split, &bob_side)?;

    forward += port_conn + element_loss_db(split_kind, nm, Traversal::Up { port: ont_port }, physics)?;
    backward += port_conn + element_loss_db(split_kind, nm, Traversal::Down { port: bob_port }, physics)?;

    let mut out = Vec::new();
    // Extra loss beyond the branch body, identical on the way up and back down.
    let mut extra = 0.0;
    let mut emit = |point: &str, reflector: Reflector, rl: f64, default_rl: bool, extra: f64| {
        out.push(ReflectionPath {
            reflection_point: point.to_string(),
            reflector,
            forward_loss_db: forward + extra,
            return_loss_db: rl,
            backward_loss_db: backward + extra,
            wavelength_nm: nm,
            default_return_loss: default_rl,
        });
    };

    if let Some((reflector, rl, dflt)) = branching_return_loss(split_kind, physics) {
        emit(&split, reflector, rl, dflt, extra);
    }
    if physics.port_connectors && split_kind.is_branching() {
        emit(
            &split,
            Reflector::PortConnector,
            physics.connector_return_loss_db,
            true,
            extra,
        );
        extra += conn;
    }

    let mut below = split.clone();
    for anc in t.ancestors(&split)? {
        let kind = t.kind(anc)?;
        match kind {
            ElementKind::OltHead | ElementKind::QkdTx => break,
            ElementKind::FiberSpan { .. } => {
                let body = element_loss_db(kind, nm, Traversal::Up { port: 0 }, physics)?;
                if physics.span_end_connectors {
                    emit(
                        anc,
                        Reflector::SpanEndConnector,
                        physics.connector_return_loss_db,
                        true,
                        extra,
                    );
                    extra += conn + body;
                    emit(
                        anc,
                        Reflector::SpanEndConnector,
                        physics.connector_return_loss_db,
                        true,
                        extra,
                    );
                    extra += conn;
                } else {
                    extra += body;
                }
            }
            ElementKind::Connector {
                insertion_loss_db,
                return_loss_db,
            } => {
                emit(
                    anc,
                    Reflector::Connector,
                    return_loss_db.unwrap_or(physics.connector_return_loss_db),
                    return_loss_db.is_none(),
                    extra,
                );
                extra += insertion_loss_db.unwrap_or(conn);
            }
            ElementKind::Splitter { .. } | ElementKind::Coupler { .. } => {
                if physics.port_connectors {
                    emit(
                        anc,
                        Reflector::PortConnector,
                        physics.connector_return_loss_db,
                        true,
                        extra,
                    );
                    extra += conn;
                }
                extra += element_loss_db(
                    kind,
                    nm,
                    Traversal::Up {
                        port: t.port(anc, &below)?,
                    },
                    physics,
                )?;
                let (reflector, rl, dflt) = branching_return_loss(kind, physics).expect("branching element");
                emit(anc, reflector, rl, dflt, extra);
                if physics.port_connectors {
                    emit(
                        anc,
                        Reflector::PortConnector,
                        physics.connector_return_loss_db,
                        true,
                        extra,
                    );
                    extra += conn;
                }
            }
            ElementKind::QkdRx { .. } | ElementKind::Ont { .. } => {
                return Err(Error::Invalid(format!("`{anc}` is a terminal but has children")))
            }
        }
        below = anc.to_string();
    }
    Ok(out)
}

/// Burst power of one ONT's reflections at Bob's input, before the filter.
pub fn reflected_power_dbm(paths: &[ReflectionPath], launch_dbm: f64) -> f64 {
    let mw: f64 = paths
        .iter()
        .map(|p| dbm_to_mw(launch_dbm - p.total_suppression_db()))
        .sum();
    mw_to_dbm(mw)
}
