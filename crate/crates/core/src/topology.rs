//! The PON as a tree of optical elements rooted at the OLT head-end.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::BpfModel;

pub type NodeId = String;

pub const SPLITTER_PORTS: [u32; 6] = [2, 4, 8, 16, 32, 64];
pub const ONT_BAND_NM: (f64, f64) = (1260.0, 1360.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FiberType {
    G652D,
    G657A1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PowerClass {
    #[serde(rename = "B+", alias = "BPlus")]
    BPlus,
    #[serde(rename = "C+", alias = "CPlus")]
    CPlus,
}

/// An optical element. Optional fields fall back to the `physics` defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ElementKind {
    OltHead,
    QkdTx,
    QkdRx {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bpf: Option<BpfModel>,
    },
    FiberSpan {
        length_km: f64,
        fiber_type: FiberType,
    },
    Splitter {
        ports: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        excess_loss_db: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        return_loss_db: Option<f64>,
    },
    Coupler {
        /// Power shares toward the first and second child (document order).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ratio: Option<(f64, f64)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        return_loss_db: Option<f64>,
    },
    Connector {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        insertion_loss_db: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        return_loss_db: Option<f64>,
    },
    Ont {
        wavelength_nm: f64,
        nominal_power_dbm: f64,
        power_class: PowerClass,
    },
}

impl ElementKind {
    pub fn name(&self) -> &'static str {
        match self {
            ElementKind::OltHead => "olt_head",
            ElementKind::QkdTx => "qkd_tx",
            ElementKind::QkdRx { .. } => "qkd_rx",
            ElementKind::FiberSpan { .. } => "fiber_span",
            ElementKind::Splitter { .. } => "splitter",
            ElementKind::Coupler { .. } => "coupler",
            ElementKind::Connector { .. } => "connector",
            ElementKind::Ont { .. } => "ont",
        }
    }

    /// Splitters and couplers: the elements where the tree branches.
    pub fn is_branching(&self) -> bool {
        matches!(self, ElementKind::Splitter { .. } | ElementKind::Coupler { .. })
    }

    fn max_children(&self) -> Option<usize> {
        match self {
            ElementKind::OltHead | ElementKind::QkdTx => None,
            ElementKind::QkdRx { .. } | ElementKind::Ont { .. } => Some(0),
            ElementKind::FiberSpan { .. } | ElementKind::Connector { .. } => Some(1),
            ElementKind::Splitter { ports, .. } => Some(*ports as usize),
            ElementKind::Coupler { .. } => Some(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Terminals {
    pub alice: NodeId,
    pub bob: NodeId,
    #[serde(default)]
    pub onts: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelRole {
    Quantum,
    Downstream,
    Upstream,
    ServiceCh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Downstream,
    Upstream,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Channel {
    pub role: ChannelRole,
    pub wavelength_nm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub launch_power_dbm: Option<f64>,
    pub direction: Direction,
    /// Transmitting ONT of an upstream channel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<NodeId>,
}

impl Channel {
    pub fn quantum(wavelength_nm: f64) -> Self {
        Channel {
            role: ChannelRole::Quantum,
            wavelength_nm,
            launch_power_dbm: None,
            direction: Direction::Downstream,
            source: None,
        }
    }
}

/// The optical carriers sharing the plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelPlan {
    pub channels: Vec<Channel>,
}

impl ChannelPlan {
    pub fn quantum(&self) -> Option<&Channel> {
        self.channels.iter().find(|c| c.role == ChannelRole::Quantum)
    }

    pub fn quantum_wavelength_nm(&self) -> f64 {
        self.quantum().map_or(1310.0, |c| c.wavelength_nm)
    }

    /// Classical carriers launched at the head-end toward the ONTs.
    pub fn downstream_classical(&self) -> impl Iterator<Item = &Channel> {
        self.channels
            .iter()
            .filter(|c| c.role != ChannelRole::Quantum && c.direction == Direction::Downstream)
    }

    /// The upstream carrier of `ont`, if the plan declares one explicitly.
    pub fn upstream_of(&self, ont: &str) -> Option<&Channel> {
        self.channels
            .iter()
            .find(|c| c.direction == Direction::Upstream && c.source.as_deref() == Some(ont))
    }
}

impl Default for ChannelPlan {
    fn default() -> Self {
        ChannelPlan {
            channels: vec![Channel::quantum(1310.0)],
        }
    }
}

/// Which invariant a [`Violation`] breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    UnknownNode,
    DuplicateNode,
    SelfLoop,
    NotATree,
    CycleDetected,
    Unreachable,
    RootMismatch,
    TerminalKind,
    DuplicateTerminal,
    TerminalNotLeaf,
    OversubscribedSplitter,
    FanOut,
    SplitterPorts,
    NegativeExcessLoss,
    NonPositiveReturnLoss,
    NegativeInsertionLoss,
    NonPositiveLength,
    OntWavelength,
    CouplerRatio,
    QuantumChannelCount,
    UpstreamSource,
    MissingLaunchPower,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::UnknownNode => "unknown node",
            Rule::DuplicateNode => "duplicate node id",
            Rule::SelfLoop => "self loop",
            Rule::NotATree => "not a tree",
            Rule::CycleDetected => "cycle detected",
            Rule::Unreachable => "unreachable from root",
            Rule::RootMismatch => "root is not alice",
            Rule::TerminalKind => "terminal has wrong element kind",
            Rule::DuplicateTerminal => "duplicate terminal",
            Rule::TerminalNotLeaf => "terminal is not a leaf",
            Rule::OversubscribedSplitter => "over-subscribed splitter",
            Rule::FanOut => "too many children",
            Rule::SplitterPorts => "unsupported splitter port count",
            Rule::NegativeExcessLoss => "negative excess loss",
            Rule::NonPositiveReturnLoss => "non-positive return loss",
            Rule::NegativeInsertionLoss => "negative insertion loss",
            Rule::NonPositiveLength => "non-positive fiber length",
            Rule::OntWavelength => "ONT wavelength outside the O-band",
            Rule::CouplerRatio => "coupler ratio does not sum to 1",
            Rule::QuantumChannelCount => "channel plan needs exactly one quantum channel",
            Rule::UpstreamSource => "bad upstream channel source",
            Rule::MissingLaunchPower => "classical channel without launch power",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub node: NodeId,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.node, self.rule, self.detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Traversal {
    /// Toward the root, entering from child `port`.
    Up { port: usize },
    /// Away from the root, leaving through child `port`.
    Down { port: usize },
    /// Turn-around at the common ancestor of the two endpoints.
    Turn { in_port: usize, out_port: usize },
}

impl Traversal {
    fn reversed(self) -> Self {
        match self {
            Traversal::Up { port } => Traversal::Down { port },
            Traversal::Down { port } => Traversal::Up { port },
            Traversal::Turn { in_port, out_port } => Traversal::Turn {
                in_port: out_port,
                out_port: in_port,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hop {
    pub node: NodeId,
    pub traversal: Traversal,
}

/// The unique tree path between two nodes, endpoints excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalPath {
    pub source: NodeId,
    pub sink: NodeId,
    pub hops: Vec<Hop>,
}

impl OpticalPath {
    pub fn reversed(&self) -> Self {
        OpticalPath {
            source: self.sink.clone(),
            sink: self.source.clone(),
            hops: self
                .hops
                .iter()
                .rev()
                .map(|h| Hop {
                    node: h.node.clone(),
                    traversal: h.traversal.reversed(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub kind: ElementKind,
}

/// The element graph. Structural checks are deferred to [`Topology::validate`]
/// so that broken plants can still be inspected and reported on.
#[derive(Debug, Clone)]
pub struct Topology {
    nodes: Vec<Node>,
    edges: Vec<(NodeId, NodeId)>,
    terminals: Terminals,
    index: HashMap<NodeId, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl PartialEq for Topology {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges && self.terminals == other.terminals
    }
}

impl Topology {
    pub fn new(nodes: Vec<Node>, edges: Vec<(NodeId, NodeId)>, terminals: Terminals) -> Self {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            index.entry(n.id.clone()).or_insert(i);
        }
        let mut parents = vec![Vec::new(); nodes.len()];
        let mut children = vec![Vec::new(); nodes.len()];
        for (p, c) in &edges {
            if let (Some(&pi), Some(&ci)) = (index.get(p), index.get(c)) {
                parents[ci].push(pi);
                children[pi].push(ci);
            }
        }
        Topology {
            nodes,
            edges,
            terminals,
            index,
            parents,
            children,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn terminals(&self) -> &Terminals {
        &self.terminals
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn kind(&self, id: &str) -> Result<&ElementKind> {
        self.idx(id).map(|i| &self.nodes[i].kind)
    }

    pub fn children_of(&self, id: &str) -> Result<Vec<&str>> {
        let i = self.idx(id)?;
        Ok(self.children[i].iter().map(|&c| self.nodes[c].id.as_str()).collect())
    }

    pub fn parent_of(&self, id: &str) -> Result<Option<&str>> {
        let i = self.idx(id)?;
        Ok(self.parents[i].first().map(|&p| self.nodes[p].id.as_str()))
    }

    fn idx(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    /// Every broken invariant, in a deterministic order. Empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |node: &str, rule: Rule, detail: String| {
            out.push(Violation {
                node: node.to_string(),
                rule,
                detail,
            })
        };

        let mut seen = HashMap::new();
        for n in &self.nodes {
            if seen.insert(n.id.as_str(), ()).is_some() {
                push(&n.id, Rule::DuplicateNode, "node id declared twice".into());
            }
        }
        for (p, c) in &self.edges {
            for end in [p, c] {
                if !self.index.contains_key(end) {
                    push(end, Rule::UnknownNode, format!("edge {p} -> {c}"));
                }
            }
            if p == c {
                push(p, Rule::SelfLoop, "edge from a node to itself".into());
            }
        }

        for (i, n) in self.nodes.iter().enumerate() {
            element_violations(n, &mut push);
            if self.parents[i].len() > 1 {
                let ps: Vec<&str> = self.parents[i].iter().map(|&p| self.nodes[p].id.as_str()).collect();
                push(
                    &n.id,
                    Rule::NotATree,
                    format!("{} parents: {}", ps.len(), ps.join(", ")),
                );
            }
            let fan = self.children[i].len();
            match n.kind {
                ElementKind::Splitter { ports, .. } if fan > ports as usize => push(
                    &n.id,
                    Rule::OversubscribedSplitter,
                    format!("1:{ports} splitter has {fan} children"),
                ),
                _ => {
                    if let Some(max) = n.kind.max_children() {
                        if fan > max {
                            push(
                                &n.id,
                                Rule::FanOut,
                                format!("{} allows {max} children, has {fan}", n.kind.name()),
                            );
                        }
                    }
                }
            }
        }

        self.check_terminals(&mut push);
        self.check_reachability(&mut push);
        out
    }

    fn check_terminals(&self, push: &mut impl FnMut(&str, Rule, String)) {
        let t = &self.terminals;
        let mut seen = HashMap::new();
        let all = std::iter::once(&t.alice)
            .chain(std::iter::once(&t.bob))
            .chain(t.onts.iter());
        for id in all {
            if seen.insert(id.as_str(), ()).is_some() {
                push(id, Rule::DuplicateTerminal, "listed more than once".into());
            }
        }
        let expect =
            |id: &str, ok: fn(&ElementKind) -> bool, what: &str, push: &mut dyn FnMut(&str, Rule, String)| match self
                .index
                .get(id)
            {
                None => push(id, Rule::UnknownNode, format!("terminal `{what}` is not a node")),
                Some(&i) => {
                    if !ok(&self.nodes[i].kind) {
                        push(
                            id,
                            Rule::TerminalKind,
                            format!("{what} cannot be a {}", self.nodes[i].kind.name()),
                        );
                    }
                }
            };
        expect(
            &t.alice,
            |k| matches!(k, ElementKind::OltHead | ElementKind::QkdTx),
            "alice",
            push,
        );
        expect(&t.bob, |k| matches!(k, ElementKind::QkdRx { .. }), "bob", push);
        for o in &t.onts {
            expect(o, |k| matches!(k, ElementKind::Ont { .. }), "ont", push);
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if matches!(n.kind, ElementKind::Ont { .. }) && !t.onts.contains(&n.id) {
                push(
                    &n.id,
                    Rule::TerminalKind,
                    "ONT element is not listed in terminals.onts".into(),
                );
            }
            let is_leaf_terminal = n.id == t.bob || t.onts.contains(&n.id);
            if is_leaf_terminal && !self.children[i].is_empty() {
                push(
                    &n.id,
                    Rule::TerminalNotLeaf,
                    format!("has {} children", self.children[i].len()),
                );
            }
        }
    }

    fn check_reachability(&self, push: &mut impl FnMut(&str, Rule, String)) {
        let Some(&root) = self.index.get(&self.terminals.alice) else {
            return;
        };
        if !self.parents[root].is_empty() {
            push(&self.terminals.alice, Rule::RootMismatch, "alice has a parent".into());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if i != root && self.parents[i].is_empty() {
                push(&n.id, Rule::RootMismatch, "second root (no parent)".into());
            }
        }
        let mut reached = vec![false; self.nodes.len()];
        let mut stack = vec![root];
        while let Some(i) = stack.pop() {
            if std::mem::replace(&mut reached[i], true) {
                continue;
            }
            stack.extend(self.children[i].iter().copied());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if reached[i] {
                continue;
            }
            if self.on_cycle(i) {
                push(&n.id, Rule::CycleDetected, "node lies on a directed cycle".into());
            } else {
                push(
                    &n.id,
                    Rule::Unreachable,
                    format!("no path from {}", self.terminals.alice),
                );
            }
        }
    }

    fn on_cycle(&self, start: usize) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = self.children[start].clone();
        while let Some(i) = stack.pop() {
            if i == start {
                return true;
            }
            if std::mem::replace(&mut seen[i], true) {
                continue;
            }
            stack.extend(self.children[i].iter().copied());
        }
        false
    }

    /// Chain of node indices from `i` up to the root, `i` first.
    fn ancestry(&self, i: usize) -> Result<Vec<usize>> {
        let mut chain = vec![i];
        let mut cur = i;
        while let Some(&p) = self.parents[cur].first() {
            if self.parents[cur].len() > 1 || chain.len() > self.nodes.len() {
                return Err(Error::Invalid(format!(
                    "`{}` does not have a unique path to the root",
                    self.nodes[i].id
                )));
            }
            chain.push(p);
            cur = p;
        }
        Ok(chain)
    }

    fn port_of(&self, parent: usize, child: usize) -> usize {
        self.children[parent]
            .iter()
            .position(|&c| c == child)
            .expect("child is listed under its parent")
    }

    /// The unique tree path from `a` to `b`, excluding both endpoints.
    pub fn path_between(&self, a: &str, b: &str) -> Result<OpticalPath> {
        let ai = self.idx(a)?;
        let bi = self.idx(b)?;
        let up_a = self.ancestry(ai)?;
        let up_b = self.ancestry(bi)?;
        if up_a.last() != up_b.last() {
            return Err(Error::Invalid(format!("`{a}` and `{b}` are not connected")));
        }
        let lca = *up_a.iter().find(|n| up_b.contains(n)).expect("shared root");
        let pos_a = up_a.iter().position(|&n| n == lca).unwrap();
        let pos_b = up_b.iter().position(|&n| n == lca).unwrap();

        let mut hops = Vec::new();
        // Ascend from a (exclusive) to just below the common ancestor.
        for k in 1..pos_a {
            hops.push(Hop {
                node: self.nodes[up_a[k]].id.clone(),
                traversal: Traversal::Up {
                    port: self.port_of(up_a[k], up_a[k - 1]),
                },
            });
        }
        if lca != ai && lca != bi {
            hops.push(Hop {
                node: self.nodes[lca].id.clone(),
                traversal: Traversal::Turn {
                    in_port: self.port_of(lca, up_a[pos_a - 1]),
                    out_port: self.port_of(lca, up_b[pos_b - 1]),
                },
            });
        }
        // Descend toward b.
        for k in (1..pos_b).rev() {
            hops.push(Hop {
                node: self.nodes[up_b[k]].id.clone(),
                traversal: Traversal::Down {
                    port: self.port_of(up_b[k], up_b[k - 1]),
                },
            });
        }
        Ok(OpticalPath {
            source: a.to_string(),
            sink: b.to_string(),
            hops,
        })
    }

    /// Lowest common ancestor of two nodes.
    pub fn common_ancestor(&self, a: &str, b: &str) -> Result<&str> {
        let up_a = self.ancestry(self.idx(a)?)?;
        let up_b = self.ancestry(self.idx(b)?)?;
        up_a.iter()
            .find(|n| up_b.contains(n))
            .map(|&n| self.nodes[n].id.as_str())
            .ok_or_else(|| Error::Invalid(format!("`{a}` and `{b}` are not connected")))
    }

    /// Ancestors of `id` from its parent up to the root.
    pub fn ancestors(&self, id: &str) -> Result<Vec<&str>> {
        let chain = self.ancestry(self.idx(id)?)?;
        Ok(chain[1..].iter().map(|&n| self.nodes[n].id.as_str()).collect())
    }

    /// Port index through which `child` hangs below `parent`.
    pub fn port(&self, parent: &str, child: &str) -> Result<usize> {
        let p = self.idx(parent)?;
        let c = self.idx(child)?;
        self.children[p]
            .iter()
            .position(|&x| x == c)
            .ok_or_else(|| Error::Invalid(format!("`{child}` is not a child of `{parent}`")))
    }
}

fn element_violations(n: &Node, push: &mut impl FnMut(&str, Rule, String)) {
    let id = n.id.as_str();
    match &n.kind {
        ElementKind::Splitter {
            ports,
            excess_loss_db,
            return_loss_db,
        } => {
            if !SPLITTER_PORTS.contains(ports) {
                push(id, Rule::SplitterPorts, format!("1:{ports}"));
            }
            if let Some(x) = excess_loss_db {
                if !(*x >= 0.0) {
                    push(id, Rule::NegativeExcessLoss, format!("{x} dB"));
                }
            }
            check_return_loss(id, *return_loss_db, push);
        }
        ElementKind::Coupler { ratio, return_loss_db } => {
            if let Some((a, b)) = ratio {
                if !((a + b - 1.0).abs() <= 1e-9 && *a > 0.0 && *b > 0.0) {
                    push(id, Rule::CouplerRatio, format!("{a} + {b}"));
                }
            }
            check_return_loss(id, *return_loss_db, push);
        }
        ElementKind::Connector {
            insertion_loss_db,
            return_loss_db,
        } => {
            if let Some(x) = insertion_loss_db {
                if !(*x >= 0.0) {
                    push(id, Rule::NegativeInsertionLoss, format!("{x} dB"));
                }
            }
            check_return_loss(id, *return_loss_db, push);
        }
        ElementKind::FiberSpan { length_km, .. } => {
            if !(*length_km > 0.0) {
                push(id, Rule::NonPositiveLength, format!("{length_km} km"));
            }
        }
        ElementKind::Ont { wavelength_nm, .. } => {
            if !(ONT_BAND_NM.0..=ONT_BAND_NM.1).contains(wavelength_nm) {
                push(id, Rule::OntWavelength, format!("{wavelength_nm} nm"));
            }
        }
        ElementKind::OltHead | ElementKind::QkdTx | ElementKind::QkdRx { .. } => {}
    }
}

fn check_return_loss(id: &str, rl: Option<f64>, push: &mut impl FnMut(&str, Rule, String)) {
    if let Some(rl) = rl {
        if !(rl > 0.0) {
            push(id, Rule::NonPositiveReturnLoss, format!("{rl} dB"));
        }
    }
}

/// Checks the channel plan against the topology it runs on.
pub fn validate_plan(t: &Topology, plan: &ChannelPlan) -> Vec<Violation> {
    let mut out = Vec::new();
    let quanta = plan.channels.iter().filter(|c| c.role == ChannelRole::Quantum).count();
    if quanta != 1 {
        out.push(Violation {
            node: "channels".into(),
            rule: Rule::QuantumChannelCount,
            detail: format!("found {quanta}"),
        });
    }
    let mut sources: Vec<&str> = Vec::new();
    for (i, c) in plan.channels.iter().enumerate() {
        let label = format!("channels[{i}]");
        if c.role != ChannelRole::Quantum && c.launch_power_dbm.is_none() && c.direction == Direction::Downstream {
            out.push(Violation {
                node: label.clone(),
                rule: Rule::MissingLaunchPower,
                detail: format!("{} nm", c.wavelength_nm),
            });
        }
        if c.direction == Direction::Upstream {
            match c.source.as_deref() {
                None => out.push(Violation {
                    node: label.clone(),
                    rule: Rule::UpstreamSource,
                    detail: "upstream channel without a source ONT".into(),
                }),
                Some(src) => {
                    if !t.terminals.onts.iter().any(|o| o == src) {
                        out.push(Violation {
                            node: label.clone(),
                            rule: Rule::UpstreamSource,
                            detail: format!("`{src}` is not an ONT terminal"),
                        });
                    }
                    if sources.contains(&src) {
                        out.push(Violation {
                            node: label.clone(),
                            rule: Rule::UpstreamSource,
                            detail: format!("`{src}` sources two upstream channels"),
                        });
                    }
                    sources.push(src);
                }
            }
        }
    }
    out
}

/// Parses a scenario document and returns its validated topology and channel plan.
pub fn parse_topology(text: &str) -> Result<(Topology, ChannelPlan)> {
    let doc = crate::document::ScenarioDocument::parse(text)?;
    Ok((doc.topology, doc.channels))
}
