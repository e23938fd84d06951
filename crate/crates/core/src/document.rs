//! The scenario document: one JSON file describing the plant, its channel
//! plan, physical parameters, GPON behaviour, protocol settings and the run
//! configuration.

use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::gpon::{DbaMode, PlsuPolicy};
use crate::noise::Mechanisms;
use crate::physics::Physics;
use crate::qkd::DecoyParams;
use crate::topology::{validate_plan, ChannelPlan, Node, NodeId, Terminals, Topology};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GponConfig {
    pub plsu: PlsuPolicy,
    pub dba: DbaMode,
}

/// Switches for isolating individual mechanisms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Toggles {
    pub plsu: bool,
    pub raman: bool,
    pub reflections: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Toggles {
            plsu: true,
            raman: true,
            reflections: true,
        }
    }
}

impl Toggles {
    pub fn mechanisms(&self) -> Mechanisms {
        Mechanisms {
            raman: self.raman,
            reflections: self.reflections,
        }
    }
}

/// What to run: which ONTs are lit, for how long, and with which seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub active_onts: Vec<NodeId>,
    pub duration_s: f64,
    pub block_s: f64,
    pub seed: u64,
    pub toggles: Toggles,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            active_onts: Vec::new(),
            duration_s: 3600.0,
            block_s: 60.0,
            seed: 1,
            toggles: Toggles::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self, t: &Topology) -> Result<()> {
        if !(self.block_s > 0.0 && self.block_s.is_finite()) {
            return Err(Error::Scenario(format!("block_s = {} must be > 0", self.block_s)));
        }
        if !(self.block_s <= self.duration_s && self.duration_s.is_finite()) {
            return Err(Error::Scenario(format!(
                "block_s = {} exceeds duration_s = {}",
                self.block_s, self.duration_s
            )));
        }
        for (i, id) in self.active_onts.iter().enumerate() {
            if !t.terminals().onts.contains(id) {
                return Err(Error::Scenario(format!("active ONT `{id}` is not an ONT terminal")));
            }
            if self.active_onts[..i].contains(id) {
                return Err(Error::Scenario(format!("active ONT `{id}` listed twice")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDocument {
    pub topology: Topology,
    pub channels: ChannelPlan,
    pub physics: Physics,
    pub gpon: GponConfig,
    pub qkd: DecoyParams,
    pub scenario: ScenarioConfig,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    #[serde(with = "node_map")]
    nodes: Vec<Node>,
    edges: Vec<(NodeId, NodeId)>,
    terminals: Terminals,
    #[serde(default)]
    channels: ChannelPlan,
    #[serde(default)]
    physics: Physics,
    #[serde(default)]
    gpon: GponConfig,
    #[serde(default)]
    qkd: DecoyParams,
    #[serde(default)]
    scenario: ScenarioConfig,
}

impl ScenarioDocument {
    /// Parses and fully validates a document.
    pub fn parse(text: &str) -> Result<Self> {
        let doc = Self::parse_unchecked(text)?;
        doc.check()?;
        Ok(doc)
    }

    /// Parses a document against the schema without checking the plant's
    /// structural invariants, so that they can be reported individually.
    pub fn parse_unchecked(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: Raw = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Syntax {
                locus: if path.is_empty() || path == "." {
                    format!("line {}, column {}", inner.line(), inner.column())
                } else {
                    format!("line {}, column {}, at `{path}`", inner.line(), inner.column())
                },
                message: strip_position(&inner.to_string()),
            }
        })?;
        Ok(Self::from_raw(raw))
    }

    /// Parses `text`, applies dotted-path `key=value` overrides, then parses
    /// the result strictly (so misspelt override keys are rejected).
    pub fn parse_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        if overrides.is_empty() {
            return Self::parse(text);
        }
        let mut value: Value = serde_json::from_str(text).map_err(|e| Error::Syntax {
            locus: format!("line {}, column {}", e.line(), e.column()),
            message: strip_position(&e.to_string()),
        })?;
        for (key, raw) in overrides {
            apply_override(&mut value, key, raw)?;
        }
        let text = serde_json::to_string_pretty(&value).expect("JSON values always serialize");
        Self::parse(&text).map_err(|e| match e {
            Error::Syntax { message, .. } => Error::Syntax {
                locus: "override".into(),
                message,
            },
            other => other,
        })
    }

    fn from_raw(raw: Raw) -> Self {
        let mut qkd = raw.qkd;
        qkd.rate_scale = raw.physics.rate_scale;
        ScenarioDocument {
            topology: Topology::new(raw.nodes, raw.edges, raw.terminals),
            channels: raw.channels,
            physics: raw.physics,
            gpon: raw.gpon,
            qkd,
            scenario: raw.scenario,
        }
    }

    /// Every semantic check: plant structure, channel plan, parameter domains.
    pub fn check(&self) -> Result<()> {
        let mut violations = self.topology.validate();
        violations.extend(validate_plan(&self.topology, &self.channels));
        if !violations.is_empty() {
            let listing: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return Err(Error::Invalid(listing.join("; ")));
        }
        self.physics.validate()?;
        self.gpon.plsu.validate()?;
        let mut qkd = self.qkd;
        qkd.rate_scale = self.physics.rate_scale;
        qkd.validate()?;
        self.scenario.validate(&self.topology)
    }

    /// Protocol parameters with the fitted rate scale applied.
    pub fn decoy(&self) -> DecoyParams {
        DecoyParams {
            rate_scale: self.physics.rate_scale,
            ..self.qkd
        }
    }

    pub fn to_json(&self) -> String {
        let raw = Raw {
            nodes: self.topology.nodes().to_vec(),
            edges: self.topology.edges().to_vec(),
            terminals: self.topology.terminals().clone(),
            channels: self.channels.clone(),
            physics: self.physics.clone(),
            gpon: self.gpon.clone(),
            qkd: self.qkd,
            scenario: self.scenario.clone(),
        };
        let mut s = serde_json::to_string_pretty(&raw).expect("documents always serialize");
        s.push('\n');
        s
    }
}

/// serde_json appends " at line L column C"; the locus already carries it.
fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

/// Sets `path` (dot-separated; numeric segments index arrays) to `raw`,
/// which is read as JSON when it parses and as a plain string otherwise.
pub fn apply_override(root: &mut Value, path: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let bad = |why: &str| Error::Scenario(format!("override `{path}`: {why}"));
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(bad("empty path segment"));
    }
    let mut cur = root;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(seg.to_string(), value);
                    return Ok(());
                }
                map.entry(seg.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = seg.parse().map_err(|_| bad("expected an array index"))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| bad(&format!("index {idx} out of range (length {len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(bad(&format!("`{seg}` is not inside an object or array"))),
        };
    }
    unreachable!("the loop returns on the last segment")
}

/// `nodes` is a JSON object whose key order is the document order.
mod node_map {
    use super::*;
    use crate::topology::ElementKind;

    pub fn serialize<S: Serializer>(nodes: &[Node], s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(nodes.len()))?;
        for n in nodes {
            map.serialize_entry(&n.id, &n.kind)?;
        }
        map.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Node>, D::Error> {
        struct Ordered;
        impl<'de> Visitor<'de> for Ordered {
            type Value = Vec<Node>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from node id to element")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> std::result::Result<Vec<Node>, A::Error> {
                let mut nodes = Vec::new();
                while let Some((id, kind)) = access.next_entry::<NodeId, ElementKind>()? {
                    nodes.push(Node { id, kind });
                }
                Ok(nodes)
            }
        }
        d.deserialize_map(Ordered)
    }
}
