//! Workflow DAG data model.
//!
//! A [`WorkflowGraph`] maps node ids to [`NodeInstance`]s. Every input of a
//! node is either a scalar [`Literal`] (a widget value) or a [`LinkRef`]
//! pointing at an output slot of another node.

mod json;
mod topo;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub use json::{parse_prompt_json, parse_prompt_json_lenient, serialize_prompt_json, JsonError};
pub use topo::{topo_order, CycleError};
pub use validate::{validate, IssueCode, Severity, ValidationIssue, ValidationReport};

/// Positive node identifier, unique within one workflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(u32);

impl NodeId {
    pub fn new(value: u32) -> Option<Self> {
        (value >= 1).then_some(NodeId(value))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Reference to output slot `output_index` of node `source`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LinkRef {
    pub source: NodeId,
    pub output_index: u32,
}

/// Widget value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Literal {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl Literal {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Literal::Int(_) => "INT",
            Literal::Float(_) => "FLOAT",
            Literal::Bool(_) => "BOOLEAN",
            Literal::Text(_) => "STRING",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputValue {
    Literal(Literal),
    Link(LinkRef),
}

impl InputValue {
    pub fn as_link(&self) -> Option<&LinkRef> {
        match self {
            InputValue::Link(link) => Some(link),
            InputValue::Literal(_) => None,
        }
    }

    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            InputValue::Literal(lit) => Some(lit),
            InputValue::Link(_) => None,
        }
    }
}

impl From<Literal> for InputValue {
    fn from(lit: Literal) -> Self {
        InputValue::Literal(lit)
    }
}

impl From<LinkRef> for InputValue {
    fn from(link: LinkRef) -> Self {
        InputValue::Link(link)
    }
}

/// One node of a workflow. Input order is preserved; equality ignores it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeInstance {
    pub class_name: String,
    pub inputs: IndexMap<String, InputValue>,
}

impl NodeInstance {
    pub fn new(class_name: impl Into<String>) -> Self {
        NodeInstance {
            class_name: class_name.into(),
            inputs: IndexMap::new(),
        }
    }

    pub fn with_literal(mut self, name: impl Into<String>, lit: Literal) -> Self {
        self.inputs.insert(name.into(), InputValue::Literal(lit));
        self
    }

    pub fn with_link(mut self, name: impl Into<String>, source: NodeId, output_index: u32) -> Self {
        self.inputs.insert(
            name.into(),
            InputValue::Link(LinkRef {
                source,
                output_index,
            }),
        );
        self
    }

    pub fn links(&self) -> impl Iterator<Item = (&str, &LinkRef)> {
        self.inputs
            .iter()
            .filter_map(|(name, value)| value.as_link().map(|link| (name.as_str(), link)))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkflowGraph {
    pub nodes: BTreeMap<NodeId, NodeInstance>,
}

impl WorkflowGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: NodeId, node: NodeInstance) -> Option<NodeInstance> {
        self.nodes.insert(id, node)
    }

    pub fn get(&self, id: NodeId) -> Option<&NodeInstance> {
        self.nodes.get(&id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn link_count(&self) -> usize {
        self.nodes.values().map(|node| node.links().count()).sum()
    }

    pub fn max_id(&self) -> Option<NodeId> {
        self.nodes.keys().next_back().copied()
    }

    /// Consumers of each output slot: `(source, slot) -> [(target, input)]`.
    pub fn consumers(&self) -> BTreeMap<(NodeId, u32), Vec<(NodeId, String)>> {
        let mut map: BTreeMap<(NodeId, u32), Vec<(NodeId, String)>> = BTreeMap::new();
        for (id, node) in &self.nodes {
            for (name, link) in node.links() {
                map.entry((link.source, link.output_index))
                    .or_default()
                    .push((*id, name.to_string()));
            }
        }
        map
    }
}

/// Structural equality: same id set, and per node the same class, literal
/// map and link map. Input order is not significant.
pub fn graph_equal(a: &WorkflowGraph, b: &WorkflowGraph) -> bool {
    a.nodes.len() == b.nodes.len()
        && a.nodes.iter().zip(b.nodes.iter()).all(|((ia, na), (ib, nb))| {
            ia == ib
                && na.class_name == nb.class_name
                && na.inputs.len() == nb.inputs.len()
                && na
                    .inputs
                    .iter()
                    .all(|(name, value)| nb.inputs.get(name).is_some_and(|other| other == value))
        })
}
