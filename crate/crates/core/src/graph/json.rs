//! Server-side "prompt" JSON codec.
//!
//! Wire shape: `{"<id>": {"class_type": "...", "inputs": {"name": scalar | ["<src>", slot]}}}`.

use std::fmt;
use std::marker::PhantomData;

use serde::de::{Deserializer, MapAccess, Visitor};
use serde::Deserialize;
use serde_json::{Map, Number, Value};
use thiserror::Error;

use super::{topo_order, InputValue, LinkRef, Literal, NodeId, NodeInstance, WorkflowGraph};

#[derive(Debug, Error)]
pub enum JsonError {
    #[error("malformed JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("node key {0:?} is not a positive integer")]
    BadNodeKey(String),
    #[error("duplicate node key {0:?}")]
    DuplicateNode(String),
    #[error("node {node}: duplicate input {input:?}")]
    DuplicateInput { node: NodeId, input: String },
    #[error("node {node} input {input:?}: link array must have 2 elements, found {len}")]
    LinkArity {
        node: NodeId,
        input: String,
        len: usize,
    },
    #[error("node {node} input {input:?}: bad link: {reason}")]
    BadLink {
        node: NodeId,
        input: String,
        reason: String,
    },
    #[error("node {node} input {input:?}: unsupported value {what}")]
    UnsupportedValue {
        node: NodeId,
        input: String,
        what: String,
    },
    #[error("cycle detected through node {0}")]
    Cycle(NodeId),
}

/// Map entries in document order, duplicates kept so they can be reported.
struct Entries<T>(Vec<(String, T)>);

impl<T> Default for Entries<T> {
    fn default() -> Self {
        Entries(Vec::new())
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Entries<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct EntriesVisitor<T>(PhantomData<T>);

        impl<'de, T: Deserialize<'de>> Visitor<'de> for EntriesVisitor<T> {
            type Value = Entries<T>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((key, value)) = access.next_entry::<String, T>()? {
                    out.push((key, value));
                }
                Ok(Entries(out))
            }
        }

        deserializer.deserialize_map(EntriesVisitor(PhantomData))
    }
}

#[derive(Deserialize)]
struct RawNode {
    class_type: String,
    #[serde(default)]
    inputs: Entries<Value>,
}

/// Decode prompt JSON and reject cyclic graphs. Dangling links are kept
/// so [`validate`](super::validate) can report them.
pub fn parse_prompt_json(bytes: &[u8]) -> Result<WorkflowGraph, JsonError> {
    let graph = parse_prompt_json_lenient(bytes)?;
    topo_order(&graph).map_err(|err| JsonError::Cycle(err.node))?;
    Ok(graph)
}

/// Decode prompt JSON without the acyclicity check.
pub fn parse_prompt_json_lenient(bytes: &[u8]) -> Result<WorkflowGraph, JsonError> {
    let raw: Entries<RawNode> = serde_json::from_slice(bytes)?;
    let mut graph = WorkflowGraph::new();
    for (key, node) in raw.0 {
        let id = key
            .parse::<u32>()
            .ok()
            .filter(|_| key.bytes().all(|b| b.is_ascii_digit()))
            .and_then(NodeId::new)
            .ok_or_else(|| JsonError::BadNodeKey(key.clone()))?;
        let mut instance = NodeInstance::new(node.class_type);
        for (name, value) in node.inputs.0 {
            let decoded = decode_input(id, &name, value)?;
            if instance.inputs.contains_key(&name) {
                return Err(JsonError::DuplicateInput { node: id, input: name });
            }
            instance.inputs.insert(name, decoded);
        }
        if graph.insert(id, instance).is_some() {
            return Err(JsonError::DuplicateNode(key));
        }
    }
    Ok(graph)
}

fn decode_input(node: NodeId, input: &str, value: Value) -> Result<InputValue, JsonError> {
    let unsupported = |what: &str| JsonError::UnsupportedValue {
        node,
        input: input.to_string(),
        what: what.to_string(),
    };
    match value {
        Value::Array(items) => {
            if !matches!(items.first(), Some(Value::String(_))) {
                return Err(unsupported("list"));
            }
            if items.len() != 2 {
                return Err(JsonError::LinkArity {
                    node,
                    input: input.to_string(),
                    len: items.len(),
                });
            }
            let bad = |reason: &str| JsonError::BadLink {
                node,
                input: input.to_string(),
                reason: reason.to_string(),
            };
            let source = items[0]
                .as_str()
                .filter(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()))
                .and_then(|s| s.parse::<u32>().ok())
                .and_then(NodeId::new)
                .ok_or_else(|| bad("source id is not a positive integer string"))?;
            let output_index = items[1]
                .as_u64()
                .and_then(|v| u32::try_from(v).ok())
                .ok_or_else(|| bad("output index is not a non-negative integer"))?;
            Ok(InputValue::Link(LinkRef {
                source,
                output_index,
            }))
        }
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(Literal::Int(i).into())
            } else if n.is_u64() {
                Err(unsupported("integer out of 64-bit signed range"))
            } else {
                let f = n.as_f64().ok_or_else(|| unsupported("number"))?;
                Ok(Literal::Float(f).into())
            }
        }
        Value::Bool(b) => Ok(Literal::Bool(b).into()),
        Value::String(s) => Ok(Literal::Text(s).into()),
        Value::Null => Err(unsupported("null")),
        Value::Object(_) => Err(unsupported("object")),
    }
}

fn literal_to_json(lit: &Literal) -> Value {
    match lit {
        Literal::Int(i) => Value::Number((*i).into()),
        Literal::Float(f) => Number::from_f64(*f).map(Value::Number).unwrap_or(Value::Null),
        Literal::Bool(b) => Value::Bool(*b),
        Literal::Text(s) => Value::String(s.clone()),
    }
}

pub(crate) fn graph_to_value(graph: &WorkflowGraph) -> Value {
    let mut root = Map::new();
    for (id, node) in &graph.nodes {
        let mut inputs = Map::new();
        for (name, value) in &node.inputs {
            let encoded = match value {
                InputValue::Literal(lit) => literal_to_json(lit),
                InputValue::Link(link) => Value::Array(vec![
                    Value::String(link.source.to_string()),
                    Value::Number(link.output_index.into()),
                ]),
            };
            inputs.insert(name.clone(), encoded);
        }
        let mut entry = Map::new();
        entry.insert("class_type".into(), Value::String(node.class_name.clone()));
        entry.insert("inputs".into(), Value::Object(inputs));
        root.insert(id.to_string(), Value::Object(entry));
    }
    Value::Object(root)
}

/// Canonical form: node keys in numeric order, inputs in insertion order,
/// two-space pretty printing, no trailing newline.
pub fn serialize_prompt_json(graph: &WorkflowGraph) -> Vec<u8> {
    let value = graph_to_value(graph);
    if graph.is_empty() {
        return b"{}".to_vec();
    }
    serde_json::to_vec_pretty(&value).expect("serializing a JSON value cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::graph_equal;

    fn id(v: u32) -> NodeId {
        NodeId::new(v).unwrap()
    }

    #[test]
    fn decodes_literal_and_link() {
        let g = parse_prompt_json(
            br#"{"3": {"class_type": "KSampler", "inputs": {"seed": 5, "model": ["4", 0]}}}"#,
        )
        .unwrap();
        let node = g.get(id(3)).unwrap();
        assert_eq!(node.class_name, "KSampler");
        assert_eq!(node.inputs["seed"], InputValue::Literal(Literal::Int(5)));
        assert_eq!(
            node.inputs["model"],
            InputValue::Link(LinkRef {
                source: id(4),
                output_index: 0
            })
        );
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn empty_object_is_empty_graph() {
        let g = parse_prompt_json(b"{}").unwrap();
        assert!(g.is_empty());
        assert_eq!(serialize_prompt_json(&g), b"{}");
    }

    #[test]
    fn self_link_is_a_cycle() {
        let err = parse_prompt_json(br#"{"1": {"class_type": "X", "inputs": {"a": ["1", 0]}}}"#)
            .unwrap_err();
        assert!(matches!(err, JsonError::Cycle(n) if n == id(1)));
        // the lenient reader keeps it for the validator
        assert!(parse_prompt_json_lenient(br#"{"1": {"class_type": "X", "inputs": {"a": ["1", 0]}}}"#).is_ok());
    }

    #[test]
    fn rejects_bad_keys_and_shapes() {
        assert!(matches!(
            parse_prompt_json(br#"{"x": {"class_type": "A", "inputs": {}}}"#),
            Err(JsonError::BadNodeKey(_))
        ));
        assert!(matches!(
            parse_prompt_json(br#"{"0": {"class_type": "A", "inputs": {}}}"#),
            Err(JsonError::BadNodeKey(_))
        ));
        assert!(matches!(
            parse_prompt_json(br#"{"1": {"class_type": "A", "inputs": {}}, "1": {"class_type": "B", "inputs": {}}}"#),
            Err(JsonError::DuplicateNode(_))
        ));
        assert!(matches!(
            parse_prompt_json(br#"{"1": {"class_type": "A", "inputs": {"a": ["2", 0, 1]}}}"#),
            Err(JsonError::LinkArity { len: 3, .. })
        ));
        assert!(matches!(
            parse_prompt_json(br#"{"1": {"class_type": "A", "inputs": {"a": null}}}"#),
            Err(JsonError::UnsupportedValue { .. })
        ));
        assert!(matches!(parse_prompt_json(b"{"), Err(JsonError::Syntax(_))));
    }

    #[test]
    fn canonical_output_sorts_keys_numerically() {
        let g = parse_prompt_json(
            br#"{"10": {"class_type": "B", "inputs": {"z": 1, "a": ["9", 0]}}, "9": {"class_type": "A", "inputs": {}}}"#,
        )
        .unwrap();
        let text = String::from_utf8(serialize_prompt_json(&g)).unwrap();
        assert!(text.find("\"9\"").unwrap() < text.find("\"10\"").unwrap());
        assert!(text.find("\"z\"").unwrap() < text.find("\"a\"").unwrap());
        assert!(graph_equal(&parse_prompt_json(text.as_bytes()).unwrap(), &g));
    }

    #[test]
    fn quotes_and_newlines_round_trip() {
        let mut g = WorkflowGraph::new();
        g.insert(
            id(1),
            NodeInstance::new("CLIPTextEncode")
                .with_literal("text", Literal::Text("say \"hi\"\nline two \\ done".into()))
                .with_literal("w", Literal::Float(2.5))
                .with_literal("b", Literal::Bool(false)),
        );
        let bytes = serialize_prompt_json(&g);
        assert!(graph_equal(&parse_prompt_json(&bytes).unwrap(), &g));
        assert_eq!(serialize_prompt_json(&parse_prompt_json(&bytes).unwrap()), bytes);
    }
}
