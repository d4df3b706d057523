//! Element-list rendering: one paragraph per node, then one sentence per
//! link.
//!
//! ```text
//! Node 4 uses CheckpointLoaderSimple.
//! - Parameter ckpt_name is "v1-5.safetensors".
//!
//! Node 3 uses KSampler.
//! - Parameter seed is 5.
//!
//! Link from node 4 output 0 (MODEL) to node 3 input model.
//! ```
//!
//! Text values are JSON-quoted so every sentence stays on one line.

use super::lexer::format_literal;
use super::{parse_literal, CodecError};
use crate::graph::{topo_order, validate, InputValue, LinkRef, Literal, NodeId, NodeInstance, WorkflowGraph};
use crate::schema::NodeSchemaRegistry;

fn element_literal(lit: &Literal) -> String {
    match lit {
        Literal::Text(s) => serde_json::to_string(s).expect("strings serialize"),
        other => format_literal(other),
    }
}

pub fn emit_element_list(graph: &WorkflowGraph, registry: &NodeSchemaRegistry) -> Result<String, CodecError> {
    let report = validate(graph, registry);
    if !report.is_valid() {
        return Err(CodecError::InvalidGraph(report));
    }
    let order = topo_order(graph).expect("validated graphs are acyclic");
    let mut paragraphs = Vec::new();
    let mut links = Vec::new();
    for id in &order {
        let node = &graph.nodes[id];
        let schema = registry.get(&node.class_name).expect("validated class");
        let mut para = format!("Node {id} uses {}.", node.class_name);
        for spec in &schema.inputs {
            match node.inputs.get(&spec.name) {
                Some(InputValue::Literal(lit)) => {
                    para.push_str(&format!("\n- Parameter {} is {}.", spec.name, element_literal(lit)));
                }
                Some(InputValue::Link(link)) => {
                    let source = registry
                        .get(&graph.nodes[&link.source].class_name)
                        .expect("validated class");
                    let ty = &source.outputs[link.output_index as usize].type_name;
                    links.push(format!(
                        "Link from node {} output {} ({ty}) to node {id} input {}.",
                        link.source, link.output_index, spec.name
                    ));
                }
                None => {}
            }
        }
        paragraphs.push(para);
    }
    if !links.is_empty() {
        paragraphs.push(links.join("\n"));
    }
    Ok(paragraphs.join("\n\n"))
}

fn bad(line: usize, message: impl Into<String>) -> CodecError {
    CodecError::ElementList {
        line,
        message: message.into(),
    }
}

fn parse_id(text: &str, line: usize) -> Result<NodeId, CodecError> {
    text.parse::<u32>()
        .ok()
        .filter(|_| !text.starts_with('+'))
        .and_then(NodeId::new)
        .ok_or_else(|| bad(line, format!("{text:?} is not a node id")))
}

/// Strict reader for [`emit_element_list`] output, used to check that the
/// rendering is lossless.
pub fn read_element_list(text: &str) -> Result<WorkflowGraph, CodecError> {
    let mut graph = WorkflowGraph::new();
    let mut current: Option<NodeId> = None;
    let mut pending_links: Vec<(usize, NodeId, String, LinkRef)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.is_empty() {
            current = None;
            continue;
        }
        let Some(body) = raw.strip_suffix('.') else {
            return Err(bad(line, "sentence must end with a period"));
        };
        if let Some(rest) = body.strip_prefix("Node ") {
            let (id, class) = rest
                .split_once(" uses ")
                .ok_or_else(|| bad(line, "expected `Node <id> uses <class>.`"))?;
            let id = parse_id(id, line)?;
            if class.is_empty() || class.contains(' ') {
                return Err(bad(line, "bad class name"));
            }
            if graph.insert(id, NodeInstance::new(class)).is_some() {
                return Err(bad(line, format!("node {id} described twice")));
            }
            current = Some(id);
        } else if let Some(rest) = body.strip_prefix("- Parameter ") {
            let id = current.ok_or_else(|| bad(line, "parameter outside a node paragraph"))?;
            let (name, value) = rest
                .split_once(" is ")
                .ok_or_else(|| bad(line, "expected `- Parameter <name> is <value>.`"))?;
            let lit = if value.starts_with('"') {
                Literal::Text(serde_json::from_str(value).map_err(|e| bad(line, e.to_string()))?)
            } else {
                parse_literal(value).map_err(|e| bad(line, e))?
            };
            let node = graph.nodes.get_mut(&id).expect("current node exists");
            if node.inputs.insert(name.to_string(), lit.into()).is_some() {
                return Err(bad(line, format!("parameter {name:?} given twice")));
            }
        } else if let Some(rest) = body.strip_prefix("Link from node ") {
            let words: Vec<&str> = rest.split(' ').collect();
            let [src, "output", slot, ty, "to", "node", dst, "input", name] = words.as_slice() else {
                return Err(bad(
                    line,
                    "expected `Link from node <a> output <i> (<TYPE>) to node <b> input <name>.`",
                ));
            };
            if !(ty.starts_with('(') && ty.ends_with(')')) {
                return Err(bad(line, "link type must be parenthesised"));
            }
            let link = LinkRef {
                source: parse_id(src, line)?,
                output_index: slot
                    .parse()
                    .map_err(|_| bad(line, format!("{slot:?} is not an output index")))?,
            };
            pending_links.push((line, parse_id(dst, line)?, name.to_string(), link));
        } else {
            return Err(bad(line, format!("unrecognised sentence {raw:?}")));
        }
    }
    for (line, target, name, link) in pending_links {
        let node = graph
            .nodes
            .get_mut(&target)
            .ok_or_else(|| bad(line, format!("link into unknown node {target}")))?;
        if node.inputs.insert(name.clone(), link.into()).is_some() {
            return Err(bad(line, format!("input {name:?} of node {target} set twice")));
        }
    }
    Ok(graph)
}
