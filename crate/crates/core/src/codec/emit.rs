use std::collections::HashMap;

use super::lexer::format_literal;
use super::{is_class_ident, Arg, CodeScript, CodecError, DISCARD};
use crate::graph::{topo_order, validate, InputValue, LinkRef, NodeId, NodeInstance, WorkflowGraph};
use crate::schema::NodeSchemaRegistry;

/// Render a valid graph as code, one statement per node in topological
/// order. Keyword order follows the schema declaration. No trailing newline.
pub fn emit_code(graph: &WorkflowGraph, registry: &NodeSchemaRegistry) -> Result<String, CodecError> {
    let report = validate(graph, registry);
    if !report.is_valid() {
        return Err(CodecError::InvalidGraph(report));
    }
    let order = topo_order(graph).expect("validated graphs are acyclic");
    let var_name = |link: &LinkRef| -> String {
        let source = &graph.nodes[&link.source];
        let schema = registry.get(&source.class_name).expect("validated class");
        let stem = schema.output_stems().swap_remove(link.output_index as usize);
        format!("{stem}_{}", link.source)
    };

    let mut lines = Vec::with_capacity(order.len());
    for id in order {
        let node = &graph.nodes[&id];
        let schema = registry.get(&node.class_name).expect("validated class");
        if !is_class_ident(&schema.class_name) {
            return Err(CodecError::UnrepresentableClass(schema.class_name.clone()));
        }
        let targets = if schema.outputs.is_empty() {
            DISCARD.to_string()
        } else {
            schema
                .output_stems()
                .iter()
                .map(|stem| format!("{stem}_{id}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let args: Vec<String> = schema
            .inputs
            .iter()
            .filter_map(|spec| {
                let value = node.inputs.get(&spec.name)?;
                let text = match value {
                    InputValue::Literal(lit) => format_literal(lit),
                    InputValue::Link(link) => var_name(link),
                };
                Some(format!("{}={text}", spec.name))
            })
            .collect();
        lines.push(format!("{targets} = {}({})", schema.class_name, args.join(", ")));
    }
    Ok(lines.join("\n"))
}

/// Turn parsed statements into a graph. Each variable argument becomes a
/// link to the slot the variable was bound to. Types are not checked here.
pub fn lower(script: &CodeScript, registry: &NodeSchemaRegistry) -> Result<WorkflowGraph, CodecError> {
    let mut bindings: HashMap<&str, (NodeId, u32)> = HashMap::new();
    let mut graph = WorkflowGraph::new();
    for stmt in &script.statements {
        let schema = registry
            .get(&stmt.class_name)
            .ok_or_else(|| CodecError::UnknownClass {
                line: stmt.line,
                class: stmt.class_name.clone(),
            })?;
        let discard_all = stmt.targets.len() == 1 && stmt.targets[0] == DISCARD;
        if !discard_all && stmt.targets.len() != schema.outputs.len() {
            return Err(CodecError::TargetCount {
                line: stmt.line,
                class: schema.class_name.clone(),
                expected: schema.outputs.len(),
                found: stmt.targets.len(),
            });
        }

        let mut node = NodeInstance::new(stmt.class_name.clone());
        for (name, arg) in &stmt.args {
            let value = match arg {
                Arg::Literal(lit) => InputValue::Literal(lit.clone()),
                Arg::Var(var) => {
                    let (source, output_index) = *bindings.get(var.as_str()).ok_or_else(|| {
                        CodecError::UnboundVariable {
                            line: stmt.line,
                            name: var.clone(),
                        }
                    })?;
                    InputValue::Link(LinkRef {
                        source,
                        output_index,
                    })
                }
            };
            node.inputs.insert(name.clone(), value);
        }
        if graph.insert(stmt.node_id, node).is_some() {
            return Err(CodecError::Syntax {
                line: stmt.line,
                col: 1,
                message: format!("node id {} is used by two statements", stmt.node_id),
            });
        }
        if !discard_all {
            for (slot, target) in stmt.targets.iter().enumerate() {
                if target != DISCARD {
                    bindings.insert(target, (stmt.node_id, slot as u32));
                }
            }
        }
    }
    Ok(graph)
}
