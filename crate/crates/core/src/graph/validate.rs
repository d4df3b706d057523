use std::fmt;

use serde::Serialize;

use super::{topo_order, InputValue, NodeId, WorkflowGraph};
use crate::schema::{coerce_literal, CoerceError, NodeSchemaRegistry, WILDCARD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    /// Reserved for tolerated extras; nothing emits it yet.
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueCode {
    UnknownClass,
    MissingInput,
    UnknownInput,
    DanglingLink,
    SlotOutOfRange,
    TypeMismatch,
    LiteralKind,
    Cycle,
}

impl IssueCode {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueCode::UnknownClass => "unknown-class",
            IssueCode::MissingInput => "missing-input",
            IssueCode::UnknownInput => "unknown-input",
            IssueCode::DanglingLink => "dangling-link",
            IssueCode::SlotOutOfRange => "slot-out-of-range",
            IssueCode::TypeMismatch => "type-mismatch",
            IssueCode::LiteralKind => "literal-kind",
            IssueCode::Cycle => "cycle",
        }
    }
}

impl fmt::Display for IssueCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationIssue {
    pub severity: Severity,
    pub node: Option<NodeId>,
    pub input: Option<String>,
    pub code: IssueCode,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}[{}]", self.code)?;
        if let Some(node) = self.node {
            write!(f, " node {node}")?;
        }
        if let Some(input) = &self.input {
            write!(f, " input {input:?}")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn error_count(&self) -> usize {
        self.issues
            .iter()
            .filter(|i| i.severity == Severity::Error)
            .count()
    }

    pub fn has_code(&self, code: IssueCode) -> bool {
        self.issues.iter().any(|i| i.code == code)
    }

    fn error(&mut self, node: NodeId, input: Option<&str>, code: IssueCode, message: String) {
        self.issues.push(ValidationIssue {
            severity: Severity::Error,
            node: Some(node),
            input: input.map(str::to_string),
            code,
            message,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        let n = self.error_count();
        write!(f, "{n} error{}", if n == 1 { "" } else { "s" })
    }
}

fn types_compatible(produced: &str, expected: &str) -> bool {
    produced == WILDCARD || expected == WILDCARD || produced == expected
}

/// Check a graph against the registry. Every problem found becomes an
/// issue; nothing short-circuits.
pub fn validate(graph: &WorkflowGraph, registry: &NodeSchemaRegistry) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (id, node) in &graph.nodes {
        let Some(schema) = registry.get(&node.class_name) else {
            report.error(
                *id,
                None,
                IssueCode::UnknownClass,
                format!("unknown node class {:?}", node.class_name),
            );
            // links can still be checked for existence
            for (name, link) in node.links() {
                if graph.get(link.source).is_none() {
                    report.error(
                        *id,
                        Some(name),
                        IssueCode::DanglingLink,
                        format!("links to missing node {}", link.source),
                    );
                }
            }
            continue;
        };

        for spec in &schema.inputs {
            if spec.required && !node.inputs.contains_key(&spec.name) {
                report.error(
                    *id,
                    Some(&spec.name),
                    IssueCode::MissingInput,
                    format!("required input {:?} of {} is not set", spec.name, schema.class_name),
                );
            }
        }

        for (name, value) in &node.inputs {
            let Some(spec) = schema.input(name) else {
                report.error(
                    *id,
                    Some(name),
                    IssueCode::UnknownInput,
                    format!("{} has no input named {name:?}", schema.class_name),
                );
                continue;
            };
            match value {
                InputValue::Literal(lit) => match coerce_literal(spec, lit) {
                    Ok(_) => {}
                    Err(CoerceError::NotAWidget(_)) => report.error(
                        *id,
                        Some(name),
                        IssueCode::LiteralKind,
                        format!(
                            "connection input expects a {} link, got a {} literal",
                            spec.type_name,
                            lit.kind_name()
                        ),
                    ),
                    Err(err) => report.error(*id, Some(name), IssueCode::LiteralKind, err.to_string()),
                },
                InputValue::Link(link) => {
                    let Some(source) = graph.get(link.source) else {
                        report.error(
                            *id,
                            Some(name),
                            IssueCode::DanglingLink,
                            format!("links to missing node {}", link.source),
                        );
                        continue;
                    };
                    // an unknown source class is already reported on that node
                    let Some(source_schema) = registry.get(&source.class_name) else {
                        continue;
                    };
                    let Some(slot) = source_schema.outputs.get(link.output_index as usize) else {
                        report.error(
                            *id,
                            Some(name),
                            IssueCode::SlotOutOfRange,
                            format!(
                                "output index {} out of range: {} has {} output(s)",
                                link.output_index,
                                source_schema.class_name,
                                source_schema.outputs.len()
                            ),
                        );
                        continue;
                    };
                    if !types_compatible(&slot.type_name, &spec.type_name) {
                        report.error(
                            *id,
                            Some(name),
                            IssueCode::TypeMismatch,
                            format!(
                                "expects {}, but node {} output {} is {}",
                                spec.type_name, link.source, link.output_index, slot.type_name
                            ),
                        );
                    }
                }
            }
        }
    }

    if let Err(err) = topo_order(graph) {
        report.error(
            err.node,
            None,
            IssueCode::Cycle,
            format!("node {} lies on a cycle", err.node),
        );
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{LinkRef, Literal, NodeInstance};
    use crate::schema::parse_document;

    fn id(v: u32) -> NodeId {
        NodeId::new(v).unwrap()
    }

    fn registry() -> NodeSchemaRegistry {
        let docs = [
            "--- NAME ---\nLoader\n--- INPUTS ---\nckpt_name : widget : STRING : required\n--- OUTPUTS ---\nMODEL : MODEL\nLATENT : LATENT\n",
            "--- NAME ---\nSampler\n--- INPUTS ---\nmodel : connection : MODEL : required\nsteps : widget : INT : required\ncfg : widget : FLOAT : optional\n--- OUTPUTS ---\nLATENT : LATENT\n",
            "--- NAME ---\nAny\n--- INPUTS ---\nvalue : connection : * : required\n--- OUTPUTS ---\n",
        ];
        NodeSchemaRegistry::from_schemas(docs.iter().map(|d| parse_document(d).unwrap())).unwrap()
    }

    fn good() -> WorkflowGraph {
        let mut g = WorkflowGraph::new();
        g.insert(
            id(1),
            NodeInstance::new("Loader").with_literal("ckpt_name", Literal::Text("a.ckpt".into())),
        );
        g.insert(
            id(2),
            NodeInstance::new("Sampler")
                .with_link("model", id(1), 0)
                .with_literal("steps", Literal::Int(20))
                .with_literal("cfg", Literal::Int(8)),
        );
        g.insert(id(3), NodeInstance::new("Any").with_link("value", id(2), 0));
        g
    }

    fn codes(g: &WorkflowGraph) -> Vec<IssueCode> {
        validate(g, &registry()).issues.iter().map(|i| i.code).collect()
    }

    #[test]
    fn good_graph_is_clean() {
        let report = validate(&good(), &registry());
        assert!(report.is_valid(), "{report}");
        assert_eq!(report.to_string(), "0 errors");
    }

    #[test]
    fn unknown_class() {
        let mut g = good();
        g.nodes.get_mut(&id(3)).unwrap().class_name = "NoSuchNode".into();
        assert_eq!(codes(&g), vec![IssueCode::UnknownClass]);
    }

    #[test]
    fn type_mismatch_on_latent_into_model() {
        let mut g = good();
        g.nodes
            .get_mut(&id(2))
            .unwrap()
            .inputs
            .insert("model".into(), LinkRef { source: id(1), output_index: 1 }.into());
        assert_eq!(codes(&g), vec![IssueCode::TypeMismatch]);
    }

    #[test]
    fn each_issue_kind() {
        let mut g = good();
        g.nodes.get_mut(&id(2)).unwrap().inputs.shift_remove("steps");
        assert_eq!(codes(&g), vec![IssueCode::MissingInput]);

        let mut g = good();
        g.nodes
            .get_mut(&id(2))
            .unwrap()
            .inputs
            .insert("bogus".into(), Literal::Int(1).into());
        assert_eq!(codes(&g), vec![IssueCode::UnknownInput]);

        let mut g = good();
        g.nodes
            .get_mut(&id(3))
            .unwrap()
            .inputs
            .insert("value".into(), LinkRef { source: id(9), output_index: 0 }.into());
        assert_eq!(codes(&g), vec![IssueCode::DanglingLink]);

        let mut g = good();
        g.nodes
            .get_mut(&id(3))
            .unwrap()
            .inputs
            .insert("value".into(), LinkRef { source: id(2), output_index: 4 }.into());
        assert_eq!(codes(&g), vec![IssueCode::SlotOutOfRange]);

        let mut g = good();
        g.nodes
            .get_mut(&id(2))
            .unwrap()
            .inputs
            .insert("steps".into(), Literal::Text("20".into()).into());
        assert_eq!(codes(&g), vec![IssueCode::LiteralKind]);

        let mut g = good();
        g.nodes
            .get_mut(&id(2))
            .unwrap()
            .inputs
            .insert("model".into(), Literal::Int(0).into());
        assert_eq!(codes(&g), vec![IssueCode::LiteralKind]);
    }

    #[test]
    fn wildcard_accepts_any_type() {
        let mut g = good();
        g.nodes
            .get_mut(&id(3))
            .unwrap()
            .inputs
            .insert("value".into(), LinkRef { source: id(1), output_index: 1 }.into());
        assert!(validate(&g, &registry()).is_valid());
    }

    #[test]
    fn cycle_is_reported() {
        let mut g = good();
        g.nodes
            .get_mut(&id(1))
            .unwrap()
            .inputs
            .insert("ckpt_name".into(), LinkRef { source: id(2), output_index: 0 }.into());
        let c = codes(&g);
        assert!(c.contains(&IssueCode::Cycle), "{c:?}");
    }
}
