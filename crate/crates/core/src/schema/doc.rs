use super::{
    check_unique, coerce_literal, snake_case, InputKind, InputSpec, NodeSchema, OutputSlot,
    WIDGET_TYPES, WILDCARD,
};
use crate::codec::parse_literal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Name,
    Category,
    Description,
    Inputs,
    Outputs,
}

fn section_header(line: &str) -> Option<&str> {
    let inner = line.trim().strip_prefix("---")?.strip_suffix("---")?;
    Some(inner.trim())
}

/// Parse one node document. Errors carry a 1-based line number.
pub fn parse_document(text: &str) -> Result<NodeSchema, (usize, String)> {
    let mut current: Option<Section> = None;
    let mut seen: Vec<Section> = Vec::new();
    let mut name_lines: Vec<(usize, String)> = Vec::new();
    let mut category = String::new();
    let mut description: Vec<&str> = Vec::new();
    let mut inputs: Vec<(usize, InputSpec)> = Vec::new();
    let mut outputs: Vec<(usize, OutputSlot)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if let Some(header) = section_header(raw) {
            let section = match header {
                "NAME" => Section::Name,
                "CATEGORY" => Section::Category,
                "DESCRIPTION" => Section::Description,
                "INPUTS" => Section::Inputs,
                "OUTPUTS" => Section::Outputs,
                other => return Err((line_no, format!("unknown section {other:?}"))),
            };
            if seen.contains(&section) {
                return Err((line_no, format!("section {header} appears twice")));
            }
            seen.push(section);
            current = Some(section);
            continue;
        }
        let trimmed = raw.trim();
        match current {
            None => {
                if !trimmed.is_empty() {
                    return Err((line_no, "text before the first section".into()));
                }
            }
            Some(Section::Name) => {
                if !trimmed.is_empty() {
                    name_lines.push((line_no, trimmed.to_string()));
                }
            }
            Some(Section::Category) => {
                if !trimmed.is_empty() {
                    if !category.is_empty() {
                        return Err((line_no, "category must be a single line".into()));
                    }
                    category = trimmed.to_string();
                }
            }
            Some(Section::Description) => description.push(raw.trim_end()),
            Some(Section::Inputs) => {
                if !trimmed.is_empty() && !trimmed.starts_with('#') {
                    let spec = parse_input_line(trimmed).map_err(|msg| (line_no, msg))?;
                    inputs.push((line_no, spec));
                }
            }
            Some(Section::Outputs) => {
                if !trimmed.is_empty() && !trimmed.starts_with('#') {
                    let slot = parse_output_line(trimmed).map_err(|msg| (line_no, msg))?;
                    outputs.push((line_no, slot));
                }
            }
        }
    }

    let class_name = match name_lines.as_slice() {
        [] => return Err((1, "missing NAME section or class name".into())),
        [(line, name)] => {
            if name.chars().any(char::is_whitespace) {
                return Err((*line, format!("class name {name:?} contains whitespace")));
            }
            name.clone()
        }
        [_, (line, _), ..] => return Err((*line, "NAME must be a single line".into())),
    };
    if !seen.contains(&Section::Inputs) {
        return Err((1, "missing INPUTS section".into()));
    }
    if !seen.contains(&Section::Outputs) {
        return Err((1, "missing OUTPUTS section".into()));
    }
    if let Some(dup) = check_unique(inputs.iter().map(|(_, spec)| spec.name.as_str())) {
        let line = inputs.iter().rev().find(|(_, s)| s.name == dup).unwrap().0;
        return Err((line, format!("input {dup:?} declared twice")));
    }
    if let Some(dup) = check_unique(outputs.iter().map(|(_, slot)| slot.name.as_str())) {
        let line = outputs.iter().rev().find(|(_, s)| s.name == dup).unwrap().0;
        return Err((line, format!("output {dup:?} declared twice")));
    }
    let stems: Vec<String> = outputs.iter().map(|(_, slot)| snake_case(&slot.name)).collect();
    if let Some(dup) = check_unique(stems.iter().map(String::as_str)) {
        return Err((
            outputs.last().map(|(l, _)| *l).unwrap_or(1),
            format!("two output slots map to the variable stem {dup:?}"),
        ));
    }

    while description.last().is_some_and(|l| l.is_empty()) {
        description.pop();
    }
    let first_text = description.iter().position(|l| !l.is_empty()).unwrap_or(description.len());
    Ok(NodeSchema {
        class_name,
        category,
        description: description[first_text..].join("\n"),
        inputs: inputs.into_iter().map(|(_, spec)| spec).collect(),
        outputs: outputs.into_iter().map(|(_, slot)| slot).collect(),
    })
}

/// Split on `:` outside of string literals.
fn split_fields(line: &str) -> Result<Vec<String>, String> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut chars = line.chars().peekable();
    let mut quote: Option<char> = None;
    while let Some(c) = chars.next() {
        match quote {
            Some(q) => {
                current.push(c);
                if c == '\\' {
                    if let Some(next) = chars.next() {
                        current.push(next);
                    }
                } else if c == q {
                    quote = None;
                }
            }
            None => match c {
                ':' => fields.push(std::mem::take(&mut current).trim().to_string()),
                '"' | '\'' => {
                    quote = Some(c);
                    current.push(c);
                }
                _ => current.push(c),
            },
        }
    }
    if quote.is_some() {
        return Err("unterminated string in default".into());
    }
    fields.push(current.trim().to_string());
    Ok(fields)
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    chars
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_resource_type(name: &str) -> bool {
    name == WILDCARD
        || (name.starts_with(|c: char| c.is_ascii_uppercase())
            && name
                .chars()
                .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_'))
}

fn parse_input_line(line: &str) -> Result<InputSpec, String> {
    let fields = split_fields(line)?;
    if fields.len() < 3 {
        return Err(format!("input line needs `name : kind : type`, got {line:?}"));
    }
    let name = fields[0].clone();
    if !is_identifier(&name) {
        return Err(format!("input name {name:?} is not an identifier"));
    }
    let kind = match fields[1].as_str() {
        "connection" => InputKind::Connection,
        "widget" => InputKind::Widget,
        other => return Err(format!("input kind must be connection or widget, got {other:?}")),
    };
    let type_name = fields[2].clone();
    match kind {
        InputKind::Widget if !WIDGET_TYPES.contains(&type_name.as_str()) => {
            return Err(format!(
                "widget {name:?} has non-scalar type {type_name:?} (expected one of {WIDGET_TYPES:?})"
            ))
        }
        InputKind::Connection if !is_resource_type(&type_name) => {
            return Err(format!(
                "connection {name:?} type {type_name:?} must be an upper-case resource name or *"
            ))
        }
        _ => {}
    }
    let mut spec = InputSpec {
        name,
        kind,
        type_name,
        required: false,
        default: None,
    };
    for flag in &fields[3..] {
        if flag == "required" {
            spec.required = true;
        } else if flag == "optional" {
            spec.required = false;
        } else if let Some(text) = flag.strip_prefix("default=") {
            if kind == InputKind::Connection {
                return Err(format!("connection {:?} cannot have a default", spec.name));
            }
            let lit = parse_literal(text.trim()).map_err(|e| format!("bad default: {e}"))?;
            let lit = coerce_literal(&spec, &lit).map_err(|e| format!("bad default: {e}"))?;
            spec.default = Some(lit);
        } else {
            return Err(format!("unknown input flag {flag:?}"));
        }
    }
    Ok(spec)
}

fn parse_output_line(line: &str) -> Result<OutputSlot, String> {
    let fields = split_fields(line)?;
    match fields.as_slice() {
        [name, type_name] if !name.is_empty() && is_resource_type(type_name) => Ok(OutputSlot {
            name: name.clone(),
            type_name: type_name.clone(),
        }),
        _ => Err(format!("output line must be `slot_name : TYPE`, got {line:?}")),
    }
}
