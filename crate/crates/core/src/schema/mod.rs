//! Node documentation registry.
//!
//! One document per node class. A document is plain text split into
//! sections by `--- NAME ---` style fence lines:
//!
//! ```text
//! --- NAME ---
//! KSampler
//! --- CATEGORY ---
//! sampling
//! --- DESCRIPTION ---
//! Denoises a latent image.
//! --- INPUTS ---
//! seed : widget : INT : required : default=0
//! model : connection : MODEL : required
//! --- OUTPUTS ---
//! LATENT : LATENT
//! ```
//!
//! Input lines are `name : kind : type [: required|optional] [: default=<literal>]`
//! where `<literal>` uses the code-representation literal syntax. Output
//! lines are `slot_name : type`. Blank lines and `#` comments are skipped in
//! the INPUTS and OUTPUTS sections.

mod doc;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::Literal;

pub use doc::parse_document;

pub const WILDCARD: &str = "*";
pub const DOC_EXTENSION: &str = "node";
pub const WIDGET_TYPES: [&str; 4] = ["INT", "FLOAT", "BOOLEAN", "STRING"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    Connection,
    Widget,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputSpec {
    pub name: String,
    pub kind: InputKind,
    #[serde(rename = "type")]
    pub type_name: String,
    pub required: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub default: Option<Literal>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSlot {
    pub name: String,
    #[serde(rename = "type")]
    pub type_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeSchema {
    pub class_name: String,
    pub category: String,
    pub description: String,
    pub inputs: Vec<InputSpec>,
    pub outputs: Vec<OutputSlot>,
}

impl NodeSchema {
    pub fn input(&self, name: &str) -> Option<&InputSpec> {
        self.inputs.iter().find(|spec| spec.name == name)
    }

    pub fn input_position(&self, name: &str) -> Option<usize> {
        self.inputs.iter().position(|spec| spec.name == name)
    }

    /// Variable stems used by the code representation, one per output slot.
    pub fn output_stems(&self) -> Vec<String> {
        self.outputs.iter().map(|slot| snake_case(&slot.name)).collect()
    }
}

/// Lower-snake-case a slot name into a `[a-z][a-z0-9_]*` identifier stem.
pub fn snake_case(name: &str) -> String {
    let chars: Vec<char> = name.chars().collect();
    let mut out = String::new();
    for (i, c) in chars.iter().enumerate() {
        if c.is_ascii_alphanumeric() {
            let boundary = c.is_ascii_uppercase()
                && i > 0
                && (chars[i - 1].is_ascii_lowercase()
                    || (chars[i - 1].is_ascii_uppercase()
                        && chars.get(i + 1).is_some_and(|n| n.is_ascii_lowercase())));
            if boundary && !out.ends_with('_') && !out.is_empty() {
                out.push('_');
            }
            out.push(c.to_ascii_lowercase());
        } else if !out.is_empty() && !out.ends_with('_') {
            out.push('_');
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    if out.is_empty() {
        out.push_str("out");
    }
    if out.starts_with(|c: char| c.is_ascii_digit()) {
        out.insert_str(0, "out_");
    }
    out
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("class {class:?} documented twice ({first} and {second})")]
    DuplicateClass {
        class: String,
        first: String,
        second: String,
    },
    #[error("class {0:?} not found")]
    ClassNotFound(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum CoerceError {
    #[error("input {input:?} expects {expected}, got {found}")]
    KindMismatch {
        input: String,
        expected: String,
        found: &'static str,
    },
    #[error("input {0:?} is a connection, not a widget")]
    NotAWidget(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Default)]
pub struct NodeSchemaRegistry {
    schemas: BTreeMap<String, NodeSchema>,
    manifest: Vec<ManifestEntry>,
}

impl NodeSchemaRegistry {
    /// Build a registry from in-memory schemas (no source manifest).
    pub fn from_schemas(schemas: impl IntoIterator<Item = NodeSchema>) -> Result<Self, RegistryError> {
        let mut reg = NodeSchemaRegistry::default();
        for schema in schemas {
            reg.add(schema, "<memory>".into())?;
        }
        Ok(reg)
    }

    fn add(&mut self, schema: NodeSchema, origin: String) -> Result<(), RegistryError> {
        if self.schemas.contains_key(&schema.class_name) {
            return Err(RegistryError::DuplicateClass {
                class: schema.class_name,
                first: "an earlier entry".into(),
                second: origin,
            });
        }
        self.schemas.insert(schema.class_name.clone(), schema);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.schemas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schemas.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &NodeSchema> {
        self.schemas.values()
    }

    pub fn get(&self, class_name: &str) -> Option<&NodeSchema> {
        self.schemas.get(class_name)
    }

    /// Case-sensitive lookup.
    pub fn lookup(&self, class_name: &str) -> Result<&NodeSchema, RegistryError> {
        self.get(class_name)
            .ok_or_else(|| RegistryError::ClassNotFound(class_name.to_string()))
    }

    pub fn manifest(&self) -> &[ManifestEntry] {
        &self.manifest
    }

    /// Digest over the source manifest; changes whenever any document does.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for entry in &self.manifest {
            hasher.update(entry.file.as_bytes());
            hasher.update([0]);
            hasher.update(entry.sha256.as_bytes());
            hasher.update([b'\n']);
        }
        hex::encode(hasher.finalize())
    }

    /// One JSON object per class, one per line, sorted by class name.
    pub fn dump_json_lines(&self) -> String {
        let mut out = String::new();
        for schema in self.schemas.values() {
            out.push_str(&serde_json::to_string(schema).expect("schema serializes"));
            out.push('\n');
        }
        out
    }
}

/// Ingest every `*.node` document directly under `root`, in file-name order.
pub fn ingest_docs(root: &Path) -> Result<NodeSchemaRegistry, RegistryError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RegistryError::Io { path, source }
    };
    let mut files: Vec<PathBuf> = fs::read_dir(root)
        .map_err(io_err(root))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|path| path.is_file() && path.extension().is_some_and(|ext| ext == DOC_EXTENSION))
        .collect();
    files.sort();

    let mut registry = NodeSchemaRegistry::default();
    let mut origin_of: BTreeMap<String, String> = BTreeMap::new();
    for path in files {
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let file = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let text = String::from_utf8(bytes.clone()).map_err(|_| RegistryError::Parse {
            file: file.clone(),
            line: 0,
            message: "document is not UTF-8".into(),
        })?;
        let schema = parse_document(&text).map_err(|(line, message)| RegistryError::Parse {
            file: file.clone(),
            line,
            message,
        })?;
        if let Some(first) = origin_of.get(&schema.class_name) {
            return Err(RegistryError::DuplicateClass {
                class: schema.class_name,
                first: first.clone(),
                second: file,
            });
        }
        origin_of.insert(schema.class_name.clone(), file.clone());
        registry.manifest.push(ManifestEntry {
            file: file.clone(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        registry.add(schema, file)?;
    }
    Ok(registry)
}

/// Check a widget literal against its spec. Integers widen to FLOAT; no
/// other conversion happens.
pub fn coerce_literal(spec: &InputSpec, lit: &Literal) -> Result<Literal, CoerceError> {
    if spec.kind != InputKind::Widget {
        return Err(CoerceError::NotAWidget(spec.name.clone()));
    }
    match (spec.type_name.as_str(), lit) {
        ("INT", Literal::Int(_))
        | ("FLOAT", Literal::Float(_))
        | ("BOOLEAN", Literal::Bool(_))
        | ("STRING", Literal::Text(_)) => Ok(lit.clone()),
        ("FLOAT", Literal::Int(i)) => Ok(Literal::Float(*i as f64)),
        _ => Err(CoerceError::KindMismatch {
            input: spec.name.clone(),
            expected: spec.type_name.clone(),
            found: lit.kind_name(),
        }),
    }
}

pub(crate) fn check_unique<'a>(names: impl Iterator<Item = &'a str>) -> Option<&'a str> {
    let mut seen = HashSet::new();
    names.into_iter().find(|name| !seen.insert(*name))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn widget(type_name: &str) -> InputSpec {
        InputSpec {
            name: "x".into(),
            kind: InputKind::Widget,
            type_name: type_name.into(),
            required: true,
            default: None,
        }
    }

    #[test]
    fn int_widens_to_float() {
        assert_eq!(
            coerce_literal(&widget("FLOAT"), &Literal::Int(1)),
            Ok(Literal::Float(1.0))
        );
    }

    #[test]
    fn no_string_to_number() {
        assert!(matches!(
            coerce_literal(&widget("INT"), &Literal::Text("5".into())),
            Err(CoerceError::KindMismatch { .. })
        ));
    }

    #[test]
    fn string_passes_through() {
        assert_eq!(
            coerce_literal(&widget("STRING"), &Literal::Text("abc".into())),
            Ok(Literal::Text("abc".into()))
        );
    }

    #[test]
    fn float_does_not_narrow() {
        assert!(coerce_literal(&widget("INT"), &Literal::Float(1.0)).is_err());
    }

    #[test]
    fn connection_is_not_coercible() {
        let mut spec = widget("MODEL");
        spec.kind = InputKind::Connection;
        assert!(matches!(
            coerce_literal(&spec, &Literal::Int(1)),
            Err(CoerceError::NotAWidget(_))
        ));
    }

    #[test]
    fn snake_cases_slot_names() {
        assert_eq!(snake_case("MODEL"), "model");
        assert_eq!(snake_case("CLIP_VISION"), "clip_vision");
        assert_eq!(snake_case("Filenames"), "filenames");
        assert_eq!(snake_case("frame_count"), "frame_count");
        assert_eq!(snake_case("VideoInfo"), "video_info");
        assert_eq!(snake_case("UPSCALE MODEL"), "upscale_model");
        assert_eq!(snake_case("3D"), "out_3d");
        assert_eq!(snake_case("*"), "out");
    }
}
