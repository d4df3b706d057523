use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Vanilla,
    Complex,
    Creative,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Vanilla, Category::Complex, Category::Creative];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Vanilla => "vanilla",
            Category::Complex => "complex",
            Category::Creative => "creative",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Modality {
    T2I,
    I2I,
    T2V,
    I2V,
    V2V,
}

impl Modality {
    pub const ALL: [Modality; 5] = [Modality::T2I, Modality::I2I, Modality::T2V, Modality::I2V, Modality::V2V];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::T2I => "T2I",
            Modality::I2I => "I2I",
            Modality::T2V => "T2V",
            Modality::I2V => "I2V",
            Modality::V2V => "V2V",
        }
    }

    pub fn video_output(self) -> bool {
        matches!(self, Modality::T2V | Modality::I2V | Modality::V2V)
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Modality::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown modality {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Asset {
    pub filename: String,
    pub media_type: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub instruction: String,
    pub category: Category,
    pub modality: Modality,
    pub assets: Vec<Asset>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestRow {
    id: String,
    instruction: String,
    category: String,
    modality: String,
    #[serde(default)]
    assets: Vec<String>,
}

const MEDIA_TYPES: [(&str, &str); 7] = [
    ("png", "image/png"),
    ("jpg", "image/jpeg"),
    ("jpeg", "image/jpeg"),
    ("webp", "image/webp"),
    ("gif", "image/gif"),
    ("mp4", "video/mp4"),
    ("webm", "video/webm"),
];

pub fn media_type_of(filename: &str) -> Option<&'static str> {
    let ext = filename.rsplit_once('.')?.1.to_ascii_lowercase();
    MEDIA_TYPES.iter().find(|(e, _)| *e == ext).map(|(_, m)| *m)
}

/// Media file names mentioned in an instruction, e.g. `street_car.png`.
fn mentioned_files(instruction: &str) -> BTreeSet<String> {
    instruction
        .split(|c: char| c.is_whitespace() || "\"'`“”‘’,;:()".contains(c))
        .map(|w| w.trim_end_matches(['.', '!', '?']))
        .filter(|w| w.contains('.') && media_type_of(w).is_some())
        .map(str::to_string)
        .collect()
}

/// Read a JSON-lines task manifest. Asset files live in an `assets`
/// directory next to the manifest.
pub fn load_tasks(path: &Path) -> Result<Vec<Task>, BenchError> {
    let text = fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let asset_dir = path.parent().unwrap_or(Path::new(".")).join("assets");
    let mut tasks = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| BenchError::Manifest { line: line_no, message };
        let row: ManifestRow = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let category = row.category.parse().map_err(bad)?;
        let modality = row.modality.parse().map_err(bad)?;
        if !ids.insert(row.id.clone()) {
            return Err(bad(format!("task id {:?} appears twice", row.id)));
        }
        let mut assets = Vec::new();
        for filename in &row.assets {
            let media_type = media_type_of(filename)
                .ok_or_else(|| bad(format!("asset {filename:?} has an unknown media type")))?;
            let asset_path = asset_dir.join(filename);
            if !asset_path.is_file() {
                return Err(BenchError::MissingAsset {
                    task: row.id.clone(),
                    filename: filename.clone(),
                });
            }
            assets.push(Asset {
                filename: filename.clone(),
                media_type: media_type.to_string(),
                path: asset_path,
            });
        }
        for name in mentioned_files(&row.instruction) {
            if !row.assets.contains(&name) {
                return Err(BenchError::MissingAsset {
                    task: row.id.clone(),
                    filename: name,
                });
            }
        }
        tasks.push(Task {
            id: row.id,
            instruction: row.instruction,
            category,
            modality,
            assets,
        });
    }
    Ok(tasks)
}
