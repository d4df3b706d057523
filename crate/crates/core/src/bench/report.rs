use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::strategy::{RunRow, Strategy};
use super::tasks::Category;
use super::BenchError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub tasks: u64,
    pub passed: u64,
    pub resolved: u64,
}

/// `100 * count / total` rounded half-up to one decimal, computed on
/// integers so that e.g. 65/200 prints as 32.5.
pub fn percent(count: u64, total: u64) -> Option<String> {
    if total == 0 {
        return None;
    }
    let tenths = (2000 * count + total) / (2 * total);
    Some(format!("{}.{}", tenths / 10, tenths % 10))
}

impl Cell {
    fn add(&mut self, row: &RunRow) {
        self.tasks += 1;
        self.passed += u64::from(row.passed);
        self.resolved += u64::from(row.resolved);
    }

    pub fn pass_rate(&self) -> Option<String> {
        percent(self.passed, self.tasks)
    }

    pub fn resolve_rate(&self) -> Option<String> {
        percent(self.resolved, self.tasks)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// `<model> + <strategy>`.
    pub label: String,
    pub model: String,
    pub strategy: Strategy,
    pub vanilla: Cell,
    pub complex: Cell,
    pub creative: Cell,
    pub total: Cell,
}

impl ReportRow {
    pub fn cell(&self, category: Category) -> &Cell {
        match category {
            Category::Vanilla => &self.vanilla,
            Category::Complex => &self.complex,
            Category::Creative => &self.creative,
        }
    }

    fn cells(&self) -> [&Cell; 4] {
        [&self.vanilla, &self.complex, &self.creative, &self.total]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    /// Set when no rows were given.
    pub empty: bool,
    pub rows: Vec<ReportRow>,
    pub tasks: Vec<RunRow>,
}

/// Fold run rows into per-(model, strategy) cells. Rows are put in a fixed
/// order first and a repeated (strategy, model, task) keeps one row, so the
/// result does not depend on input order.
pub fn aggregate(rows: &[RunRow]) -> Result<BenchReport, BenchError> {
    let mut sorted: Vec<(String, &RunRow)> = rows
        .iter()
        .map(|r| (serde_json::to_string(r).expect("rows serialize"), r))
        .collect();
    sorted.sort_by(|(ja, a), (jb, b)| {
        (a.strategy, &a.model, &a.task_id, ja).cmp(&(b.strategy, &b.model, &b.task_id, jb))
    });
    sorted.dedup_by(|(_, a), (_, b)| (a.strategy, &a.model, &a.task_id) == (b.strategy, &b.model, &b.task_id));
    let tasks: Vec<RunRow> = sorted.into_iter().map(|(_, r)| r.clone()).collect();

    let backend = tasks.first().map(|r| r.backend.clone());
    if let Some(other) = tasks.iter().find(|r| Some(&r.backend) != backend.as_ref()) {
        return Err(BenchError::MixedBackends {
            expected: backend.unwrap_or_default(),
            found: other.backend.clone(),
        });
    }

    let mut groups: BTreeMap<(Strategy, String), ReportRow> = BTreeMap::new();
    for r in &tasks {
        let row = groups.entry((r.strategy, r.model.clone())).or_insert_with(|| ReportRow {
            label: format!("{} + {}", r.model, r.strategy.label()),
            model: r.model.clone(),
            strategy: r.strategy,
            vanilla: Cell::default(),
            complex: Cell::default(),
            creative: Cell::default(),
            total: Cell::default(),
        });
        match r.category {
            Category::Vanilla => row.vanilla.add(r),
            Category::Complex => row.complex.add(r),
            Category::Creative => row.creative.add(r),
        }
        row.total.add(r);
    }
    Ok(BenchReport {
        backend,
        empty: tasks.is_empty(),
        rows: groups.into_values().collect(),
        tasks,
    })
}

const GROUPS: [&str; 4] = ["Vanilla", "Complex", "Creative", "Total"];

impl BenchReport {
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        if let Some(backend) = &self.backend {
            let _ = writeln!(out, "Backend: {backend}\n");
        }
        if self.empty {
            out.push_str("No rows: the run logs are empty.\n");
            return out;
        }
        out.push_str("| Agent |");
        for g in GROUPS {
            let _ = write!(out, " {g} %Pass | {g} %Resolve |");
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(2 * GROUPS.len()));
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "| {} |", row.label);
            for cell in row.cells() {
                let dash = || "-".to_string();
                let _ = write!(
                    out,
                    " {} | {} |",
                    cell.pass_rate().unwrap_or_else(dash),
                    cell.resolve_rate().unwrap_or_else(dash)
                );
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["agent".to_string(), "model".into(), "strategy".into()];
        for g in GROUPS {
            let g = g.to_lowercase();
            for col in ["tasks", "passed", "resolved", "pass_rate", "resolve_rate"] {
                header.push(format!("{g}_{col}"));
            }
        }
        w.write_record(&header).expect("csv to memory");
        for row in &self.rows {
            let mut record = vec![row.label.clone(), row.model.clone(), row.strategy.to_string()];
            for cell in row.cells() {
                record.push(cell.tasks.to_string());
                record.push(cell.passed.to_string());
                record.push(cell.resolved.to_string());
                record.push(cell.pass_rate().unwrap_or_default());
                record.push(cell.resolve_rate().unwrap_or_default());
            }
            w.write_record(&record).expect("csv to memory");
        }
        String::from_utf8(w.into_inner().expect("csv flush")).expect("csv is utf-8")
    }

    /// Hash of the rendered tables and the per-task rows.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_markdown());
        h.update(self.to_csv());
        for r in &self.tasks {
            h.update(serde_json::to_string(r).expect("rows serialize"));
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}
