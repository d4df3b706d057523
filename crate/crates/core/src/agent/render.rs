use super::{ReferenceEntry, StepOutcome, StepRecord, Workspace};

fn block(tag: &str, body: &str) -> String {
    format!("<{tag}>\n{body}\n</{tag}>")
}

fn annotation(function: &str, principle: &str) -> String {
    format!("{}\n\n{}", block("function", function), block("principle", principle))
}

/// Reference list for the planner: names with annotations, no code.
pub fn render_reference(reference: &[ReferenceEntry]) -> String {
    if reference.is_empty() {
        return "- The reference is empty.".into();
    }
    reference
        .iter()
        .map(|r| format!("- Example: {}\n\n{}", r.name, annotation(&r.function, &r.principle)))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// One reference with its code, as the combiner sees it.
pub fn render_reference_entry(entry: &ReferenceEntry) -> String {
    format!("{}\n\n{}", block("code", &entry.code), annotation(&entry.function, &entry.principle))
}

pub fn render_workspace(workspace: &Workspace) -> String {
    if workspace.is_empty() {
        return "- The workspace is empty.".into();
    }
    format!(
        "{}\n\n{}",
        block("code", &workspace.code),
        annotation(&workspace.function, &workspace.principle)
    )
}

/// Step records oldest first, limited to the last `cap` when given.
pub fn render_history(history: &[StepRecord], cap: Option<usize>) -> String {
    let skip = cap.map_or(0, |c| history.len().saturating_sub(c));
    let shown = &history[skip..];
    if shown.is_empty() {
        return "- The history is empty.".into();
    }
    shown
        .iter()
        .map(|s| {
            let mut text = format!(
                "- Step: {}\n\n{}\n\n{}\n\n{}",
                s.index,
                block("thought", &s.thought),
                block("plan", &s.plan),
                block("action", &s.action_text)
            );
            match &s.outcome {
                StepOutcome::Applied => {}
                StepOutcome::Rejected { reason } => {
                    text.push_str(&format!("\n\n{}", block("result", &format!("The action was rejected: {reason}"))))
                }
                StepOutcome::Failed { reason } => {
                    text.push_str(&format!("\n\n{}", block("result", &format!("The action failed: {reason}"))))
                }
            }
            text
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}
