use sha2::{Digest, Sha256};

use super::{extract_tag, ChatProvider, CompletionRequest, Part, ProviderError};

/// Rule-based stand-in for a chat model. It recognises the prompt
/// templates shipped with this crate and answers in their format:
/// the planner loads the first reference and then finishes, editors echo
/// the workspace, baselines copy a demonstration and the judge decides by
/// hashing its input. Used for dry runs and for producing replay fixtures.
#[derive(Debug, Default, Clone)]
pub struct OfflineLlm;

fn section<'a>(text: &'a str, header: &str) -> Option<&'a str> {
    let marker = format!("## {header}\n");
    let start = text.find(&marker)? + marker.len();
    let rest = &text[start..];
    Some(rest.find("\n## ").map_or(rest, |end| &rest[..end]))
}

fn first_example(reference: &str) -> Option<&str> {
    reference
        .lines()
        .find_map(|l| l.strip_prefix("- Example: "))
        .map(str::trim)
}

fn annotated(section: &str, lead: &str) -> String {
    let code = extract_tag(section, "code").unwrap_or_default();
    let function = extract_tag(section, "function").unwrap_or_default();
    let principle = extract_tag(section, "principle").unwrap_or_default();
    format!("{lead}<code>\n{code}\n</code>\n\n<function>\n{function}\n</function>\n\n<principle>\n{principle}\n</principle>")
}

impl OfflineLlm {
    fn answer(&self, request: &CompletionRequest, text: &str) -> String {
        if text.contains("<judgment>") {
            return self.judge(request, text);
        }
        if let Some(task) = section(text, "Task").filter(|_| text.contains("## Analysis")) {
            let instruction = task.rsplit("following task:").next().unwrap_or(task).trim();
            return format!("<analysis>\nThe workflow has to satisfy this instruction: {instruction}\n</analysis>");
        }
        if text.contains("## Action") {
            return self.plan(text);
        }
        if text.contains("## Refinement") {
            let workspace = section(text, "Workspace").unwrap_or("");
            return annotated(
                workspace,
                "<explanation>\nThe error cannot be located without more context.\n</explanation>\n\n",
            );
        }
        if text.contains("## Combination") || text.contains("## Adaptation") {
            return annotated(section(text, "Workspace").unwrap_or(""), "");
        }
        if text.contains("## Answer") {
            return self.baseline(request, text);
        }
        "I am not sure how to answer this request.".to_string()
    }

    fn plan(&self, text: &str) -> String {
        let workspace = section(text, "Workspace").unwrap_or("");
        let reference = section(text, "Reference").unwrap_or("");
        if workspace.contains("The workspace is empty.") {
            if let Some(name) = first_example(reference) {
                return format!(
                    "<thought>\nThe workspace is empty, so the closest reference is loaded first.\n</thought>\n\n\
                     <plan>\nStep 1: Load \"{name}\".\nStep 2: Finish the task.\n</plan>\n\n\
                     <action>\nload(name=\"{name}\")\n</action>"
                );
            }
        }
        "<thought>\nThe workspace holds a complete workflow.\n</thought>\n\n\
         <plan>\nStep 1: Finish the task.\n</plan>\n\n<action>\nfinish()\n</action>"
            .to_string()
    }

    fn baseline(&self, request: &CompletionRequest, text: &str) -> String {
        let examples = section(text, "Examples").unwrap_or("");
        let codes: Vec<String> = examples
            .split("- Example: ")
            .skip(1)
            .filter_map(|block| extract_tag(block, "code").ok())
            .collect();
        if codes.is_empty() {
            return "The task needs a workflow, but no node names are known to write it.".to_string();
        }
        let pick = request.seed.map_or(0, |s| (s % codes.len() as u64) as usize);
        let thought = if text.contains("<thought>") {
            "<thought>\nThe closest example already covers the task.\n</thought>\n\n"
        } else {
            ""
        };
        format!("{thought}<code>\n{}\n</code>", codes[pick])
    }

    fn judge(&self, request: &CompletionRequest, text: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        for m in &request.messages {
            for p in &m.parts {
                if let Part::Image { data, .. } = p {
                    hasher.update(data);
                }
            }
        }
        let verdict = hasher.finalize()[0] < 160;
        let analysis = if verdict {
            "The result appears consistent with the key points of the instruction."
        } else {
            "The result misses at least one key point of the instruction."
        };
        format!(
            "<analysis>{analysis}</analysis>\n\n<judgment>{}</judgment>",
            if verdict { "True" } else { "False" }
        )
    }
}

impl ChatProvider for OfflineLlm {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        request.check()?;
        Ok(self.answer(request, &request.last_user_text()))
    }
}
