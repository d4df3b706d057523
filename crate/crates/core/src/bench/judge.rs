use std::fs;

use serde::{Deserialize, Serialize};

use crate::llm::{extract_tag, parse_judgment, ChatMessage, CompletionRequest, Gateway};
use crate::prompts;

use super::exec::{decode_frames, Artifact, ExecutionOutcome};
use super::frames::sample;
use super::tasks::{Modality, Task};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeOptions {
    pub model: String,
    /// Judge calls per task; the verdict is the majority. Use an odd number.
    pub votes: u32,
    pub frame_cap: usize,
    pub temperature: f64,
}

impl Default for JudgeOptions {
    fn default() -> Self {
        JudgeOptions {
            model: "gpt-4o".into(),
            votes: 1,
            frame_cap: 10,
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub resolved: bool,
    pub analysis: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub calls: u32,
}

impl JudgeVerdict {
    fn unjudged() -> Self {
        JudgeVerdict {
            resolved: false,
            analysis: String::new(),
            error: None,
            calls: 0,
        }
    }
}

fn task_kind(modality: Modality) -> &'static str {
    match modality {
        Modality::T2I => "text-to-image",
        Modality::I2I => "image-to-image",
        Modality::T2V => "text-to-video",
        Modality::I2V => "image-to-video",
        Modality::V2V => "video-to-video",
    }
}

fn format_rate(rate: f64) -> String {
    if rate.fract() == 0.0 {
        format!("{rate:.0}")
    } else {
        format!("{rate}")
    }
}

/// The artifact to show the judge: the last one whose kind matches the
/// task's output modality, else the last one.
fn pick_output(outputs: &[Artifact], modality: Modality) -> Option<&Artifact> {
    outputs
        .iter()
        .rev()
        .find(|a| a.is_video() == modality.video_output())
        .or(outputs.last())
}

/// Input images shown ahead of the result: still images as they are, the
/// first frame of animated inputs.
fn input_images(task: &Task) -> Vec<(String, Vec<u8>)> {
    task.assets
        .iter()
        .filter(|a| a.media_type.starts_with("image/"))
        .filter_map(|a| {
            let bytes = fs::read(&a.path).ok()?;
            if a.media_type == "image/gif" {
                let first = decode_frames(&bytes, &a.media_type)?.into_iter().next()?;
                Some(("image/png".to_string(), first))
            } else {
                Some((a.media_type.clone(), bytes))
            }
        })
        .collect()
}

fn describe_result(artifact: &Artifact, shown_frames: usize, inputs: usize) -> String {
    let lead = match inputs {
        0 => String::new(),
        1 => "The first image is the given input, and ".into(),
        n => format!("The first {n} images are the given inputs, and "),
    };
    let size = format!("{}x{}", artifact.width, artifact.height);
    let text = if artifact.is_video() {
        let rate = artifact.frame_rate.map_or_else(|| "unknown".into(), format_rate);
        let frames = match (inputs, shown_frames) {
            (0, n) => format!("the given {n} images are frames uniformly sampled from the generation result"),
            (_, n) => format!("the remaining {n} images are frames uniformly sampled from the generation result"),
        };
        format!("{frames}, a video with an actual resolution of {size} and a frame rate of {rate} fps.")
    } else if inputs == 0 {
        format!("the given image is the generation result, with an actual resolution of {size}.")
    } else {
        format!("the last image is the generation result, with an actual resolution of {size}.")
    };
    let mut out = lead + &text;
    if let Some(first) = out.get(0..1) {
        out.replace_range(0..1, &first.to_uppercase());
    }
    out
}

/// Build the judge request for a passed outcome.
pub fn judge_request(task: &Task, artifact: &Artifact, options: &JudgeOptions) -> CompletionRequest {
    let frames = if artifact.is_video() {
        sample(&artifact.frames, options.frame_cap.max(1))
    } else {
        artifact.frames.iter().take(1).cloned().collect()
    };
    let inputs = input_images(task);
    let text = prompts::fill(
        prompts::JUDGE,
        &[
            ("task_kind", task_kind(task.modality)),
            ("instruction", &task.instruction),
            ("result", &describe_result(artifact, frames.len(), inputs.len())),
        ],
    );
    let mut message = ChatMessage::user(text);
    for (media_type, data) in inputs {
        message = message.with_image(media_type, data);
    }
    for frame in frames {
        message = message.with_image("image/png", frame);
    }
    CompletionRequest::new(options.model.clone(), vec![message]).with_temperature(options.temperature)
}

/// Decide whether a passed outcome satisfies the task. Unpassed outcomes
/// are unresolved without a call; provider or format failures count as
/// unresolved with an error note.
pub fn judge_resolve(task: &Task, outcome: &ExecutionOutcome, gateway: &Gateway, options: &JudgeOptions) -> JudgeVerdict {
    if !outcome.passed {
        return JudgeVerdict::unjudged();
    }
    let Some(artifact) = pick_output(&outcome.outputs, task.modality) else {
        let note = "the run passed but produced no output to judge".to_string();
        return JudgeVerdict {
            resolved: false,
            analysis: note.clone(),
            error: Some(note),
            calls: 0,
        };
    };
    let request = judge_request(task, artifact, options);
    let votes = options.votes.max(1);
    let mut answers: Vec<(bool, String)> = Vec::new();
    let mut calls = 0;
    for _ in 0..votes {
        calls += 1;
        let response = match gateway.complete("judge", &request) {
            Ok(r) => r,
            Err(e) => {
                let note = format!("judge call failed: {e}");
                return JudgeVerdict {
                    resolved: false,
                    analysis: note.clone(),
                    error: Some(note),
                    calls,
                };
            }
        };
        let analysis = extract_tag(&response, "analysis").unwrap_or_else(|_| response.trim().to_string());
        match parse_judgment(&response) {
            Ok(j) => answers.push((j, analysis)),
            Err(e) => {
                let note = format!("unreadable judgment: {e}");
                return JudgeVerdict {
                    resolved: false,
                    analysis: if analysis.is_empty() { note.clone() } else { analysis },
                    error: Some(note),
                    calls,
                };
            }
        }
    }
    let yes = answers.iter().filter(|(j, _)| *j).count();
    let resolved = 2 * yes > answers.len();
    let analysis = answers
        .into_iter()
        .find(|(j, _)| *j == resolved)
        .map(|(_, a)| a)
        .unwrap_or_default();
    JudgeVerdict {
        resolved,
        analysis,
        error: None,
        calls,
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::bench::tasks::Category;
    use crate::llm::{RetryPolicy, ScriptedProvider};

    fn task(modality: Modality) -> Task {
        Task {
            id: "t".into(),
            instruction: "Make a thing.".into(),
            category: Category::Vanilla,
            modality,
            assets: vec![],
        }
    }

    fn artifact(frames: u32, rate: Option<f64>) -> Artifact {
        Artifact {
            node: 9,
            filename: "out.png".into(),
            media_type: if frames > 1 { "video/mp4" } else { "image/png" }.into(),
            width: 640,
            height: 480,
            frame_count: frames,
            frame_rate: rate,
            frames: (0..frames).map(|i| vec![i as u8]).collect(),
        }
    }

    fn passed(a: Artifact) -> ExecutionOutcome {
        ExecutionOutcome {
            passed: true,
            outputs: vec![a],
            message: String::new(),
        }
    }

    fn gateway(answers: &[&str]) -> (Gateway, Arc<ScriptedProvider>) {
        let p = Arc::new(ScriptedProvider::new(answers.iter().map(|s| s.to_string())));
        (Gateway::new(p.clone(), RetryPolicy::immediate(1), 1), p)
    }

    #[test]
    fn unpassed_needs_no_call() {
        let (g, p) = gateway(&[]);
        let v = judge_resolve(&task(Modality::T2I), &ExecutionOutcome::failed("x"), &g, &JudgeOptions::default());
        assert!(!v.resolved);
        assert_eq!(v.calls, 0);
        assert!(p.requests().is_empty());
    }

    #[test]
    fn video_frames_are_sampled() {
        let (g, p) = gateway(&["<analysis>ok</analysis><judgment>True</judgment>"]);
        let v = judge_resolve(&task(Modality::T2V), &passed(artifact(30, Some(24.0))), &g, &JudgeOptions::default());
        assert!(v.resolved);
        assert_eq!(v.analysis, "ok");
        let req = &p.requests()[0];
        let images = req.messages[0]
            .parts
            .iter()
            .filter(|p| matches!(p, crate::llm::Part::Image { .. }))
            .count();
        assert_eq!(images, 10);
        let text = req.last_user_text();
        assert!(text.contains("text-to-video generation task"));
        assert!(text.contains("The given 10 images are frames uniformly sampled"));
        assert!(text.contains("640x480 and a frame rate of 24 fps."));
    }

    #[test]
    fn failures_are_conservative() {
        let (g, _) = gateway(&["no verdict here"]);
        let v = judge_resolve(&task(Modality::T2I), &passed(artifact(1, None)), &g, &JudgeOptions::default());
        assert!(!v.resolved);
        assert!(v.error.is_some());
        assert!(!v.analysis.is_empty());
        assert_eq!(v.calls, 1);

        let (g, _) = gateway(&[]);
        let v = judge_resolve(&task(Modality::T2I), &passed(artifact(1, None)), &g, &JudgeOptions::default());
        assert!(!v.resolved && v.error.unwrap().contains("judge call failed"));
    }

    #[test]
    fn majority_vote() {
        let (g, _) = gateway(&[
            "<analysis>a</analysis><judgment>True</judgment>",
            "<analysis>b</analysis><judgment>False</judgment>",
            "<analysis>c</analysis><judgment>True</judgment>",
        ]);
        let options = JudgeOptions {
            votes: 3,
            ..JudgeOptions::default()
        };
        let v = judge_resolve(&task(Modality::T2I), &passed(artifact(1, None)), &g, &options);
        assert!(v.resolved);
        assert_eq!((v.calls, v.analysis.as_str()), (3, "a"));
    }
}
