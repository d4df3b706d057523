use std::collections::{BTreeSet, VecDeque};
use std::io::Cursor;
use std::time::{Duration, Instant};

use image::{ImageFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::graph::{serialize_prompt_json, validate, InputValue, Literal, NodeId, WorkflowGraph};
use crate::schema::NodeSchemaRegistry;

/// One output file produced by a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub node: u32,
    pub filename: String,
    pub media_type: String,
    pub width: u32,
    pub height: u32,
    pub frame_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_rate: Option<f64>,
    /// Decoded frames as PNG bytes; one for a still image. Not logged.
    #[serde(skip)]
    pub frames: Vec<Vec<u8>>,
}

impl Artifact {
    pub fn is_video(&self) -> bool {
        self.media_type.starts_with("video/") || self.frame_count > 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub passed: bool,
    pub outputs: Vec<Artifact>,
    pub message: String,
}

impl ExecutionOutcome {
    pub fn failed(message: impl Into<String>) -> Self {
        ExecutionOutcome {
            passed: false,
            outputs: Vec::new(),
            message: message.into(),
        }
    }
}

pub trait Backend: Send + Sync {
    /// Short label kept in run logs; simulated and live rows never mix.
    fn name(&self) -> &'static str;
    fn execute(&self, graph: &WorkflowGraph) -> ExecutionOutcome;
}

/// Offline stand-in for the workflow server: a graph passes exactly when it
/// validates, and every sink node yields a placeholder artifact whose
/// metadata follows the graph's size, frame and rate parameters.
pub struct SimulatedBackend<'a> {
    registry: &'a NodeSchemaRegistry,
    /// Longest side of rendered placeholder frames.
    pub thumbnail: u32,
}

impl<'a> SimulatedBackend<'a> {
    pub fn new(registry: &'a NodeSchemaRegistry) -> Self {
        SimulatedBackend { registry, thumbnail: 64 }
    }
}

fn int_input(graph: &WorkflowGraph, id: NodeId, name: &str) -> Option<i64> {
    match graph.get(id)?.inputs.get(name)? {
        InputValue::Literal(Literal::Int(i)) => Some(*i),
        InputValue::Literal(Literal::Float(f)) if f.fract() == 0.0 => Some(*f as i64),
        _ => None,
    }
}

fn number_input(graph: &WorkflowGraph, id: NodeId, name: &str) -> Option<f64> {
    match graph.get(id)?.inputs.get(name)? {
        InputValue::Literal(Literal::Int(i)) => Some(*i as f64),
        InputValue::Literal(Literal::Float(f)) => Some(*f),
        _ => None,
    }
}

/// Upstream nodes of `start` (itself first), nearest first.
fn upstream(graph: &WorkflowGraph, start: NodeId) -> Vec<NodeId> {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    let mut order = Vec::new();
    while let Some(id) = queue.pop_front() {
        order.push(id);
        if let Some(node) = graph.get(id) {
            for (_, link) in node.links() {
                if seen.insert(link.source) {
                    queue.push_back(link.source);
                }
            }
        }
    }
    order
}

fn placeholder_png(seed: &[u8], index: u32, width: u32, height: u32) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(seed);
    h.update(index.to_le_bytes());
    let c = h.finalize();
    let img = RgbImage::from_pixel(width.max(1), height.max(1), Rgb([c[0], c[1], c[2]]));
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("png encoding to memory");
    out.into_inner()
}

const VIDEO_SINKS: [&str; 2] = ["VHS_VideoCombine", "SaveAnimatedWEBP"];

impl SimulatedBackend<'_> {
    fn artifact(&self, graph: &WorkflowGraph, sink: NodeId) -> Artifact {
        let class = graph.get(sink).map(|n| n.class_name.as_str()).unwrap_or_default();
        let above = upstream(graph, sink);
        let (width, height) = above
            .iter()
            .find_map(|&id| Some((int_input(graph, id, "width")?, int_input(graph, id, "height")?)))
            .map_or((512, 512), |(w, h)| (w.clamp(1, 16384) as u32, h.clamp(1, 16384) as u32));
        let base_frames = above
            .iter()
            .find_map(|&id| {
                let node = graph.get(id)?;
                match node.class_name.as_str() {
                    "VHS_LoadVideo" => Some(int_input(graph, id, "frame_load_cap").filter(|c| *c > 0).unwrap_or(16)),
                    _ => int_input(graph, id, "video_frames").or_else(|| int_input(graph, id, "batch_size")),
                }
            })
            .unwrap_or(1)
            .clamp(1, 4096);
        let multiplier: i64 = above
            .iter()
            .filter_map(|&id| int_input(graph, id, "multiplier"))
            .map(|m| m.clamp(1, 16))
            .product();
        let frame_count = (base_frames * multiplier).clamp(1, 4096) as u32;
        let frame_rate = number_input(graph, sink, "frame_rate").or_else(|| number_input(graph, sink, "fps"));
        let video = VIDEO_SINKS.contains(&class) || frame_count > 1;
        let (media_type, ext) = if video { ("video/mp4", "mp4") } else { ("image/png", "png") };

        let scale = self.thumbnail as f64 / width.max(height) as f64;
        let (tw, th) = if scale < 1.0 {
            (((width as f64 * scale).round() as u32).max(1), ((height as f64 * scale).round() as u32).max(1))
        } else {
            (width, height)
        };
        let seed = format!("{sink}:{class}");
        let frames = (0..frame_count)
            .map(|i| placeholder_png(seed.as_bytes(), i, tw, th))
            .collect();
        Artifact {
            node: sink.get(),
            filename: format!("simulated_{sink}_00001.{ext}"),
            media_type: media_type.into(),
            width,
            height,
            frame_count,
            frame_rate: if video { frame_rate.or(Some(8.0)) } else { None },
            frames,
        }
    }
}

impl Backend for SimulatedBackend<'_> {
    fn name(&self) -> &'static str {
        "simulated"
    }

    fn execute(&self, graph: &WorkflowGraph) -> ExecutionOutcome {
        let report = validate(graph, self.registry);
        if report.error_count() > 0 {
            return ExecutionOutcome::failed(report.to_string());
        }
        let consumed: BTreeSet<NodeId> = graph.consumers().keys().map(|(source, _)| *source).collect();
        let outputs: Vec<Artifact> = graph
            .nodes
            .keys()
            .filter(|id| !consumed.contains(id))
            .map(|&id| self.artifact(graph, id))
            .collect();
        ExecutionOutcome {
            passed: true,
            message: format!("simulated run finished with {} output(s)", outputs.len()),
            outputs,
        }
    }
}

/// Workflow server reached over HTTP: queue the prompt, poll its history,
/// then fetch every listed output file.
pub struct LiveBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    pub poll_interval: Duration,
    pub poll_budget: Duration,
}

impl LiveBackend {
    pub fn new(base_url: impl Into<String>, poll_budget: Duration) -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(LiveBackend {
            client,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            poll_interval: Duration::from_secs(1),
            poll_budget,
        })
    }

    fn submit(&self, graph: &WorkflowGraph) -> Result<String, String> {
        let prompt: Value = serde_json::from_slice(&serialize_prompt_json(graph)).map_err(|e| e.to_string())?;
        let body = json!({"prompt": prompt, "client_id": uuid::Uuid::new_v4().to_string()});
        let response = self
            .client
            .post(format!("{}/prompt", self.base_url))
            .json(&body)
            .send()
            .map_err(|e| format!("transport failure: {}", e.without_url()))?;
        let status = response.status();
        let text = response.text().map_err(|e| format!("transport failure: {}", e.without_url()))?;
        if !status.is_success() {
            return Err(format!("server rejected the workflow (HTTP {}): {text}", status.as_u16()));
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| format!("bad /prompt response: {e}"))?;
        value["prompt_id"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| "bad /prompt response: no prompt_id".to_string())
    }

    fn wait(&self, prompt_id: &str) -> Result<Value, String> {
        let start = Instant::now();
        loop {
            let response = self
                .client
                .get(format!("{}/history/{prompt_id}", self.base_url))
                .send()
                .map_err(|e| format!("transport failure: {}", e.without_url()))?;
            let value: Value = response.json().map_err(|e| format!("bad /history response: {}", e.without_url()))?;
            let entry = &value[prompt_id];
            if !entry.is_null() {
                let status = &entry["status"];
                if status["status_str"] == "error" {
                    return Err(format!("execution failed: {}", status["messages"]));
                }
                if status["completed"] == true || status.is_null() {
                    return Ok(entry["outputs"].clone());
                }
            }
            if start.elapsed() >= self.poll_budget {
                return Err(format!("timed out after {:?} waiting for {prompt_id}", self.poll_budget));
            }
            std::thread::sleep(self.poll_interval);
        }
    }

    fn fetch(&self, item: &Value) -> Result<Vec<u8>, String> {
        let query = [
            ("filename", item["filename"].as_str().unwrap_or_default()),
            ("subfolder", item["subfolder"].as_str().unwrap_or_default()),
            ("type", item["type"].as_str().unwrap_or("output")),
        ];
        let response = self
            .client
            .get(format!("{}/view", self.base_url))
            .query(&query)
            .send()
            .map_err(|e| format!("transport failure: {}", e.without_url()))?;
        if !response.status().is_success() {
            return Err(format!("cannot fetch {}: HTTP {}", query[0].1, response.status().as_u16()));
        }
        response
            .bytes()
            .map(|b| b.to_vec())
            .map_err(|e| format!("transport failure: {}", e.without_url()))
    }

    fn collect(&self, graph: &WorkflowGraph, outputs: &Value) -> Result<Vec<Artifact>, String> {
        let mut artifacts = Vec::new();
        let Some(map) = outputs.as_object() else {
            return Ok(artifacts);
        };
        for (node, out) in map {
            let node_id: u32 = node.parse().unwrap_or(0);
            for key in ["images", "gifs", "videos"] {
                for item in out[key].as_array().into_iter().flatten() {
                    let filename = item["filename"].as_str().unwrap_or_default().to_string();
                    let bytes = self.fetch(item)?;
                    let media_type = super::tasks::media_type_of(&filename)
                        .unwrap_or("application/octet-stream")
                        .to_string();
                    let frames = decode_frames(&bytes, &media_type).unwrap_or_default();
                    let (width, height) = frames
                        .first()
                        .and_then(|f| image::load_from_memory(f).ok())
                        .map_or((0, 0), |img| (img.width(), img.height()));
                    let frame_rate = NodeId::new(node_id)
                        .and_then(|id| number_input(graph, id, "frame_rate").or_else(|| number_input(graph, id, "fps")));
                    artifacts.push(Artifact {
                        node: node_id,
                        filename,
                        frame_count: frames.len().max(1) as u32,
                        frame_rate: if frames.len() > 1 || media_type.starts_with("video/") { frame_rate } else { None },
                        media_type,
                        width,
                        height,
                        frames,
                    });
                }
            }
        }
        Ok(artifacts)
    }
}

/// Split an image or GIF into PNG frames. Other containers are not decoded.
pub fn decode_frames(bytes: &[u8], media_type: &str) -> Option<Vec<Vec<u8>>> {
    use image::AnimationDecoder;
    let to_png = |img: image::DynamicImage| {
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png).ok()?;
        Some(out.into_inner())
    };
    match media_type {
        "image/gif" => {
            let decoder = image::codecs::gif::GifDecoder::new(Cursor::new(bytes)).ok()?;
            decoder
                .into_frames()
                .map(|f| f.ok().and_then(|f| to_png(image::DynamicImage::ImageRgba8(f.into_buffer()))))
                .collect()
        }
        "image/png" => Some(vec![bytes.to_vec()]),
        m if m.starts_with("image/") => to_png(image::load_from_memory(bytes).ok()?).map(|p| vec![p]),
        _ => None,
    }
}

impl Backend for LiveBackend {
    fn name(&self) -> &'static str {
        "live"
    }

    fn execute(&self, graph: &WorkflowGraph) -> ExecutionOutcome {
        let result = self
            .submit(graph)
            .and_then(|id| self.wait(&id))
            .and_then(|outputs| self.collect(graph, &outputs));
        match result {
            Ok(outputs) => ExecutionOutcome {
                passed: true,
                message: format!("server run finished with {} output(s)", outputs.len()),
                outputs,
            },
            Err(message) => ExecutionOutcome::failed(message),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeInstance;

    #[test]
    fn unreachable_server_fails_with_transport_message() {
        let backend = LiveBackend::new("http://127.0.0.1:9", Duration::from_secs(1)).unwrap();
        let mut g = WorkflowGraph::new();
        g.insert(NodeId::new(1).unwrap(), NodeInstance::new("X"));
        let out = backend.execute(&g);
        assert!(!out.passed);
        assert!(out.outputs.is_empty());
        assert!(out.message.contains("transport"), "{}", out.message);
    }

    #[test]
    fn placeholder_is_png() {
        let png = placeholder_png(b"s", 0, 8, 4);
        let img = image::load_from_memory(&png).unwrap();
        assert_eq!((img.width(), img.height()), (8, 4));
    }
}
