//! Prompt templates with `{name}` placeholders.

pub const ANALYSIS: &str = include_str!("../data/prompts/analysis.txt");
pub const PLAN: &str = include_str!("../data/prompts/plan.txt");
pub const COMBINE: &str = include_str!("../data/prompts/combine.txt");
pub const ADAPT: &str = include_str!("../data/prompts/adapt.txt");
pub const REFINE: &str = include_str!("../data/prompts/refine.txt");
pub const BASELINE: &str = include_str!("../data/prompts/baseline.txt");
pub const JUDGE: &str = include_str!("../data/prompts/judge.txt");

/// Replace each `{key}` with its value in one left-to-right pass, so
/// braces inside values are never expanded. Unknown placeholders stay.
pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let key = &after[..close];
            values.iter().find(|(k, _)| *k == key).map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out.trim_end().to_string()
}
