use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TagError {
    #[error("no <{0}> tag in the response")]
    Missing(String),
    #[error("<{0}> tag is never closed")]
    Unterminated(String),
    #[error("judgment {0:?} is neither True nor False")]
    Unrecognized(String),
}

/// Content of the first `<tag>...</tag>` pair, trimmed.
pub fn extract_tag(text: &str, tag: &str) -> Result<String, TagError> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = text.find(&open).ok_or_else(|| TagError::Missing(tag.to_string()))? + open.len();
    let len = text[start..]
        .find(&close)
        .ok_or_else(|| TagError::Unterminated(tag.to_string()))?;
    Ok(text[start..start + len].trim().to_string())
}

pub fn parse_judgment(text: &str) -> Result<bool, TagError> {
    let value = extract_tag(text, "judgment")?;
    match value.to_ascii_lowercase().as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(TagError::Unrecognized(value)),
    }
}

/// Drop a surrounding markdown fence (```lang ... ```) if present.
pub fn strip_code_fence(text: &str) -> &str {
    let trimmed = text.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    let Some(body) = rest.strip_suffix("```") else {
        return trimmed;
    };
    match body.find('\n') {
        Some(nl) => body[nl + 1..].trim_end(),
        None => body.trim(),
    }
}
