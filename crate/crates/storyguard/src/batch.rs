//! Story batch files. Three layouts are accepted:
//!
//! - a JSON array whose items are `{"id": .., "text": ..}` objects or bare strings;
//! - JSON lines, one `{"id": .., "text": ..}` object per line;
//! - plain text, one story per non-blank line (`#` starts a comment line).
//!
//! `id` is optional everywhere; missing ids are assigned on import.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryInput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
}

impl StoryInput {
    pub fn new(id: Option<&str>, text: &str) -> Self {
        Self {
            id: id.map(str::to_string),
            text: text.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BatchError {
    #[error("the batch contains no stories")]
    Empty,
    #[error("malformed batch: {0}")]
    Malformed(String),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Item {
    Text(String),
    Story(StoryInput),
}

impl From<Item> for StoryInput {
    fn from(i: Item) -> Self {
        match i {
            Item::Text(text) => StoryInput { id: None, text },
            Item::Story(s) => s,
        }
    }
}

pub fn parse_batch(src: &str) -> Result<Vec<StoryInput>, BatchError> {
    let trimmed = src.trim_start_matches('\u{feff}').trim();
    if trimmed.is_empty() {
        return Err(BatchError::Empty);
    }
    let stories: Vec<StoryInput> = if trimmed.starts_with('[') {
        let items: Vec<Item> =
            serde_json::from_str(trimmed).map_err(|e| BatchError::Malformed(e.to_string()))?;
        items.into_iter().map(StoryInput::from).collect()
    } else if trimmed.starts_with('{') {
        trimmed
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                serde_json::from_str::<StoryInput>(l)
                    .map_err(|e| BatchError::Malformed(format!("line {}: {e}", n + 1)))
            })
            .collect::<Result<_, _>>()?
    } else {
        trimmed
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| StoryInput::new(None, l))
            .collect()
    };
    if stories.is_empty() {
        return Err(BatchError::Empty);
    }
    for (n, s) in stories.iter().enumerate() {
        if s.text.trim().is_empty() {
            return Err(BatchError::Malformed(format!("story {} has empty text", n + 1)));
        }
        if s.id.as_deref().is_some_and(|id| id.trim().is_empty()) {
            return Err(BatchError::Malformed(format!("story {} has an empty id", n + 1)));
        }
    }
    Ok(stories)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_layouts_agree() {
        let a = r#"[{"id":"a","text":"As a user, I want x so that y."},"As a user, I want z so that w."]"#;
        let b = "{\"id\":\"a\",\"text\":\"As a user, I want x so that y.\"}\n\n{\"text\":\"As a user, I want z so that w.\"}\n";
        let c = "# stories\nAs a user, I want x so that y.\n\nAs a user, I want z so that w.\n";
        let pa = parse_batch(a).unwrap();
        let pb = parse_batch(b).unwrap();
        let pc = parse_batch(c).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(pa.len(), 2);
        assert_eq!(pc.iter().map(|s| &s.text).collect::<Vec<_>>(), pa.iter().map(|s| &s.text).collect::<Vec<_>>());
    }

    #[test]
    fn empty_inputs() {
        for src in ["", "  \n", "[]", "# only a comment\n"] {
            assert_eq!(parse_batch(src), Err(BatchError::Empty), "{src:?}");
        }
    }

    #[test]
    fn malformed_inputs() {
        for src in ["[{\"id\":1}]", "{\"text\":\"ok\"}\nnot json", "[\"\"]", "[{\"id\":\" \",\"text\":\"t\"}]", "[1,"] {
            assert!(matches!(parse_batch(src), Err(BatchError::Malformed(_))), "{src:?}");
        }
    }
}
