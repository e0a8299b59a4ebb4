//! Balanced `{...}` extraction from free text.

use serde_json::{Map, Value};

/// Byte spans of top-level balanced brace groups, ignoring braces inside
/// JSON strings.
fn spans(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text.char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' if depth > 0 => in_string = true,
            '{' => {
                if depth == 0 {
                    start = i;
                }
                depth += 1;
            }
            '}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    out.push((start, i + 1));
                }
            }
            _ => {}
        }
    }
    out
}

/// Escape raw control characters that appear inside string literals. Models
/// (and the reason-first prompt's own sample) break long strings over lines.
fn escape_string_controls(candidate: &str) -> String {
    let mut out = String::with_capacity(candidate.len());
    let mut in_string = false;
    let mut escaped = false;
    for c in candidate.chars() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            } else if c.is_control() {
                match c {
                    '\n' => out.push_str("\\n"),
                    '\r' => out.push_str("\\r"),
                    '\t' => out.push_str("\\t"),
                    other => out.push_str(&format!("\\u{:04x}", other as u32)),
                }
                continue;
            }
        } else if c == '"' {
            in_string = true;
        }
        out.push(c);
    }
    out
}

/// Every top-level brace group that parses as a JSON object, in order.
pub(super) fn objects(text: &str) -> Vec<Map<String, Value>> {
    spans(text)
        .into_iter()
        .filter_map(|(a, b)| {
            let candidate = &text[a..b];
            serde_json::from_str::<Value>(candidate)
                .or_else(|_| serde_json::from_str::<Value>(&escape_string_controls(candidate)))
                .ok()
        })
        .filter_map(|v| match v {
            Value::Object(m) => Some(m),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_objects_are_one_span() {
        let text = "Sure! {\"a\": {\"b\": 1}, \"c\": \"}\"} trailing {\"d\": 2}";
        let objs = objects(text);
        assert_eq!(objs.len(), 2);
        assert_eq!(objs[0]["c"], "}");
        assert_eq!(objs[1]["d"], 2);
    }

    #[test]
    fn raw_newlines_in_strings_are_tolerated() {
        let objs = objects("{\"r\": \"line one\n  line two\"}");
        assert_eq!(objs[0]["r"], "line one\n  line two");
    }

    #[test]
    fn unbalanced_or_invalid_groups_are_skipped() {
        assert!(objects("{\"a\": 1").is_empty());
        assert!(objects("{not json}").is_empty());
    }
}
