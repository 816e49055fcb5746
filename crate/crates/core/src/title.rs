//! MediaWiki title normalization.

/// Normalizes a page title or link target the way MediaWiki resolves it:
/// underscores and spaces are equivalent, runs of whitespace collapse, a
/// leading colon and any `#section` anchor are dropped, and the first
/// character is upper-cased.
pub fn normalize_title(raw: &str) -> String {
    let raw = raw.split('#').next().unwrap_or("");
    let raw = raw.trim_start_matches(|c: char| c == ':' || c.is_whitespace());

    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.chars() {
        if c == '_' || c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        if out.is_empty() {
            out.extend(c.to_uppercase());
        } else {
            out.push(c);
        }
    }
    out
}

/// Strips the pipe label from the inside of a `[[...]]` link and returns the
/// target part only.
pub fn link_target(inner: &str) -> &str {
    inner.split('|').next().unwrap_or("").trim()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn underscores_and_case() {
        assert_eq!(normalize_title("harvard_University"), "Harvard University");
        assert_eq!(normalize_title("  Harvard   University "), "Harvard University");
    }

    #[test]
    fn anchors_and_colons() {
        assert_eq!(normalize_title("MIT#History"), "MIT");
        assert_eq!(normalize_title(":en:Foo"), "En:Foo");
        assert_eq!(normalize_title("#only-anchor"), "");
    }

    #[test]
    fn non_ascii_first_letter() {
        assert_eq!(
            normalize_title("санкт-Петербургский_государственный_университет"),
            "Санкт-Петербургский государственный университет"
        );
    }

    #[test]
    fn pipe_target() {
        assert_eq!(link_target("Harvard University|Harvard"), "Harvard University");
        assert_eq!(link_target("Yale"), "Yale");
    }
}
