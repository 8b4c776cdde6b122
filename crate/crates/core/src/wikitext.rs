//! Wikitext scanning utilities.
//!
//! These are deliberately small, allocation-light scanners rather than a full
//! markup parser. Dumps contain arbitrarily broken markup; every function here
//! degrades to "absent" or best-effort text instead of failing.

/// Byte range of the first template whose name starts with `Infobox`
/// (case-insensitive), including the surrounding braces. Returns `None` when
/// no infobox opens, or the first one never closes.
pub fn first_infobox_block(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while let Some(rel) = find_bytes(&bytes[i..], b"{{") {
        let open = i + rel;
        let name_start = skip_ascii_whitespace(bytes, open + 2);
        if starts_with_ignore_case(&bytes[name_start..], b"infobox") {
            let end = balanced_template_end(text, open)?;
            return Some(&text[open..end]);
        }
        i = open + 2;
    }
    None
}

/// Index one past the `}}` that closes the template opening at `open_idx`.
/// `open_idx` must point at `{{`. Returns `None` for unbalanced markup.
pub fn balanced_template_end(text: &str, open_idx: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    debug_assert!(bytes[open_idx..].starts_with(b"{{"));
    let mut depth = 0usize;
    let mut i = open_idx;
    while i < bytes.len() {
        if bytes[i..].starts_with(b"{{") {
            depth += 1;
            i += 2;
        } else if bytes[i..].starts_with(b"}}") {
            depth = depth.saturating_sub(1);
            i += 2;
            if depth == 0 {
                return Some(i);
            }
        } else {
            i += 1;
        }
    }
    None
}

/// Name of a template block (`block` includes the braces): the text before
/// the first `|`, newline, or closing braces, trimmed.
pub fn template_name(block: &str) -> &str {
    let inner = &block[2..];
    let end = inner
        .find(|c| c == '|' || c == '\n')
        .unwrap_or(inner.len())
        .min(inner.find("}}").unwrap_or(inner.len()));
    inner[..end].trim()
}

/// Top-level `|`-separated fields of a template block, starting with the
/// name field. Splits ignore `|` nested inside `{{ }}` or `[[ ]]`.
pub fn template_fields(block: &str) -> Vec<&str> {
    let inner = block
        .strip_prefix("{{")
        .and_then(|s| s.strip_suffix("}}"))
        .unwrap_or(block);
    let bytes = inner.as_bytes();
    let mut fields = Vec::new();
    let mut brace_depth = 0usize;
    let mut bracket_depth = 0usize;
    let mut start = 0usize;
    let mut i = 0usize;
    while i < bytes.len() {
        if bytes[i..].starts_with(b"{{") {
            brace_depth += 1;
            i += 2;
        } else if bytes[i..].starts_with(b"}}") {
            brace_depth = brace_depth.saturating_sub(1);
            i += 2;
        } else if bytes[i..].starts_with(b"[[") {
            bracket_depth += 1;
            i += 2;
        } else if bytes[i..].starts_with(b"]]") {
            bracket_depth = bracket_depth.saturating_sub(1);
            i += 2;
        } else if bytes[i] == b'|' && brace_depth == 0 && bracket_depth == 0 {
            fields.push(inner[start..i].trim());
            start = i + 1;
            i += 1;
        } else {
            i += 1;
        }
    }
    fields.push(inner[start..].trim());
    fields
}

/// `key = value` parameters of a template block. Keys are lowercased and
/// trimmed; values are trimmed with comments removed. Fields without `=` are
/// skipped, as is the name field.
pub fn template_params(block: &str) -> Vec<(String, String)> {
    template_fields(block)
        .into_iter()
        .skip(1)
        .filter_map(|field| {
            let (k, v) = field.split_once('=')?;
            let value = strip_comments(v);
            Some((k.trim().to_ascii_lowercase(), value.trim().to_string()))
        })
        .collect()
}

/// Category names in document order, `Category:` prefix stripped, sort keys
/// dropped. Duplicates are preserved.
pub fn categories(text: &str) -> Vec<String> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while let Some(rel) = find_bytes(&bytes[i..], b"[[") {
        let open = i + rel;
        let inner_start = skip_ascii_whitespace(bytes, open + 2);
        if starts_with_ignore_case(&bytes[inner_start..], b"category:") {
            let name_start = inner_start + "category:".len();
            let rest = &text[name_start..];
            let end = rest
                .find(|c| c == '|')
                .unwrap_or(rest.len())
                .min(rest.find("]]").unwrap_or(rest.len()));
            let name = rest[..end].trim();
            if !name.is_empty() {
                out.push(name.to_string());
            }
        }
        i = open + 2;
    }
    out
}

/// Targets of internal links in document order, excluding category, file and
/// image links. Nested links (image captions) are still found because the
/// scan resumes just past each `[[`.
pub fn internal_links(text: &str) -> Vec<String> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while let Some(rel) = find_bytes(&bytes[i..], b"[[") {
        let open = i + rel;
        let rest = &text[open + 2..];
        let end = rest
            .find(|c| c == '|')
            .unwrap_or(rest.len())
            .min(rest.find("]]").unwrap_or(rest.len()));
        let target = rest[..end].trim().trim_start_matches(':').trim();
        if !target.is_empty() && !target.contains('\n') && !is_non_article_link(target) {
            out.push(target.to_string());
        }
        i = open + 2;
    }
    out
}

fn is_non_article_link(target: &str) -> bool {
    ["category:", "file:", "image:"]
        .iter()
        .any(|p| starts_with_ignore_case(target.as_bytes(), p.as_bytes()))
}

/// Reduce markup to plain prose, best effort: comments, templates, refs,
/// table rows, headings markers, quote markers, tags and link syntax go away;
/// link display text stays. Whitespace is collapsed.
pub fn plain_text(text: &str) -> String {
    // Reassignment (not shadowing) frees each stage's input, so at most two
    // page-sized buffers are live at once however large the page is.
    let mut s = strip_comments(text);
    s = strip_templates(&s);
    s = strip_refs(&s);
    s = strip_links(&s, 0);
    s = strip_tags(&s);
    s = decode_basic_entities(&s);
    collapse_lines(&s)
}

/// Remove `<!-- ... -->` spans. An unterminated comment swallows the rest.
pub fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("<!--") {
        out.push_str(&rest[..start]);
        match rest[start + 4..].find("-->") {
            Some(end) => rest = &rest[start + 4 + end + 3..],
            None => return out,
        }
    }
    out.push_str(rest);
    out
}

fn strip_templates(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        match balanced_template_end(rest, open) {
            Some(end) => rest = &rest[end..],
            // Unclosed template: everything after it is suspect, drop it.
            None => return out,
        }
    }
    out.push_str(rest);
    out
}

fn strip_refs(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    loop {
        let Some(start) = find_ignore_case(rest, "<ref") else {
            out.push_str(rest);
            return out;
        };
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        let close_inline = tail.find("/>");
        let close_paired = find_ignore_case(tail, "</ref>");
        rest = match (close_inline, close_paired) {
            (Some(a), Some(b)) if a < b => &tail[a + 2..],
            (Some(a), None) => &tail[a + 2..],
            (_, Some(b)) => &tail[b + 6..],
            (None, None) => return out,
        };
    }
}

fn strip_links(text: &str, depth: u32) -> String {
    if depth > 4 {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find("[[") {
        out.push_str(&rest[..open]);
        match matching_link_end(rest, open) {
            Some(end) => {
                let inner = &rest[open + 2..end - 2];
                let target_end = top_level_pipe_split(inner);
                let target = inner[..target_end.unwrap_or(inner.len())]
                    .trim()
                    .trim_start_matches(':');
                if !is_non_article_link(target) {
                    let display = match target_end {
                        Some(p) => &inner[last_top_level_pipe(inner).unwrap_or(p) + 1..],
                        None => inner,
                    };
                    out.push_str(&strip_links(display.trim(), depth + 1));
                }
                rest = &rest[end..];
            }
            None => {
                out.push_str("[[");
                rest = &rest[open + 2..];
            }
        }
    }
    out.push_str(rest);
    // External links: "[scheme://url label]" keeps the label.
    let mut cleaned = String::with_capacity(out.len());
    let mut r: &str = &out;
    while let Some(open) = r.find('[') {
        cleaned.push_str(&r[..open]);
        let inner_end = r[open..].find(']');
        let inner = inner_end.map(|e| &r[open + 1..open + e]);
        match (inner, inner_end) {
            (Some(body), Some(e)) if looks_like_url(body) => {
                if let Some(space) = body.find(' ') {
                    cleaned.push_str(body[space..].trim());
                }
                r = &r[open + e + 1..];
            }
            _ => {
                cleaned.push('[');
                r = &r[open + 1..];
            }
        }
    }
    cleaned.push_str(r);
    cleaned
}

fn looks_like_url(s: &str) -> bool {
    ["http://", "https://", "ftp://", "//"]
        .iter()
        .any(|p| s.starts_with(p))
}

fn matching_link_end(text: &str, open_idx: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut i = open_idx;
    while i < bytes.len() {
        if bytes[i..].starts_with(b"[[") {
            depth += 1;
            i += 2;
        } else if bytes[i..].starts_with(b"]]") {
            depth = depth.saturating_sub(1);
            i += 2;
            if depth == 0 {
                return Some(i);
            }
        } else {
            i += 1;
        }
    }
    None
}

fn top_level_pipe_split(inner: &str) -> Option<usize> {
    pipe_positions(inner).first().copied()
}

fn last_top_level_pipe(inner: &str) -> Option<usize> {
    pipe_positions(inner).last().copied()
}

fn pipe_positions(inner: &str) -> Vec<usize> {
    let bytes = inner.as_bytes();
    let mut positions = Vec::new();
    let mut depth = 0usize;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i..].starts_with(b"[[") || bytes[i..].starts_with(b"{{") {
            depth += 1;
            i += 2;
        } else if bytes[i..].starts_with(b"]]") || bytes[i..].starts_with(b"}}") {
            depth = depth.saturating_sub(1);
            i += 2;
        } else {
            if bytes[i] == b'|' && depth == 0 {
                positions.push(i);
            }
            i += 1;
        }
    }
    positions
}

fn strip_tags(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('<') {
        out.push_str(&rest[..open]);
        match rest[open..].find('>') {
            Some(close) => rest = &rest[open + close + 1..],
            None => {
                out.push_str(&rest[open..]);
                return out;
            }
        }
    }
    out.push_str(rest);
    out
}

fn decode_basic_entities(text: &str) -> String {
    // One entity at a time, reassigning so chained temporaries cannot pile
    // up to several page-sized buffers on large pages.
    let mut s = text.replace("&nbsp;", " ");
    for (entity, plain) in [("&amp;", "&"), ("&lt;", "<"), ("&gt;", ">"), ("&quot;", "\"")] {
        s = s.replace(entity, plain);
    }
    s
}

fn collapse_lines(text: &str) -> String {
    // Streams words straight into the output: no per-line buffers, so the
    // whole pass holds one output string besides the input.
    let mut out = String::new();
    let mut first_line = true;
    for raw in text.lines() {
        let line = raw.trim();
        // Table syntax and leftover list/indent markers carry no prose.
        if line.starts_with("{|")
            || line.starts_with("|}")
            || line.starts_with("|-")
            || line.starts_with('|')
            || line.starts_with('!')
        {
            continue;
        }
        let line = line.trim_matches('=').trim();
        let line = line.trim_start_matches(['*', '#', ':', ';']).trim();
        let mut wrote_word = false;
        for word in line.split_whitespace() {
            // Bold/italic quote runs never contain whitespace, so removing
            // them per word matches removing them from the whole line.
            let unquoted;
            let word = if word.contains('\'') {
                unquoted = word.replace("'''", "").replace("''", "");
                if unquoted.is_empty() {
                    continue;
                }
                unquoted.as_str()
            } else {
                word
            };
            if wrote_word {
                out.push(' ');
            } else if !first_line {
                out.push('\n');
            }
            out.push_str(word);
            wrote_word = true;
        }
        if wrote_word {
            first_line = false;
        }
    }
    out
}

/// Lowercase, trim, and collapse internal whitespace to single spaces.
/// Underscores count as spaces, matching how page names are written.
pub fn normalize_label(s: &str) -> String {
    s.replace('_', " ")
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn find_bytes(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack
        .windows(needle.len())
        .position(|w| w == needle)
}

fn find_ignore_case(haystack: &str, needle: &str) -> Option<usize> {
    let h = haystack.as_bytes();
    let n = needle.as_bytes();
    if n.is_empty() || h.len() < n.len() {
        return None;
    }
    (0..=h.len() - n.len()).find(|&i| starts_with_ignore_case(&h[i..], n))
}

fn starts_with_ignore_case(haystack: &[u8], prefix: &[u8]) -> bool {
    haystack.len() >= prefix.len()
        && haystack[..prefix.len()].eq_ignore_ascii_case(prefix)
}

fn skip_ascii_whitespace(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && bytes[i].is_ascii_whitespace() {
        i += 1;
    }
    i
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infobox_block_is_first_infobox_template() {
        let text = "intro {{other|x}} {{Infobox bridge|name=N|length=284 m}} tail";
        assert_eq!(
            first_infobox_block(text),
            Some("{{Infobox bridge|name=N|length=284 m}}")
        );
    }

    #[test]
    fn infobox_matching_is_case_insensitive_and_nested() {
        let text = "{{wrap|{{infobox lake|area_km2=0.5}}}}";
        assert_eq!(first_infobox_block(text), Some("{{infobox lake|area_km2=0.5}}"));
    }

    #[test]
    fn unclosed_infobox_is_absent() {
        assert_eq!(first_infobox_block("{{Infobox valley|name=Broken"), None);
        assert_eq!(first_infobox_block("no templates here"), None);
    }

    #[test]
    fn infobox_spans_nested_templates() {
        let text = "{{Infobox town|pop={{formatnum:12}}|x=1}}";
        assert_eq!(first_infobox_block(text), Some(text));
    }

    #[test]
    fn template_name_stops_at_pipe_or_newline() {
        assert_eq!(template_name("{{Infobox settlement|name=K}}"), "Infobox settlement");
        assert_eq!(template_name("{{coord\n|1|2}}"), "coord");
        assert_eq!(template_name("{{ stub }}"), "stub");
    }

    #[test]
    fn template_fields_split_at_top_level_only() {
        let fields = template_fields("{{coord|1.5|2.5|display=title}}");
        assert_eq!(fields, vec!["coord", "1.5", "2.5", "display=title"]);
        let nested = template_fields("{{Infobox x|area={{convert|5|km2}}|b=[[a|b]]}}");
        assert_eq!(nested, vec!["Infobox x", "area={{convert|5|km2}}", "b=[[a|b]]"]);
    }

    #[test]
    fn template_params_lowercase_keys_and_drop_comments() {
        let params = template_params("{{Infobox lake|Area_km2 = 0.5 <!--approx-->|name=L}}");
        assert_eq!(
            params,
            vec![
                ("area_km2".to_string(), "0.5".to_string()),
                ("name".to_string(), "L".to_string()),
            ]
        );
    }

    #[test]
    fn categories_strip_prefix_and_sort_keys() {
        let text = "x [[Category:Bridges in South Africa]] y [[category:Landmarks|sort]] z";
        assert_eq!(
            categories(text),
            vec!["Bridges in South Africa".to_string(), "Landmarks".to_string()]
        );
    }

    #[test]
    fn category_page_links_are_not_memberships() {
        // A leading colon links to the category page instead of joining it.
        assert!(categories("see [[:Category:Bridges]]").is_empty());
    }

    #[test]
    fn duplicate_categories_are_preserved_in_order() {
        let text = "[[Category:B]][[Category:A]][[Category:B]]";
        assert_eq!(categories(text), vec!["B", "A", "B"]);
    }

    #[test]
    fn internal_links_exclude_non_article_namespaces() {
        let text = "[[Uganda]] [[File:Map.png|caption with [[Lake Victoria]]]] [[Category:X]]";
        assert_eq!(internal_links(text), vec!["Uganda", "Lake Victoria"]);
    }

    #[test]
    fn internal_link_target_precedes_pipe() {
        assert_eq!(internal_links("[[Kampala|the capital]]"), vec!["Kampala"]);
    }

    #[test]
    fn plain_text_drops_markup_and_keeps_prose() {
        let text = "{{Infobox bridge|name=N}}\n'''Nelson''' is a [[bridge]] over the [[Rail yard|yard]].<ref>cite</ref>\n== History ==\nBuilt in 2003. <!--unverified-->\n[[Category:Bridges]]\n";
        let body = plain_text(text);
        assert_eq!(body, "Nelson is a bridge over the yard.\nHistory\nBuilt in 2003.");
    }

    #[test]
    fn plain_text_has_no_structural_markup_left() {
        let text = "{{box|a}} text [[a|b]]\n{| class=x\n| cell\n|}\n[http://e.com label] &amp; more";
        let body = plain_text(text);
        for marker in ["{{", "}}", "[[", "]]", "{|", "<"] {
            assert!(!body.contains(marker), "{marker:?} left in {body:?}");
        }
        assert!(body.contains("label & more"));
    }

    #[test]
    fn plain_text_drops_file_links_entirely() {
        let body = plain_text("a [[File:Foo.png|thumb|A [[caption]] here]] b");
        assert_eq!(body, "a b");
    }

    #[test]
    fn unterminated_comment_and_template_degrade() {
        assert_eq!(plain_text("keep <!-- gone"), "keep");
        assert_eq!(plain_text("keep {{gone|x"), "keep");
    }

    #[test]
    fn normalize_label_collapses_case_and_space() {
        assert_eq!(normalize_label("  New York\t train站  "), "new york train站");
        assert_eq!(normalize_label("Settlement"), "settlement");
    }
}
