use unicode_normalization::UnicodeNormalization;

/// Canonical composition. Applied once before any other normalization so that
/// signal counts and hashes do not depend on the input's composition form.
pub fn to_nfc(text: &str) -> String {
    text.nfc().collect()
}

/// Strips HTML/JS markup and normalizes whitespace.
///
/// `<script>` and `<style>` elements are dropped with their contents, comments
/// are dropped, every other tag is removed keeping its inner text. Within a line
/// any run of blank or control characters becomes one space and line ends are
/// trimmed; three or more consecutive newlines collapse to a blank line.
pub fn clean_text(raw: &str) -> String {
    let mut text = strip_tags(raw);
    loop {
        let next = strip_tags(&text);
        if next.len() == text.len() {
            break;
        }
        text = next;
    }
    normalize_whitespace(&text)
}

const RAW_TEXT_ELEMENTS: [&str; 2] = ["script", "style"];

fn strip_tags(s: &str) -> String {
    let bytes = s.as_bytes();
    let lower = s.to_ascii_lowercase();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    let mut copied_from = 0;

    while let Some(off) = s[i..].find('<') {
        let lt = i + off;
        let after = &bytes[lt + 1..];
        let looks_like_tag = match after.first() {
            Some(c) if c.is_ascii_alphabetic() => true,
            Some(b'/') => after.get(1).is_some_and(u8::is_ascii_alphabetic),
            Some(b'!') | Some(b'?') => true,
            _ => false,
        };
        if !looks_like_tag {
            i = lt + 1;
            continue;
        }

        let end = if lower[lt..].starts_with("<!--") {
            lower[lt + 4..].find("-->").map_or(s.len(), |p| lt + 4 + p + 3)
        } else {
            let Some(gt) = s[lt..].find('>') else {
                // no closing bracket: not a tag
                i = lt + 1;
                continue;
            };
            let tag_end = lt + gt + 1;
            let name: String = lower[lt + 1..]
                .chars()
                .take_while(|c| c.is_ascii_alphanumeric())
                .collect();
            let self_closing = s[lt..tag_end].ends_with("/>");
            if RAW_TEXT_ELEMENTS.contains(&name.as_str()) && !self_closing {
                let close = format!("</{name}");
                match lower[tag_end..].find(&close) {
                    Some(p) => {
                        let close_at = tag_end + p;
                        lower[close_at..].find('>').map_or(s.len(), |q| close_at + q + 1)
                    }
                    None => s.len(),
                }
            } else {
                tag_end
            }
        };
        out.push_str(&s[copied_from..lt]);
        copied_from = end;
        i = end;
    }
    out.push_str(&s[copied_from..]);
    out
}

fn is_blank(c: char) -> bool {
    c != '\n' && (c.is_whitespace() || c.is_control())
}

fn normalize_whitespace(s: &str) -> String {
    let unified = s.replace("\r\n", "\n").replace('\r', "\n");
    let mut out = String::with_capacity(unified.len());
    let mut newlines = 0usize;
    for line in unified.split('\n') {
        let mut collapsed = String::with_capacity(line.len());
        let mut pending_space = false;
        for c in line.chars() {
            if is_blank(c) {
                pending_space = !collapsed.is_empty();
            } else {
                if pending_space {
                    collapsed.push(' ');
                    pending_space = false;
                }
                collapsed.push(c);
            }
        }
        if collapsed.is_empty() {
            newlines += 1;
            continue;
        }
        if !out.is_empty() {
            // `newlines` counts the line breaks seen since the last non-empty line
            out.push_str(if newlines >= 2 { "\n\n" } else { "\n" });
        }
        out.push_str(&collapsed);
        newlines = 1;
    }
    out
}
