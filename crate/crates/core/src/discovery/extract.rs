/// Quoted link candidates in page source, in order of appearance.
///
/// A candidate is the text between a quote and the next matching quote when
/// it starts with `http://`, `https://`, `//` or `/`. This is a text scan, not
/// an HTML parse, so it also catches links in inline scripts and `url('...')`.
pub fn extract_candidate_links(page_source: &[u8]) -> Vec<String> {
    if looks_binary(page_source) {
        return Vec::new();
    }
    let text = String::from_utf8_lossy(page_source);
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let q = bytes[i];
        if q != b'"' && q != b'\'' {
            i += 1;
            continue;
        }
        let rest = &text[i + 1..];
        if !starts_like_link(rest) {
            i += 1;
            continue;
        }
        match rest.find(q as char) {
            Some(end) => {
                let candidate = &rest[..end];
                if candidate
                    .chars()
                    .all(|c| !c.is_whitespace() && c != '<' && c != '>' && c != '"' && c != '\'')
                {
                    out.push(candidate.to_string());
                    i += end + 2;
                } else {
                    i += 1;
                }
            }
            None => break,
        }
    }
    out
}

fn starts_like_link(s: &str) -> bool {
    s.starts_with("http://") || s.starts_with("https://") || s.starts_with('/')
}

fn looks_binary(bytes: &[u8]) -> bool {
    bytes.iter().take(1024).any(|&b| b == 0)
}
