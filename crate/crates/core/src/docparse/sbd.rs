//! Rule-based sentence boundary disambiguation tuned for scholarly prose.
//!
//! A boundary is a run of `.`, `?` or `!` (plus closing quotes) followed by
//! whitespace and then an uppercase letter, digit or opening quote. A period
//! does not end a sentence after a known abbreviation or a single initial,
//! and nothing inside a balanced `(...)` or `[...]` pair is ever a boundary.
//! Periods inside numbers, DOIs and URLs are not followed by whitespace and
//! so never qualify. A blank line is always a boundary.

/// Tokens (without the final period) that do not end a sentence.
pub const ABBREVIATIONS: &[&str] = &[
    "al", "e.g", "i.e", "cf", "vs", "Fig", "Figs", "Eq", "Dr", "Mr", "Mrs", "Ms", "Prof", "U.S", "U.K",
    "No", "Vol", "pp", "Jr", "St", "ca", "approx",
];

const CLOSING_QUOTES: &[char] = &['"', '\'', '\u{201D}', '\u{2019}'];
const OPENING_QUOTES: &[char] = &['"', '\'', '\u{201C}', '\u{2018}'];

/// True if `token` (the word before a period, period excluded) is an
/// abbreviation: listed, a single capital initial, or dotted initials
/// such as `U.S` / `e.g`.
pub fn is_abbreviation(token: &str) -> bool {
    let token = token.trim_start_matches(['(', '[', '"', '\'', '\u{201C}', '\u{2018}']);
    if ABBREVIATIONS.contains(&token) {
        return true;
    }
    let mut chars = token.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => return c.is_uppercase(),
        (None, _) => return false,
        _ => {}
    }
    // dotted initials: letter(.letter)+
    let parts: Vec<&str> = token.split('.').collect();
    parts.len() > 1 && parts.iter().all(|p| p.chars().count() == 1 && p.chars().all(char::is_alphabetic))
}

/// Mark chars enclosed by a balanced bracket pair. Unbalanced brackets are ignored.
fn bracket_mask(chars: &[char]) -> Vec<bool> {
    let mut mask = vec![false; chars.len()];
    let mut stack: Vec<(char, usize)> = Vec::new();
    for (i, &c) in chars.iter().enumerate() {
        match c {
            '(' | '[' => stack.push((c, i)),
            ')' | ']' => {
                let open = if c == ')' { '(' } else { '[' };
                if let Some(pos) = stack.iter().rposition(|&(o, _)| o == open) {
                    let (_, start) = stack[pos];
                    stack.truncate(pos);
                    for m in &mut mask[start + 1..i] {
                        *m = true;
                    }
                }
            }
            _ => {}
        }
    }
    mask
}

fn word_before(chars: &[char], end: usize) -> String {
    let mut start = end;
    while start > 0 && !chars[start - 1].is_whitespace() {
        start -= 1;
    }
    chars[start..end].iter().collect()
}

/// Sentence spans `[start, end)` in char offsets, trimmed of surrounding
/// whitespace, in order and non-overlapping.
pub fn segment_text(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let inside = bracket_mask(&chars);
    let mut cuts: Vec<usize> = Vec::new();

    let mut i = 0;
    while i < n {
        let c = chars[i];
        if c == '\n' {
            // blank line: newline, optional horizontal space, newline
            let mut j = i + 1;
            while j < n && chars[j] != '\n' && chars[j].is_whitespace() {
                j += 1;
            }
            if j < n && chars[j] == '\n' {
                cuts.push(i);
                i = j;
                continue;
            }
        }
        if !matches!(c, '.' | '?' | '!') || inside[i] {
            i += 1;
            continue;
        }
        let mut end = i + 1;
        while end < n && matches!(chars[end], '.' | '?' | '!') {
            end += 1;
        }
        while end < n && CLOSING_QUOTES.contains(&chars[end]) {
            end += 1;
        }
        if end >= n || !chars[end].is_whitespace() {
            i = end;
            continue;
        }
        let mut k = end;
        while k < n && chars[k].is_whitespace() {
            k += 1;
        }
        if k >= n {
            i = k;
            continue;
        }
        let next = chars[k];
        let starts_sentence = next.is_uppercase() || next.is_ascii_digit() || OPENING_QUOTES.contains(&next);
        let abbreviated = c == '.' && end == i + 1 && is_abbreviation(&word_before(&chars, i));
        if starts_sentence && !abbreviated {
            cuts.push(end);
        }
        i = end;
    }

    let mut spans = Vec::new();
    let mut start = 0;
    for cut in cuts.into_iter().chain(std::iter::once(n)) {
        let mut s = start;
        let mut e = cut;
        while s < e && chars[s].is_whitespace() {
            s += 1;
        }
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if s < e {
            spans.push((s, e));
        }
        start = cut;
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::char_slice;
    use proptest::prelude::*;

    fn split(text: &str) -> Vec<&str> {
        segment_text(text).into_iter().map(|(s, e)| char_slice(text, s, e).unwrap()).collect()
    }

    #[test]
    fn citation_then_sentence() {
        assert_eq!(
            split("We follow Smith et al. (2010). We then estimate the model."),
            vec!["We follow Smith et al. (2010).", "We then estimate the model."]
        );
    }

    #[test]
    fn doi_is_not_split() {
        assert_eq!(
            split("See 10.3886/ICPSR06635. Next sentence."),
            vec!["See 10.3886/ICPSR06635.", "Next sentence."]
        );
    }

    #[test]
    fn empty_and_blank() {
        assert!(segment_text("").is_empty());
        assert!(segment_text("   \n\t ").is_empty());
    }

    #[test]
    fn parenthesized_periods() {
        assert_eq!(
            split("Respondents (N = 1,139. See Table 2. Weighted) were adults. Then more."),
            vec!["Respondents (N = 1,139. See Table 2. Weighted) were adults.", "Then more."]
        );
    }

    #[test]
    fn decimals_and_urls() {
        assert_eq!(
            split("About 3.5 percent used https://www.icpsr.umich.edu/web. Others did not."),
            vec!["About 3.5 percent used https://www.icpsr.umich.edu/web.", "Others did not."]
        );
    }

    #[test]
    fn question_and_quotes() {
        assert_eq!(
            split("Why does it matter? \"Data\" are scarce! 2010 was different."),
            vec!["Why does it matter?", "\"Data\" are scarce!", "2010 was different."]
        );
    }

    #[test]
    fn lowercase_continuation_is_not_a_boundary() {
        assert_eq!(split("It rose by approx. five points. Then fell."), vec!["It rose by approx. five points.", "Then fell."]);
        assert_eq!(split("ends here. but not really"), vec!["ends here. but not really"]);
    }

    #[test]
    fn blank_line_is_hard_boundary() {
        assert_eq!(split("Heading without period\n\nNext paragraph"), vec!["Heading without period", "Next paragraph"]);
        assert_eq!(split("one line\ncontinues"), vec!["one line\ncontinues"]);
    }

    #[test]
    fn initials() {
        assert_eq!(split("Data from J. Smith were used. Good."), vec!["Data from J. Smith were used.", "Good."]);
        assert!(is_abbreviation("U.S"));
        assert!(is_abbreviation("(e.g"));
        assert!(!is_abbreviation("data"));
        assert!(!is_abbreviation("a"));
    }

    proptest! {
        #[test]
        fn coverage_and_order(text in "[A-Za-z0-9 .,?!()\\n\"]{0,200}") {
            let spans = segment_text(&text);
            let mut last = 0;
            let mut rebuilt = String::new();
            let len = text.chars().count();
            for &(s, e) in &spans {
                prop_assert!(s < e && e <= len);
                prop_assert!(s >= last);
                last = e;
                rebuilt.push_str(char_slice(&text, s, e).unwrap());
            }
            let strip = |t: &str| t.chars().filter(|c| !c.is_whitespace()).collect::<String>();
            prop_assert_eq!(strip(&rebuilt), strip(&text));
        }
    }
}
