//! Character-offset helpers. All public spans in this crate are measured in
//! Unicode scalar values, not bytes, so that files exchanged with other
//! tools agree on offsets.

/// Number of chars in `s`.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Slice `s` by char offsets `[start, end)`. Returns `None` when out of range.
pub fn char_slice(s: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let b0 = char_to_byte(s, start)?;
    let b1 = char_to_byte(s, end)?;
    Some(&s[b0..b1])
}

/// Byte offset of char `idx`; `idx == char_len` maps to `s.len()`.
pub fn char_to_byte(s: &str, idx: usize) -> Option<usize> {
    if idx == 0 {
        return Some(0);
    }
    let mut count = 0;
    for (b, _) in s.char_indices() {
        if count == idx {
            return Some(b);
        }
        count += 1;
    }
    (count == idx).then_some(s.len())
}

/// Maps byte offsets (on char boundaries) of one string to char offsets.
pub struct ByteToChar {
    // byte offset of each char, plus s.len() as sentinel
    starts: Vec<usize>,
    ascii: bool,
}

impl ByteToChar {
    pub fn new(s: &str) -> Self {
        if s.is_ascii() {
            return ByteToChar { starts: Vec::new(), ascii: true };
        }
        let mut starts: Vec<usize> = s.char_indices().map(|(b, _)| b).collect();
        starts.push(s.len());
        ByteToChar { starts, ascii: false }
    }

    pub fn get(&self, byte: usize) -> usize {
        if self.ascii {
            return byte;
        }
        match self.starts.binary_search(&byte) {
            Ok(i) => i,
            Err(i) => i,
        }
    }
}
