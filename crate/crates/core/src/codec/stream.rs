use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::quant::{QuantizedField, CODE_MAX, CODE_MIN};
use crate::error::{Error, Result};

/// ASCII payload over `0-9`, `,` and `;`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenStream(String);

impl TokenStream {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    /// Value groups plus delimiters, i.e. tokens under a tokenizer that maps
    /// every 3-digit group and every delimiter to one token.
    pub fn token_count(&self) -> usize {
        if self.0.is_empty() {
            return 0;
        }
        let delimiters = self.0.bytes().filter(|b| matches!(b, b',' | b';')).count();
        let groups = self.0.split([',', ';']).filter(|g| !g.is_empty()).count();
        delimiters + groups
    }
}

impl fmt::Display for TokenStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Tokens in `slices` serialized slices of `n_space` values each.
pub fn token_count(slices: usize, n_space: usize) -> usize {
    if slices == 0 || n_space == 0 {
        0
    } else {
        2 * slices * n_space - 1
    }
}

/// Slice values joined by commas, each rendered with exactly three digits.
pub fn serialize_slice(codes: &[u16]) -> String {
    let mut out = String::with_capacity(codes.len() * 4);
    for (i, c) in codes.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format!("{c:03}"));
    }
    out
}

/// Columns `slices` of the field, semicolon-separated, no trailing delimiter.
pub fn serialize(q: &QuantizedField, slices: Range<usize>) -> Result<TokenStream> {
    if slices.start >= slices.end || slices.end > q.n_slices() {
        return Err(Error::invalid(format!(
            "slice range {slices:?} invalid for {} time levels",
            q.n_slices()
        )));
    }
    let text = slices
        .map(|j| serialize_slice(&q.slice(j)))
        .collect::<Vec<_>>()
        .join(";");
    Ok(TokenStream(text))
}

/// Prompt holding the first `n_context` slices, optionally ending with `;` so
/// that the continuation starts a fresh slice.
pub fn context_prompt(q: &QuantizedField, n_context: usize, trailing_semicolon: bool) -> Result<TokenStream> {
    let mut s = serialize(q, 0..n_context)?.into_string();
    if trailing_semicolon {
        s.push(';');
    }
    Ok(TokenStream(s))
}

/// A semicolon-delimited segment of parsed output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedSlice {
    pub codes: Vec<u16>,
    /// Exactly the expected number of well-formed values.
    pub complete: bool,
}

/// Code in a reserved range (`000-149` or `851-999`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OodFlag {
    pub slice: usize,
    pub index: usize,
    pub code: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Malformed {
    Underfull { slice: usize, got: usize, want: usize },
    Overfull { slice: usize, got: usize, want: usize },
    /// Empty or longer than three digits.
    BadGroup { slice: usize, index: usize, text: String },
}

impl Malformed {
    pub fn slice(&self) -> usize {
        match self {
            Self::Underfull { slice, .. } | Self::Overfull { slice, .. } | Self::BadGroup { slice, .. } => *slice,
        }
    }
}

impl fmt::Display for Malformed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Underfull { slice, got, want } => write!(f, "slice {slice}: {got} values, expected {want}"),
            Self::Overfull { slice, got, want } => write!(f, "slice {slice}: {got} values, expected {want}"),
            Self::BadGroup { slice, index, text } => write!(f, "slice {slice}, value {index}: bad group {text:?}"),
        }
    }
}

/// Everything recovered from arbitrary backend text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub slices: Vec<ParsedSlice>,
    pub ood: Vec<OodFlag>,
    pub malformed: Vec<Malformed>,
    /// Groups of one or two digits; accepted but not canonical.
    pub short_groups: Vec<(usize, usize)>,
    /// Text from the first character outside `0-9,;` onwards.
    pub raw_tail: String,
}

impl ParseReport {
    pub fn complete_slices(&self) -> impl Iterator<Item = &[u16]> {
        self.slices.iter().filter(|s| s.complete).map(|s| s.codes.as_slice())
    }

    pub fn is_clean(&self) -> bool {
        self.malformed.is_empty() && self.raw_tail.is_empty()
    }

    /// First slice if it is complete, ignoring anything after it.
    pub fn first_complete(&self) -> Option<&[u16]> {
        self.slices.first().filter(|s| s.complete).map(|s| s.codes.as_slice())
    }
}

/// Splits `text` into slices of `n_space` codes. Never fails: anomalies are
/// collected in the report.
pub fn parse(text: &str, n_space: usize) -> ParseReport {
    let cut = text
        .find(|c: char| !(c.is_ascii_digit() || c == ',' || c == ';'))
        .unwrap_or(text.len());
    let (body, tail) = text.split_at(cut);
    let mut report = ParseReport {
        raw_tail: tail.to_string(),
        ..Default::default()
    };
    if body.is_empty() {
        return report;
    }
    let mut segments: Vec<&str> = body.split(';').collect();
    if segments.len() > 1 && segments.last() == Some(&"") {
        segments.pop();
    }
    for (s, segment) in segments.into_iter().enumerate() {
        let groups: Vec<&str> = if segment.is_empty() { Vec::new() } else { segment.split(',').collect() };
        let mut codes = Vec::with_capacity(groups.len());
        let mut well_formed = true;
        for (i, g) in groups.iter().enumerate() {
            if g.is_empty() || g.len() > 3 {
                well_formed = false;
                report.malformed.push(Malformed::BadGroup {
                    slice: s,
                    index: i,
                    text: g.to_string(),
                });
                continue;
            }
            if g.len() < 3 {
                report.short_groups.push((s, codes.len()));
            }
            let code: u16 = g.parse().expect("1-3 ascii digits");
            if !(CODE_MIN..=CODE_MAX).contains(&code) {
                report.ood.push(OodFlag {
                    slice: s,
                    index: codes.len(),
                    code,
                });
            }
            codes.push(code);
        }
        let got = codes.len();
        if well_formed && got < n_space {
            report.malformed.push(Malformed::Underfull { slice: s, got, want: n_space });
        } else if well_formed && got > n_space {
            report.malformed.push(Malformed::Overfull { slice: s, got, want: n_space });
        }
        report.slices.push(ParsedSlice {
            complete: well_formed && got == n_space,
            codes,
        });
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::quant::QuantRange;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn field(cols: &[&[u16]]) -> QuantizedField {
        let n = cols[0].len();
        let codes = Array2::from_shape_fn((n, cols.len()), |(i, j)| cols[j][i]);
        QuantizedField::new(codes, QuantRange::new(0.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn serialize_two_slices() {
        let q = field(&[&[150, 500], &[850, 151]]);
        let s = serialize(&q, 0..2).unwrap();
        assert_eq!(s.as_str(), "150,500;850,151");
        assert_eq!(s.token_count(), token_count(2, 2));
        assert!(serialize(&q, 1..3).is_err());
        assert!(serialize(&q, 1..1).is_err());
    }

    #[test]
    fn single_slice_of_fourteen_is_27_tokens() {
        let col: Vec<u16> = (0..14).map(|i| 150 + 27 * i).collect();
        let q = field(&[&col]);
        let s = serialize(&q, 0..1).unwrap();
        assert_eq!(s.token_count(), 27);
        assert_eq!(token_count(1, 14), 27);
    }

    #[test]
    fn context_prompt_trailing_semicolon_toggle() {
        let q = field(&[&[150, 500], &[850, 151], &[300, 301]]);
        assert_eq!(context_prompt(&q, 2, true).unwrap().as_str(), "150,500;850,151;");
        assert_eq!(context_prompt(&q, 2, false).unwrap().as_str(), "150,500;850,151");
    }

    #[test]
    fn parse_clean_stream() {
        let r = parse("150,500;850,151", 2);
        assert_eq!(r.slices.len(), 2);
        assert!(r.slices.iter().all(|s| s.complete));
        assert_eq!(r.slices[1].codes, vec![850, 151]);
        assert!(r.ood.is_empty() && r.is_clean());
    }

    #[test]
    fn parse_flags_reserved_codes() {
        let r = parse("150,999", 2);
        assert_eq!(r.slices.len(), 1);
        assert!(r.slices[0].complete);
        assert_eq!(r.ood, vec![OodFlag { slice: 0, index: 1, code: 999 }]);
        let low = parse("000,149", 2);
        assert_eq!(low.ood.len(), 2);
    }

    #[test]
    fn parse_reports_partial_slice() {
        let r = parse("150,500;850", 2);
        assert_eq!(r.complete_slices().count(), 1);
        assert_eq!(r.slices.len(), 2);
        assert!(!r.slices[1].complete);
        assert_eq!(r.malformed, vec![Malformed::Underfull { slice: 1, got: 1, want: 2 }]);
    }

    #[test]
    fn parse_overlong_and_bad_groups() {
        let r = parse("150,500,600", 2);
        assert_eq!(r.malformed, vec![Malformed::Overfull { slice: 0, got: 3, want: 2 }]);
        let r = parse("150,,600", 3);
        assert!(matches!(r.malformed[0], Malformed::BadGroup { index: 1, .. }));
        assert!(!r.slices[0].complete);
        let r = parse("1500,600", 2);
        assert!(matches!(&r.malformed[0], Malformed::BadGroup { text, .. } if text == "1500"));
    }

    #[test]
    fn parse_short_groups_and_tail() {
        let r = parse("15,500;850,151 and then some", 2);
        assert_eq!(r.short_groups, vec![(0, 0)]);
        assert_eq!(r.ood.len(), 1);
        assert_eq!(r.raw_tail, " and then some");
        assert_eq!(r.slices.len(), 2);
    }

    #[test]
    fn parse_trailing_semicolon_and_empty() {
        assert_eq!(parse("150,500;", 2).slices.len(), 1);
        assert!(parse("", 2).slices.is_empty());
        let r = parse("150,500;;850,151", 2);
        assert_eq!(r.malformed, vec![Malformed::Underfull { slice: 1, got: 0, want: 2 }]);
    }

    fn codes_strategy() -> impl Strategy<Value = (usize, Vec<Vec<u16>>)> {
        (1usize..20, 1usize..8).prop_flat_map(|(n, j)| {
            (Just(n), proptest::collection::vec(proptest::collection::vec(150u16..=850, n), j))
        })
    }

    proptest! {
        #[test]
        fn parse_inverts_serialize((n, cols) in codes_strategy()) {
            let refs: Vec<&[u16]> = cols.iter().map(|c| c.as_slice()).collect();
            let q = field(&refs);
            let s = serialize(&q, 0..cols.len()).unwrap();
            let r = parse(s.as_str(), n);
            prop_assert!(r.is_clean() && r.ood.is_empty() && r.short_groups.is_empty());
            let back: Vec<Vec<u16>> = r.slices.iter().map(|s| s.codes.clone()).collect();
            prop_assert_eq!(back, cols.clone());
            prop_assert_eq!(s.token_count(), token_count(cols.len(), n));
        }

        #[test]
        fn serialization_matches_grammar((_n, cols) in codes_strategy()) {
            let refs: Vec<&[u16]> = cols.iter().map(|c| c.as_slice()).collect();
            let s = serialize(&field(&refs), 0..cols.len()).unwrap();
            let re = regex::Regex::new(r"^\d{3}(,\d{3})*(;\d{3}(,\d{3})*)*$").unwrap();
            prop_assert!(re.is_match(s.as_str()));
        }

        #[test]
        fn ood_flags_point_into_slices(text in "[0-9,;]{0,60}", n in 1usize..6) {
            let r = parse(&text, n);
            for f in &r.ood {
                prop_assert_eq!(r.slices[f.slice].codes[f.index], f.code);
                prop_assert!(f.code < 150 || f.code > 850);
            }
            prop_assert!(r.raw_tail.is_empty());
        }
    }
}
