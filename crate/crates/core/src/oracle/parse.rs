use std::sync::LazyLock;

use regex::Regex;

use super::{PairVerdict, TripletVerdict};

static CHOICE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)choice\s*([12])\b").unwrap());
static YES_NO: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(yes|no)\b").unwrap());

/// Finds "Choice 1" / "Choice 2" (any case, optional space). Mentioning
/// both, or neither, is ambiguous.
pub fn parse_triplet_response(raw: &str) -> TripletVerdict {
    let mut found = None;
    for cap in CHOICE.captures_iter(raw) {
        let v = if &cap[1] == "1" {
            TripletVerdict::Choice1
        } else {
            TripletVerdict::Choice2
        };
        match found {
            None => found = Some(v),
            Some(prev) if prev != v => return TripletVerdict::Ambiguous,
            Some(_) => {}
        }
    }
    found.unwrap_or(TripletVerdict::Ambiguous)
}

/// First standalone "yes" or "no" wins.
pub fn parse_pair_response(raw: &str) -> PairVerdict {
    match YES_NO.captures(raw) {
        Some(cap) if cap[1].eq_ignore_ascii_case("yes") => PairVerdict::Same,
        Some(_) => PairVerdict::Different,
        None => PairVerdict::Ambiguous,
    }
}
