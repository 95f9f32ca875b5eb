//! Syntactic classification of branch predicates into boundary shapes.
//!
//! Only a small, purely textual grammar is recognised; anything else is
//! [`ConditionShape::Other`].
//!
//! * single boundary: `v OP c` or `c OP v` with `OP` in `< <= > >=`, where `v`
//!   is a variable path (`x`, `self.len`, `buf.len()`, `*p`) and `c` a numeric
//!   literal or an upper-case constant path (`MAX`, `u8::MAX`).
//! * range: `lower && upper` on the same variable, or `(a..b).contains(&v)`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::model::ConditionShape;

/// Which side of the variable the bound constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSide {
    /// `v > c`, `v >= c`: the bound is a minimum.
    Lower,
    /// `v < c`, `v <= c`: the bound is a maximum.
    Upper,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bound {
    pub variable: String,
    pub op: &'static str,
    pub bound: String,
    pub side: BoundSide,
    /// The comparison as it appears in the source.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Classification {
    Single(Bound),
    Range { lower: Bound, upper: Bound },
    Other,
}

impl Classification {
    pub fn shape(&self) -> ConditionShape {
        match self {
            Classification::Single(_) => ConditionShape::SingleBoundary,
            Classification::Range { .. } => ConditionShape::RangeBased,
            Classification::Other => ConditionShape::Other,
        }
    }
}

pub fn classify(text: &str) -> Classification {
    let text = strip_parens(text.trim());
    if text.contains("||") {
        return Classification::Other;
    }
    if let Some(c) = contains_range(text) {
        return c;
    }
    let parts = split_top_level(text, "&&");
    match parts.as_slice() {
        [one] => single(one).map_or(Classification::Other, Classification::Single),
        [a, b] => match (single(a), single(b)) {
            (Some(x), Some(y)) if x.variable == y.variable && x.side != y.side => {
                let (lower, upper) = if x.side == BoundSide::Lower { (x, y) } else { (y, x) };
                Classification::Range { lower, upper }
            }
            _ => Classification::Other,
        },
        _ => Classification::Other,
    }
}

fn strip_parens(mut s: &str) -> &str {
    while s.starts_with('(') && s.ends_with(')') && matching_close(s) == Some(s.len() - 1) {
        s = s[1..s.len() - 1].trim();
    }
    s
}

fn matching_close(s: &str) -> Option<usize> {
    let mut depth = 0i32;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn split_top_level<'a>(s: &'a str, sep: &str) -> Vec<&'a str> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth -= 1,
            _ if depth == 0 && s[i..].starts_with(sep) => {
                out.push(strip_parens(s[start..i].trim()));
                i += sep.len();
                start = i;
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    out.push(strip_parens(s[start..].trim()));
    out
}

/// `(a..b).contains(&v)` and `(a..=b).contains(&v)`.
fn contains_range(s: &str) -> Option<Classification> {
    let rest = s.strip_prefix('(')?;
    let close = matching_close(s)?;
    let range = &rest[..close - 1];
    let call = s[close + 1..].trim();
    let arg = call.strip_prefix(".contains(")?.strip_suffix(')')?.trim();
    let var = arg.strip_prefix('&').unwrap_or(arg).trim();
    if !is_variable(var) {
        return None;
    }
    let (lo, hi, inclusive) = match range.split_once("..=") {
        Some((lo, hi)) => (lo.trim(), hi.trim(), true),
        None => {
            let (lo, hi) = range.split_once("..")?;
            (lo.trim(), hi.trim(), false)
        }
    };
    if !is_bound(lo) || !is_bound(hi) {
        return None;
    }
    let lower = Bound {
        variable: var.to_string(),
        op: ">=",
        bound: lo.to_string(),
        side: BoundSide::Lower,
        text: alloc::format!("{var} >= {lo}"),
    };
    let up_op = if inclusive { "<=" } else { "<" };
    let upper = Bound {
        variable: var.to_string(),
        op: up_op,
        bound: hi.to_string(),
        side: BoundSide::Upper,
        text: alloc::format!("{var} {up_op} {hi}"),
    };
    Some(Classification::Range { lower, upper })
}

fn single(s: &str) -> Option<Bound> {
    let (pos, op) = find_comparison(s)?;
    let lhs = s[..pos].trim();
    let rhs = s[pos + op.len()..].trim();
    let (variable, bound, op) = if is_variable(lhs) && is_bound(rhs) {
        (lhs, rhs, op)
    } else if is_bound(lhs) && is_variable(rhs) {
        (rhs, lhs, flip(op))
    } else {
        return None;
    };
    let side = if op.starts_with('>') { BoundSide::Lower } else { BoundSide::Upper };
    Some(Bound {
        variable: variable.to_string(),
        op,
        bound: bound.to_string(),
        side,
        text: s.to_string(),
    })
}

fn flip(op: &'static str) -> &'static str {
    match op {
        "<" => ">",
        "<=" => ">=",
        ">" => "<",
        _ => "<=",
    }
}

/// The single top-level ordering comparison in `s`, if there is exactly one
/// and no equality comparison alongside it.
fn find_comparison(s: &str) -> Option<(usize, &'static str)> {
    let b = s.as_bytes();
    let mut found = None;
    let mut depth = 0i32;
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        match c {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth -= 1,
            b'=' | b'!' if depth == 0 && b.get(i + 1) == Some(&b'=') => return None,
            b'<' | b'>' if depth == 0 => {
                let prev = if i > 0 { b[i - 1] } else { b' ' };
                let next = b.get(i + 1).copied().unwrap_or(b' ');
                if next == c || prev == c || prev == b'-' || prev == b'=' {
                    return None;
                }
                if found.is_some() {
                    return None;
                }
                let op = match (c, next) {
                    (b'<', b'=') => "<=",
                    (b'>', b'=') => ">=",
                    (b'<', _) => "<",
                    _ => ">",
                };
                found = Some((i, op));
                i += op.len();
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    found
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_constant_name(s: &str) -> bool {
    is_ident(s) && s.chars().any(|c| c.is_ascii_uppercase()) && !s.chars().any(|c| c.is_ascii_lowercase())
}

fn is_variable(s: &str) -> bool {
    let s = s.strip_prefix('*').unwrap_or(s).trim();
    if s.is_empty() || is_bound(s) {
        return false;
    }
    s.split('.').all(|seg| {
        let seg = seg.strip_suffix("()").unwrap_or(seg);
        is_ident(seg)
    })
}

fn is_bound(s: &str) -> bool {
    let s = s.strip_prefix('-').unwrap_or(s).trim();
    if s.starts_with(|c: char| c.is_ascii_digit()) {
        return s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.');
    }
    // `MAX`, `u8::MAX`, `Self::CAPACITY`
    let last = s.rsplit("::").next().unwrap_or(s);
    is_constant_name(last) && s.split("::").all(is_ident)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(s: &str) -> ConditionShape {
        classify(s).shape()
    }

    #[test]
    fn single_boundaries() {
        assert_eq!(shape("x > 10"), ConditionShape::SingleBoundary);
        assert_eq!(shape("self.len <= MAX_LEN"), ConditionShape::SingleBoundary);
        assert_eq!(shape("0 < n"), ConditionShape::SingleBoundary);
        assert_eq!(shape("buf.len() >= u8::MAX"), ConditionShape::SingleBoundary);
        assert_eq!(shape("(x < -3)"), ConditionShape::SingleBoundary);
    }

    #[test]
    fn single_side_follows_the_variable() {
        let Classification::Single(b) = classify("10 < x") else { panic!() };
        assert_eq!((b.variable.as_str(), b.op, b.side), ("x", ">", BoundSide::Lower));
        let Classification::Single(b) = classify("x <= 3") else { panic!() };
        assert_eq!(b.side, BoundSide::Upper);
    }

    #[test]
    fn ranges() {
        assert_eq!(shape("x >= 0 && x <= 10"), ConditionShape::RangeBased);
        assert_eq!(shape("(0..=10).contains(&x)"), ConditionShape::RangeBased);
        let Classification::Range { lower, upper } = classify("x <= 10 && x >= 0") else { panic!() };
        assert_eq!(lower.text, "x >= 0");
        assert_eq!(upper.text, "x <= 10");
    }

    #[test]
    fn everything_else_is_other() {
        for s in [
            "x == 10",
            "x > y",
            "x > 0 || x < -5",
            "x >= 0 && y <= 10",
            "x >= 0 && x >= 1",
            "a < b && c",
            "strict::addr(new_queue) & STATE_MASK != curr_state",
            "let Err(new_queue) = exchange",
            "node.signaled.load(Ordering::Acquire)",
            "x << 2 > 1",
            "",
        ] {
            assert_eq!(shape(s), ConditionShape::Other, "{s}");
        }
    }
}
