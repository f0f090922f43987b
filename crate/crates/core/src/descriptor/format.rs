use crate::catalog::{parse_date, ColumnType};
use crate::profiler::{ColumnProfile, Extreme};

/// Up to two decimals, trailing zeros dropped but at least one kept:
/// `3` -> `3.0`, `3.754` -> `3.75`.
pub fn fmt_float(v: f64) -> String {
    let mut s = format!("{:.2}", v);
    if s == "-0.00" {
        s = "0.00".into();
    }
    while s.ends_with('0') && !s.ends_with(".0") {
        s.pop();
    }
    s
}

/// Integers print without decimals; everything else through [`fmt_float`].
pub fn fmt_number(ty: ColumnType, v: f64) -> String {
    if ty == ColumnType::Integer && v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        fmt_float(v)
    }
}

/// `2024-03-12` -> `March 12, 2024`; other text is returned unchanged.
pub fn humanize_date(raw: &str) -> String {
    match parse_date(raw) {
        Some(d) => d.format("%B %-d, %Y").to_string(),
        None => raw.to_string(),
    }
}

pub fn fmt_extreme(ty: ColumnType, e: &Extreme) -> String {
    match e {
        Extreme::Number(v) => fmt_number(ty, *v),
        Extreme::Text(t) if ty == ColumnType::Date => humanize_date(t),
        Extreme::Text(t) => t.clone(),
    }
}

/// Name tokens split on non-alphanumerics and at letter/digit boundaries.
pub fn name_tokens(name: &str) -> Vec<String> {
    let mut out = Vec::new();
    for part in name.split(|c: char| !c.is_ascii_alphanumeric()) {
        let mut cur = String::new();
        let mut prev_digit = None;
        for c in part.chars() {
            let d = c.is_ascii_digit();
            if prev_digit.is_some_and(|p| p != d) && !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            cur.push(c.to_ascii_lowercase());
            prev_digit = Some(d);
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// Statistics line for one column, as used in the schema block.
pub fn column_facts(p: &ColumnProfile, row_count: u64) -> String {
    let ty = p.declared_type;
    let mut parts = Vec::new();
    if p.non_null_count(row_count) == 0 {
        parts.push("no non-null values".to_string());
    } else {
        match (&p.min, &p.max) {
            (Some(lo), Some(hi)) if ty.is_numeric() => {
                let mut s = format!(
                    "ranging from {} to {}",
                    fmt_extreme(ty, lo),
                    fmt_extreme(ty, hi)
                );
                if let Some(m) = p.mean {
                    s.push_str(&format!(", with an average of {}", fmt_float(m)));
                }
                parts.push(s);
            }
            (Some(lo), Some(hi)) if ty == ColumnType::Date => parts.push(format!(
                "ranging from {} to {}",
                fmt_extreme(ty, lo),
                fmt_extreme(ty, hi)
            )),
            _ => {
                let top: Vec<String> = p
                    .top_k
                    .iter()
                    .take(3)
                    .map(|v| format!("{} ({})", v.value, v.count))
                    .collect();
                if !top.is_empty() {
                    parts.push(format!("top values {}", top.join(", ")));
                }
            }
        }
        parts.push(format!("{} distinct values", p.distinct_count));
    }
    parts.push(format!("null ratio {}", fmt_float(p.null_ratio)));
    parts.join("; ")
}

/// Joins items as `a, b and c`.
pub fn join_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}
