//! Text format for nets.
//!
//! ```text
//! # full-line comments
//! [params]
//! mttf = 1259.03
//! [places]
//! On = 1
//! Off = 0
//! [transitions]
//! Fail: exponential mean=$mttf
//! Repair: exponential mean=0.77 guard="#On = 0"
//! Kill: immediate priority=1 weight=1
//! Boot: deterministic delay=0.5
//! [arcs]
//! On -> Fail
//! Fail -> Off
//! Off -o Kill *2
//! [metrics]
//! availability = P{#On = 1}
//! ```
//!
//! Arcs written `a -> b` are inputs when `a` is a place and outputs when `a`
//! is a transition; `-o` is an inhibitor from a place.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use gspn_core::net::{ArcDef, PlaceDef, TransitionDef};
use gspn_core::{parse_metric, ArcKind, Distribution, MetricExpr, Net, NetDef, TransitionKind};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelFileError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid net:\n{0}")]
    Invalid(gspn_core::ValidationReport),
}

#[derive(Debug, Clone)]
pub struct ModelFile {
    pub net: Net,
    /// Named predicates in declaration order.
    pub metrics: Vec<(String, MetricExpr)>,
    /// Values after overrides.
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum Section {
    Params,
    Places,
    Transitions,
    Arcs,
    Metrics,
}

impl Section {
    fn from_name(s: &str) -> Option<Section> {
        Some(match s {
            "params" => Section::Params,
            "places" => Section::Places,
            "transitions" => Section::Transitions,
            "arcs" => Section::Arcs,
            "metrics" => Section::Metrics,
            _ => return None,
        })
    }
}

struct Line<'a> {
    number: usize,
    /// Byte offset of `text` within the raw line.
    indent: usize,
    text: &'a str,
}

impl Line<'_> {
    fn err<T>(&self, offset: usize, message: impl Into<String>) -> Result<T, ModelFileError> {
        Err(ModelFileError::Syntax {
            line: self.number,
            column: self.indent + offset + 1,
            message: message.into(),
        })
    }

    fn offset_of(&self, sub: &str) -> usize {
        sub.as_ptr() as usize - self.text.as_ptr() as usize
    }

    /// `name = value`
    fn assignment(&self) -> Result<(&str, &str), ModelFileError> {
        let Some(eq) = self.text.find('=') else {
            return self.err(0, "expected 'name = value'");
        };
        let name = self.text[..eq].trim();
        let value = self.text[eq + 1..].trim();
        if !is_identifier(name) {
            return self.err(0, format!("invalid name '{name}'"));
        }
        if value.is_empty() {
            return self.err(eq + 1, "missing value");
        }
        Ok((name, value))
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub fn parse_model_file(text: &str) -> Result<ModelFile, ModelFileError> {
    parse_model_file_with(text, &BTreeMap::new())
}

/// Parses `text`, replacing `[params]` values by `overrides` before any
/// `$param` reference is resolved.
pub fn parse_model_file_with(text: &str, overrides: &BTreeMap<String, f64>) -> Result<ModelFile, ModelFileError> {
    let mut section: Option<Section> = None;
    let mut seen_sections = HashSet::new();
    let mut params: BTreeMap<String, f64> = BTreeMap::new();
    let mut def = NetDef::new();
    let mut metrics: Vec<(String, MetricExpr)> = Vec::new();
    let mut places: HashMap<String, usize> = HashMap::new();
    let mut transitions: HashMap<String, usize> = HashMap::new();
    let mut arcs: HashSet<(ArcKind, String, String)> = HashSet::new();
    // Transition lines are resolved after all params are known.
    let mut pending: Vec<Line> = Vec::new();
    let mut arc_lines: Vec<Line> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let trimmed = raw.trim_start();
        let line = Line {
            number: i + 1,
            indent: raw.len() - trimmed.len(),
            text: trimmed.trim_end(),
        };
        if line.text.is_empty() || line.text.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.text.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return line.err(0, "unterminated section header");
            };
            let Some(s) = Section::from_name(name.trim()) else {
                return line.err(1, format!("unknown section '{}'", name.trim()));
            };
            if !seen_sections.insert(s) {
                return line.err(1, format!("duplicate section [{}]", name.trim()));
            }
            section = Some(s);
            continue;
        }
        match section {
            None => return line.err(0, "entry before any section header"),
            Some(Section::Params) => {
                let (name, value) = line.assignment()?;
                let v = match value.parse::<f64>() {
                    Ok(v) if v > 0.0 && v.is_finite() => v,
                    _ => {
                        return line.err(
                            line.offset_of(value),
                            format!("parameter {name} must be a positive number"),
                        )
                    }
                };
                if params.insert(name.to_string(), v).is_some() {
                    return line.err(0, format!("duplicate parameter {name}"));
                }
            }
            Some(Section::Places) => {
                let (name, value) = line.assignment()?;
                let Ok(tokens) = value.parse::<u32>() else {
                    return line.err(line.offset_of(value), "initial tokens must be a non-negative integer");
                };
                if places.insert(name.to_string(), def.places.len()).is_some() {
                    return line.err(0, format!("duplicate place {name}"));
                }
                def.places.push(PlaceDef {
                    name: name.to_string(),
                    initial_tokens: tokens,
                });
            }
            Some(Section::Transitions) => {
                let Some(colon) = line.text.find(':') else {
                    return line.err(0, "expected 'name: kind ...'");
                };
                let name = line.text[..colon].trim();
                if !is_identifier(name) {
                    return line.err(0, format!("invalid name '{name}'"));
                }
                if transitions.insert(name.to_string(), pending.len()).is_some() {
                    return line.err(0, format!("duplicate transition {name}"));
                }
                pending.push(line);
            }
            Some(Section::Arcs) => arc_lines.push(line),
            Some(Section::Metrics) => {
                let (name, value) = line.assignment()?;
                let expr = match parse_metric(value) {
                    Ok(e) => e,
                    Err(gspn_core::MetricError::Syntax { offset, message }) => {
                        return line.err(line.offset_of(value) + offset, message)
                    }
                    Err(e) => return line.err(line.offset_of(value), e.to_string()),
                };
                if metrics.iter().any(|(n, _)| n == name) {
                    return line.err(0, format!("duplicate metric {name}"));
                }
                metrics.push((name.to_string(), expr));
            }
        }
    }

    for (name, v) in overrides {
        match params.get_mut(name) {
            Some(slot) => *slot = *v,
            None => {
                return Err(ModelFileError::Syntax {
                    line: 0,
                    column: 0,
                    message: format!("unknown parameter {name} in override"),
                })
            }
        }
    }

    for line in &pending {
        def.transitions.push(parse_transition(line, &params)?);
    }

    for line in &arc_lines {
        let arc = parse_arc(line, &places, &transitions)?;
        if !arcs.insert((arc.kind, arc.place.clone(), arc.transition.clone())) {
            return line.err(0, "duplicate arc");
        }
        def.arcs.push(arc);
    }

    let report = gspn_core::validate_net(&def);
    if !report.is_ok() {
        return Err(ModelFileError::Invalid(report));
    }
    let net = Net::from_def(def).map_err(|e| match e {
        gspn_core::NetError::Invalid(r) => ModelFileError::Invalid(r),
        other => unreachable!("building a validated net: {other}"),
    })?;
    for (name, expr) in &metrics {
        if let Err(e) = gspn_core::bind(expr, &net) {
            return Err(ModelFileError::Syntax {
                line: 0,
                column: 0,
                message: format!("metric {name}: {e}"),
            });
        }
    }
    Ok(ModelFile { net, metrics, params })
}

/// Splits `k=v` words, keeping double-quoted values intact. Yields
/// (value offset, key, value); a bare word has an empty key.
type Word<'a> = (usize, &'a str, &'a str);

fn words(s: &str) -> Result<Vec<Word<'_>>, (usize, String)> {
    let mut out = Vec::new();
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'=' {
            i += 1;
        }
        if i == bytes.len() || bytes[i] != b'=' {
            out.push((start, "", &s[start..i]));
            continue;
        }
        let key = &s[start..i];
        i += 1;
        if i < bytes.len() && bytes[i] == b'"' {
            let Some(len) = s[i + 1..].find('"') else {
                return Err((i, "unterminated string".into()));
            };
            out.push((i + 1, key, &s[i + 1..i + 1 + len]));
            i += len + 2;
        } else {
            let vstart = i;
            while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            out.push((vstart, key, &s[vstart..i]));
        }
    }
    Ok(out)
}

fn parse_transition(line: &Line, params: &BTreeMap<String, f64>) -> Result<TransitionDef, ModelFileError> {
    let colon = line.text.find(':').expect("checked while scanning");
    let name = line.text[..colon].trim().to_string();
    let body = &line.text[colon + 1..];
    let base = colon + 1;
    let items = match words(body) {
        Ok(w) => w,
        Err((off, msg)) => return line.err(base + off, msg),
    };
    let Some(&(kind_off, "", kind)) = items.first() else {
        return line.err(base, "missing transition kind");
    };
    let mut attrs: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for &(off, key, value) in &items[1..] {
        if key.is_empty() {
            return line.err(base + off, format!("unexpected '{value}'"));
        }
        if attrs.insert(key, (base + off, value)).is_some() {
            return line.err(base + off, format!("duplicate attribute {key}"));
        }
    }
    let allowed: &[&str] = match kind {
        "exponential" => &["mean", "guard"],
        "deterministic" => &["delay", "guard"],
        "immediate" => &["priority", "weight", "guard"],
        other => {
            return line.err(
                base + kind_off,
                format!("unknown transition kind '{other}' (expected exponential, deterministic or immediate)"),
            )
        }
    };
    if let Some((key, (off, _))) = attrs.iter().find(|(k, _)| !allowed.contains(k)) {
        return line.err(*off, format!("unknown attribute {key} for {kind} transition"));
    }

    let mut param = None;
    let mut delay = |key: &str| -> Result<f64, ModelFileError> {
        let Some(&(off, v)) = attrs.get(key) else {
            return line.err(base + kind_off, format!("{kind} transition needs {key}="));
        };
        if let Some(p) = v.strip_prefix('$') {
            return match params.get(p) {
                Some(&x) => {
                    param = Some(p.to_string());
                    Ok(x)
                }
                None => line.err(off, format!("unknown parameter ${p}")),
            };
        }
        match v.parse::<f64>() {
            Ok(x) => Ok(x),
            Err(_) => line.err(off, format!("invalid number '{v}'")),
        }
    };
    let kind = match kind {
        "exponential" => TransitionKind::Timed(Distribution::Exponential { mean: delay("mean")? }),
        "deterministic" => TransitionKind::Timed(Distribution::Deterministic { delay: delay("delay")? }),
        _ => {
            let priority = match attrs.get("priority") {
                None => 1,
                Some(&(off, v)) => match v.parse::<u32>() {
                    Ok(p) => p,
                    Err(_) => return line.err(off, format!("invalid priority '{v}'")),
                },
            };
            let weight = match attrs.get("weight") {
                None => 1.0,
                Some(&(off, v)) => match v.parse::<f64>() {
                    Ok(w) => w,
                    Err(_) => return line.err(off, format!("invalid weight '{v}'")),
                },
            };
            TransitionKind::Immediate { priority, weight }
        }
    };
    let guard = match attrs.get("guard") {
        None => None,
        Some(&(off, g)) => match parse_metric(g) {
            Ok(_) => Some(g.to_string()),
            Err(gspn_core::MetricError::Syntax { offset, message }) => {
                return line.err(off + offset, format!("invalid guard: {message}"));
            }
            Err(e) => return line.err(off, format!("invalid guard: {e}")),
        },
    };
    Ok(TransitionDef {
        name,
        kind,
        guard,
        param,
    })
}

fn parse_arc(
    line: &Line,
    places: &HashMap<String, usize>,
    transitions: &HashMap<String, usize>,
) -> Result<ArcDef, ModelFileError> {
    let text = line.text;
    let (body, multiplicity) = match text.find('*') {
        Some(star) => {
            let m = text[star + 1..].trim();
            match m.parse::<u32>() {
                Ok(k) if k > 0 => (&text[..star], k),
                _ => return line.err(star + 1, format!("invalid multiplicity '{m}'")),
            }
        }
        None => (text, 1),
    };
    let (op_at, inhibitor) = match (body.find("->"), body.find("-o")) {
        (Some(i), _) => (i, false),
        (None, Some(i)) => (i, true),
        (None, None) => return line.err(0, "expected 'a -> b' or 'place -o transition'"),
    };
    let lhs = body[..op_at].trim();
    let rhs = body[op_at + 2..].trim();
    let rhs_off = line.offset_of(rhs);
    for (name, off) in [(lhs, 0), (rhs, rhs_off)] {
        if !places.contains_key(name) && !transitions.contains_key(name) {
            return line.err(off, format!("unknown place or transition '{name}'"));
        }
    }
    let (kind, place, transition) = match (
        places.contains_key(lhs) && transitions.contains_key(rhs),
        transitions.contains_key(lhs) && places.contains_key(rhs),
    ) {
        (true, _) if inhibitor => (ArcKind::Inhibitor, lhs, rhs),
        (true, _) => (ArcKind::Input, lhs, rhs),
        (false, true) if !inhibitor => (ArcKind::Output, rhs, lhs),
        (false, true) => return line.err(0, "inhibitor arcs go from a place to a transition"),
        _ => return line.err(0, "arc must connect place and transition"),
    };
    Ok(ArcDef {
        kind,
        place: place.to_string(),
        transition: transition.to_string(),
        multiplicity,
    })
}

/// Canonical text for `net`: sections in fixed order, parameters sorted by
/// name, places, transitions and arcs in declaration order. Delays of
/// transitions tied to a parameter are written as `$param`.
pub fn serialize(net: &Net, params: &BTreeMap<String, f64>, metrics: &[(String, MetricExpr)]) -> String {
    let mut s = String::new();
    let used: BTreeMap<&str, f64> = params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    if !used.is_empty() {
        s.push_str("[params]\n");
        for (k, v) in &used {
            let _ = writeln!(s, "{k} = {v}");
        }
        s.push('\n');
    }
    s.push_str("[places]\n");
    for p in net.places() {
        let _ = writeln!(s, "{} = {}", p.name, p.initial_tokens);
    }
    s.push_str("\n[transitions]\n");
    for t in net.transitions() {
        let value = |x: f64| match &t.param {
            Some(p) if params.get(p) == Some(&x) => format!("${p}"),
            _ => format!("{x}"),
        };
        let _ = match t.kind {
            TransitionKind::Timed(Distribution::Exponential { mean }) => {
                write!(s, "{}: exponential mean={}", t.name, value(mean))
            }
            TransitionKind::Timed(Distribution::Deterministic { delay }) => {
                write!(s, "{}: deterministic delay={}", t.name, value(delay))
            }
            TransitionKind::Immediate { priority, weight } => {
                write!(s, "{}: immediate priority={priority} weight={weight}", t.name)
            }
        };
        if let Some(g) = &t.guard {
            let _ = write!(s, " guard=\"{g}\"");
        }
        s.push('\n');
    }
    s.push_str("\n[arcs]\n");
    for a in net.arcs() {
        let p = &net.place(a.place).name;
        let t = &net.transition(a.transition).name;
        let _ = match a.kind {
            ArcKind::Input => write!(s, "{p} -> {t}"),
            ArcKind::Output => write!(s, "{t} -> {p}"),
            ArcKind::Inhibitor => write!(s, "{p} -o {t}"),
        };
        if a.multiplicity != 1 {
            let _ = write!(s, " *{}", a.multiplicity);
        }
        s.push('\n');
    }
    if !metrics.is_empty() {
        s.push_str("\n[metrics]\n");
        for (name, expr) in metrics {
            let _ = writeln!(s, "{name} = {}", expr.to_metric_string());
        }
    }
    s
}
