//! Marking predicates in `P{...}` notation.
//!
//! The same expression language is used for transition guards and for the
//! up/down predicates that define availability and reliability. Terms are
//! token counts (`#Place`) or non-negative integer literals; comparisons are
//! combined with `AND`, `OR` and `NOT` (keywords are case-insensitive).
//!
//! ```text
//! metric := 'P' '{' expr '}' | expr
//! expr   := and ( OR and )*
//! and    := not ( AND not )*
//! not    := NOT not | atom
//! atom   := '(' expr ')' | term relop term
//! term   := '#' IDENT | INTEGER
//! relop  := '>' | '>=' | '<' | '<=' | '=' | '<>'
//! ```

use std::fmt;

use thiserror::Error;

use crate::net::{Marking, Net};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown place{} {}", if .0.len() > 1 { "s" } else { "" }, .0.join(", "))]
    UnknownPlaces(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelOp {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
    Ne,
}

impl RelOp {
    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Eq => "=",
            RelOp::Ne => "<>",
        }
    }

    fn apply(self, lhs: i64, rhs: i64) -> bool {
        match self {
            RelOp::Gt => lhs > rhs,
            RelOp::Ge => lhs >= rhs,
            RelOp::Lt => lhs < rhs,
            RelOp::Le => lhs <= rhs,
            RelOp::Eq => lhs == rhs,
            RelOp::Ne => lhs != rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    /// `#Place`
    TokenCount(String),
    IntLiteral(i64),
}

/// Parsed, unbound predicate.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MetricExpr {
    Or(Vec<MetricExpr>),
    And(Vec<MetricExpr>),
    Not(Box<MetricExpr>),
    Compare { op: RelOp, lhs: Term, rhs: Term },
}

impl MetricExpr {
    pub fn compare(op: RelOp, lhs: Term, rhs: Term) -> Self {
        MetricExpr::Compare { op, lhs, rhs }
    }

    /// Place names referenced by the expression, in first-occurrence order.
    pub fn place_names(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            MetricExpr::Or(xs) | MetricExpr::And(xs) => xs.iter().for_each(|x| x.collect_names(out)),
            MetricExpr::Not(x) => x.collect_names(out),
            MetricExpr::Compare { lhs, rhs, .. } => {
                for t in [lhs, rhs] {
                    if let Term::TokenCount(name) = t {
                        if !out.contains(&name.as_str()) {
                            out.push(name);
                        }
                    }
                }
            }
        }
    }

    /// Resolves place names against an ordered list of names (index = place id).
    ///
    /// Resolution prefers an exact match and otherwise accepts a unique
    /// case-insensitive match.
    pub fn bind_names<S: AsRef<str>>(&self, names: &[S]) -> Result<BoundMetric, MetricError> {
        let mut unknown = Vec::new();
        let root = bind_node(self, names, &mut unknown);
        if unknown.is_empty() {
            Ok(BoundMetric {
                expr: self.clone(),
                root,
            })
        } else {
            Err(MetricError::UnknownPlaces(unknown))
        }
    }

    /// Text form wrapped in `P{...}`.
    pub fn to_metric_string(&self) -> String {
        format!("P{{{self}}}")
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::TokenCount(name) => write!(f, "#{name}"),
            Term::IntLiteral(v) => write!(f, "{v}"),
        }
    }
}

impl fmt::Display for MetricExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &MetricExpr) -> fmt::Result {
            match e {
                MetricExpr::Or(_) | MetricExpr::And(_) => write!(f, "({e})"),
                _ => write!(f, "{e}"),
            }
        }
        match self {
            MetricExpr::Or(xs) | MetricExpr::And(xs) => {
                let sep = if matches!(self, MetricExpr::Or(_)) {
                    " OR "
                } else {
                    " AND "
                };
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    child(f, x)?;
                }
                Ok(())
            }
            MetricExpr::Not(x) => {
                f.write_str("NOT ")?;
                child(f, x)
            }
            MetricExpr::Compare { op, lhs, rhs } => write!(f, "{lhs} {} {rhs}", op.symbol()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum BoundTerm {
    Count(usize),
    Literal(i64),
}

#[derive(Debug, Clone, PartialEq)]
enum BoundNode {
    Or(Vec<BoundNode>),
    And(Vec<BoundNode>),
    Not(Box<BoundNode>),
    Compare(RelOp, BoundTerm, BoundTerm),
}

/// A predicate whose place references are resolved to place indices.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundMetric {
    expr: MetricExpr,
    root: BoundNode,
}

impl BoundMetric {
    pub fn expr(&self) -> &MetricExpr {
        &self.expr
    }

    pub fn eval(&self, marking: &Marking) -> bool {
        self.eval_tokens(marking.tokens())
    }

    pub fn eval_tokens(&self, tokens: &[u32]) -> bool {
        eval_node(&self.root, tokens)
    }
}

fn resolve<S: AsRef<str>>(name: &str, names: &[S]) -> Option<usize> {
    if let Some(i) = names.iter().position(|n| n.as_ref() == name) {
        return Some(i);
    }
    let mut hits = names
        .iter()
        .enumerate()
        .filter(|(_, n)| n.as_ref().eq_ignore_ascii_case(name));
    match (hits.next(), hits.next()) {
        (Some((i, _)), None) => Some(i),
        _ => None,
    }
}

fn bind_node<S: AsRef<str>>(e: &MetricExpr, names: &[S], unknown: &mut Vec<String>) -> BoundNode {
    let mut term = |t: &Term| match t {
        Term::IntLiteral(v) => BoundTerm::Literal(*v),
        Term::TokenCount(name) => match resolve(name, names) {
            Some(i) => BoundTerm::Count(i),
            None => {
                if !unknown.contains(name) {
                    unknown.push(name.clone());
                }
                BoundTerm::Count(usize::MAX)
            }
        },
    };
    match e {
        MetricExpr::Compare { op, lhs, rhs } => {
            let l = term(lhs);
            let r = term(rhs);
            BoundNode::Compare(*op, l, r)
        }
        MetricExpr::Or(xs) => BoundNode::Or(xs.iter().map(|x| bind_node(x, names, unknown)).collect()),
        MetricExpr::And(xs) => BoundNode::And(xs.iter().map(|x| bind_node(x, names, unknown)).collect()),
        MetricExpr::Not(x) => BoundNode::Not(Box::new(bind_node(x, names, unknown))),
    }
}

fn eval_node(node: &BoundNode, tokens: &[u32]) -> bool {
    let value = |t: &BoundTerm| match t {
        BoundTerm::Count(i) => i64::from(tokens[*i]),
        BoundTerm::Literal(v) => *v,
    };
    match node {
        BoundNode::Or(xs) => xs.iter().any(|x| eval_node(x, tokens)),
        BoundNode::And(xs) => xs.iter().all(|x| eval_node(x, tokens)),
        BoundNode::Not(x) => !eval_node(x, tokens),
        BoundNode::Compare(op, l, r) => op.apply(value(l), value(r)),
    }
}

/// Parses `P{ expr }` or a bare `expr`.
pub fn parse_metric(text: &str) -> Result<MetricExpr, MetricError> {
    let tokens = lex(text)?;
    let mut p = Parser {
        tokens: &tokens,
        pos: 0,
    };
    let wrapped = matches!(
        (p.peek_kind(), p.peek_kind_at(1)),
        (Some(Tok::Ident(id)), Some(Tok::LBrace)) if id.eq_ignore_ascii_case("P")
    );
    if wrapped {
        p.pos += 2;
    }
    let expr = p.expr()?;
    if wrapped {
        p.expect(&Tok::RBrace, "'}'")?;
    }
    if let Some(tok) = p.tokens.get(p.pos) {
        return Err(MetricError::Syntax {
            offset: tok.offset,
            message: format!("unexpected {}", tok.kind.describe()),
        });
    }
    Ok(expr)
}

/// Binds `expr` against the places of `net`.
pub fn bind(expr: &MetricExpr, net: &Net) -> Result<BoundMetric, MetricError> {
    expr.bind_names(&net.place_names())
}

/// Evaluates a bound predicate on a marking.
pub fn eval_predicate(bm: &BoundMetric, m: &Marking) -> bool {
    bm.eval(m)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Count(String),
    Int(i64),
    Ident(String),
    Rel(RelOp),
    LParen,
    RParen,
    LBrace,
    RBrace,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Count(n) => format!("'#{n}'"),
            Tok::Int(v) => format!("'{v}'"),
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Rel(op) => format!("'{}'", op.symbol()),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self, Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: Tok,
    offset: usize,
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_'
}

fn lex(text: &str) -> Result<Vec<Token>, MetricError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |offset: usize, message: String| MetricError::Syntax { offset, message };
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let kind = match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'(' => {
                i += 1;
                Tok::LParen
            }
            b')' => {
                i += 1;
                Tok::RParen
            }
            b'{' => {
                i += 1;
                Tok::LBrace
            }
            b'}' => {
                i += 1;
                Tok::RBrace
            }
            b'=' => {
                i += 1;
                Tok::Rel(RelOp::Eq)
            }
            b'>' => {
                i += 1;
                if bytes.get(i) == Some(&b'=') {
                    i += 1;
                    Tok::Rel(RelOp::Ge)
                } else {
                    Tok::Rel(RelOp::Gt)
                }
            }
            b'<' => {
                i += 1;
                match bytes.get(i) {
                    Some(b'=') => {
                        i += 1;
                        Tok::Rel(RelOp::Le)
                    }
                    Some(b'>') => {
                        i += 1;
                        Tok::Rel(RelOp::Ne)
                    }
                    _ => Tok::Rel(RelOp::Lt),
                }
            }
            b'#' => {
                i += 1;
                if !bytes.get(i).copied().is_some_and(is_ident_start) {
                    return Err(err(start, "expected place name after '#'".into()));
                }
                while bytes.get(i).copied().is_some_and(is_ident_char) {
                    i += 1;
                }
                Tok::Count(text[start + 1..i].to_string())
            }
            b'0'..=b'9' => {
                while bytes.get(i).is_some_and(u8::is_ascii_digit) {
                    i += 1;
                }
                let v = text[start..i]
                    .parse::<i64>()
                    .map_err(|_| err(start, "integer literal out of range".into()))?;
                Tok::Int(v)
            }
            c if is_ident_start(c) => {
                while bytes.get(i).copied().is_some_and(is_ident_char) {
                    i += 1;
                }
                Tok::Ident(text[start..i].to_string())
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(err(start, format!("unexpected character '{ch}'")));
            }
        };
        out.push(Token { kind, offset: start });
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
}

impl Parser<'_> {
    fn peek_kind(&self) -> Option<&Tok> {
        self.peek_kind_at(0)
    }

    fn peek_kind_at(&self, ahead: usize) -> Option<&Tok> {
        self.tokens.get(self.pos + ahead).map(|t| &t.kind)
    }

    /// Errors at end of input point at the last token read.
    fn error_here(&self, message: String) -> MetricError {
        let offset = match self.tokens.get(self.pos) {
            Some(t) => t.offset,
            None => self.tokens.last().map_or(0, |t| t.offset),
        };
        MetricError::Syntax { offset, message }
    }

    fn found(&self) -> String {
        self.peek_kind()
            .map_or_else(|| "end of input".to_string(), Tok::describe)
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> Result<(), MetricError> {
        if self.peek_kind() == Some(tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error_here(format!("expected {what}, found {}", self.found())))
        }
    }

    fn expr(&mut self) -> Result<MetricExpr, MetricError> {
        let mut items = vec![self.and()?];
        while self.peek_kind().is_some_and(|t| t.is_keyword("OR")) {
            self.pos += 1;
            items.push(self.and()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            MetricExpr::Or(items)
        })
    }

    fn and(&mut self) -> Result<MetricExpr, MetricError> {
        let mut items = vec![self.not()?];
        while self.peek_kind().is_some_and(|t| t.is_keyword("AND")) {
            self.pos += 1;
            items.push(self.not()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            MetricExpr::And(items)
        })
    }

    fn not(&mut self) -> Result<MetricExpr, MetricError> {
        if self.peek_kind().is_some_and(|t| t.is_keyword("NOT")) {
            self.pos += 1;
            return Ok(MetricExpr::Not(Box::new(self.not()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<MetricExpr, MetricError> {
        if self.peek_kind() == Some(&Tok::LParen) {
            self.pos += 1;
            let e = self.expr()?;
            self.expect(&Tok::RParen, "')'")?;
            return Ok(e);
        }
        let lhs = self.term()?;
        let op = match self.peek_kind() {
            Some(Tok::Rel(op)) => *op,
            _ => return Err(self.error_here(format!("expected comparison operator, found {}", self.found()))),
        };
        self.pos += 1;
        let rhs = self.term()?;
        Ok(MetricExpr::Compare { op, lhs, rhs })
    }

    fn term(&mut self) -> Result<Term, MetricError> {
        let t = match self.peek_kind() {
            Some(Tok::Count(name)) => Term::TokenCount(name.clone()),
            Some(Tok::Int(v)) => Term::IntLiteral(*v),
            _ => return Err(self.error_here(format!("expected '#place' or integer, found {}", self.found()))),
        };
        self.pos += 1;
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cmp(op: RelOp, place: &str, v: i64) -> MetricExpr {
        MetricExpr::compare(op, Term::TokenCount(place.into()), Term::IntLiteral(v))
    }

    #[test]
    fn parses_two_conjunct_availability_metric() {
        let e = parse_metric("P{(#VMNext_On > 0) AND (#VR_On > 0)}").unwrap();
        assert_eq!(
            e,
            MetricExpr::And(vec![cmp(RelOp::Gt, "VMNext_On", 0), cmp(RelOp::Gt, "VR_On", 0)])
        );
    }

    #[test]
    fn parses_single_comparison() {
        assert_eq!(parse_metric("P{#On=1}").unwrap(), cmp(RelOp::Eq, "On", 1));
        assert_eq!(parse_metric("#On=1").unwrap(), cmp(RelOp::Eq, "On", 1));
    }

    #[test]
    fn truncated_input_reports_offset_of_dangling_operator() {
        match parse_metric("P{#A >") {
            Err(MetricError::Syntax { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unbalanced_delimiters_are_rejected() {
        assert!(parse_metric("P{(#A > 0}").is_err());
        assert!(parse_metric("P{#A > 0").is_err());
        assert!(parse_metric("(#A > 0))").is_err());
        assert!(parse_metric("#A > 0 }").is_err());
    }

    #[test]
    fn nested_disjunction_under_conjunction() {
        let e = parse_metric("P{(#VR_On>0) AND((#VMNext_ON>0) OR (#VMRed_ON>0) OR (#VMNext2_ON>0) OR (#VMRed2_ON>0))}")
            .unwrap();
        let MetricExpr::And(items) = &e else { panic!("{e:?}") };
        assert_eq!(items.len(), 2);
        assert_eq!(items[0], cmp(RelOp::Gt, "VR_On", 0));
        let MetricExpr::Or(alts) = &items[1] else {
            panic!("{e:?}")
        };
        assert_eq!(alts.len(), 4);
        assert_eq!(alts[3], cmp(RelOp::Gt, "VMRed2_ON", 0));
    }

    #[test]
    fn keywords_are_case_insensitive_and_all_operators_parse() {
        let e = parse_metric("not #a >= 1 and (#b <= 2 or #c <> 3) Or #d < 4").unwrap();
        let MetricExpr::Or(top) = e else { panic!() };
        assert_eq!(top.len(), 2);
        assert_eq!(top[1], cmp(RelOp::Lt, "d", 4));
        assert!(matches!(&top[0], MetricExpr::And(x) if matches!(x[0], MetricExpr::Not(_))));
    }

    #[test]
    fn binding_is_case_insensitive_and_reports_all_unknowns() {
        let names = ["VMNext_On", "VR_On"];
        let e = parse_metric("#VMNext_ON > 0 AND #vr_on > 0").unwrap();
        let bm = e.bind_names(&names).unwrap();
        assert!(bm.eval_tokens(&[1, 1]));
        assert!(!bm.eval_tokens(&[0, 1]));

        let e = parse_metric("#Nope > 0 OR #Other = 1 OR #VR_On > 0").unwrap();
        assert_eq!(
            e.bind_names(&names),
            Err(MetricError::UnknownPlaces(vec!["Nope".into(), "Other".into()]))
        );
        assert_eq!(
            MetricError::UnknownPlaces(vec!["Nope".into()]).to_string(),
            "unknown place Nope"
        );
    }

    #[test]
    fn exact_match_wins_over_case_folded_match() {
        let names = ["a", "A"];
        let bm = parse_metric("#A > 0").unwrap().bind_names(&names).unwrap();
        assert!(bm.eval_tokens(&[0, 1]));
        assert!(!bm.eval_tokens(&[1, 0]));
    }

    #[test]
    fn evaluation_semantics() {
        let names = ["A", "B"];
        let not_a = parse_metric("NOT(#A>0)").unwrap().bind_names(&names).unwrap();
        assert!(not_a.eval_tokens(&[0, 0]));
        assert!(!not_a.eval_tokens(&[2, 0]));
        let ne = parse_metric("#A <> #B").unwrap().bind_names(&names).unwrap();
        assert!(ne.eval_tokens(&[1, 2]));
        assert!(!ne.eval_tokens(&[2, 2]));
        let lit = parse_metric("2 >= 1").unwrap().bind_names(&names).unwrap();
        assert!(lit.eval_tokens(&[0, 0]));
    }

    fn arb_term() -> impl Strategy<Value = Term> {
        prop_oneof![
            (0usize..3).prop_map(|i| Term::TokenCount(["A", "B", "C"][i].to_string())),
            (0i64..4).prop_map(Term::IntLiteral),
        ]
    }

    fn arb_op() -> impl Strategy<Value = RelOp> {
        prop_oneof![
            Just(RelOp::Gt),
            Just(RelOp::Ge),
            Just(RelOp::Lt),
            Just(RelOp::Le),
            Just(RelOp::Eq),
            Just(RelOp::Ne),
        ]
    }

    // Trees in the shape the parser produces: n-ary nodes have >= 2 children.
    fn arb_expr() -> impl Strategy<Value = MetricExpr> {
        let leaf = (arb_op(), arb_term(), arb_term()).prop_map(|(op, lhs, rhs)| MetricExpr::Compare { op, lhs, rhs });
        leaf.prop_recursive(4, 24, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 2..4).prop_map(MetricExpr::Or),
                prop::collection::vec(inner.clone(), 2..4).prop_map(MetricExpr::And),
                inner.prop_map(|e| MetricExpr::Not(Box::new(e))),
            ]
        })
    }

    proptest! {
        #[test]
        fn pretty_print_reparses_to_same_tree(e in arb_expr()) {
            prop_assert_eq!(parse_metric(&e.to_string()).unwrap(), e.clone());
            prop_assert_eq!(parse_metric(&e.to_metric_string()).unwrap(), e);
        }

        #[test]
        fn de_morgan_holds(a in arb_expr(), b in arb_expr(), tokens in prop::collection::vec(0u32..4, 3)) {
            let names = ["A", "B", "C"];
            let lhs = MetricExpr::Not(Box::new(MetricExpr::And(vec![a.clone(), b.clone()])));
            let rhs = MetricExpr::Or(vec![
                MetricExpr::Not(Box::new(a)),
                MetricExpr::Not(Box::new(b)),
            ]);
            let l = lhs.bind_names(&names).unwrap();
            let r = rhs.bind_names(&names).unwrap();
            prop_assert_eq!(l.eval_tokens(&tokens), r.eval_tokens(&tokens));
        }
    }
}
