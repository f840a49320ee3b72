//! Reachability graph construction and reduction to a tangible CTMC.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::metric::BoundMetric;
use crate::net::{Distribution, Marking, Net, TransitionId, TransitionKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateSpaceError {
    #[error("state space exceeds {limit} states")]
    Overflow { limit: usize },
    #[error("place {place} reached {tokens} tokens (cap {cap}); the net is probably unbounded")]
    Unbounded { place: String, tokens: u32, cap: u32 },
    #[error("cycle of immediate transitions through markings: {}", .0.join(" -> "))]
    VanishingCycle(Vec<String>),
    #[error(
        "transition {0} has a deterministic delay; analytic solution needs exponential delays \
         (use the simulator or the exponential variant of the model)"
    )]
    NonExponential(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreOptions {
    pub max_states: usize,
    /// Any place exceeding this many tokens aborts exploration.
    pub token_cap: u32,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            max_states: 1_000_000,
            token_cap: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeLabel {
    /// Timed firing, per hour.
    Rate(f64),
    /// Immediate firing, normalized weight.
    Probability(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub transition: TransitionId,
    pub label: EdgeLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphState {
    pub marking: Marking,
    pub vanishing: bool,
}

/// States in BFS discovery order; state 0 is the initial marking.
#[derive(Debug, Clone)]
pub struct ReachabilityGraph {
    pub states: Vec<GraphState>,
    pub edges: Vec<Edge>,
    pub initial: usize,
}

impl ReachabilityGraph {
    pub fn tangible_count(&self) -> usize {
        self.states.iter().filter(|s| !s.vanishing).count()
    }

    pub fn vanishing_count(&self) -> usize {
        self.states.len() - self.tangible_count()
    }

    pub fn outgoing(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.states.len()];
        for (i, e) in self.edges.iter().enumerate() {
            out[e.source].push(i);
        }
        out
    }

    /// Graphviz rendering: tangible states solid, vanishing dashed.
    pub fn to_dot(&self, net: &Net) -> String {
        let mut s = String::from("digraph reachability {\n  node [shape=box];\n");
        for (i, st) in self.states.iter().enumerate() {
            let style = if st.vanishing { "dashed" } else { "solid" };
            let init = if i == self.initial { ", penwidth=2" } else { "" };
            let _ = writeln!(
                s,
                "  s{i} [label=\"s{i}\\n{}\", style={style}{init}];",
                net.describe_marking(&st.marking)
            );
        }
        for e in &self.edges {
            let name = &net.transition(e.transition).name;
            let label = match e.label {
                EdgeLabel::Rate(r) => format!("{name}\\nrate={r:.6e}"),
                EdgeLabel::Probability(p) => format!("{name}\\np={p}"),
            };
            let style = match e.label {
                EdgeLabel::Rate(_) => "solid",
                EdgeLabel::Probability(_) => "dashed",
            };
            let _ = writeln!(
                s,
                "  s{} -> s{} [label=\"{label}\", style={style}];",
                e.source, e.target
            );
        }
        s.push_str("}\n");
        s
    }
}

/// Breadth-first exploration from the initial marking.
pub fn explore(net: &Net, max_states: usize) -> Result<ReachabilityGraph, StateSpaceError> {
    explore_with(
        net,
        &ExploreOptions {
            max_states,
            ..ExploreOptions::default()
        },
    )
}

pub fn explore_with(net: &Net, opts: &ExploreOptions) -> Result<ReachabilityGraph, StateSpaceError> {
    let mut index: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut states: Vec<GraphState> = Vec::new();
    let mut edges = Vec::new();

    let check_cap = |tokens: &[u32]| -> Result<(), StateSpaceError> {
        if let Some((p, &k)) = tokens.iter().enumerate().find(|(_, &k)| k > opts.token_cap) {
            return Err(StateSpaceError::Unbounded {
                place: net.places()[p].name.clone(),
                tokens: k,
                cap: opts.token_cap,
            });
        }
        Ok(())
    };

    let init = net.initial_marking().tokens().to_vec();
    check_cap(&init)?;
    index.insert(init.clone(), 0);
    states.push(GraphState {
        marking: Marking::new(init),
        vanishing: false,
    });
    if opts.max_states == 0 {
        return Err(StateSpaceError::Overflow { limit: 0 });
    }

    let mut head = 0;
    while head < states.len() {
        let tokens = states[head].marking.tokens().to_vec();
        let enabled = net.enabled_unchecked(&tokens);
        let vanishing = enabled.first().is_some_and(|t| net.transition(*t).kind.is_immediate());
        states[head].vanishing = vanishing;
        let total_weight: f64 = if vanishing {
            enabled
                .iter()
                .map(|t| match net.transition(*t).kind {
                    TransitionKind::Immediate { weight, .. } => weight,
                    TransitionKind::Timed(_) => 0.0,
                })
                .sum()
        } else {
            0.0
        };
        for t in enabled {
            let label = match net.transition(t).kind {
                TransitionKind::Immediate { weight, .. } => EdgeLabel::Probability(weight / total_weight),
                TransitionKind::Timed(d) => EdgeLabel::Rate(1.0 / d.mean()),
            };
            let next = net.fire_unchecked(&tokens, t.0);
            let target = match index.get(&next) {
                Some(&i) => i,
                None => {
                    check_cap(&next)?;
                    if states.len() >= opts.max_states {
                        return Err(StateSpaceError::Overflow { limit: opts.max_states });
                    }
                    let i = states.len();
                    index.insert(next.clone(), i);
                    states.push(GraphState {
                        marking: Marking::new(next),
                        vanishing: false,
                    });
                    i
                }
            };
            edges.push(Edge {
                source: head,
                target,
                transition: t,
                label,
            });
        }
        head += 1;
    }

    Ok(ReachabilityGraph {
        states,
        edges,
        initial: 0,
    })
}

/// Sparse CTMC generator: off-diagonal rates per row plus the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    rows: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
}

impl Generator {
    /// Builds a generator from off-diagonal entries; duplicate (row, col)
    /// entries are summed and self-loops dropped.
    pub fn from_rates(n: usize, entries: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut maps: Vec<HashMap<usize, f64>> = vec![HashMap::new(); n];
        for (i, j, r) in entries {
            if i != j && r != 0.0 {
                *maps[i].entry(j).or_default() += r;
            }
        }
        let rows: Vec<Vec<(usize, f64)>> = maps
            .into_iter()
            .map(|m| {
                let mut v: Vec<(usize, f64)> = m.into_iter().collect();
                v.sort_by_key(|&(j, _)| j);
                v
            })
            .collect();
        let diag = rows.iter().map(|r| -r.iter().map(|&(_, x)| x).sum::<f64>()).collect();
        Generator { rows, diag }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.diag[i]
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        -self.diag[i]
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.diag.iter().fold(0.0_f64, |m, &d| m.max(-d))
    }

    /// Row vector times generator: `(x Q)_j`.
    pub fn left_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = x.iter().zip(&self.diag).map(|(a, d)| a * d).collect();
        for (i, row) in self.rows.iter().enumerate() {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for &(j, r) in row {
                out[j] += xi * r;
            }
        }
        out
    }

    /// Copy with every listed state made absorbing.
    pub fn with_absorbing(&self, absorbing: &[bool]) -> Generator {
        let mut g = self.clone();
        for (i, &a) in absorbing.iter().enumerate() {
            if a {
                g.rows[i].clear();
                g.diag[i] = 0.0;
            }
        }
        g
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            for &(j, r) in &self.rows[i] {
                m[(i, j)] = r;
            }
        }
        m
    }
}

/// Tangible-state CTMC.
#[derive(Debug, Clone)]
pub struct Ctmc {
    pub states: Vec<Marking>,
    /// Index of each tangible state in the source reachability graph.
    pub graph_index: Vec<usize>,
    pub generator: Generator,
    pub initial: Vec<f64>,
    /// Sum of enabled timed rates per state, including firings that return
    /// to the same tangible state (those cancel in the generator).
    pub total_rates: Vec<f64>,
}

impl Ctmc {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state_of(&self, m: &Marking) -> Option<usize> {
        self.states.iter().position(|s| s == m)
    }
}

/// Up/down classification of tangible states under a predicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatePartition {
    pub up: Vec<bool>,
}

impl StatePartition {
    pub fn up_states(&self) -> Vec<usize> {
        (0..self.up.len()).filter(|&i| self.up[i]).collect()
    }

    pub fn down_states(&self) -> Vec<usize> {
        (0..self.up.len()).filter(|&i| !self.up[i]).collect()
    }
}

enum Visit {
    InProgress,
    Done(Vec<(usize, f64)>),
}

/// Distribution over tangible graph states reached from vanishing state `v`.
fn absorb(
    g: &ReachabilityGraph,
    out: &[Vec<usize>],
    v: usize,
    memo: &mut HashMap<usize, Visit>,
    stack: &mut Vec<usize>,
    net: &Net,
) -> Result<Vec<(usize, f64)>, StateSpaceError> {
    match memo.get(&v) {
        Some(Visit::Done(d)) => return Ok(d.clone()),
        Some(Visit::InProgress) => {
            let start = stack.iter().position(|&s| s == v).unwrap_or(0);
            let mut cycle: Vec<String> = stack[start..]
                .iter()
                .map(|&s| format!("[{}]", net.describe_marking(&g.states[s].marking)))
                .collect();
            cycle.push(format!("[{}]", net.describe_marking(&g.states[v].marking)));
            return Err(StateSpaceError::VanishingCycle(cycle));
        }
        None => {}
    }
    memo.insert(v, Visit::InProgress);
    stack.push(v);
    let mut acc: HashMap<usize, f64> = HashMap::new();
    for &ei in &out[v] {
        let e = &g.edges[ei];
        let EdgeLabel::Probability(p) = e.label else { continue };
        if g.states[e.target].vanishing {
            for (t, q) in absorb(g, out, e.target, memo, stack, net)? {
                *acc.entry(t).or_default() += p * q;
            }
        } else {
            *acc.entry(e.target).or_default() += p;
        }
    }
    stack.pop();
    let mut dist: Vec<(usize, f64)> = acc.into_iter().collect();
    dist.sort_by_key(|&(t, _)| t);
    memo.insert(v, Visit::Done(dist.clone()));
    Ok(dist)
}

/// Collapses vanishing states: timed rates into a vanishing state are spread
/// over its tangible descendants by path probability.
pub fn eliminate_vanishing(g: &ReachabilityGraph, net: &Net) -> Result<Ctmc, StateSpaceError> {
    let out = g.outgoing();
    let mut memo = HashMap::new();
    let mut stack = Vec::new();

    let mut tangible_index = vec![usize::MAX; g.states.len()];
    let mut graph_index = Vec::new();
    for (i, s) in g.states.iter().enumerate() {
        if !s.vanishing {
            tangible_index[i] = graph_index.len();
            graph_index.push(i);
        }
    }
    let n = graph_index.len();

    let mut resolve = |target: usize| -> Result<Vec<(usize, f64)>, StateSpaceError> {
        if g.states[target].vanishing {
            absorb(g, &out, target, &mut memo, &mut stack, net)
        } else {
            Ok(vec![(target, 1.0)])
        }
    };

    let mut entries = Vec::new();
    let mut total_rates = vec![0.0; n];
    for (ti, &gi) in graph_index.iter().enumerate() {
        for &ei in &out[gi] {
            let e = &g.edges[ei];
            let EdgeLabel::Rate(rate) = e.label else { continue };
            total_rates[ti] += rate;
            for (target, p) in resolve(e.target)? {
                entries.push((ti, tangible_index[target], rate * p));
            }
        }
    }

    let mut initial = vec![0.0; n];
    for (target, p) in resolve(g.initial)? {
        initial[tangible_index[target]] += p;
    }

    Ok(Ctmc {
        states: graph_index.iter().map(|&i| g.states[i].marking.clone()).collect(),
        graph_index,
        generator: Generator::from_rates(n, entries),
        initial,
        total_rates,
    })
}

/// Rejects nets the analytic pipeline cannot represent exactly.
pub fn check_exponential(net: &Net) -> Result<(), StateSpaceError> {
    for t in net.transitions() {
        if let TransitionKind::Timed(Distribution::Deterministic { .. }) = t.kind {
            return Err(StateSpaceError::NonExponential(t.name.clone()));
        }
    }
    Ok(())
}

/// Explores `net` and reduces it to its tangible CTMC.
pub fn build_ctmc(net: &Net, opts: &ExploreOptions) -> Result<Ctmc, StateSpaceError> {
    check_exponential(net)?;
    let g = explore_with(net, opts)?;
    eliminate_vanishing(&g, net)
}

pub fn classify_states(ctmc: &Ctmc, bm: &BoundMetric) -> StatePartition {
    StatePartition {
        up: ctmc.states.iter().map(|m| bm.eval(m)).collect(),
    }
}
