#![allow(dead_code)]

use std::collections::BTreeSet;

use gspn_core::{ArcKind, Net, TransitionKind};

type Shape = (
    BTreeSet<(String, u32)>,
    BTreeSet<(String, String, String)>,
    BTreeSet<(String, String, String, u32)>,
);

/// Name-level description of a net, with parallel arcs merged.
fn shape(net: &Net) -> Shape {
    let places = net
        .places()
        .iter()
        .map(|p| (p.name.clone(), p.initial_tokens))
        .collect();
    let transitions = net
        .transitions()
        .iter()
        .map(|t| {
            let kind = match t.kind {
                TransitionKind::Immediate { priority, weight } => format!("imm {priority} {weight:e}"),
                TransitionKind::Timed(d) => format!("{d:?}"),
            };
            let guard = t.guard.as_ref().map(|g| g.to_string()).unwrap_or_default();
            (t.name.clone(), kind, guard)
        })
        .collect();
    let mut merged: std::collections::BTreeMap<(String, String, String), u32> = Default::default();
    for a in net.arcs() {
        let key = (
            format!("{:?}", a.kind),
            net.place(a.place).name.clone(),
            net.transition(a.transition).name.clone(),
        );
        let e = merged
            .entry(key)
            .or_insert(if a.kind == ArcKind::Inhibitor { u32::MAX } else { 0 });
        *e = if a.kind == ArcKind::Inhibitor {
            (*e).min(a.multiplicity)
        } else {
            *e + a.multiplicity
        };
    }
    let arcs = merged.into_iter().map(|((k, p, t), m)| (k, p, t, m)).collect();
    (places, transitions, arcs)
}

/// Same places, transitions and arcs by name, regardless of declaration order.
pub fn isomorphic(a: &Net, b: &Net) -> bool {
    shape(a) == shape(b)
}
