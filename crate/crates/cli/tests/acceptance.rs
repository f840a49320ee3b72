//! Acceptance criteria for the engine, one PASS/FAIL line each.
//!
//! Run with `cargo test -p gspn-cli --test acceptance`.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gspn_cli::modelfile::{parse_model_file, serialize};
use gspn_core::numerics::{reliability_curve_ctmc, transient};
use gspn_core::zoo::{build_model, build_onoff, Model, ParamSet};
use gspn_core::{
    analyze_availability, bind, build_ctmc, classify_states, explore, parse_metric, probability, simulate_availability,
    ExploreOptions, ModelKind, Net, SimOptions, SolverOptions,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    check(t < limit, format!("runtime {t:.2?} exceeds {limit:?}"))
}

fn model(kind: ModelKind) -> Model {
    build_model(kind, &Default::default(), Default::default()).unwrap()
}

fn availability(net: &Net, m: &Model) -> (f64, f64) {
    let a = analyze_availability(net, &bind(&m.metric, net).unwrap(), &SolverOptions::default()).unwrap();
    (a.report.availability, a.steady.residual)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let p = ParamSet::default();
    let mttfs = [p.mttfc, p.mttfh, p.mttfvm];
    let mttrs = [p.mttrc, p.mttrh, p.mttrvm];
    let mut worst = 0.0_f64;
    for &m in &mttfs {
        for &r in &mttrs {
            let model = build_onoff(m, r).unwrap();
            let (a, _) = availability(&model.net, &model);
            worst = worst.max((a - m / (m + r)).abs());
        }
    }
    check(worst < 1e-10, format!("max error {worst:e}"))?;
    within_time(start, Duration::from_millis(100))?;
    Ok(format!(
        "max |A - mttf/(mttf+mttr)| = {worst:.1e} over {} pairings",
        mttfs.len() * mttrs.len()
    ))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let m = model(ModelKind::Baseline);
    let a = analyze_availability(&m.net, &m.bound_metric(), &SolverOptions::default()).unwrap();
    let r = a.report;
    let elapsed = start.elapsed();
    let detail = format!(
        "availability {:.4}% (target 99.48 +/- 0.03), nines {:.3} (2.28 +/- 0.02), downtime {:.2} h/yr (45.6 +/- 0.3)",
        r.availability * 100.0,
        r.nines,
        r.downtime_hours_per_year
    );
    check(
        (r.availability * 100.0 - 99.48).abs() <= 0.03,
        format!("availability off: {detail}"),
    )?;
    check((r.nines - 2.28).abs() <= 0.02, format!("nines off: {detail}"))?;
    check(
        (r.downtime_hours_per_year - 45.6).abs() <= 0.3,
        format!("downtime off: {detail}"),
    )?;
    check(elapsed < Duration::from_secs(1), format!("runtime {elapsed:.2?}"))?;
    Ok(detail)
}

fn criterion_3() -> Outcome {
    let mut parts = Vec::new();
    let mut failures = Vec::new();
    for (kind, target) in [(ModelKind::HostRedundancy, 99.57), (ModelKind::VmRedundancy, 99.67)] {
        let m = model(kind);
        let (a, _) = availability(&m.net, &m);
        let pct = a * 100.0;
        let delta = pct - target;
        parts.push(format!("{kind} {pct:.4}% (delta {delta:+.4} pp vs {target})"));
        if delta.abs() > 0.15 {
            failures.push(kind.to_string());
        }
    }
    check(
        failures.is_empty(),
        format!("outside tolerance: {failures:?}; {}", parts.join(", ")),
    )?;
    Ok(parts.join(", "))
}

fn criterion_4() -> Outcome {
    let host = availability(&model(ModelKind::HostRedundancy).net, &model(ModelKind::HostRedundancy)).0;
    let vm = availability(&model(ModelKind::VmRedundancy).net, &model(ModelKind::VmRedundancy)).0;
    let combined = model(ModelKind::Combined);
    let (a, _) = availability(&combined.net, &combined);
    check(
        a > host && a > vm,
        format!("combined {a} does not exceed host-red {host} and vm-red {vm}"),
    )?;

    let est = simulate_availability(
        &combined.net,
        &combined.bound_metric(),
        &SimOptions::new(1e5, 200, 2024),
    )
    .unwrap();
    check(
        est.contains(a),
        format!("analytic {a} outside simulated {} +/- {}", est.mean, est.ci95_halfwidth),
    )?;

    let perfect = combined
        .net
        .with_mean("MTTR_VR", 1e-9)
        .and_then(|n| n.with_mean("MTTR_Host2", 1e-9))
        .unwrap();
    let (ap, _) = availability(&perfect, &combined);
    check(ap > 0.9999, format!("near-perfect VR and Host2 give only {ap}"))?;
    Ok(format!(
        "combined {:.4}% > host-red {:.4}%, vm-red {:.4}%; sim {:.4}% +/- {:.4}; near-perfect VR/Host2 {:.5}%",
        a * 100.0,
        host * 100.0,
        vm * 100.0,
        est.mean * 100.0,
        est.ci95_halfwidth * 100.0,
        ap * 100.0
    ))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let opts = SolverOptions::default();
    let mut avail = Vec::new();
    let mut curves = Vec::new();
    for kind in ModelKind::ARCHITECTURES {
        let m = model(kind);
        let metric = m.bound_metric();
        let ctmc = build_ctmc(&m.net, &ExploreOptions::default()).unwrap();
        let steady = gspn_core::steady_state(&ctmc, &opts).unwrap();
        let part = classify_states(&ctmc, &metric);
        avail.push(probability(&steady.distribution, &part));
        curves.push(reliability_curve_ctmc(&ctmc, &part, 3000.0, 50.0, &opts).unwrap());
    }
    check(
        avail.windows(2).all(|w| w[0] < w[1]),
        format!("availability not strictly increasing: {avail:?}"),
    )?;
    let mut equal_rows = 0;
    for row in 0..curves[0].samples.len() {
        let r: Vec<f64> = curves.iter().map(|c| c.samples[row].1).collect();
        let t = curves[0].samples[row].0;
        check(
            r.windows(2).all(|w| w[0] <= w[1] + 1e-9),
            format!("reliability order violated at t = {t}: {r:?}"),
        )?;
        if r.windows(2).all(|w| (w[0] - w[1]).abs() <= 1e-9) {
            equal_rows += 1;
        }
    }
    within_time(start, Duration::from_secs(10))?;
    Ok(format!(
        "A: {}; R(t) ordered at all {} samples ({} with all four equal within 1e-9); {:.2?}",
        avail
            .iter()
            .map(|a| format!("{:.4}%", a * 100.0))
            .collect::<Vec<_>>()
            .join(" < "),
        curves[0].samples.len(),
        equal_rows,
        start.elapsed()
    ))
}

/// Baseline tangible markings by enumeration of component states, with
/// each VM forced off while its host is off.
fn enumerate_baseline(net: &Net) -> BTreeSet<Vec<u32>> {
    let comps = [
        ("Host1", None),
        ("Host2", None),
        ("Host3", None),
        ("SSVM", Some(1)),
        ("CPVM", Some(1)),
        ("VR", Some(1)),
        ("VMNext", Some(2)),
    ];
    let mut out = BTreeSet::new();
    for bits in 0u32..(1 << comps.len()) {
        let up = |i: usize| bits >> i & 1 == 1;
        if comps
            .iter()
            .enumerate()
            .any(|(i, (_, h))| h.is_some_and(|h| up(i) && !up(h)))
        {
            continue;
        }
        let mut m = vec![0; net.places().len()];
        for (i, (name, _)) in comps.iter().enumerate() {
            let suffix = if up(i) { "On" } else { "Off" };
            m[net.place_id(&format!("{name}_{suffix}")).unwrap().0] = 1;
        }
        out.insert(m);
    }
    out
}

fn criterion_6() -> Outcome {
    let m = model(ModelKind::Baseline);
    let ctmc = build_ctmc(&m.net, &ExploreOptions::default()).unwrap();
    let expected = enumerate_baseline(&m.net);
    let got: BTreeSet<Vec<u32>> = ctmc.states.iter().map(|s| s.tokens().to_vec()).collect();
    check(expected.len() == 54, format!("oracle enumerated {}", expected.len()))?;
    check(
        got == expected,
        format!("explored {} states, oracle {}", got.len(), expected.len()),
    )?;
    let surviving = ctmc.states.iter().filter(|s| m.net.is_vanishing(s)).count();
    check(surviving == 0, format!("{surviving} vanishing states survive"))?;
    let a = explore(&m.net, 1_000_000).unwrap();
    let b = explore(&m.net, 1_000_000).unwrap();
    check(
        a.states == b.states && a.edges == b.edges,
        "exploration not deterministic".into(),
    )?;
    Ok(format!(
        "{} tangible, 0 surviving vanishing ({} vanishing eliminated), deterministic",
        ctmc.len(),
        a.vanishing_count()
    ))
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    for (kind, horizon, reps) in [(ModelKind::OnOff, 1e6, 100), (ModelKind::Baseline, 1e5, 200)] {
        let m = model(kind);
        let metric = m.bound_metric();
        let (exact, _) = availability(&m.net, &m);
        let hits = (0..20u64)
            .filter(|&seed| {
                simulate_availability(&m.net, &metric, &SimOptions::new(horizon, reps, seed))
                    .unwrap()
                    .contains(exact)
            })
            .count();
        parts.push(format!("{kind} {hits}/20"));
        check(
            hits >= 18,
            format!("{kind}: analytic value inside CI for only {hits}/20 seeds"),
        )?;
    }
    within_time(start, Duration::from_secs(60))?;
    Ok(format!("{}; {:.2?}", parts.join(", "), start.elapsed()))
}

fn criterion_8() -> Outcome {
    let opts = SolverOptions::default();
    let mut worst_residual = 0.0_f64;
    let mut solves = 0;
    let mut curves = 0;
    for kind in ModelKind::ALL {
        for scale in [0.5, 1.0, 2.0] {
            let p = ParamSet::default();
            let overrides = if kind == ModelKind::OnOff {
                [("mttr".to_string(), p.mttrh * scale)].into()
            } else {
                [
                    ("mttrh".to_string(), p.mttrh * scale),
                    ("mttrvm".to_string(), p.mttrvm * scale),
                ]
                .into()
            };
            let m = build_model(kind, &overrides, Default::default()).unwrap();
            let a = analyze_availability(&m.net, &m.bound_metric(), &opts).unwrap();
            worst_residual = worst_residual.max(a.steady.residual);
            solves += 1;
            check(
                a.steady.residual <= 1e-12,
                format!("{kind}: residual {:e}", a.steady.residual),
            )?;
            if scale == 1.0 {
                let c = reliability_curve_ctmc(&a.ctmc, &a.partition, 3000.0, 50.0, &opts).unwrap();
                check(c.samples[0] == (0.0, 1.0), format!("{kind}: R(0) = {}", c.samples[0].1))?;
                for w in c.samples.windows(2) {
                    check(
                        w[1].1 <= w[0].1 + 1e-9,
                        format!("{kind}: R increases at t = {}", w[1].0),
                    )?;
                }
                curves += 1;
            }
        }
    }
    Ok(format!(
        "{solves} solves, max residual {worst_residual:.1e}; {curves} curves nonincreasing from R(0) = 1"
    ))
}

fn criterion_9() -> Outcome {
    let opts = SolverOptions::default();
    let mut worst = 0.0_f64;
    for kind in ModelKind::ALL {
        let m = model(kind);
        let metrics = vec![("availability".to_string(), m.metric.clone())];
        let text = serialize(&m.net, &m.params, &metrics);
        let parsed = parse_model_file(&text).map_err(|e| format!("{kind}: {e}"))?;
        check(
            common::isomorphic(&m.net, &parsed.net),
            format!("{kind}: reparsed net differs"),
        )?;
        check(
            parsed.metrics == metrics,
            format!("{kind}: metric differs after round-trip"),
        )?;
        check(
            serialize(&parsed.net, &parsed.params, &parsed.metrics) == text,
            format!("{kind}: serialization unstable"),
        )?;

        let a = analyze_availability(&m.net, &m.bound_metric(), &opts).unwrap();
        let b = analyze_availability(&parsed.net, &bind(&parsed.metrics[0].1, &parsed.net).unwrap(), &opts).unwrap();
        worst = worst.max((a.report.availability - b.report.availability).abs());
        if a.ctmc.len() <= 300 {
            let ta = transient(&a.ctmc, 10.0, &opts).unwrap();
            let tb = transient(&b.ctmc, 10.0, &opts).unwrap();
            worst = worst
                .max((probability(&ta.distribution, &a.partition) - probability(&tb.distribution, &b.partition)).abs());
        }
    }
    check(
        worst <= 1e-12,
        format!("analysis differs by {worst:e} after round-trip"),
    )?;

    let exprs = [
        "P{(#VMNext_On > 0) AND (#VR_On > 0)}",
        "P{(#VR_On>0) AND ((#VMNext_ON>0) OR (#VMRed_ON>0) OR (#VMNext2_ON>0) OR (#VMRed2_ON>0))}",
        "P{NOT (#A = 1) OR #B >= 2 AND #C <> 0}",
        "P{((#X < 3))}",
        "#On = 1",
    ];
    for e in exprs {
        let parsed = parse_metric(e).map_err(|err| format!("{e}: {err}"))?;
        let again = parse_metric(&parsed.to_metric_string()).unwrap();
        check(again == parsed, format!("metric round-trip changed {e}"))?;
    }
    Ok(format!(
        "5 models and {} metric expressions round-trip; max analysis delta {worst:.1e}",
        exprs.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("two-state closed form", criterion_1),
        ("baseline reproduction", criterion_2),
        ("single-redundancy reproduction", criterion_3),
        ("combined model properties", criterion_4),
        ("availability and reliability ordering", criterion_5),
        ("state-space oracle", criterion_6),
        ("simulation/analytic agreement", criterion_7),
        ("numerical hygiene", criterion_8),
        ("round-trips", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
