//! Steady-state and transient CTMC solution, and the availability and
//! reliability measures derived from them.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use thiserror::Error;

use crate::metric::BoundMetric;
use crate::net::Net;
use crate::state_space::{build_ctmc, classify_states, Ctmc, ExploreOptions, Generator, StatePartition};

/// Hours per year used for annual downtime.
pub const HOURS_PER_YEAR: f64 = 8760.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("chain has {0} recurrent classes; steady state is not unique")]
    Reducible(usize),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("singular system")]
    Singular,
    #[error("{0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Target for max |πQ| in steady-state solves.
    pub tolerance: f64,
    /// Poisson tail mass allowed per uniformization run.
    pub truncation_epsilon: f64,
    pub max_iterations: usize,
    /// Largest chain solved by dense elimination; bigger chains use
    /// Gauss-Seidel.
    pub dense_limit: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-12,
            truncation_epsilon: 1e-10,
            max_iterations: 100_000,
            dense_limit: 2_000,
        }
    }
}

impl SolverOptions {
    fn check(&self) -> Result<(), NumericsError> {
        if !(self.tolerance > 0.0 && self.truncation_epsilon > 0.0 && self.max_iterations > 0) {
            return Err(NumericsError::InvalidArgument("solver options must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Dense,
    GaussSeidel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub distribution: Vec<f64>,
    /// max |πQ| of the returned distribution.
    pub residual: f64,
    pub method: SolveMethod,
    pub iterations: usize,
}

/// Number of closed communicating classes of the chain.
pub fn recurrent_class_count(g: &Generator) -> usize {
    let mut graph = DiGraph::<(), ()>::new();
    let nodes: Vec<_> = (0..g.len()).map(|_| graph.add_node(())).collect();
    for (i, &node) in nodes.iter().enumerate() {
        for &(j, _) in g.row(i) {
            graph.add_edge(node, nodes[j], ());
        }
    }
    let sccs = tarjan_scc(&graph);
    let mut comp = vec![0; g.len()];
    for (c, scc) in sccs.iter().enumerate() {
        for n in scc {
            comp[n.index()] = c;
        }
    }
    sccs.iter()
        .enumerate()
        .filter(|(c, scc)| scc.iter().all(|n| g.row(n.index()).iter().all(|&(j, _)| comp[j] == *c)))
        .count()
}

fn residual(g: &Generator, pi: &[f64]) -> f64 {
    g.left_mul(pi).iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn normalize(pi: &mut [f64]) {
    for x in pi.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let s: f64 = pi.iter().sum();
    if s > 0.0 {
        pi.iter_mut().for_each(|x| *x /= s);
    }
}

fn solve_dense(g: &Generator) -> Result<Vec<f64>, NumericsError> {
    let n = g.len();
    // Q^T π^T = 0 with the last equation replaced by Σπ = 1.
    let mut a = g.to_dense().transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = nalgebra::DVector::zeros(n);
    b[n - 1] = 1.0;
    let lu = a.clone().lu();
    let mut x = lu.solve(&b).ok_or(NumericsError::Singular)?;
    for _ in 0..2 {
        let r = &b - &a * &x;
        match lu.solve(&r) {
            Some(d) => x += d,
            None => break,
        }
    }
    let mut pi: Vec<f64> = x.iter().copied().collect();
    normalize(&mut pi);
    Ok(pi)
}

fn solve_gauss_seidel(g: &Generator, start: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, usize), NumericsError> {
    let n = g.len();
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for &(j, r) in g.row(i) {
            incoming[j].push((i, r));
        }
    }
    let mut pi: Vec<f64> = if start.iter().sum::<f64>() > 0.0 {
        start.iter().map(|&x| x + 1.0 / n as f64).collect()
    } else {
        vec![1.0 / n as f64; n]
    };
    normalize(&mut pi);
    let mut res = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        for j in 0..n {
            let out = g.exit_rate(j);
            if out > 0.0 {
                let inflow: f64 = incoming[j].iter().map(|&(i, r)| pi[i] * r).sum();
                pi[j] = inflow / out;
            }
        }
        normalize(&mut pi);
        res = residual(g, &pi);
        if res <= opts.tolerance {
            return Ok((pi, it));
        }
    }
    Err(NumericsError::NotConverged {
        iterations: opts.max_iterations,
        residual: res,
    })
}

/// Stationary distribution π with πQ = 0, Σπ = 1.
pub fn steady_state(ctmc: &Ctmc, opts: &SolverOptions) -> Result<SteadyState, NumericsError> {
    steady_state_of(&ctmc.generator, &ctmc.initial, opts)
}

pub fn steady_state_of(g: &Generator, initial: &[f64], opts: &SolverOptions) -> Result<SteadyState, NumericsError> {
    opts.check()?;
    let n = g.len();
    if n == 0 {
        return Err(NumericsError::InvalidArgument("empty chain".into()));
    }
    let classes = recurrent_class_count(g);
    if classes != 1 {
        return Err(NumericsError::Reducible(classes));
    }
    if n == 1 {
        return Ok(SteadyState {
            distribution: vec![1.0],
            residual: 0.0,
            method: SolveMethod::Dense,
            iterations: 0,
        });
    }
    let (distribution, method, iterations) = if n <= opts.dense_limit {
        (solve_dense(g)?, SolveMethod::Dense, 1)
    } else {
        let (pi, it) = solve_gauss_seidel(g, initial, opts)?;
        (pi, SolveMethod::GaussSeidel, it)
    };
    Ok(SteadyState {
        residual: residual(g, &distribution),
        distribution,
        method,
        iterations,
    })
}

/// Probability mass on the up-set.
pub fn probability(pi: &[f64], partition: &StatePartition) -> f64 {
    pi.iter().zip(&partition.up).filter(|(_, &up)| up).map(|(p, _)| p).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvailabilityReport {
    pub availability: f64,
    /// −log10(1 − A); infinite when A = 1.
    pub nines: f64,
    pub downtime_hours_per_year: f64,
}

pub fn availability_report(a: f64) -> Result<AvailabilityReport, NumericsError> {
    if !(0.0..=1.0).contains(&a) {
        return Err(NumericsError::InvalidArgument(format!(
            "availability {a} outside [0, 1]"
        )));
    }
    let u = 1.0 - a;
    Ok(AvailabilityReport {
        availability: a,
        nines: if u == 0.0 { f64::INFINITY } else { -u.log10() },
        downtime_hours_per_year: u * HOURS_PER_YEAR,
    })
}

// ---------------------------------------------------------------------------
// Transient analysis
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct TransientResult {
    pub distribution: Vec<f64>,
    /// Upper bound on the neglected Poisson mass.
    pub error_bound: f64,
}

/// Truncated Poisson(λ) weights covering all but `eps` of the mass.
/// Returns (first index, normalized weights, neglected mass).
fn poisson_window(lambda: f64, eps: f64) -> (usize, Vec<f64>, f64) {
    let mode = lambda.floor() as usize;
    // Unnormalized weights relative to the mode; the total is >= 1.
    let mut down = Vec::new();
    let mut left_tail = 0.0;
    let mut w = 1.0;
    let mut k = mode;
    while k > 0 {
        let ratio = k as f64 / lambda;
        let bound = w * ratio / (1.0 - ratio);
        if ratio < 1.0 && bound < eps / 4.0 {
            left_tail = bound;
            break;
        }
        w *= ratio;
        k -= 1;
        down.push(w);
    }
    let left = k;
    let mut up = Vec::new();
    let mut right_tail;
    let mut w = 1.0;
    let mut k = mode;
    loop {
        let ratio = lambda / (k as f64 + 1.0);
        right_tail = w * ratio / (1.0 - ratio);
        if ratio < 1.0 && right_tail < eps / 4.0 {
            break;
        }
        w *= ratio;
        k += 1;
        up.push(w);
    }
    let mut weights: Vec<f64> = down.into_iter().rev().collect();
    weights.push(1.0);
    weights.extend(up);
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|x| *x /= total);
    (left, weights, (left_tail + right_tail) / total)
}

/// π(t) = π0·exp(Qt) by uniformization at rate 1.02·max exit rate.
pub fn transient_from(
    g: &Generator,
    pi0: &[f64],
    t: f64,
    opts: &SolverOptions,
) -> Result<TransientResult, NumericsError> {
    opts.check()?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(NumericsError::InvalidArgument(format!(
            "time must be finite and >= 0, got {t}"
        )));
    }
    let rate = 1.02 * g.max_exit_rate();
    if t == 0.0 || rate == 0.0 {
        return Ok(TransientResult {
            distribution: pi0.to_vec(),
            error_bound: 0.0,
        });
    }
    let lambda = rate * t;
    let (left, weights, error_bound) = poisson_window(lambda, opts.truncation_epsilon);

    // v ← v·P with P = I + Q/Λ.
    let step = |v: &[f64]| -> Vec<f64> {
        let mut next = g.left_mul(v);
        for (x, y) in next.iter_mut().zip(v) {
            *x = y + *x / rate;
        }
        next
    };
    let mut v = pi0.to_vec();
    for _ in 0..left {
        v = step(&v);
    }
    let mut acc = vec![0.0; v.len()];
    for (i, w) in weights.iter().enumerate() {
        if i > 0 {
            v = step(&v);
        }
        for (a, x) in acc.iter_mut().zip(&v) {
            *a += w * x;
        }
    }
    let mass: f64 = pi0.iter().sum();
    let got: f64 = acc.iter().sum();
    if got > 0.0 {
        acc.iter_mut().for_each(|x| *x *= mass / got);
    }
    Ok(TransientResult {
        distribution: acc,
        error_bound,
    })
}

pub fn transient(ctmc: &Ctmc, t: f64, opts: &SolverOptions) -> Result<TransientResult, NumericsError> {
    transient_from(&ctmc.generator, &ctmc.initial, t, opts)
}

// ---------------------------------------------------------------------------
// Reliability
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityCurve {
    /// (t in hours, R(t))
    pub samples: Vec<(f64, f64)>,
    pub horizon: f64,
    /// Sum of per-step uniformization error bounds.
    pub error_bound: f64,
    pub warning: Option<String>,
}

impl ReliabilityCurve {
    /// `t_hours,reliability` CSV, 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t_hours,reliability\n");
        for &(t, r) in &self.samples {
            s.push_str(&format_sig(t, 12));
            s.push(',');
            s.push_str(&format_sig(r, 12));
            s.push('\n');
        }
        s
    }
}

/// One `t_hours` column plus one column per named curve. All curves must
/// share the same sample times.
pub fn curves_to_csv(curves: &[(&str, &ReliabilityCurve)]) -> String {
    let mut s = String::from("t_hours");
    for (name, _) in curves {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    if let Some((_, first)) = curves.first() {
        for (row, &(t, _)) in first.samples.iter().enumerate() {
            s.push_str(&format_sig(t, 12));
            for (_, c) in curves {
                s.push(',');
                s.push_str(&format_sig(c.samples[row].1, 12));
            }
            s.push('\n');
        }
    }
    s
}

/// Decimal rendering with `digits` significant digits (scientific for very
/// small or large magnitudes).
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return format!("{:.*}", digits - 1, 0.0);
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&exp) {
        return format!("{:.*e}", digits - 1, x);
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Sample times 0, step, 2·step, … up to and including `horizon`.
pub fn sample_times(horizon: f64, step: f64) -> Result<Vec<f64>, NumericsError> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(NumericsError::InvalidArgument(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if !(step > 0.0 && step <= horizon) {
        return Err(NumericsError::InvalidArgument(format!(
            "step must satisfy 0 < step <= horizon, got {step}"
        )));
    }
    let n = (horizon / step + 1e-9).floor() as usize;
    let mut times: Vec<f64> = (0..=n).map(|k| k as f64 * step).collect();
    let last = *times.last().unwrap();
    if horizon - last > 1e-9 * horizon {
        times.push(horizon);
    } else {
        *times.last_mut().unwrap() = horizon;
    }
    Ok(times)
}

/// R(t) = probability the chain has not yet entered the down-set by t.
pub fn reliability_curve_ctmc(
    ctmc: &Ctmc,
    partition: &StatePartition,
    horizon: f64,
    step: f64,
    opts: &SolverOptions,
) -> Result<ReliabilityCurve, NumericsError> {
    let times = sample_times(horizon, step)?;
    let up_mass: f64 = probability(&ctmc.initial, partition);
    if up_mass == 0.0 {
        return Ok(ReliabilityCurve {
            samples: times.iter().map(|&t| (t, 0.0)).collect(),
            horizon,
            error_bound: 0.0,
            warning: Some("initial state violates the metric; reliability is 0".into()),
        });
    }
    let absorbing: Vec<bool> = partition.up.iter().map(|u| !u).collect();
    let g = ctmc.generator.with_absorbing(&absorbing);
    let mut pi = ctmc.initial.clone();
    let mut samples = Vec::with_capacity(times.len());
    let mut error_bound = 0.0;
    let mut prev_t = 0.0;
    for &t in &times {
        if t > prev_t {
            let r = transient_from(&g, &pi, t - prev_t, opts)?;
            pi = r.distribution;
            error_bound += r.error_bound;
        }
        prev_t = t;
        samples.push((t, probability(&pi, partition)));
    }
    Ok(ReliabilityCurve {
        samples,
        horizon,
        error_bound,
        warning: None,
    })
}

/// Builds the CTMC of `net` and samples its reliability under `metric`.
pub fn reliability_curve(
    net: &Net,
    metric: &BoundMetric,
    horizon: f64,
    step: f64,
    opts: &SolverOptions,
) -> Result<ReliabilityCurve, crate::Error> {
    let ctmc = build_ctmc(net, &ExploreOptions::default())?;
    let partition = classify_states(&ctmc, metric);
    Ok(reliability_curve_ctmc(&ctmc, &partition, horizon, step, opts)?)
}

/// Result of a complete steady-state availability analysis.
#[derive(Debug, Clone)]
pub struct AvailabilityAnalysis {
    pub ctmc: Ctmc,
    pub steady: SteadyState,
    pub partition: StatePartition,
    pub report: AvailabilityReport,
}

/// Explore, reduce, solve, and evaluate `metric` in steady state.
pub fn analyze_availability(
    net: &Net,
    metric: &BoundMetric,
    opts: &SolverOptions,
) -> Result<AvailabilityAnalysis, crate::Error> {
    let ctmc = build_ctmc(net, &ExploreOptions::default())?;
    let steady = steady_state(&ctmc, opts)?;
    let partition = classify_states(&ctmc, metric);
    let a = probability(&steady.distribution, &partition).clamp(0.0, 1.0);
    let report = availability_report(a)?;
    Ok(AvailabilityAnalysis {
        ctmc,
        steady,
        partition,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(fail: f64, repair: f64) -> Generator {
        Generator::from_rates(2, [(0, 1, fail), (1, 0, repair)])
    }

    #[test]
    fn symmetric_two_state_is_uniform() {
        let ss = steady_state_of(&two_state(1.0, 1.0), &[1.0, 0.0], &SolverOptions::default()).unwrap();
        assert!((ss.distribution[0] - 0.5).abs() < 1e-15);
        assert!(ss.residual <= 1e-12);
    }

    #[test]
    fn two_state_matches_mttf_over_mttf_plus_mttr() {
        let (mttf, mttr) = (1259.03, 0.77);
        let g = two_state(1.0 / mttf, 1.0 / mttr);
        let ss = steady_state_of(&g, &[1.0, 0.0], &SolverOptions::default()).unwrap();
        assert!((ss.distribution[0] - mttf / (mttf + mttr)).abs() < 1e-12);
        assert!((ss.distribution[0] - 0.9993888).abs() < 1e-7);
    }

    #[test]
    fn gauss_seidel_agrees_with_dense() {
        // Birth-death chain with uneven rates.
        let n = 30;
        let mut e = Vec::new();
        for i in 0..n - 1 {
            e.push((i, i + 1, 0.3 + i as f64 * 0.01));
            e.push((i + 1, i, 1.0 + (i % 3) as f64));
        }
        let g = Generator::from_rates(n, e);
        let mut init = vec![0.0; n];
        init[0] = 1.0;
        let dense = steady_state_of(&g, &init, &SolverOptions::default()).unwrap();
        let opts = SolverOptions {
            dense_limit: 1,
            ..SolverOptions::default()
        };
        let gs = steady_state_of(&g, &init, &opts).unwrap();
        assert_eq!(gs.method, SolveMethod::GaussSeidel);
        for (a, b) in dense.distribution.iter().zip(&gs.distribution) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn reducible_chain_is_rejected() {
        // Two absorbing states.
        let g = Generator::from_rates(3, [(0, 1, 1.0), (0, 2, 1.0)]);
        assert_eq!(
            steady_state_of(&g, &[1.0, 0.0, 0.0], &SolverOptions::default()),
            Err(NumericsError::Reducible(2))
        );
    }

    #[test]
    fn gauss_seidel_reports_non_convergence() {
        let mut rates = Vec::new();
        for i in 0..29 {
            rates.push((i, i + 1, 2.0));
            rates.push((i + 1, i, 3.0));
        }
        let g = Generator::from_rates(30, rates);
        let opts = SolverOptions {
            dense_limit: 0,
            max_iterations: 1,
            ..SolverOptions::default()
        };
        let r = steady_state_of(&g, &[1.0; 30], &opts);
        assert!(
            matches!(r, Err(NumericsError::NotConverged { iterations: 1, .. })),
            "{r:?}"
        );
    }

    #[test]
    fn report_fields() {
        let r = availability_report(0.9948).unwrap();
        assert!((r.nines - 2.2840).abs() < 1e-3);
        assert!((r.downtime_hours_per_year - 45.552).abs() < 1e-9);
        let r = availability_report(0.9999).unwrap();
        assert!((r.nines - 4.0).abs() < 1e-9);
        assert!((r.downtime_hours_per_year - 0.876).abs() < 1e-9);
        let r = availability_report(1.0).unwrap();
        assert_eq!(r.nines, f64::INFINITY);
        assert_eq!(r.downtime_hours_per_year, 0.0);
        assert!(availability_report(1.5).is_err());
        assert!(availability_report(-0.1).is_err());
    }

    #[test]
    fn probability_of_partitions() {
        let part = StatePartition {
            up: vec![true, false, true],
        };
        assert_eq!(probability(&[0.0, 0.0, 1.0], &part), 1.0);
        let empty = StatePartition {
            up: vec![false, false, false],
        };
        assert_eq!(probability(&[0.2, 0.3, 0.5], &empty), 0.0);
    }

    #[test]
    fn transient_at_zero_is_initial_and_negative_time_errors() {
        let g = two_state(1.0, 2.0);
        let r = transient_from(&g, &[0.3, 0.7], 0.0, &SolverOptions::default()).unwrap();
        assert_eq!(r.distribution, vec![0.3, 0.7]);
        assert!(transient_from(&g, &[1.0, 0.0], -1.0, &SolverOptions::default()).is_err());
    }

    #[test]
    fn transient_no_repair_is_exponential() {
        let mean = 619.56;
        let g = Generator::from_rates(2, [(0, 1, 1.0 / mean)]);
        for t in [1.0, 100.0, 619.56, 3000.0, 20000.0] {
            let r = transient_from(&g, &[1.0, 0.0], t, &SolverOptions::default()).unwrap();
            assert!((r.distribution[0] - (-t / mean).exp()).abs() < 1e-9, "t={t}");
            assert!(r.error_bound <= 1e-10);
        }
    }

    #[test]
    fn transient_two_state_matches_closed_form() {
        // p_on(t) = μ/(λ+μ) + λ/(λ+μ)·e^{−(λ+μ)t}
        let (l, m) = (0.7, 1.9);
        let g = two_state(l, m);
        for t in [0.01, 0.5, 3.0, 40.0] {
            let r = transient_from(&g, &[1.0, 0.0], t, &SolverOptions::default()).unwrap();
            let exact = m / (l + m) + l / (l + m) * (-(l + m) * t).exp();
            assert!((r.distribution[0] - exact).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn poisson_window_mass_is_complete() {
        for lambda in [0.01, 0.9, 5.0, 80.0, 2500.0, 1.0e5] {
            let (left, w, err) = poisson_window(lambda, 1e-10);
            assert!(err <= 1e-10, "λ={lambda} err={err}");
            let s: f64 = w.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(left as f64 <= lambda);
            assert!((left + w.len()) as f64 > lambda);
        }
    }

    #[test]
    fn sample_times_cover_horizon() {
        let t = sample_times(3000.0, 50.0).unwrap();
        assert_eq!(t.len(), 61);
        assert_eq!(t[60], 3000.0);
        let t = sample_times(10.0, 4.0).unwrap();
        assert_eq!(t, vec![0.0, 4.0, 8.0, 10.0]);
        assert!(sample_times(10.0, 11.0).is_err());
        assert!(sample_times(0.0, 1.0).is_err());
    }

    #[test]
    fn format_sig_digits() {
        assert_eq!(format_sig(1.0, 12), "1.00000000000");
        assert_eq!(format_sig(50.0, 12), "50.0000000000");
        assert_eq!(format_sig(0.367879441171442, 12), "0.367879441171");
        assert_eq!(format_sig(0.0, 12), "0.00000000000");
        assert!(format_sig(1.5e-9, 12).contains('e'));
    }
}
