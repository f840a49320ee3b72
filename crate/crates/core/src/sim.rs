//! Monte Carlo execution of a GSPN.
//!
//! Each replication runs the token game in continuous time. Timed
//! transitions use race semantics with enabling memory: a transition keeps
//! its scheduled firing time while it stays enabled and is rescheduled when
//! it becomes newly enabled. Immediate transitions fire in zero time before
//! the clock advances. Replication `r` draws from ChaCha stream `r` of the
//! run seed, so results do not depend on how replications are scheduled
//! across threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::metric::BoundMetric;
use crate::net::{Distribution, Net, TransitionKind};

/// Zero-time firings allowed between two clock advances.
pub const LIVELOCK_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation options: {0}")]
    InvalidOptions(String),
    #[error("replication {replication}: more than {LIVELOCK_LIMIT} immediate firings at t = {time}")]
    Livelock { replication: u64, time: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub horizon: f64,
    pub replications: u64,
    pub seed: u64,
    /// Initial period excluded from time averages.
    pub warmup: f64,
}

impl SimOptions {
    pub fn new(horizon: f64, replications: u64, seed: u64) -> Self {
        SimOptions {
            horizon,
            replications,
            seed,
            warmup: 0.0,
        }
    }

    fn check(&self) -> Result<(), SimError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SimError::InvalidOptions(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.replications == 0 {
            return Err(SimError::InvalidOptions("replications must be >= 1".into()));
        }
        if !(self.warmup >= 0.0 && self.warmup < self.horizon) {
            return Err(SimError::InvalidOptions(format!(
                "warmup must be in [0, horizon), got {}",
                self.warmup
            )));
        }
        Ok(())
    }
}

/// Mean over replications with a Student-t 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEstimate {
    pub mean: f64,
    /// Infinite when only one replication was run.
    pub ci95_halfwidth: f64,
    pub replications: u64,
}

impl SimEstimate {
    pub fn contains(&self, x: f64) -> bool {
        (x - self.mean).abs() <= self.ci95_halfwidth
    }

    pub fn from_samples(samples: &[f64]) -> SimEstimate {
        let n = samples.len();
        let mean = pairwise_sum(samples) / n as f64;
        let halfwidth = if n < 2 {
            f64::INFINITY
        } else {
            let dev: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
            let var = pairwise_sum(&dev) / (n - 1) as f64;
            let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
                .expect("positive degrees of freedom")
                .inverse_cdf(0.975);
            t * (var / n as f64).sqrt()
        };
        SimEstimate {
            mean,
            ci95_halfwidth: halfwidth,
            replications: n as u64,
        }
    }
}

fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

struct Replication<'a> {
    net: &'a Net,
    rng: ChaCha8Rng,
    tokens: Vec<u32>,
    /// Scheduled absolute firing time per timed transition.
    schedule: Vec<Option<f64>>,
    clock: f64,
    id: u64,
}

impl<'a> Replication<'a> {
    fn new(net: &'a Net, seed: u64, id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id);
        Replication {
            net,
            rng,
            tokens: net.initial_marking().tokens().to_vec(),
            schedule: vec![None; net.transitions().len()],
            clock: 0.0,
            id,
        }
    }

    /// Fires enabled immediates until the marking is tangible.
    fn settle(&mut self) -> Result<(), SimError> {
        let mut count = 0u64;
        loop {
            let enabled = self.net.enabled_unchecked(&self.tokens);
            let immediates: Vec<(usize, f64)> = enabled
                .iter()
                .filter_map(|t| match self.net.transition(*t).kind {
                    TransitionKind::Immediate { weight, .. } => Some((t.0, weight)),
                    TransitionKind::Timed(_) => None,
                })
                .collect();
            if immediates.is_empty() {
                return Ok(());
            }
            count += 1;
            if count > LIVELOCK_LIMIT {
                return Err(SimError::Livelock {
                    replication: self.id,
                    time: self.clock,
                });
            }
            let chosen = if immediates.len() == 1 {
                immediates[0].0
            } else {
                let total: f64 = immediates.iter().map(|&(_, w)| w).sum();
                let mut u = self.rng.random::<f64>() * total;
                let mut pick = immediates[0].0;
                for &(t, w) in &immediates {
                    pick = t;
                    if u < w {
                        break;
                    }
                    u -= w;
                }
                pick
            };
            self.tokens = self.net.fire_unchecked(&self.tokens, chosen);
        }
    }

    fn sample_delay(&mut self, d: Distribution) -> f64 {
        match d {
            Distribution::Exponential { mean } => Exp::new(1.0 / mean)
                .expect("validated positive mean")
                .sample(&mut self.rng),
            Distribution::Deterministic { delay } => delay,
        }
    }

    /// Refreshes the schedule for the current tangible marking.
    fn reschedule(&mut self) {
        for (i, t) in self.net.transitions().iter().enumerate() {
            let TransitionKind::Timed(d) = t.kind else { continue };
            if self.net.structurally_enabled(&self.tokens, i) {
                if self.schedule[i].is_none() {
                    let delay = self.sample_delay(d);
                    self.schedule[i] = Some(self.clock + delay);
                }
            } else {
                self.schedule[i] = None;
            }
        }
    }

    /// Earliest scheduled event, ties broken by lowest transition id.
    fn next_event(&self) -> Option<(f64, usize)> {
        self.schedule
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|t| (t, i)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
    }

    fn start(&mut self) -> Result<(), SimError> {
        self.settle()?;
        self.reschedule();
        Ok(())
    }

    /// Advances to the next event if it happens before `until`. Returns
    /// false (with the clock at `until`) otherwise.
    fn step(&mut self, until: f64) -> Result<bool, SimError> {
        match self.next_event() {
            Some((time, t)) if time <= until => {
                self.clock = time;
                self.schedule[t] = None;
                self.tokens = self.net.fire_unchecked(&self.tokens, t);
                self.settle()?;
                self.reschedule();
                Ok(true)
            }
            _ => {
                self.clock = until;
                Ok(false)
            }
        }
    }
}

/// Long-run fraction of time the metric holds, averaged over replications.
pub fn simulate_availability(net: &Net, metric: &BoundMetric, opts: &SimOptions) -> Result<SimEstimate, SimError> {
    opts.check()?;
    let samples: Vec<f64> = (0..opts.replications)
        .into_par_iter()
        .map(|r| {
            let mut rep = Replication::new(net, opts.seed, r);
            rep.start()?;
            let mut up_time = 0.0;
            loop {
                let before = rep.clock;
                let up = metric.eval_tokens(&rep.tokens);
                let advanced = rep.step(opts.horizon)?;
                if up {
                    let from = before.max(opts.warmup);
                    if rep.clock > from {
                        up_time += rep.clock - from;
                    }
                }
                if !advanced {
                    break;
                }
            }
            Ok(up_time / (opts.horizon - opts.warmup))
        })
        .collect::<Result<_, SimError>>()?;
    Ok(SimEstimate::from_samples(&samples))
}

/// Fraction of replications in which the metric holds throughout [0, t].
pub fn simulate_reliability(
    net: &Net,
    metric: &BoundMetric,
    t: f64,
    opts: &SimOptions,
) -> Result<SimEstimate, SimError> {
    opts.check()?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(SimError::InvalidOptions(format!("time must be positive, got {t}")));
    }
    let samples: Vec<f64> = (0..opts.replications)
        .into_par_iter()
        .map(|r| {
            let mut rep = Replication::new(net, opts.seed, r);
            rep.start()?;
            loop {
                if !metric.eval_tokens(&rep.tokens) {
                    return Ok(0.0);
                }
                if !rep.step(t)? {
                    return Ok(1.0);
                }
            }
        })
        .collect::<Result<_, SimError>>()?;
    Ok(SimEstimate::from_samples(&samples))
}
