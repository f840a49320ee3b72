//! Generalized stochastic Petri net engine for dependability analysis.
//!
//! The pipeline is: build a [`Net`] (by hand, from [`zoo`], or from a model
//! file), explore its reachability graph, collapse vanishing markings into a
//! tangible [`Ctmc`], and solve it for steady-state availability or transient
//! reliability. [`sim`] executes the same net by Monte Carlo simulation and
//! serves as an independent cross-check of the analytic results.

pub mod metric;
pub mod net;
pub mod numerics;
pub mod sim;
pub mod state_space;
pub mod zoo;

pub use metric::{bind, eval_predicate, parse_metric, BoundMetric, MetricError, MetricExpr, RelOp, Term};
pub use net::{
    enabled_transitions, fire, validate_net, Arc, ArcKind, Distribution, Marking, Net, NetDef, NetError, Place,
    PlaceId, Transition, TransitionId, TransitionKind, ValidationReport,
};
pub use numerics::{
    analyze_availability, availability_report, probability, reliability_curve, steady_state, transient,
    AvailabilityReport, NumericsError, ReliabilityCurve, SolverOptions, SteadyState,
};
pub use sim::{simulate_availability, simulate_reliability, SimError, SimEstimate, SimOptions};
pub use state_space::{
    build_ctmc, classify_states, eliminate_vanishing, explore, explore_with, Ctmc, ExploreOptions, ReachabilityGraph,
    StatePartition, StateSpaceError,
};
pub use zoo::{Activation, Model, ModelKind, ParamSet, ZooError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    StateSpace(#[from] StateSpaceError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Zoo(#[from] ZooError),
}
