//! Built-in models: the two-state on/off component and the four private
//! cloud architectures (baseline, host redundancy, VM redundancy, both).
//!
//! Every component `X` is a pair of places `X_On`/`X_Off` with transitions
//! `MTTF_X` and `MTTR_X`. A VM cannot be repaired while its host is down,
//! and a host failure kills its VMs through zero-delay transitions.
//!
//! Cold standby follows three rules shared by all redundant variants:
//!
//! * Standby units wait as a token in a `Wait*` place and never fail there.
//!   Activation is a timed transition whose delay includes the boot time.
//! * A repaired VM resumes service directly only if no VM on its host is
//!   serving; otherwise it rejoins the standby pool (roles swap).
//! * When Host3 is repaired, Host4 fails back immediately: its token returns
//!   to `WaitHostRed` and the VMs it carried are discarded.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::metric::{bind, parse_metric, BoundMetric, MetricExpr};
use crate::net::{Net, NetDef, NetError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ZooError {
    #[error("parameter {name} must be positive and finite, got {value}")]
    InvalidParam { name: String, value: f64 },
    #[error("unknown parameter {name} for model {model}")]
    UnknownParam { model: String, name: String },
    #[error("unknown model {0} (expected onoff, baseline, host-red, vm-red or combined)")]
    UnknownModel(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Failure, repair and activation means in hours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSet {
    /// Host1 (management server) mean time to failure.
    pub mttfc: f64,
    pub mttrc: f64,
    /// Host2/Host3/Host4 mean time to failure.
    pub mttfh: f64,
    pub mttrh: f64,
    pub mttfvm: f64,
    pub mttrvm: f64,
    /// Cold-standby VM start-up time.
    pub vm_activation: f64,
    /// Cold-standby host start-up time.
    pub host_activation: f64,
}

impl Default for ParamSet {
    fn default() -> Self {
        ParamSet {
            mttfc: 578.64,
            mttrc: 0.89,
            mttfh: 1259.03,
            mttrh: 0.77,
            mttfvm: 619.56,
            mttrvm: 0.84,
            vm_activation: 30.0 / 3600.0,
            host_activation: 150.0 / 3600.0,
        }
    }
}

impl ParamSet {
    pub const NAMES: [&'static str; 8] = [
        "mttfc",
        "mttrc",
        "mttfh",
        "mttrh",
        "mttfvm",
        "mttrvm",
        "vm_activation",
        "host_activation",
    ];

    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "mttfc" => self.mttfc,
            "mttrc" => self.mttrc,
            "mttfh" => self.mttfh,
            "mttrh" => self.mttrh,
            "mttfvm" => self.mttfvm,
            "mttrvm" => self.mttrvm,
            "vm_activation" => self.vm_activation,
            "host_activation" => self.host_activation,
            _ => return None,
        })
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<(), ZooError> {
        let slot = match name {
            "mttfc" => &mut self.mttfc,
            "mttrc" => &mut self.mttrc,
            "mttfh" => &mut self.mttfh,
            "mttrh" => &mut self.mttrh,
            "mttfvm" => &mut self.mttfvm,
            "mttrvm" => &mut self.mttrvm,
            "vm_activation" => &mut self.vm_activation,
            "host_activation" => &mut self.host_activation,
            _ => {
                return Err(ZooError::UnknownParam {
                    model: "architecture".into(),
                    name: name.into(),
                })
            }
        };
        *slot = value;
        Ok(())
    }

    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        Self::NAMES.iter().map(|&n| (n, self.get(n).unwrap())).collect()
    }

    pub fn validate(&self) -> Result<(), ZooError> {
        for (name, value) in self.entries() {
            check_positive(name, value)?;
        }
        Ok(())
    }
}

fn check_positive(name: &str, value: f64) -> Result<(), ZooError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ZooError::InvalidParam {
            name: name.into(),
            value,
        })
    }
}

/// How cold-standby activation delays are distributed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Exponential,
    /// Fixed delays; simulation only.
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    OnOff,
    Baseline,
    HostRedundancy,
    VmRedundancy,
    Combined,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::OnOff,
        ModelKind::Baseline,
        ModelKind::HostRedundancy,
        ModelKind::VmRedundancy,
        ModelKind::Combined,
    ];

    /// The four cloud architectures, from least to most redundant.
    pub const ARCHITECTURES: [ModelKind; 4] = [
        ModelKind::Baseline,
        ModelKind::HostRedundancy,
        ModelKind::VmRedundancy,
        ModelKind::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::OnOff => "onoff",
            ModelKind::Baseline => "baseline",
            ModelKind::HostRedundancy => "host-red",
            ModelKind::VmRedundancy => "vm-red",
            ModelKind::Combined => "combined",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            ModelKind::OnOff => "Single component",
            ModelKind::Baseline => "Baseline Architecture",
            ModelKind::HostRedundancy => "Host redundancy",
            ModelKind::VmRedundancy => "VM redundancy",
            ModelKind::Combined => "VM and Host redundancies",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = ZooError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ZooError::UnknownModel(s.to_string()))
    }
}

/// A net together with its availability predicate.
#[derive(Debug, Clone)]
pub struct Model {
    pub kind: ModelKind,
    pub net: Net,
    pub metric: MetricExpr,
    /// Parameter values the net was built from.
    pub params: BTreeMap<String, f64>,
}

impl Model {
    pub fn bound_metric(&self) -> BoundMetric {
        bind(&self.metric, &self.net).expect("built-in metric binds to its own net")
    }
}

pub const ONOFF_METRIC: &str = "P{#On=1}";
pub const BASELINE_METRIC: &str = "P{(#VMNext_On > 0) AND (#VR_On > 0)}";
pub const HOST_RED_METRIC: &str = "P{(#VR_On>0) AND ((#VMNext_On>0) OR (#VMNext2_On>0))}";
pub const VM_RED_METRIC: &str = "P{(#VR_On>0) AND ((#VMNext_On>0) OR (#VMRed_On>0))}";
pub const COMBINED_METRIC: &str =
    "P{(#VR_On>0) AND ((#VMNext_On>0) OR (#VMRed_On>0) OR (#VMNext2_On>0) OR (#VMRed2_On>0))}";

fn metric(text: &str) -> MetricExpr {
    parse_metric(text).expect("built-in metric parses")
}

/// Two places `On`/`Off` with failure `T0` and repair `T1`.
pub fn build_onoff(mttf: f64, mttr: f64) -> Result<Model, ZooError> {
    check_positive("mttf", mttf)?;
    check_positive("mttr", mttr)?;
    let mut d = NetDef::new();
    d.place("On", 1).place("Off", 0);
    d.exponential("T0", mttf).param("mttf");
    d.exponential("T1", mttr).param("mttr");
    d.input("On", "T0").output("T0", "Off");
    d.input("Off", "T1").output("T1", "On");
    Ok(Model {
        kind: ModelKind::OnOff,
        net: d.build()?,
        metric: metric(ONOFF_METRIC),
        params: BTreeMap::from([("mttf".into(), mttf), ("mttr".into(), mttr)]),
    })
}

struct Builder<'a> {
    def: NetDef,
    p: &'a ParamSet,
    activation: Activation,
}

impl Builder<'_> {
    fn places(&mut self, name: &str, up: u32) {
        self.def.place(format!("{name}_On"), up);
        self.def.place(format!("{name}_Off"), 0);
    }

    /// `MTTF_X` and `MTTR_X`; the repair is optionally guarded.
    fn failure_repair(&mut self, name: &str, mttf: &str, mttr: &str, repair_guard: Option<String>) {
        let (on, off) = (format!("{name}_On"), format!("{name}_Off"));
        let (f, r) = (format!("MTTF_{name}"), format!("MTTR_{name}"));
        self.def.exponential(&f, self.p.get(mttf).unwrap()).param(mttf);
        let t = self.def.exponential(&r, self.p.get(mttr).unwrap());
        t.param(mttr);
        if let Some(g) = repair_guard {
            t.guard(g);
        }
        self.def.input(&on, &f).output(&f, &off);
        self.def.input(&off, &r).output(&r, &on);
    }

    /// Immediate `name`: moves the VM from On to Off while `host` is down.
    fn kill(&mut self, name: &str, vm: &str, host: &str) {
        self.def.immediate(name, 1, 1.0).guard(format!("#{host}_On = 0"));
        self.def
            .input(format!("{vm}_On"), name)
            .output(name, format!("{vm}_Off"));
    }

    /// Cold-standby activation with the configured delay distribution.
    fn activation(&mut self, name: &str, param: &str) -> &mut crate::net::TransitionDef {
        let mean = self.p.get(param).unwrap();
        let t = match self.activation {
            Activation::Exponential => self.def.exponential(name, mean),
            Activation::Deterministic => self.def.deterministic(name, mean),
        };
        t.param(param)
    }

    /// Active VM `primary` plus a cold-standby pool (`wait`, `standby`) on
    /// `host`. Host-failure kills are added separately.
    fn redundant_vm_pair(&mut self, host: &str, primary: &str, wait: &str, standby: &str, activate: &str) {
        let serving = format!("(#{primary}_On > 0 OR #{standby}_On > 0)");
        let idle = format!("#{primary}_On = 0 AND #{standby}_On = 0");
        let host_up = format!("#{host}_On > 0");
        let mttr = self.p.mttrvm;

        for vm in [primary, standby] {
            let (on, off) = (format!("{vm}_On"), format!("{vm}_Off"));
            let fail = format!("MTTF_{vm}");
            self.def.exponential(&fail, self.p.mttfvm).param("mttfvm");
            self.def.input(&on, &fail).output(&fail, &off);

            // Resume service when nothing else is serving...
            let resume = format!("MTTR_{vm}");
            self.def
                .exponential(&resume, mttr)
                .param("mttrvm")
                .guard(format!("{host_up} AND {idle}"));
            self.def.input(&off, &resume).output(&resume, &on);
            // ...otherwise rejoin the standby pool.
            let rejoin = format!("MTTR_{vm}_Standby");
            self.def
                .exponential(&rejoin, mttr)
                .param("mttrvm")
                .guard(format!("{host_up} AND {serving}"));
            self.def.input(&off, &rejoin).output(&rejoin, wait);
        }

        self.activation(activate, "vm_activation")
            .guard(format!("{idle} AND {host_up}"));
        self.def.input(wait, activate).output(activate, format!("{standby}_On"));
    }

    /// Host4 failback on Host3 repair, and disposal of the VM tokens Host4
    /// carried once it is back in the pool.
    fn failback(&mut self, discard: &[String]) {
        for side in ["On", "Off"] {
            let name = format!("Failback_Host4_{side}");
            self.def.immediate(&name, 1, 1.0).guard("#Host3_On > 0");
            self.def
                .input(format!("Host4_{side}"), &name)
                .output(&name, "WaitHostRed");
        }
        for place in discard {
            let name = format!("Discard_{place}");
            self.def
                .immediate(&name, 1, 1.0)
                .guard("#Host4_On = 0 AND #Host4_Off = 0");
            self.def.input(place, &name);
        }
    }

    fn finish(self, kind: ModelKind, metric_text: &str) -> Result<Model, ZooError> {
        let params = self.p.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        Ok(Model {
            kind,
            net: self.def.build()?,
            metric: metric(metric_text),
            params,
        })
    }
}

/// Shared hosts and system VMs: Host1 (management), Host2 with SSVM, CPVM
/// and VR, and Host3. The caller adds the application VMs.
fn infrastructure(p: &ParamSet, activation: Activation) -> Result<Builder<'_>, ZooError> {
    p.validate()?;
    let mut b = Builder {
        def: NetDef::new(),
        p,
        activation,
    };
    for host in ["Host1", "Host2", "Host3"] {
        b.places(host, 1);
    }
    for vm in ["SSVM", "CPVM", "VR"] {
        b.places(vm, 1);
    }
    b.kill("T0", "SSVM", "Host2");
    b.kill("T1", "CPVM", "Host2");
    b.kill("T2", "VR", "Host2");
    b.failure_repair("Host1", "mttfc", "mttrc", None);
    b.failure_repair("Host2", "mttfh", "mttrh", None);
    b.failure_repair("Host3", "mttfh", "mttrh", None);
    for vm in ["SSVM", "CPVM", "VR"] {
        b.failure_repair(vm, "mttfvm", "mttrvm", Some("#Host2_On > 0".into()));
    }
    Ok(b)
}

/// Cold-standby Host4, activated while Host3 is down. It starts with
/// `VMNext2` running (and `WaitVMRed2` stocked when `with_vm_pool`).
fn standby_host(b: &mut Builder<'_>, with_vm_pool: bool) {
    b.def.place("WaitHostRed", 1);
    b.places("Host4", 0);
    b.places("VMNext2", 0);
    if with_vm_pool {
        b.def.place("WaitVMRed2", 0);
        b.places("VMRed2", 0);
    }
    b.activation("ActiveHostRed", "host_activation").guard("#Host3_On = 0");
    b.def
        .input("WaitHostRed", "ActiveHostRed")
        .output("ActiveHostRed", "Host4_On")
        .output("ActiveHostRed", "VMNext2_On");
    if with_vm_pool {
        b.def.output("ActiveHostRed", "WaitVMRed2");
    }
    b.failure_repair("Host4", "mttfh", "mttrh", None);
    b.kill("T4", "VMNext2", "Host4");
    let mut discard = vec!["VMNext2_Off".to_string()];
    if with_vm_pool {
        b.kill("T5", "VMRed2", "Host4");
        b.redundant_vm_pair("Host4", "VMNext2", "WaitVMRed2", "VMRed2", "ActiveVMRed2");
        discard.extend(["VMRed2_Off".to_string(), "WaitVMRed2".to_string()]);
    } else {
        b.failure_repair("VMNext2", "mttfvm", "mttrvm", Some("#Host4_On > 0".into()));
    }
    b.failback(&discard);
}

/// Hosts, system VMs and the Nextcloud VM without redundancy.
pub fn build_baseline(p: &ParamSet) -> Result<Model, ZooError> {
    let mut b = infrastructure(p, Activation::Exponential)?;
    b.places("VMNext", 1);
    b.kill("T3", "VMNext", "Host3");
    b.failure_repair("VMNext", "mttfvm", "mttrvm", Some("#Host3_On > 0".into()));
    b.finish(ModelKind::Baseline, BASELINE_METRIC)
}

pub fn build_host_redundancy(p: &ParamSet) -> Result<Model, ZooError> {
    build_host_redundancy_with(p, Activation::Exponential)
}

pub fn build_host_redundancy_with(p: &ParamSet, activation: Activation) -> Result<Model, ZooError> {
    let mut b = infrastructure(p, activation)?;
    b.places("VMNext", 1);
    b.kill("T3", "VMNext", "Host3");
    b.failure_repair("VMNext", "mttfvm", "mttrvm", Some("#Host3_On > 0".into()));
    standby_host(&mut b, false);
    b.finish(ModelKind::HostRedundancy, HOST_RED_METRIC)
}

/// Nextcloud VM pair (VMNext active, VMRed cold standby) on Host3.
fn host3_vm_pair(b: &mut Builder<'_>) {
    b.places("VMNext", 1);
    b.def.place("WaitVMRed", 1);
    b.places("VMRed", 0);
    b.kill("T3", "VMNext", "Host3");
    b.kill("T6", "VMRed", "Host3");
    b.redundant_vm_pair("Host3", "VMNext", "WaitVMRed", "VMRed", "ActiveVMRed");
}

pub fn build_vm_redundancy(p: &ParamSet) -> Result<Model, ZooError> {
    build_vm_redundancy_with(p, Activation::Exponential)
}

pub fn build_vm_redundancy_with(p: &ParamSet, activation: Activation) -> Result<Model, ZooError> {
    let mut b = infrastructure(p, activation)?;
    host3_vm_pair(&mut b);
    b.finish(ModelKind::VmRedundancy, VM_RED_METRIC)
}

pub fn build_combined(p: &ParamSet) -> Result<Model, ZooError> {
    build_combined_with(p, Activation::Exponential)
}

pub fn build_combined_with(p: &ParamSet, activation: Activation) -> Result<Model, ZooError> {
    let mut b = infrastructure(p, activation)?;
    host3_vm_pair(&mut b);
    standby_host(&mut b, true);
    b.finish(ModelKind::Combined, COMBINED_METRIC)
}

/// Default parameter values of a built-in model, by name.
pub fn default_params(kind: ModelKind) -> BTreeMap<String, f64> {
    match kind {
        ModelKind::OnOff => {
            let p = ParamSet::default();
            BTreeMap::from([("mttf".into(), p.mttfh), ("mttr".into(), p.mttrh)])
        }
        _ => ParamSet::default()
            .entries()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
    }
}

/// Builds a model from defaults with the given overrides applied.
pub fn build_model(
    kind: ModelKind,
    overrides: &BTreeMap<String, f64>,
    activation: Activation,
) -> Result<Model, ZooError> {
    let mut params = default_params(kind);
    for (k, v) in overrides {
        match params.get_mut(k) {
            Some(slot) => *slot = *v,
            None => {
                return Err(ZooError::UnknownParam {
                    model: kind.name().into(),
                    name: k.clone(),
                })
            }
        }
    }
    if kind == ModelKind::OnOff {
        return build_onoff(params["mttf"], params["mttr"]);
    }
    let mut p = ParamSet::default();
    for (k, v) in &params {
        p.set(k, *v)?;
    }
    match kind {
        ModelKind::OnOff => unreachable!(),
        ModelKind::Baseline => build_baseline(&p),
        ModelKind::HostRedundancy => build_host_redundancy_with(&p, activation),
        ModelKind::VmRedundancy => build_vm_redundancy_with(&p, activation),
        ModelKind::Combined => build_combined_with(&p, activation),
    }
}
