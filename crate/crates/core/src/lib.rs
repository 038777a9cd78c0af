//! Simulation of spiking recurrent networks trained with e-prop on
//! phase-change memory crossbars.
//!
//! The crate is organised bottom-up: [`device`] models a single PCM cell,
//! [`crossbar`] arranges cells into differential multi-device synapses,
//! [`snn`] and [`eprop`] simulate the network and estimate its gradients,
//! [`updaters`] turns gradients into SET pulses, and [`train`], [`sweep`] and
//! [`bench`] drive whole experiments.

pub mod bench;
pub mod config;
pub mod crossbar;
pub mod device;
pub mod eprop;
pub mod error;
pub mod report;
pub mod snn;
pub mod sweep;
pub mod task;
pub mod train;
pub mod updaters;

pub use bench::{device_bench, drift_demo, BenchTable, DeviceBenchConfig, DriftDemoConfig};
pub use config::{sub_seed, ExperimentConfig, InitConfig, Mode};
pub use crossbar::{ApplyStats, Crossbar, Mask, Polarity, PulsePlan, Shape, SynapseMask};
pub use device::{DeviceMode, DeviceModelParams, DeviceState};
pub use eprop::{run_eprop_trial, trial_loss, Feedback, GradAccum, Gradients, TraceState};
pub use error::{Error, Result};
pub use sweep::{sweep, ParamSpace, SweepConfig, SweepEntry};
pub use snn::{poisson_input, NetParams, NetState, Network, SpikeTrain, TrialOutput, Weights};
pub use task::{make_target, TargetPattern};
pub use train::{train, EpochRecord, Trainer, TrialMetrics};
pub use updaters::{Accumulator, Scheme, Updater, UpdaterConfig};
