//! Streaming active test-time adaptation.
//!
//! A source-pretrained softmax classifier is adapted to a stream of shifted
//! feature batches under a label budget. Each step gates the batch by
//! prediction entropy, labels a few high-entropy samples chosen by incremental
//! weighted clustering, and fine-tunes on a balanced mix of pseudo-labeled
//! source-like samples and labeled anchors.
//!
//! ```no_run
//! use atta_lab::prelude::*;
//!
//! let bench = gen_benchmark(&BenchmarkSpec::synth4())?;
//! let phi = pretrain_source(&bench, &PretrainConfig::default(), &mut Rng::new(0))?;
//! let stream = make_stream(&bench, StreamOrder::DomainWise, 100, 0)?;
//! let cfg = EngineConfig { budget: 300, ..EngineConfig::default() };
//! let report = run_stream(&phi, &bench, &stream, &cfg, 0)?;
//! println!("mean target accuracy {:.3}", report.mean_target_accuracy());
//! # Ok::<(), atta_lab::Error>(())
//! ```

pub mod baselines;
pub mod cluster;
pub mod engine;
pub mod error;
pub mod gate;
pub mod harness;
pub mod model;
pub mod report;
pub mod rng;
pub mod streams;
pub mod theory;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::cluster::{AnchorSet, AnchorWeight};
    pub use crate::engine::{run_stream, EngineConfig, EngineState, WeightMode, WeightPlan};
    pub use crate::error::{Error, Result};
    pub use crate::gate::GateConfig;
    pub use crate::model::{LabeledSample, ModelParams, Shape};
    pub use crate::report::RunReport;
    pub use crate::rng::Rng;
    pub use crate::streams::{
        gen_benchmark, make_stream, pretrain_source, Benchmark, BenchmarkSpec, Oracle, PretrainConfig, StreamOrder,
    };
}
