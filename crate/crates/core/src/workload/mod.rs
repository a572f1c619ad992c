//! Open-loop clients and the metric pipelines fed by their request records.

mod client;
mod metrics;

pub use client::{ClientGen, ClientSpec, WorkloadKind, YCSB_KEYS, YCSB_READ_RATIO, ZIPF_EXPONENT};
pub use metrics::{
    gini, nearest_rank, population_stddev, MetricsAggregate, Outcome, RequestRecord, SecondRow,
};
