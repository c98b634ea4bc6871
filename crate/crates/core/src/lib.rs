//! Optimized cost-per-click bid engine.
//!
//! Per page view, each eligible ad's bid may move inside an ROI-safe range
//! derived from how its predicted conversion rate compares with the
//! campaign baseline. Ads are still displayed in eCPM order, but which ads
//! reach the top slots is chosen by a pluggable composite objective.
//! The crate also carries an expected-value replay simulator, metric
//! aggregation and a seeded synthetic bid-log generator.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod auction;
pub mod bidlog;
pub mod bidopt;
pub mod calibration;
pub mod datagen;
pub mod domain;
pub mod metrics;
pub mod objectives;
pub mod simulator;

pub use auction::{run_ocpc, AuctionOutcome, BaselineSource, OcpcAuction, Placement};
pub use bidopt::BidBounds;
pub use domain::{AdCandidate, Campaign, CampaignId, CategoryId, PvRequest, Strategy, StrategyConfig};
pub use objectives::{ObjectiveSpec, Signal};
