//! Two-settlement electricity market model of grid-scale battery dispatch.
//!
//! The model covers two trading periods with uncertain demand. The day-ahead
//! market clears both periods at the demand forecast; once period-1 demand is
//! realized, the real-time market clears the increment. Slow generators can
//! only sell day-ahead, fast generators sell in both settlements, and a
//! battery moves energy from period 1 to period 2 (or back) by bidding a
//! day-ahead discharge plus a real-time discharge policy.
//!
//! Three dispatch regimes are compared:
//!
//! * **no battery** — the market clears on demand alone;
//! * **centralized** — a system operator picks the schedule that minimizes
//!   expected generation cost;
//! * **decentralized** — the battery owner picks the schedule that maximizes
//!   expected arbitrage profit.
//!
//! [`regimes`] evaluates all three in closed form, [`oracle`] re-derives the
//! optima numerically on scenario trees (and by Monte Carlo) so the closed
//! forms can be checked, and [`calibration`] estimates the model inputs from
//! hourly net-demand data.

pub mod calibration;
pub mod cli;
pub mod demand;
mod error;
pub mod market;
pub mod oracle;
pub mod regimes;

pub use error::{Error, Result};
