//! Multi-region economic dispatch with aggregated, flexible demand.
//!
//! The crate models a transmission grid as a small set of regions connected
//! by DC-approximated interconnectors. Each region carries a fleet of
//! block-bid generators and one demand aggregator whose load splits into a
//! critical part (must be served as given) and a flexible part backed by
//! distributed PV and battery storage. A 24-step linear program dispatches
//! generation and flexible demand together; everything else in the crate is
//! built on top of that solve:
//!
//! - [`storage`] sizes the aggregate battery (power rating and energy loss)
//!   by fixed-point iteration over repeated dispatches,
//! - [`taker`] re-runs the day with demand reacting to posted prices instead
//!   of being co-optimised, for comparison against the anticipatory LP,
//! - [`analysis`] computes balancing metrics (spill, unserved energy, backup
//!   use) and a per-hour loadability margin found by ramping demand until
//!   the network hits a transfer limit,
//! - [`scenario`] runs year-long scenario sweeps with substituted renewable
//!   fleets and storage/PV uptake levels, deterministically and resumably,
//! - [`report`] renders result tables and SVG charts from scenario output.
//!
//! The primary interface is the `examples/` directory: each example is a
//! runnable walk-through of one capability, starting from a bundled
//! four-region test system. `validate_network` introduces the data model,
//! `dispatch_day` runs and inspects a single dispatch, `calibrate_storage`
//! sizes batteries, `price_taker_day` contrasts the two demand-response
//! modes, `loadability_sweep` traces the security margin over a day,
//! `run_scenarios` executes a full scenario matrix, and `render_figures`
//! turns its output into charts. A thin `gridflex` binary wraps the same
//! entry points for shell use (`run`, `calibrate`, `loadability`, `report`).
//!
//! Internally the LP is solved by a self-contained bounded-variable revised
//! simplex ([`simplex`]) over a sparse row/column description ([`lp`]); no
//! external solver is required, and solves are bit-reproducible across runs
//! on the same platform.

pub mod analysis;
pub mod cli;
pub mod dispatch;
pub mod fixtures;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod report;
pub mod scenario;
pub mod simplex;
pub mod storage;
pub mod taker;
