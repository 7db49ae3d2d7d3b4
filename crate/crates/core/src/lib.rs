//! Field-calculus runtime for aggregate programs, with aggregate processes,
//! self-stabilising building blocks and a deterministic network simulator.
//!
//! An aggregate program is one function run by every device in rounds.
//! Each round reads the values neighbours sent after their latest round,
//! computes, and sends its own. Values from different call sites never mix:
//! every builtin is keyed by its position in the program, so `nbr` and
//! `share` only see neighbours that evaluated the same expression.
//!
//! ```
//! use fieldcalc::blocks::{abf_hops, Hops};
//! use fieldcalc::calculus::DeviceId;
//! use fieldcalc::simulator::Lockstep;
//!
//! // Five devices in a line; device 0 is the source of a hop gradient.
//! let mut net = Lockstep::line(5);
//! let hops = net.run(6, |c| abf_hops(c, c.uid() == DeviceId(0))).unwrap();
//! assert_eq!(hops[&DeviceId(4)], Hops(4));
//! ```
//!
//! - [`calculus`]: rounds, exports, neighbouring fields and builtins.
//! - [`processes`]: `spawn`, the dynamic keyed sub-computations.
//! - [`blocks`]: gradient, broadcast and collection.
//! - [`simulator`]: discrete-event radio network with metrics, plus a
//!   synchronous [`simulator::Lockstep`] driver for tests.
//! - [`warehouse`]: the smart-warehouse application built on the above.
//! - [`cli`]: the `fieldsim` command line.

pub mod blocks;
pub mod calculus;
pub mod cli;
pub mod geometry;
pub mod processes;
pub mod simulator;
pub mod warehouse;
