//! Traffic grooming and lightpath provisioning for WDM free-space-optical
//! data-center networks, with priority-queue delay analytics and a
//! deterministic discrete-event simulator.

pub mod channel;
pub mod config;
pub mod groom;
pub mod milp;
pub mod queue;
pub mod sim;
pub mod topo;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
