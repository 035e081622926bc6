//! Two-party one-round protocols on the ring.

pub mod dense;
pub mod harness;

pub use dense::{
    conjugated_swap, designated_sites, nlqc_choi, pseudo_bulk_choi, pseudo_bulk_dynamics, run_nlqc, run_nlqc_with,
    time_rewind_encoder, trace_distance, LocalMap, NlqcRun, Port, PseudoBulkSpec, TruncatedSwap,
};
pub use harness::{audit, Event, Fault, LocalityGuard, Party, Register, Stage, Transcript};
