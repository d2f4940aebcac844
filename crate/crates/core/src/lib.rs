//! Model checking of counting and frequency temporal logics (fLTL, fCTL,
//! CLTL, CCTL, CCTL*) over Kripke structures.
//!
//! The decision procedures are exact on flat structures (every state lies on
//! at most one simple loop): satisfying runs are represented by path schemas,
//! frequency constraints are tracked by integer counters with sign guards,
//! and positive answers come with independently checkable certificates
//! (augmented path schemas). A Presburger backend with a counting quantifier
//! covers the full counting logics as a bounded semi-decision.

pub mod aps;
pub mod countersys;
pub mod fctl;
pub mod fltlflat;
pub mod logic;
pub mod model;
pub mod oracle;
pub mod ph;

pub use model::KripkeStructure;
