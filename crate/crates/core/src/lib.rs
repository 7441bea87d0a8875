//! Parallel weight-tied low-rank adapters diversified by static random masks.
//!
//! A CapaBoost layer keeps one pair of trainable factors `B` (d1×r) and `A`
//! (r×d2) and evaluates `d` masked copies of them in parallel:
//!
//! ```text
//! z = x·W_pre + Σᵢ (B ⊙ m_bᵢ)(A ⊙ m_aᵢ)            (linear, LoRA-style)
//! z = x·W_pre + Σᵢ f(x·(B ⊙ m_bᵢ)) (A ⊙ m_aᵢ)      (adapter-style)
//! ```
//!
//! With distinct masks the summed update has rank `d·r` (generically) while
//! only the union of the kept entries needs to be stored. The masks are never
//! stored; they are regenerated from scalar seeds.
//!
//! Modules:
//! - [`linalg`]: dense matrices, the seeded RNG, singular values and numerical rank.
//! - [`masks`]: Bernoulli and N:M mask generation and mask policies.
//! - [`layers`]: plain LoRA and CapaBoost layers with analytic gradients.
//! - [`rankcheck`]: Monte-Carlo rank-additivity trials and layer rank sweeps.
//! - [`accounting`]: parameter and FLOP counts.
//! - [`harness`]: synthetic tasks, optimizers, training and ablation sweeps.
//! - [`report`]: CSV / markdown / JSON-lines rendering.

pub mod accounting;
pub mod error;
pub mod harness;
pub mod layers;
pub mod linalg;
pub mod masks;
pub mod rankcheck;
pub mod report;

pub use error::{Error, Result};
pub use linalg::{Matrix, RngStream};
