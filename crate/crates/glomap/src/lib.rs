//! Manifold learning for visualization that preserves global structure as
//! well as local detail.
//!
//! The pipeline builds a locally adaptive geodesic distance over a K-nearest
//! neighbor graph, converts distances to membership strengths at a
//! temperature that anneals over training, and minimizes a cross-entropy
//! between input-space and embedding-space edge weights with clipped
//! two-phase stochastic gradient steps. Two trainers are provided:
//!
//! * [`transductive::fit_transductive`] optimizes free 2-D particles
//!   (one per input row);
//! * [`inductive::fit_inductive`] trains a small feed-forward mapper by
//!   moving its outputs like particles and regressing the network onto the
//!   moved positions, so unseen points can be embedded with
//!   [`inductive::transform`].
//!
//! Supporting modules supply the synthetic datasets used in the test suite
//! (`data`), exact brute-force neighbor search (`neighbors`), shortest-path
//! distance construction (`geodesic`), and evaluation metrics (`metrics`).

pub mod affinity;
pub mod data;
pub mod error;
pub mod geodesic;
pub mod inductive;
pub mod metrics;
pub mod mlp;
pub mod neighbors;
pub mod transductive;

pub use error::{Error, Result};

/// Configure the global worker pool from the `GLOMAP_THREADS` environment
/// variable. A missing or unparsable value leaves the default (one worker
/// per logical CPU). Safe to call more than once; only the first call wins.
pub fn configure_threads_from_env() {
    if let Ok(v) = std::env::var("GLOMAP_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}
