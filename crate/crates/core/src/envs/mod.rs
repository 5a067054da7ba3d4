//! Concrete environments.

pub mod dag;
pub mod fragment;
pub mod hypergrid;
pub mod sequence;

pub use dag::{DagEnv, DagState, GraphScorer, UniformGraphScore};
pub use fragment::{Fragment, FragmentEnv, FragmentState};
pub use hypergrid::{Hypergrid, HypergridReward, HypergridState};
pub use sequence::{MotifLandscape, SequenceEnv, SequenceReward, SequenceState};
