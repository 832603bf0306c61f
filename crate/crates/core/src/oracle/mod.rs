//! Brute-force oracles and Monte Carlo drivers.

pub mod distortion;
pub mod hard;
pub mod lemmas;
pub mod stats;
pub mod tensor_oracle;
pub mod tvd;

pub use distortion::{directions, distortion_of, empirical_distortion, DirectionMode, DistortionReport};
pub use hard::{gen_hard_iid_instance, HardIidKind};
pub use lemmas::{mc_boundary_lemma, mc_rademacher_l1, RademacherReport, RademacherVectors};
pub use tensor_oracle::{materialized_sketch, mode_matrix};
pub use tvd::{count_tensor, exact_tvd};
