//! Bounded domains, regularity audits and simplex tilings.

pub mod group;
pub mod polytope;
pub mod regular;
pub mod shape;
pub mod tiling;

pub use group::{
    random_rotation, reference_simplex, rotation_angle_cdf, sample_group_element, sample_group_elements,
    GroupElement, TilingSpec, TranslationMode,
};
pub use polytope::ConvexPolytope;
pub use regular::{
    collar_volume, cone_check, direction_codebook, fisher_a_estimate, regularized_volume, CollarEstimate,
    ConeReport, ConeWitness, FisherEstimate, RegularizedVolume,
};
pub use shape::{DomainShape, Relation, RigidTransform, ShapeKind};
pub use tiling::{classify_cells, inclusion_radius, tiling_volume_identity, CellClassification, TilingReport};
