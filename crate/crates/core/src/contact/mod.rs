//! Incident-node projection, the penalty contact element and its weighting.

mod element;
mod projection;
mod weighting;

pub use element::{
    contact_element, contact_gap, contact_potential, ContactParams, ContactResponse,
    PenaltyWeighting, TargetAssignment,
};
pub use projection::{interpolate, project_to_simplex, projection_derivatives, ProjectionDerivatives};
pub use weighting::{tributary_measure, weighted_penalty};
