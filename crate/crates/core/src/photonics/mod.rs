//! Photon emission, detection and heralding.

pub mod g2;
pub mod herald;
pub mod heralded;
pub mod overlap;
pub mod timing;

pub use g2::{
    g2_histogram, interference_visibility, visibility_from_histogram, G2Histogram, TaggedClick, VisibilityEstimate,
};
pub use herald::{herald_classify, ClickEvent, DetectionWindows, Detector, Herald, Provenance};
pub use heralded::{
    analytic_heralded_state, analytic_heralded_state_filtered, analytic_heralded_state_unfiltered,
    conditional_heralded_state, AnalyticHerald, BranchContext,
};
pub use overlap::{mode_overlap, IndistinguishabilityModel, OverlapKind};
pub use timing::{sample_emission_time, DetectorModel, EmissionModel};
