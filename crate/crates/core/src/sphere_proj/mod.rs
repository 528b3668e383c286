//! Spherical geometry: gnomonic tangent views with pre-upsampling and
//! weighted fusion, and the two-hemisphere fisheye format.

mod fisheye;
mod gnomonic;
mod grid;
mod tangent;

pub use fisheye::{
    disc_mask, erp_to_fisheye, fisheye_direction, fisheye_pixel_of, fisheye_to_erp, focal_for_side, FisheyePair,
    Hemisphere,
};
pub use gnomonic::{cos_angular_distance, gnomonic_forward, gnomonic_inverse, wrap_longitude, LatLon};
pub use grid::{TangentGrid, DEFAULT_FOV_DEG, DEFAULT_PATCH, DEFAULT_RING_LAT_DEG};
pub use tangent::{
    erp_to_tangent, fusion_weight, sample_view, tangent_to_erp, upsample_erp, FusionPlan, TangentViewSet,
};
