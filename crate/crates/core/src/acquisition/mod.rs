//! k-space sampling masks and the forward/adjoint acquisition operator.

pub mod mask;
pub mod operator;

pub use mask::{
    acs_band, make_equispaced_mask, make_radial_mask, make_vds_mask, make_vista_like_mask,
    radial_mask_with_offsets, vds_density, MaskPattern, SamplingMask,
};
pub use operator::{add_noise, rss_combine, AcquisitionOperator, CoilSensitivities, KSpaceData};
