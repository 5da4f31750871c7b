//! Mean-field dynamics of the two-dimensional transverse-field Ising model
//! and analysis of the light cone of a local perturbation.
//!
//! The crate integrates the first- and second-order truncations of the BBGKY
//! hierarchy for `H = -J/2 sum sx sx - h/2 sum sz` on a periodic `L x L`
//! lattice, checks them against a perturbative oracle, and extracts arrival
//! times, front velocities and the shape of the wavefront.
//!
//! ```
//! use tfim_lightcone::prelude::*;
//!
//! let params = ModelParams { t_end: 1.0, ..ModelParams::new(5, 0.3, Order::First) };
//! let record = integrate(&build_ordered_state(&params), &params, &mut []).unwrap();
//! let sx = record.snapshots.last().unwrap().get(SiteIndex::ORIGIN)[0];
//! assert!((sx - sx_series(0.3, 1.0, 1.0)).abs() < 1e-3);
//! ```

pub mod dynamics;
pub mod error;
pub mod export;
pub mod lattice;
pub mod lightcone;
pub mod oracle;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::dynamics::{
        bloch_norms, integrate, integrate_with, mf_energy, rhs_order1, rhs_order2, rk4_step,
        Observer, Recording, Rk4, TrajectoryRecord,
    };
    pub use crate::error::{Error, Result};
    pub use crate::lattice::{
        build_ordered_state, build_perturbed_state, d_eucl, d_manh, torus_displacement, Axis,
        Displacement, ModelParams, Order, SiteIndex, SpinField, SystemState,
    };
    pub use crate::lightcone::{
        anisotropy_profile, arrival_map, arrival_time, delta_field, fit_scaling, fit_velocity,
        run_lightcone, v1d_reference, Arrival, ArrivalMap, DeltaSeries, LightconeOptions,
        ScalingFit, VelocityFit,
    };
    pub use crate::oracle::{eval_perturbation_sx, sx_series, term_values};
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/model.md")]
    struct Model;
    #[doc = include_str!("../../../book/src/first-order.md")]
    struct FirstOrder;
    #[doc = include_str!("../../../book/src/second-order.md")]
    struct SecondOrder;
    #[doc = include_str!("../../../book/src/oracle.md")]
    struct Oracle;
    #[doc = include_str!("../../../book/src/lightcone.md")]
    struct Lightcone;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
