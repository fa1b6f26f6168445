//! Last-mile transit scheduling: instances, decision diagrams, column
//! generation with branch-and-price, exact oracles and MILP export.

pub mod bp;
pub mod dd;
pub mod fixtures;
pub mod instgen;
pub mod lp;
pub mod milp;
pub mod model;
pub mod oracle;
pub mod report;
pub mod validate;

pub use model::{
    Alpha, Boarding, Destination, GroupTrip, Instance, Passenger, Schedule, Time, TransitTrip,
    Value,
};
pub use validate::{validate, ValidationReport, Violation};
