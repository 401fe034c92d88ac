//! Ground shading and photosynthetically active radiation (PAR) under
//! agrivoltaic layouts: fixed vertical, one-axis tracking and two-axis
//! tracking PV rows over a crop area.
//!
//! The geometry and radiation formulas are generic over the scalar type
//! ([`Real`]: `f32` or `f64`); the type aliases below fix the `f64`
//! instances used by the simulation pipeline.

pub mod config;
pub mod geom;
pub mod ingest;
pub mod par;
pub mod real;
pub mod report;
pub mod scene;
pub mod shadegeom;
pub mod simulate;
pub mod skydiffuse;
pub mod solar;
pub mod synthetic;
pub mod tracking;

pub use real::Real;

pub type Vec3 = geom::Vector3<f64>;
pub type Point = geom::Point2<f64>;
pub type Polygon = geom::ConvexPolygon<f64>;
pub type Panel = scene::PanelQuad<f64>;
pub type Crop = scene::CropArea<f64>;
pub type Angles = tracking::TrackerAngles<f64>;
