//! Site and layout configuration, validation, and rest-pose panel geometry.
//!
//! Scene frame: x toward west, y toward south, z up. Rows run along the
//! y-axis (the tracker axis for one- and two-axis systems), panels are laid
//! with their length `L` across the row (x) and width `W` along it (y), so a
//! row of `n` contiguous panels is `n * W` long. Rows are spaced
//! `row_spacing` apart in x and centred on the origin; the crop rectangle is
//! centred between them.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Point2, Rect, Rotation3, Vector3};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Vertical,
    OneAxis,
    TwoAxis,
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SystemKind::Vertical => "vertical",
            SystemKind::OneAxis => "one_axis",
            SystemKind::TwoAxis => "two_axis",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteConfig {
    #[serde(default)]
    pub name: Option<String>,
    /// Degrees north.
    pub latitude: f64,
    /// Degrees east.
    pub longitude: f64,
    /// Metres above sea level.
    pub elevation: f64,
    /// Timestamps are always UTC; any other value is rejected by validation.
    #[serde(default = "utc")]
    pub timezone: String,
}

fn utc() -> String {
    "UTC".to_string()
}

impl SiteConfig {
    pub fn new(name: &str, latitude: f64, longitude: f64, elevation: f64) -> Self {
        Self {
            name: Some(name.to_string()),
            latitude,
            longitude,
            elevation,
            timezone: utc(),
        }
    }

    pub fn vasteras() -> Self {
        Self::new("Kärrbo Prästgård, Västerås", 59.6099, 16.5448, 20.0)
    }
    pub fn lanna() -> Self {
        Self::new("Lanna", 58.33, 13.1, 75.0)
    }
    pub fn estrees_mons() -> Self {
        Self::new("Estrees-Mons", 49.87, 3.02, 85.0)
    }
    pub fn klingenberg() -> Self {
        Self::new("Klingenberg", 50.89, 13.52, 478.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutConfig {
    pub system_kind: SystemKind,
    /// Panel dimension along the row [m].
    pub panel_width: f64,
    /// Panel dimension across the row [m].
    pub panel_length: f64,
    pub n_panels: usize,
    pub n_rows: usize,
    /// Distance between row axes [m].
    pub row_spacing: f64,
    pub row_length: f64,
    /// Crop reference area between the rows [m²].
    pub crop_area: f64,
    /// North-south distance between two-axis tracker axes [m].
    #[serde(default)]
    pub pitch: Option<f64>,
    /// Distance between neighbouring panel centres along a row [m]; defaults to
    /// `panel_width` (contiguous strip).
    #[serde(default)]
    pub panel_spacing: Option<f64>,
    /// Height of the rotation axis (trackers) or of the panel bottom edge
    /// (vertical) [m].
    pub axis_height: f64,
    #[serde(default)]
    pub fixed_tilt: Option<f64>,
    #[serde(default)]
    pub panel_azimuth: f64,
    #[serde(default)]
    pub axis_tilt: f64,
    #[serde(default = "default_tilt_min")]
    pub tilt_min: f64,
    #[serde(default = "default_tilt_max")]
    pub tilt_max: f64,
    #[serde(default = "default_grid_resolution")]
    pub grid_resolution: f64,
}

fn default_tilt_min() -> f64 {
    -60.0
}
fn default_tilt_max() -> f64 {
    60.0
}
fn default_grid_resolution() -> f64 {
    0.25
}

impl LayoutConfig {
    fn reference(kind: SystemKind) -> Self {
        Self {
            system_kind: kind,
            panel_width: 1.0,
            panel_length: 2.0,
            n_panels: 40,
            n_rows: 2,
            row_spacing: 10.0,
            row_length: 20.0,
            crop_area: 200.0,
            pitch: None,
            panel_spacing: None,
            axis_height: 3.0,
            fixed_tilt: None,
            panel_azimuth: 0.0,
            axis_tilt: 0.0,
            tilt_min: -60.0,
            tilt_max: 60.0,
            grid_resolution: 0.25,
        }
    }

    /// Reference fixed vertical layout: 2 rows of 20 panels, bottom edge on the ground.
    pub fn vertical() -> Self {
        Self {
            axis_height: 0.0,
            fixed_tilt: Some(90.0),
            ..Self::reference(SystemKind::Vertical)
        }
    }

    /// Reference horizontal one-axis tracker layout, axes at 3 m.
    pub fn one_axis() -> Self {
        Self::reference(SystemKind::OneAxis)
    }

    /// Reference two-axis layout: panels on a 2 m pitch along each row, so a
    /// row of 20 panels spans 39 m and overhangs the 20 m crop at both ends.
    pub fn two_axis() -> Self {
        Self {
            pitch: Some(2.0),
            panel_spacing: Some(2.0),
            row_length: 40.0,
            ..Self::reference(SystemKind::TwoAxis)
        }
    }

    pub fn panels_per_row(&self) -> usize {
        self.n_panels.checked_div(self.n_rows).unwrap_or(0)
    }

    pub fn along_row_spacing(&self) -> f64 {
        self.panel_spacing.unwrap_or(self.panel_width)
    }

    /// Along-row extent occupied by the panels of one row [m].
    pub fn row_extent(&self) -> f64 {
        let n = self.panels_per_row();
        if n == 0 {
            0.0
        } else {
            (n - 1) as f64 * self.along_row_spacing() + self.panel_width
        }
    }

    /// Crop rectangle dimensions (across rows, along rows) [m].
    pub fn crop_extent(&self) -> (f64, f64) {
        (self.row_spacing, self.crop_area / self.row_spacing)
    }

    /// East-west axis distance normalised by the panel dimension across the axis.
    pub fn l_ew(&self) -> f64 {
        self.row_spacing / self.panel_length
    }

    /// North-south axis distance over panel width (`L_NS / W`), two-axis only.
    pub fn l_ns_ratio(&self) -> f64 {
        self.pitch.unwrap_or(self.along_row_spacing()) / self.panel_width
    }

    /// Height of the panel rotation centre.
    pub fn center_height(&self) -> f64 {
        match self.system_kind {
            SystemKind::Vertical => {
                let tilt = self.fixed_tilt.unwrap_or(90.0).to_radians();
                self.axis_height + 0.5 * self.panel_length * tilt.sin().abs()
            }
            _ => self.axis_height,
        }
    }
}

/// One configuration problem: offending field, its value and the violated rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub field: String,
    pub value: String,
    pub rule: String,
}

impl Diagnostic {
    pub fn new(
        field: impl Into<String>,
        value: impl fmt::Display,
        rule: impl Into<String>,
    ) -> Self {
        Self {
            field: field.into(),
            value: value.to_string(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}: {}", self.field, self.value, self.rule)
    }
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid config: {0}")]
    InvalidConfig(Diagnostic),
    #[error("geometry overflow: panels occupy {extent} m of a {row_length} m row")]
    GeometryOverflow { extent: f64, row_length: f64 },
}

const TILE_TOL: f64 = 1e-9;

fn tiles(extent: f64, res: f64) -> bool {
    let n = extent / res;
    (n - n.round()).abs() < TILE_TOL * n.max(1.0)
}

/// Checks every site and layout invariant; an empty list means the pair is valid.
pub fn validate_config(layout: &LayoutConfig, site: &SiteConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut diag = |field: &str, value: String, rule: &str| {
        out.push(Diagnostic {
            field: field.to_string(),
            value,
            rule: rule.to_string(),
        })
    };

    if !(-90.0..=90.0).contains(&site.latitude) {
        diag(
            "latitude",
            site.latitude.to_string(),
            "must lie in [-90, 90]",
        );
    }
    if !(-180.0..=180.0).contains(&site.longitude) {
        diag(
            "longitude",
            site.longitude.to_string(),
            "must lie in [-180, 180]",
        );
    }
    if !site.elevation.is_finite() {
        diag("elevation", site.elevation.to_string(), "must be finite");
    }
    if !site.timezone.eq_ignore_ascii_case("utc") {
        diag("timezone", site.timezone.clone(), "timestamps must be UTC");
    }

    let positive = [
        ("panel_width", layout.panel_width),
        ("panel_length", layout.panel_length),
        ("row_spacing", layout.row_spacing),
        ("row_length", layout.row_length),
        ("crop_area", layout.crop_area),
        ("grid_resolution", layout.grid_resolution),
    ];
    for (field, v) in positive {
        if !(v > 0.0 && v.is_finite()) {
            diag(field, v.to_string(), "must be positive and finite");
        }
    }
    if layout.n_rows == 0 {
        diag("n_rows", "0".into(), "must be at least 1");
    } else if !layout.n_panels.is_multiple_of(layout.n_rows) {
        diag(
            "n_panels",
            layout.n_panels.to_string(),
            "must be divisible by n_rows",
        );
    }
    if !(layout.axis_height >= 0.0 && layout.axis_height.is_finite()) {
        diag(
            "axis_height",
            layout.axis_height.to_string(),
            "must be non-negative",
        );
    }
    if layout.tilt_min > layout.tilt_max {
        diag(
            "tilt_min",
            layout.tilt_min.to_string(),
            "must not exceed tilt_max",
        );
    }
    if layout.tilt_max.abs() > 90.0 {
        diag(
            "tilt_max",
            layout.tilt_max.to_string(),
            "tilt_max exceeds ±90 physical bound",
        );
    }
    if layout.tilt_min.abs() > 90.0 {
        diag(
            "tilt_min",
            layout.tilt_min.to_string(),
            "tilt_min exceeds ±90 physical bound",
        );
    }
    if !(-90.0..=90.0).contains(&layout.axis_tilt) {
        diag(
            "axis_tilt",
            layout.axis_tilt.to_string(),
            "must lie in [-90, 90]",
        );
    }
    if !layout.panel_azimuth.is_finite() {
        diag(
            "panel_azimuth",
            layout.panel_azimuth.to_string(),
            "must be finite",
        );
    }

    match layout.system_kind {
        SystemKind::Vertical => match layout.fixed_tilt {
            None => diag("fixed_tilt", "null".into(), "required for vertical systems"),
            Some(t) if !(-90.0..=90.0).contains(&t) => {
                diag("fixed_tilt", t.to_string(), "must lie in [-90, 90]")
            }
            _ => {}
        },
        SystemKind::OneAxis => {}
        SystemKind::TwoAxis => match layout.pitch {
            Some(p) if p > layout.panel_width => {}
            Some(p) => diag("pitch", p.to_string(), "must exceed panel_width"),
            None => diag("pitch", "null".into(), "required for two-axis systems"),
        },
    }
    if let Some(s) = layout.panel_spacing {
        if s < layout.panel_width {
            diag(
                "panel_spacing",
                s.to_string(),
                "panels overlap along the row",
            );
        }
    }
    if layout.system_kind != SystemKind::Vertical && layout.n_panels > 0 {
        let reach = 0.5 * layout.panel_length.hypot(layout.panel_width);
        if layout.axis_height < reach {
            diag(
                "axis_height",
                layout.axis_height.to_string(),
                "tracked panels would reach below ground",
            );
        }
    }
    if layout.n_rows >= 2 && layout.l_ew() <= 1.0 {
        diag(
            "row_spacing",
            layout.row_spacing.to_string(),
            "rows overlap at rest (L_EW must exceed 1)",
        );
    }

    if layout.row_spacing > 0.0 && layout.crop_area > 0.0 && layout.grid_resolution > 0.0 {
        let (ex, ey) = layout.crop_extent();
        if ey > layout.row_length * (1.0 + TILE_TOL) {
            diag(
                "crop_area",
                layout.crop_area.to_string(),
                "crop rectangle longer than row_length",
            );
        }
        if !tiles(ex, layout.grid_resolution) || !tiles(ey, layout.grid_resolution) {
            diag(
                "grid_resolution",
                layout.grid_resolution.to_string(),
                "resolution does not tile area",
            );
        }
    }
    if layout.row_extent() > layout.row_length * (1.0 + TILE_TOL) {
        diag(
            "n_panels",
            layout.n_panels.to_string(),
            "panels exceed row_length",
        );
    }
    out
}

/// A PV panel: corners `P1..P4` as in the rest-pose construction
/// (`P2 = P1 + W ŷ`, `P3 = P1 + L x̂`, `P4 = P1 + L x̂ + W ŷ`) and its rotation centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelQuad<T> {
    pub corners: [Vector3<T>; 4],
    pub center: Vector3<T>,
    pub row_index: usize,
}

impl<T: Real> PanelQuad<T> {
    /// Rest pose from the lower corner `(x0, y0, z0)`.
    pub fn at_rest(origin: Vector3<T>, length: T, width: T, row_index: usize) -> Self {
        let Vector3 {
            x: x0,
            y: y0,
            z: z0,
        } = origin;
        let corners = [
            Vector3::new(x0, y0, z0),
            Vector3::new(x0, y0 + width, z0),
            Vector3::new(x0 + length, y0, z0),
            Vector3::new(x0 + length, y0 + width, z0),
        ];
        let half = T::lit(0.5);
        let center = Vector3::new(x0 + length * half, y0 + width * half, z0);
        Self {
            corners,
            center,
            row_index,
        }
    }

    /// Corners in boundary order (P1, P2, P4, P3).
    pub fn outline(&self) -> [Vector3<T>; 4] {
        let c = &self.corners;
        [c[0], c[1], c[3], c[2]]
    }

    /// Unit normal `(P2 − P1) × (P3 − P1)` flipped to point upward-ish as at rest
    /// (for the rest pose this is `-ẑ`; the sign is irrelevant to shading).
    pub fn normal(&self) -> Vector3<T> {
        let c = &self.corners;
        (c[2] - c[0]).cross(&(c[1] - c[0])).normalized()
    }

    /// Distance of `P4` from the plane through `P1, P2, P3`.
    pub fn coplanarity_error(&self) -> T {
        let n = self.normal();
        (self.corners[3] - self.corners[0]).dot(&n).abs()
    }

    /// The six pairwise corner distances.
    pub fn pairwise_distances(&self) -> [T; 6] {
        let c = &self.corners;
        [
            c[0].distance(&c[1]),
            c[0].distance(&c[2]),
            c[0].distance(&c[3]),
            c[1].distance(&c[2]),
            c[1].distance(&c[3]),
            c[2].distance(&c[3]),
        ]
    }

    pub fn map(&self, f: impl Fn(Vector3<T>) -> Vector3<T>) -> Self {
        Self {
            corners: self.corners.map(&f),
            center: f(self.center),
            row_index: self.row_index,
        }
    }

    pub fn cast<U: Real>(&self) -> PanelQuad<U> {
        PanelQuad {
            corners: self.corners.map(|c| c.cast()),
            center: self.center.cast(),
            row_index: self.row_index,
        }
    }
}

/// Ground grid over the crop reference rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropArea<T> {
    /// Lower (east-north) corner.
    pub origin: Point2<T>,
    pub extent_x: T,
    pub extent_y: T,
    pub grid_resolution: T,
    pub nx: usize,
    pub ny: usize,
    /// Cell centres, `y` outer and `x` inner: index `iy * nx + ix`.
    pub cell_centers: Vec<Point2<T>>,
}

impl<T: Real> CropArea<T> {
    /// Rectangle centred on the origin, discretised at `res`.
    pub fn centered(extent_x: T, extent_y: T, res: T) -> Self {
        let half = T::lit(0.5);
        let origin = Point2::new(-extent_x * half, -extent_y * half);
        let nx = (extent_x / res).round().to_usize().unwrap_or(0);
        let ny = (extent_y / res).round().to_usize().unwrap_or(0);
        let mut cell_centers = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            let y = origin.y + (T::from_usize(iy).unwrap() + half) * res;
            for ix in 0..nx {
                let x = origin.x + (T::from_usize(ix).unwrap() + half) * res;
                cell_centers.push(Point2::new(x, y));
            }
        }
        Self {
            origin,
            extent_x,
            extent_y,
            grid_resolution: res,
            nx,
            ny,
            cell_centers,
        }
    }

    pub fn rect(&self) -> Rect<T> {
        Rect::new(
            self.origin,
            Point2::new(self.origin.x + self.extent_x, self.origin.y + self.extent_y),
        )
    }

    /// `A_tot` [m²].
    pub fn area(&self) -> T {
        self.extent_x * self.extent_y
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_area(&self) -> T {
        self.grid_resolution * self.grid_resolution
    }

    /// Index of the cell mirrored through the crop centre along x.
    pub fn mirror_x(&self, idx: usize) -> usize {
        let (iy, ix) = (idx / self.nx, idx % self.nx);
        iy * self.nx + (self.nx - 1 - ix)
    }

    pub fn mirror_y(&self, idx: usize) -> usize {
        let (iy, ix) = (idx / self.nx, idx % self.nx);
        (self.ny - 1 - iy) * self.nx + ix
    }
}

/// Orientation of the system frame relative to the geographic frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemFrame {
    /// Deviation of the row axis from north-south [deg].
    pub azimuth: f64,
    /// Axis tilt from horizontal [deg].
    pub axis_tilt: f64,
}

/// Rest-pose scene: panels, crop grid and system frame.
#[derive(Debug, Clone)]
pub struct Scene<T> {
    pub kind: SystemKind,
    pub panels: Vec<PanelQuad<T>>,
    pub crop: CropArea<T>,
    pub frame: SystemFrame,
}

impl<T: Real> Scene<T> {
    /// Rotation taking scene-frame vectors into the axis-tilted tracker frame.
    pub fn scene_to_tracker(&self) -> Rotation3<T> {
        Rotation3::about_x(T::lit(self.frame.axis_tilt))
    }
}

/// Builds rest-pose panels and the crop grid.
///
/// Every panel is flat at its centre height; vertical systems reach their
/// fixed tilt through the same pose rotation as the trackers.
pub fn build_scene<T: Real>(layout: &LayoutConfig) -> Result<Scene<T>, SceneError> {
    if layout.row_extent() > layout.row_length * (1.0 + TILE_TOL) {
        return Err(SceneError::GeometryOverflow {
            extent: layout.row_extent(),
            row_length: layout.row_length,
        });
    }
    // Site checks are not relevant here; validate the layout against a neutral site.
    let neutral = SiteConfig::new("", 0.0, 0.0, 0.0);
    if let Some(d) = validate_config(layout, &neutral).into_iter().next() {
        return Err(SceneError::InvalidConfig(d));
    }

    let per_row = layout.panels_per_row();
    let spacing = layout.along_row_spacing();
    let (l, w) = (layout.panel_length, layout.panel_width);
    let zc = layout.center_height();
    let mut panels = Vec::with_capacity(layout.n_panels);
    for row in 0..layout.n_rows {
        let xc = (row as f64 - (layout.n_rows as f64 - 1.0) * 0.5) * layout.row_spacing;
        for k in 0..per_row {
            let yc = (k as f64 - (per_row as f64 - 1.0) * 0.5) * spacing;
            let origin = Vector3::new(T::lit(xc - 0.5 * l), T::lit(yc - 0.5 * w), T::lit(zc));
            panels.push(PanelQuad::at_rest(origin, T::lit(l), T::lit(w), row));
        }
    }

    let (ex, ey) = layout.crop_extent();
    let crop = CropArea::centered(T::lit(ex), T::lit(ey), T::lit(layout.grid_resolution));
    Ok(Scene {
        kind: layout.system_kind,
        panels,
        crop,
        frame: SystemFrame {
            azimuth: layout.panel_azimuth,
            axis_tilt: layout.axis_tilt,
        },
    })
}
