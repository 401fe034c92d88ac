//! Isotropic diffuse shading over a discretised sky dome.
//!
//! The dome is sampled at integer multiples of `step` degrees: altitude
//! `0..=90`, azimuth `-180..=180` (the `+180` column duplicates `-180` and is
//! excluded from sums). Each node stands for the patch centred on it and is
//! weighted by `sin α cos α` (incidence on the horizontal ground times the
//! solid-angle factor), so the horizon and zenith rows carry zero weight.

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::geom::{Point2, Vector3};
use crate::real::Real;
use crate::scene::{CropArea, PanelQuad, SystemKind};
use crate::shadegeom::{beam_factor_exact, lattice_spans, shadow_polygons};
use crate::tracking::TrackerAngles;

/// Elevation used for the altitude-0 row of a shading table [deg].
pub const HORIZON_ELEVATION: f64 = 0.5;

/// Angular sampling of the sky dome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomeGrid {
    pub step: f64,
}

impl Default for DomeGrid {
    fn default() -> Self {
        Self { step: 1.0 }
    }
}

impl DomeGrid {
    pub fn new(step: f64) -> Self {
        assert!(
            step > 0.0 && (90.0 / step).fract().abs() < 1e-9,
            "dome step must divide 90°"
        );
        Self { step }
    }

    pub fn n_alt(&self) -> usize {
        (90.0 / self.step).round() as usize + 1
    }

    pub fn n_az(&self) -> usize {
        (360.0 / self.step).round() as usize + 1
    }

    pub fn altitude(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn azimuth(&self, j: usize) -> f64 {
        -180.0 + j as f64 * self.step
    }

    pub fn weight(&self, i: usize) -> f64 {
        let a = self.altitude(i).to_radians();
        a.sin() * a.cos()
    }

    /// Nodes with positive weight: `(altitude index, azimuth index, weight)`.
    pub fn weighted_nodes(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n_az = self.n_az() - 1;
        (1..self.n_alt() - 1).flat_map(move |i| (0..n_az).map(move |j| (i, j, self.weight(i))))
    }

    pub fn total_weight(&self) -> f64 {
        (1..self.n_alt() - 1).map(|i| self.weight(i)).sum::<f64>() * (self.n_az() - 1) as f64
    }
}

/// Unit vector toward altitude `alt`, azimuth `az` (degrees; azimuth from south, positive west).
pub fn dome_direction<T: Real>(alt: f64, az: f64) -> Vector3<T> {
    let (a, g) = (alt.to_radians(), az.to_radians());
    Vector3::new(
        T::lit(a.cos() * g.sin()),
        T::lit(a.cos() * g.cos()),
        T::lit(a.sin()),
    )
}

/// Identifies a pose for caching: system kind plus angles quantised to `bucket` degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PoseFingerprint {
    pub kind: SystemKind,
    pub omega_key: i64,
    pub beta_key: i64,
    /// Bucket width in millidegrees.
    pub bucket_mdeg: i64,
}

impl PoseFingerprint {
    pub fn new(kind: SystemKind, angles: &TrackerAngles<f64>, bucket: f64) -> Self {
        let q = |a: f64| (a / bucket).round() as i64;
        Self {
            kind,
            omega_key: q(angles.omega_itc),
            beta_key: q(angles.beta_itc),
            bucket_mdeg: (bucket * 1000.0).round() as i64,
        }
    }

    pub fn bucket(&self) -> f64 {
        self.bucket_mdeg as f64 / 1000.0
    }

    /// The bucket-centre pose every member of the bucket is evaluated at.
    pub fn representative(&self) -> TrackerAngles<f64> {
        let b = self.bucket();
        let omega = self.omega_key as f64 * b;
        let beta = self.beta_key as f64 * b;
        TrackerAngles {
            omega_it: omega,
            omega_itc: omega,
            beta_it: beta,
            beta_itc: beta,
            ..Default::default()
        }
    }
}

/// Beam shading factor for every dome node, altitude-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadingTable {
    pub dome: DomeGrid,
    pub values: Vec<f64>,
    pub fingerprint: Option<PoseFingerprint>,
}

impl ShadingTable {
    pub fn filled(dome: DomeGrid, value: f64) -> Self {
        Self {
            values: vec![value; dome.n_alt() * dome.n_az()],
            dome,
            fingerprint: None,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dome.n_az() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let n = self.dome.n_az();
        self.values[i * n + j] = v;
    }

    const MAGIC: &'static [u8; 8] = b"AGSHTBL1";

    /// Binary layout (little endian): magic `AGSHTBL1`; kind `u8`
    /// (0 vertical, 1 one-axis, 2 two-axis, 255 none); omega key `i64`;
    /// beta key `i64`; bucket millidegrees `i64`; dome step `f64`;
    /// `n_alt u32`; `n_az u32`; then `n_alt * n_az` `f64` values,
    /// altitude-major, azimuth-minor.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(Self::MAGIC)?;
        let (kind, fp) = match &self.fingerprint {
            Some(fp) => (
                match fp.kind {
                    SystemKind::Vertical => 0u8,
                    SystemKind::OneAxis => 1,
                    SystemKind::TwoAxis => 2,
                },
                *fp,
            ),
            None => (
                255,
                PoseFingerprint {
                    kind: SystemKind::Vertical,
                    omega_key: 0,
                    beta_key: 0,
                    bucket_mdeg: 0,
                },
            ),
        };
        w.write_all(&[kind])?;
        w.write_all(&fp.omega_key.to_le_bytes())?;
        w.write_all(&fp.beta_key.to_le_bytes())?;
        w.write_all(&fp.bucket_mdeg.to_le_bytes())?;
        w.write_all(&self.dome.step.to_le_bytes())?;
        w.write_all(&(self.dome.n_alt() as u32).to_le_bytes())?;
        w.write_all(&(self.dome.n_az() as u32).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> io::Result<Self> {
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(bad("not a shading table file"));
        }
        let mut b1 = [0u8; 1];
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b1)?;
        let mut i64s = [0i64; 3];
        for v in &mut i64s {
            r.read_exact(&mut b8)?;
            *v = i64::from_le_bytes(b8);
        }
        r.read_exact(&mut b8)?;
        let step = f64::from_le_bytes(b8);
        if !(step > 0.0 && (90.0 / step).fract().abs() < 1e-9) {
            return Err(bad("invalid dome step"));
        }
        let dome = DomeGrid::new(step);
        r.read_exact(&mut b4)?;
        let n_alt = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let n_az = u32::from_le_bytes(b4) as usize;
        if n_alt != dome.n_alt() || n_az != dome.n_az() {
            return Err(bad("table dimensions do not match dome step"));
        }
        let mut values = Vec::with_capacity(n_alt * n_az);
        for _ in 0..n_alt * n_az {
            r.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        let kind = match b1[0] {
            0 => Some(SystemKind::Vertical),
            1 => Some(SystemKind::OneAxis),
            2 => Some(SystemKind::TwoAxis),
            255 => None,
            _ => return Err(bad("unknown system kind")),
        };
        let fingerprint = kind.map(|kind| PoseFingerprint {
            kind,
            omega_key: i64s[0],
            beta_key: i64s[1],
            bucket_mdeg: i64s[2],
        });
        Ok(Self {
            dome,
            values,
            fingerprint,
        })
    }
}

/// Exact beam shading factor (polygon union) for a synthetic sun at every dome node.
pub fn build_shading_table<T: Real>(
    posed: &[PanelQuad<T>],
    crop: &CropArea<T>,
    dome: DomeGrid,
) -> ShadingTable {
    let mut table = ShadingTable::filled(dome, 0.0);
    if posed.is_empty() {
        return table;
    }
    let (n_alt, n_az) = (dome.n_alt(), dome.n_az());
    for i in 0..n_alt {
        let alt = if i == 0 {
            HORIZON_ELEVATION
        } else {
            dome.altitude(i)
        };
        if i == n_alt - 1 {
            // zenith: one direction regardless of azimuth
            let f = beam_factor_exact(posed, &Vector3::new(T::zero(), T::zero(), T::one()), crop);
            for j in 0..n_az {
                table.set(i, j, f.as_f64());
            }
            continue;
        }
        for j in 0..n_az - 1 {
            let s = dome_direction::<T>(alt, dome.azimuth(j));
            table.set(i, j, beam_factor_exact(posed, &s, crop).as_f64());
        }
        let first = table.get(i, 0);
        table.set(i, n_az - 1, first);
    }
    table
}

/// Weighted dome average of the table entries.
pub fn diffuse_factor(table: &ShadingTable) -> f64 {
    let dome = table.dome;
    let mut num = 0.0;
    for (i, j, w) in dome.weighted_nodes() {
        num += table.get(i, j) * w;
    }
    (num / dome.total_weight()).clamp(0.0, 1.0)
}

/// True when the ray from `cell` (on the ground) toward `(alt, az)` hits any panel.
pub fn cell_blocked<T: Real>(cell: Point2<T>, alt: f64, az: f64, posed: &[PanelQuad<T>]) -> bool {
    let d = dome_direction::<T>(alt, az);
    let o = Vector3::new(cell.x, cell.y, T::zero());
    posed.iter().any(|q| ray_hits_panel(&o, &d, q))
}

/// Ray-rectangle intersection for a posed panel (boundary inclusive).
pub fn ray_hits_panel<T: Real>(origin: &Vector3<T>, dir: &Vector3<T>, q: &PanelQuad<T>) -> bool {
    let p1 = q.corners[0];
    let e_len = q.corners[2] - p1;
    let e_wid = q.corners[1] - p1;
    let n = e_len.cross(&e_wid);
    let denom = dir.dot(&n);
    if denom == T::zero() {
        return false;
    }
    let t = (p1 - *origin).dot(&n) / denom;
    if t < T::zero() {
        return false;
    }
    let hit = *origin + *dir * t - p1;
    let u = hit.dot(&e_len) / e_len.dot(&e_len);
    let v = hit.dot(&e_wid) / e_wid.dot(&e_wid);
    let tol = T::lit(1e-12);
    u >= -tol && u <= T::one() + tol && v >= -tol && v <= T::one() + tol
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffuseResult {
    /// Mean of the per-cell factors (equal-area cells).
    pub f_d_aggregate: f64,
    pub f_d_cells: Vec<f64>,
    pub fingerprint: Option<PoseFingerprint>,
}

/// Panels that are translated copies of `reference` by whole grid cells.
#[derive(Debug, Clone)]
pub struct StampGroup<T> {
    pub reference: PanelQuad<T>,
    pub offsets: Vec<(i64, i64)>,
    /// Reference-lattice row and column windows that some offset maps into the grid.
    pub rows: (i64, i64),
    pub cols: (i64, i64),
}

/// Groups posed panels so that each group's shadows are integer cell shifts of
/// the reference shadow. Panels that fit no group start their own.
pub fn stamp_groups<T: Real>(posed: &[PanelQuad<T>], crop: &CropArea<T>) -> Vec<StampGroup<T>> {
    let res = crop.grid_resolution;
    let tol = T::lit(1e-9);
    let mut groups: Vec<StampGroup<T>> = Vec::new();
    'panels: for q in posed {
        for g in &mut groups {
            let r = &g.reference;
            let d = q.center - r.center;
            if d.z.abs() > tol {
                continue;
            }
            let same_shape = (0..4)
                .all(|k| ((q.corners[k] - q.center) - (r.corners[k] - r.center)).norm() <= tol);
            if !same_shape {
                continue;
            }
            let (kx, ky) = ((d.x / res).round(), (d.y / res).round());
            if (d.x - kx * res).abs() > tol || (d.y - ky * res).abs() > tol {
                continue;
            }
            g.offsets.push((kx.to_i64().unwrap(), ky.to_i64().unwrap()));
            continue 'panels;
        }
        groups.push(StampGroup {
            reference: *q,
            offsets: vec![(0, 0)],
            rows: (0, 0),
            cols: (0, 0),
        });
    }
    let (nx, ny) = (crop.nx as i64, crop.ny as i64);
    for g in &mut groups {
        let (kx0, kx1) = g
            .offsets
            .iter()
            .fold((i64::MAX, i64::MIN), |a, o| (a.0.min(o.0), a.1.max(o.0)));
        let (ky0, ky1) = g
            .offsets
            .iter()
            .fold((i64::MAX, i64::MIN), |a, o| (a.0.min(o.1), a.1.max(o.1)));
        g.rows = (-ky1, ny - 1 - ky0);
        g.cols = (-kx1, nx - 1 - kx0);
    }
    groups
}

/// Per-cell diffuse shading: the weighted fraction of dome nodes whose ray from
/// the cell centre is blocked by a panel.
///
/// Evaluated per direction by rasterising the panel shadows onto the grid;
/// a cell centre lies in a panel's shadow exactly when the ray toward that
/// direction hits the panel. Translated panel copies reuse one rasterisation.
pub fn per_cell_diffuse<T: Real>(
    posed: &[PanelQuad<T>],
    crop: &CropArea<T>,
    dome: DomeGrid,
) -> DiffuseResult {
    let n = crop.cell_count();
    let (nx, ny) = (crop.nx as i64, crop.ny as i64);
    let mut blocked = vec![0.0f64; n];
    let groups = stamp_groups(posed, crop);
    let mut stamp = vec![usize::MAX; n];
    for (k, (i, j, w)) in dome.weighted_nodes().enumerate() {
        let s = dome_direction::<T>(dome.altitude(i), dome.azimuth(j));
        for g in &groups {
            let Ok(poly) = shadow_polygons(std::slice::from_ref(&g.reference), &s) else {
                continue;
            };
            let spans = lattice_spans(&poly[0].polygon, crop, g.rows, g.cols);
            for &(kx, ky) in &g.offsets {
                for &(iy, ix0, ix1) in &spans {
                    let y = iy + ky;
                    if y < 0 || y >= ny {
                        continue;
                    }
                    let (x0, x1) = ((ix0 + kx).max(0), (ix1 + kx).min(nx - 1));
                    let base = (y * nx) as usize;
                    for x in x0..=x1 {
                        let c = base + x as usize;
                        if stamp[c] != k {
                            stamp[c] = k;
                            blocked[c] += w;
                        }
                    }
                }
            }
        }
    }
    let total = dome.total_weight();
    let f_d_cells: Vec<f64> = blocked
        .iter()
        .map(|b| (b / total).clamp(0.0, 1.0))
        .collect();
    let f_d_aggregate = if n == 0 {
        0.0
    } else {
        f_d_cells.iter().sum::<f64>() / n as f64
    };
    DiffuseResult {
        f_d_aggregate,
        f_d_cells,
        fingerprint: None,
    }
}

/// Directory of persisted shading tables, one binary file per fingerprint and dome step.
#[derive(Debug, Clone, PartialEq)]
pub struct TableStore {
    pub dir: std::path::PathBuf,
}

impl TableStore {
    pub fn new(dir: impl Into<std::path::PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, fp: &PoseFingerprint, dome: DomeGrid) -> std::path::PathBuf {
        self.dir.join(format!(
            "shading_{}_{}_{}_{}_{}.bin",
            fp.kind,
            fp.omega_key,
            fp.beta_key,
            fp.bucket_mdeg,
            (dome.step * 1000.0).round() as i64
        ))
    }

    /// The stored table, if present and readable for this fingerprint and dome.
    pub fn load(&self, fp: &PoseFingerprint, dome: DomeGrid) -> Option<ShadingTable> {
        let f = std::fs::File::open(self.path_for(fp, dome)).ok()?;
        let t = ShadingTable::read_binary(io::BufReader::new(f)).ok()?;
        (t.fingerprint.as_ref() == Some(fp) && t.dome == dome).then_some(t)
    }

    pub fn save(&self, table: &ShadingTable) -> io::Result<()> {
        let fp = table.fingerprint.ok_or_else(|| {
            io::Error::new(io::ErrorKind::InvalidInput, "table has no fingerprint")
        })?;
        std::fs::create_dir_all(&self.dir)?;
        let path = self.path_for(&fp, table.dome);
        let tmp = path.with_extension("tmp");
        let mut w = io::BufWriter::new(std::fs::File::create(&tmp)?);
        table.write_binary(&mut w)?;
        w.flush()?;
        drop(w);
        std::fs::rename(tmp, path)
    }
}

/// Concurrent lookup-or-insert cache keyed by pose fingerprint.
///
/// Values must be a pure function of the fingerprint, so the result never
/// depends on which caller inserts first.
#[derive(Debug)]
pub struct PoseCache<V> {
    map: Mutex<HashMap<PoseFingerprint, Arc<V>>>,
    builds: AtomicUsize,
}

impl<V> Default for PoseCache<V> {
    fn default() -> Self {
        Self {
            map: Mutex::new(HashMap::new()),
            builds: AtomicUsize::new(0),
        }
    }
}

impl<V> PoseCache<V> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_insert_with(&self, fp: PoseFingerprint, build: impl FnOnce() -> V) -> Arc<V> {
        if let Some(v) = self.map.lock().expect("cache lock").get(&fp) {
            return Arc::clone(v);
        }
        let v = Arc::new(build());
        self.builds.fetch_add(1, Ordering::Relaxed);
        let mut map = self.map.lock().expect("cache lock");
        Arc::clone(map.entry(fp).or_insert(v))
    }

    pub fn get(&self, fp: &PoseFingerprint) -> Option<Arc<V>> {
        self.map.lock().expect("cache lock").get(fp).cloned()
    }

    /// Number of values computed so far (including lost insert races).
    pub fn builds(&self) -> usize {
        self.builds.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
