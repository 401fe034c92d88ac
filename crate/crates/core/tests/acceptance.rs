//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! `AGRISHADE_CRITERIA=1,4,6` runs a subset. Criterion 8 needs measured 2018
//! weather in `AGRISHADE_ICOS_DIR` (`lanna.csv`, `estrees_mons.csv`,
//! `klingenberg.csv`, or `<site>.json` ingest specs) and is skipped otherwise.
//!
//! The process exits nonzero when a criterion fails unless it is listed in
//! `KNOWN_FAILURES`; known failures still print FAIL.

use std::fs;
use std::path::Path;
use std::time::Instant;

use agrishade::config::{ResolvedConfig, SimulationOptions};
use agrishade::geom::{Rotation3, Vector3};
use agrishade::ingest::{ingest_weather, IngestSpec};
use agrishade::par::{
    clearness_terms, spitters_par_fraction, yang2_diffuse_fraction, Metrics, WeatherRecord,
    Yang2Coefficients, Yang2Inputs,
};
use agrishade::report::{self, write_run, MetricsReport, Provenance, RunManifest};
use agrishade::scene::{CropArea, LayoutConfig, PanelQuad, SiteConfig};
use agrishade::shadegeom::{
    beam_factor_exact, cell_occlusion, mutual_shading_area, pose_rotation, pose_scene,
    rotate_about_center,
};
use agrishade::simulate::{representative_days, Simulator};
use agrishade::skydiffuse::{build_shading_table, diffuse_factor, DomeGrid, ShadingTable};
use agrishade::solar::solar_vector;
use agrishade::synthetic::clear_sky_year;
use agrishade::tracking::{axis_frame_matrix, backtrack_tilt, TrackerAngles};
use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const KNOWN_FAILURES: &[u32] = &[2, 7];

type Criterion = (u32, &'static str, fn() -> Outcome);

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn config(site: SiteConfig, layout: LayoutConfig, options: SimulationOptions) -> ResolvedConfig {
    ResolvedConfig {
        site,
        layout,
        options,
    }
}

fn layouts() -> [(&'static str, LayoutConfig); 3] {
    [
        ("vertical", LayoutConfig::vertical()),
        ("one-axis", LayoutConfig::one_axis()),
        ("two-axis", LayoutConfig::two_axis()),
    ]
}

/// Ray from a ground point toward the sun against a planar convex quad.
fn ray_hits(o: &Vector3<f64>, d: &Vector3<f64>, q: &PanelQuad<f64>) -> bool {
    let p = q.outline();
    let n = (p[1] - p[0]).cross(&(p[3] - p[0]));
    let denom = n.dot(d);
    if denom.abs() < 1e-15 {
        return false;
    }
    let t = n.dot(&(p[0] - *o)) / denom;
    if t <= 0.0 {
        return false;
    }
    let h = *o + *d * t;
    let mut sign = 0.0f64;
    for k in 0..4 {
        let a = p[k];
        let b = p[(k + 1) % 4];
        let c = (b - a).cross(&(h - a)).dot(&n);
        if c != 0.0 {
            if sign != 0.0 && c.signum() != sign {
                return false;
            }
            sign = c.signum();
        }
    }
    true
}

fn random_scene(rng: &mut ChaCha8Rng) -> (Vec<PanelQuad<f64>>, Vector3<f64>) {
    let n = rng.gen_range(1..=5);
    let panels = (0..n)
        .map(|i| {
            let (l, w) = (rng.gen_range(0.5..2.5), rng.gen_range(0.5..1.5));
            let c = Vector3::new(
                rng.gen_range(-6.0..6.0),
                rng.gen_range(-12.0..12.0),
                rng.gen_range(2.0..4.0),
            );
            let rest = PanelQuad::at_rest(c - Vector3::new(l / 2.0, w / 2.0, 0.0), l, w, i);
            let r = Rotation3::about_z(rng.gen_range(-180.0..180.0))
                * Rotation3::about_y(rng.gen_range(-60.0..60.0))
                * Rotation3::about_x(rng.gen_range(-60.0..60.0));
            rotate_about_center(&rest, &r)
        })
        .collect();
    let (el, az) = (
        rng.gen_range(5.0f64..90.0).to_radians(),
        rng.gen_range(-180.0f64..180.0).to_radians(),
    );
    let s = Vector3::new(el.cos() * az.sin(), el.cos() * az.cos(), el.sin());
    (panels, s)
}

fn criterion_1() -> Outcome {
    const RAYS: usize = 1_000_000;
    let crop = CropArea::<f64>::centered(10.0, 20.0, 0.25);
    let r = crop.rect();
    let started = Instant::now();
    let results: Vec<(f64, f64, f64)> = (0..100u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(k);
            let (panels, s) = random_scene(&mut rng);
            let exact = beam_factor_exact(&panels, &s, &crop);
            let hits = (0..RAYS)
                .filter(|_| {
                    let o = Vector3::new(
                        rng.gen_range(r.min.x..r.max.x),
                        rng.gen_range(r.min.y..r.max.y),
                        0.0,
                    );
                    panels.iter().any(|q| ray_hits(&o, &s, q))
                })
                .count();
            let p = hits as f64 / RAYS as f64;
            let sigma = (p * (1.0 - p) / RAYS as f64).sqrt();
            (exact, p, sigma)
        })
        .collect();
    let failures = results
        .iter()
        .filter(|(e, p, s)| (e - p).abs() > (3.0 * s).max(0.005))
        .count();
    let worst = results
        .iter()
        .map(|(e, p, _)| (e - p).abs())
        .fold(0.0, f64::max);
    let shaded = results.iter().filter(|(e, _, _)| *e > 0.0).count();
    let secs = started.elapsed().as_secs_f64();
    verdict(
        failures == 0 && secs < 300.0,
        format!(
            "100 scenes ({shaded} with shade on the crop), worst |exact - MC| {worst:.5}, \
             {failures} outside tolerance, {secs:.1} s"
        ),
    )
}

/// Worst |grid - exact| beam factor over the daylight hours of the four
/// representative days, with the hour it occurs at.
fn grid_error(layout: LayoutConfig, res: f64) -> (f64, String, usize) {
    let opts = SimulationOptions {
        require_full_year: false,
        ..Default::default()
    };
    let sim = Simulator::new(config(SiteConfig::lanna(), layout, opts)).unwrap();
    let crop = CropArea::<f64>::centered(sim.scene.crop.extent_x, sim.scene.crop.extent_y, res);
    let (mut worst, mut at, mut hours) = (0.0f64, String::new(), 0);
    for day in representative_days(2018) {
        for h in 0..24 {
            let t = day.and_hms_opt(h, 0, 0).unwrap();
            let step = sim.step(&t).unwrap();
            if !step.day {
                continue;
            }
            hours += 1;
            let s = solar_vector(&step.position);
            let posed = pose_scene(&sim.scene, &step.angles);
            let d = (beam_factor_exact(&posed, &s, &crop) - cell_occlusion(&posed, &s, &crop).f_b)
                .abs();
            if d > worst {
                worst = d;
                at = t.to_string();
            }
        }
    }
    (worst, at, hours)
}

fn criterion_2() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, layout) in layouts() {
        let (worst, at, hours) = grid_error(layout, 0.25);
        ok &= worst <= 0.01;
        notes.push(format!("{name} worst {worst:.5} at {at} ({hours} h)"));
    }
    let (fine, _, _) = grid_error(LayoutConfig::two_axis(), 0.125);
    notes.push(format!("two-axis at 0.125 m: {fine:.5}"));
    verdict(ok, notes.join("; "))
}

fn criterion_3() -> Outcome {
    let opts = SimulationOptions {
        require_full_year: false,
        ..Default::default()
    };
    let sim = Simulator::new(config(SiteConfig::lanna(), LayoutConfig::one_axis(), opts)).unwrap();
    let mut t = NaiveDate::from_ymd_opt(2018, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let (mut active, mut worst) = (0, 0.0f64);
    while t.year() == 2018 {
        let step = sim.step(&t).unwrap();
        if step.day && step.angles.backtracked {
            active += 1;
            let posed = pose_scene(&sim.scene, &step.angles);
            worst = worst.max(mutual_shading_area(&posed, &solar_vector(&step.position)));
        }
        t += Duration::hours(1);
    }
    let l_ew = LayoutConfig::one_axis().l_ew();
    let boundary = (1.0 / l_ew).acos().to_degrees();
    let eps = 1e-9;
    let mut jump = 0.0f64;
    for sign in [-1.0, 1.0] {
        for limit in [60.0, 90.0] {
            let a = backtrack_tilt(sign * (boundary - eps), l_ew, -limit, limit);
            let b = backtrack_tilt(sign * (boundary + eps), l_ew, -limit, limit);
            jump = jump.max((a - b).abs());
        }
    }
    verdict(
        active > 0 && worst < 1e-6 && jump < 0.01,
        format!(
            "{active} backtracked hours, worst inter-row shading {worst:.2e} m², tilt jump at ±{boundary:.3}° {jump:.2e}°"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut orth, mut det, mut centre, mut dist) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let (omega, beta, tilt, az) = (
            rng.gen_range(-90.0..90.0),
            rng.gen_range(-90.0..90.0),
            rng.gen_range(-45.0..45.0),
            rng.gen_range(-180.0..180.0),
        );
        let angles = TrackerAngles {
            beta_it: beta,
            beta_itc: beta,
            ..TrackerAngles::fixed(omega)
        };
        let pose = pose_rotation(&angles);
        let frame = axis_frame_matrix(az, tilt);
        for r in [pose, frame, frame.transpose() * pose] {
            orth = orth.max(r.orthonormality_error());
            det = det.max((r.determinant() - 1.0).abs());
        }
        let origin = Vector3::new(
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
            rng.gen_range(0.0..5.0),
        );
        let rest = PanelQuad::at_rest(origin, rng.gen_range(0.5..3.0), rng.gen_range(0.5..2.0), 0);
        let posed = rotate_about_center(&rest, &(frame.transpose() * pose));
        let mean = posed
            .corners
            .iter()
            .fold(Vector3::zero(), |acc, c| acc + *c)
            * 0.25;
        centre = centre.max(mean.distance(&rest.center));
        for (a, b) in rest
            .pairwise_distances()
            .iter()
            .zip(posed.pairwise_distances())
        {
            dist = dist.max((a - b).abs());
        }
    }
    verdict(
        orth <= 1e-12 && det <= 1e-12 && centre <= 1e-12 && dist <= 1e-9,
        format!(
            "10^4 samples: |RᵀR - I| {orth:.1e}, |det - 1| {det:.1e}, centre drift {centre:.1e} m, distance change {dist:.1e} m"
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    let half = {
        let dome = DomeGrid::new(1.0);
        let mut t = ShadingTable::filled(dome, 0.0);
        for i in 0..dome.n_alt() {
            for j in 0..dome.n_az() {
                if dome.azimuth(j) < 0.0 {
                    t.set(i, j, 1.0);
                }
            }
        }
        diffuse_factor(&t)
    };
    ok &= (half - 0.5).abs() <= 1e-9;
    notes.push(format!("half dome {half:.12}"));

    let crop = CropArea::<f64>::centered(10.0, 20.0, 0.25);
    let mut range_ok = true;
    let mut refine = 0.0f64;
    let poses = [
        (LayoutConfig::vertical(), vec![(90.0, 0.0)]),
        (
            LayoutConfig::one_axis(),
            vec![(-60.0, 0.0), (-25.0, 0.0), (0.0, 0.0), (40.0, 0.0)],
        ),
        (
            LayoutConfig::two_axis(),
            vec![(-45.0, 30.0), (0.0, 0.0), (20.0, -50.0)],
        ),
    ];
    for (layout, list) in &poses {
        let scene = agrishade::scene::build_scene::<f64>(layout).unwrap();
        for &(omega, beta) in list {
            let angles = TrackerAngles {
                beta_it: beta,
                beta_itc: beta,
                ..TrackerAngles::fixed(omega)
            };
            let posed = pose_scene(&scene, &angles);
            let fine = diffuse_factor(&build_shading_table(&posed, &crop, DomeGrid::new(1.0)));
            let coarse = diffuse_factor(&build_shading_table(&posed, &crop, DomeGrid::new(2.0)));
            range_ok &= (0.0..=1.0).contains(&fine) && (0.0..=1.0).contains(&coarse);
            refine = refine.max((fine - coarse).abs());
        }
    }
    ok &= range_ok && refine < 0.005;
    notes.push(format!(
        "f_d in [0,1]: {range_ok}, worst 2°→1° change {refine:.5}"
    ));

    let opts = SimulationOptions {
        require_full_year: false,
        ..Default::default()
    };
    let sim = Simulator::new(config(SiteConfig::lanna(), LayoutConfig::vertical(), opts)).unwrap();
    let mut values = Vec::new();
    let mut t = NaiveDate::from_ymd_opt(2018, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    while t.year() == 2018 {
        let step = sim.step(&t).unwrap();
        values.push(diffuse_factor(
            &sim.table_for(sim.fingerprint(&step.angles)),
        ));
        t += Duration::hours(1);
    }
    let constant = values.iter().all(|v| *v == values[0]);
    ok &= constant;
    notes.push(format!(
        "vertical f_d {} over {} hours",
        if constant { "identical" } else { "varies" },
        values.len()
    ));
    verdict(ok, notes.join("; "))
}

fn criterion_6() -> Outcome {
    let text = include_str!("fixtures/decomposition_oracle.csv");
    let coef = Yang2Coefficients::default();
    let mut rows = 0;
    let (mut worst_kd, mut worst_par) = (0.0f64, 0.0f64);
    let mut kt_range = (f64::MAX, f64::MIN);
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let inputs = Yang2Inputs {
            k_t: v[0],
            ast: v[1],
            zenith: v[2],
            delta_ktc: v[3],
            k_de: v[4],
            k_d_sat: v[5],
        };
        worst_kd = worst_kd.max((yang2_diffuse_fraction(&inputs, &coef) - v[6]).abs());
        worst_par = worst_par.max((spitters_par_fraction(v[6], v[7]) - v[8]).abs());
        kt_range = (kt_range.0.min(v[0]), kt_range.1.max(v[0]));
        rows += 1;
    }
    let clamp_zero = [(300.0, 700.0), (700.0, 700.0), (10.0, 950.0)]
        .iter()
        .all(|&(ghi, g_cs)| clearness_terms(ghi, g_cs, 1200.0).2 == 0.0);
    let positive = [(800.0, 700.0), (1000.0, 400.0)]
        .iter()
        .all(|&(ghi, g_cs)| clearness_terms(ghi, g_cs, 1200.0).2 > 0.0);
    verdict(
        rows == 20
            && kt_range.0 <= 0.1
            && kt_range.1 >= 0.9
            && worst_kd <= 1e-12
            && worst_par <= 1e-12
            && clamp_zero
            && positive,
        format!(
            "{rows} tuples, k_t {:.2}..{:.2}, worst k_d {worst_kd:.1e}, worst k_d,PAR {worst_par:.1e}; \
             k_de = 0 for GHI <= G_cs: {clamp_zero}, k_de > 0 for GHI > G_cs: {positive}",
            kt_range.0, kt_range.1
        ),
    )
}

fn criterion_7() -> Outcome {
    let site = SiteConfig::lanna();
    let records = clear_sky_year(&site, 2018);
    let started = Instant::now();
    let mut m: Vec<(&str, Metrics)> = Vec::new();
    for (name, layout) in layouts() {
        let out = Simulator::new(config(site.clone(), layout, SimulationOptions::default()))
            .unwrap()
            .run(&records)
            .unwrap();
        m.push((name, out.metrics));
    }
    let secs = started.elapsed().as_secs_f64();
    let (v, o, t) = (&m[0].1, &m[1].1, &m[2].1);
    let ordering = t.par_reduction < o.par_reduction && o.par_reduction < v.par_reduction;
    let lhi = t.lhi > o.lhi && t.lhi > v.lhi;
    let table = m
        .iter()
        .map(|(n, x)| format!("{n} {:.2}% / LHI {:.2}%", x.par_reduction, x.lhi))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(
        ordering && lhi && secs < 600.0,
        format!(
            "{table}; reduction ordering {}, two-axis highest LHI {lhi}, {secs:.0} s",
            if ordering { "holds" } else { "violated" }
        ),
    )
}

fn criterion_8() -> Outcome {
    let Ok(dir) = std::env::var("AGRISHADE_ICOS_DIR") else {
        return Outcome::Skip("AGRISHADE_ICOS_DIR not set".into());
    };
    let dir = Path::new(&dir);
    let sites = [
        (
            "lanna",
            SiteConfig::lanna(),
            [34.72, 22.46, 11.41],
            [92.68, 91.83, 95.25],
        ),
        (
            "estrees_mons",
            SiteConfig::estrees_mons(),
            [32.12, 23.14, 11.17],
            [93.76, 92.03, 95.39],
        ),
        (
            "klingenberg",
            SiteConfig::klingenberg(),
            [32.24, 23.01, 11.82],
            [93.48, 91.84, 95.26],
        ),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    let mut found = 0;
    for (key, site, reductions, lhis) in sites {
        let spec_path = dir.join(format!("{key}.json"));
        let csv_path = dir.join(format!("{key}.csv"));
        let spec = if spec_path.exists() {
            match report::read_json::<IngestSpec>(&spec_path) {
                Ok(s) => s,
                Err(e) => return Outcome::Fail(format!("{key}: {e}")),
            }
        } else if csv_path.exists() {
            IngestSpec::new(csv_path)
        } else {
            notes.push(format!("{key}: no data"));
            continue;
        };
        found += 1;
        let records: Vec<WeatherRecord> = match ingest_weather(&spec) {
            Ok(s) => s.records,
            Err(e) => return Outcome::Fail(format!("{key}: {e}")),
        };
        for (i, (name, layout)) in layouts().into_iter().enumerate() {
            let out =
                match Simulator::new(config(site.clone(), layout, SimulationOptions::default()))
                    .and_then(|s| s.run(&records))
                {
                    Ok(o) => o,
                    Err(e) => return Outcome::Fail(format!("{key} {name}: {e}")),
                };
            let dr = out.metrics.par_reduction - reductions[i];
            let dl = out.metrics.lhi - lhis[i];
            ok &= dr.abs() <= 2.0 && dl.abs() <= 2.0;
            notes.push(format!(
                "{key} {name}: reduction {:.2}% ({dr:+.2} pp), LHI {:.2}% ({dl:+.2} pp)",
                out.metrics.par_reduction, out.metrics.lhi
            ));
            if key == "estrees_mons" && name == "two-axis" {
                let rel = out.metrics.mean_par / 495.0 - 1.0;
                ok &= rel.abs() <= 0.05;
                notes.push(format!(
                    "mean PAR {:.1} kWh/m² ({:+.1}%)",
                    out.metrics.mean_par,
                    rel * 100.0
                ));
            }
        }
    }
    if found == 0 {
        return Outcome::Skip(format!("no site files in {}", dir.display()));
    }
    verdict(ok, notes.join("; "))
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let options = SimulationOptions {
        dome_step: 3.0,
        pose_bucket: 0.5,
        workers: Some(4),
        ..Default::default()
    };
    let cfg = config(
        SiteConfig::estrees_mons(),
        LayoutConfig::two_axis(),
        options,
    );
    let manifest = RunManifest::new(cfg, None, Some(2018), Some(2018));
    let manifest_path = dir.path().join("manifest.json");
    report::write_json(&manifest_path, &manifest).unwrap();

    let run = |out: &Path, workers: Option<usize>| {
        let mut m: RunManifest = report::read_json(&manifest_path).unwrap();
        if workers.is_some() {
            m.config.options.workers = workers;
        }
        let records = clear_sky_year(&m.config.site, m.synthetic_year.unwrap());
        let sim = Simulator::new(m.config.clone()).unwrap();
        let res = sim.run(&records).unwrap();
        let report = MetricsReport {
            metrics: res.metrics,
            stats: res.stats,
            config: m.config.clone(),
            provenance: Provenance::synthetic(),
            gaps: None,
        };
        write_run(out, &res.map, &report, &m).unwrap();
    };
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    run(&a, None);
    run(&b, None);
    run(&c, Some(1));
    let same =
        |x: &Path, y: &Path, f: &str| fs::read(x.join(f)).unwrap() == fs::read(y.join(f)).unwrap();
    let replay = ["par_map.csv", "metrics.json", "manifest.json"]
        .iter()
        .all(|f| same(&a, &b, f));
    let workers = same(&a, &c, "par_map.csv");
    verdict(
        replay && workers,
        format!(
            "replay byte-identical: {replay}; PAR map identical with 1 vs 4 workers: {workers}"
        ),
    )
}

fn main() {
    let selected: Option<Vec<u32>> = std::env::var("AGRISHADE_CRITERIA")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [Criterion; 9] = [
        (1, "geometry oracle", criterion_1),
        (2, "grid consistency", criterion_2),
        (3, "backtracking", criterion_3),
        (4, "rotation invariants", criterion_4),
        (5, "diffuse factor", criterion_5),
        (6, "decomposition oracle", criterion_6),
        (7, "synthetic-year pattern", criterion_7),
        (8, "measured-weather reproduction", criterion_8),
        (9, "end-to-end determinism", criterion_9),
    ];
    let mut unexpected = Vec::new();
    for (n, name, f) in criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(&n)) {
            continue;
        }
        let started = Instant::now();
        let outcome = f();
        let secs = started.elapsed().as_secs_f64();
        let (tag, detail) = match &outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => ("FAIL", d),
            Outcome::Skip(d) => ("SKIP", d),
        };
        let known = matches!(outcome, Outcome::Fail(_)) && KNOWN_FAILURES.contains(&n);
        println!(
            "criterion {n} {tag}{} [{name}, {secs:.1} s] {detail}",
            if known { " (known)" } else { "" }
        );
        if matches!(outcome, Outcome::Fail(_)) && !known {
            unexpected.push(n);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
