//! Deterministic analytic daylight, sunlight and view evaluator.
//!
//! Illuminance on a sensor point is a split-flux estimate: a direct-beam term
//! when the sun is visible through the glazing, a diffuse term proportional to
//! the fraction of a fixed set of sky directions that are visible, and a
//! single-bounce inter-reflected term. Nothing is random, so every metric is a
//! pure function of the alternative and the fidelity.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::design_space::{window_layout, DesignAlternative, RoomSpec};
use crate::error::{Error, Result};
use crate::geometry::{build_scene, local_direction, ray_blocked, shading_area, BlockerScene, RayClass, Vec3};

/// Illuminance a point must reach to count towards daylight autonomy, lux.
pub const DA_THRESHOLD_LUX: f64 = 300.0;
/// Direct-sun hours per year above which a point counts towards ASE.
pub const ASE_HOURS: f64 = 250.0;
pub const SENSOR_PITCH: f64 = 0.6;
pub const SENSOR_INSET: f64 = 0.3;
pub const WORKPLANE_HEIGHT: f64 = 0.76;
pub const EYE_HEIGHT: f64 = 1.2;
pub const FIRST_HOUR: u32 = 8;
pub const LAST_HOUR: u32 = 18;
/// Share of the reflected diffuse flux that reaches the work plane again.
pub const INTERREFLECTION_FACTOR: f64 = 0.3;

const SCHEDULE_YEAR: i32 = 2023;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub latitude: f64,
    pub longitude: f64,
    /// Offset of local standard time from UTC, hours.
    pub utc_offset: f64,
}

impl Site {
    pub const TEHRAN: Site = Site { latitude: 35.69, longitude: 51.39, utc_offset: 3.5 };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fidelity {
    Coarse,
    Full,
}

impl Fidelity {
    pub fn day_step(self) -> u32 {
        match self {
            Fidelity::Coarse => 15,
            Fidelity::Full => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Fidelity::Coarse => "coarse",
            Fidelity::Full => "full",
        }
    }
}

impl fmt::Display for Fidelity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fidelity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coarse" => Ok(Fidelity::Coarse),
            "full" => Ok(Fidelity::Full),
            _ => Err(Error::domain(format!("unknown fidelity `{s}` (expected coarse or full)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SunPosition {
    pub altitude_deg: f64,
    /// Degrees clockwise from north.
    pub azimuth_deg: f64,
}

/// Solar position after the NOAA solar calculator (geometric altitude, no
/// refraction). `local` is local standard time at `site`.
pub fn sun_position(site: &Site, local: NaiveDateTime) -> SunPosition {
    let utc = local - Duration::seconds((site.utc_offset * 3600.0).round() as i64);
    let day_frac = (utc.num_seconds_from_midnight() as f64) / 86400.0;
    let jd = julian_day(utc.date()) + day_frac;
    let jc = (jd - 2451545.0) / 36525.0;

    let l0 = (280.46646 + jc * (36000.76983 + jc * 0.0003032)).rem_euclid(360.0);
    let m = 357.52911 + jc * (35999.05029 - 0.0001537 * jc);
    let e = 0.016708634 - jc * (0.000042037 + 0.0000001267 * jc);
    let mr = m.to_radians();
    let c = mr.sin() * (1.914602 - jc * (0.004817 + 0.000014 * jc))
        + (2.0 * mr).sin() * (0.019993 - 0.000101 * jc)
        + (3.0 * mr).sin() * 0.000289;
    let true_long = l0 + c;
    let omega = (125.04 - 1934.136 * jc).to_radians();
    let app_long = true_long - 0.00569 - 0.00478 * omega.sin();
    let mean_obliq = 23.0 + (26.0 + (21.448 - jc * (46.815 + jc * (0.00059 - jc * 0.001813))) / 60.0) / 60.0;
    let obliq = (mean_obliq + 0.00256 * omega.cos()).to_radians();
    let decl = (obliq.sin() * app_long.to_radians().sin()).asin();

    let y = (obliq / 2.0).tan().powi(2);
    let l0r = l0.to_radians();
    let eq_time = 4.0
        * (y * (2.0 * l0r).sin() - 2.0 * e * mr.sin() + 4.0 * e * y * mr.sin() * (2.0 * l0r).cos()
            - 0.5 * y * y * (4.0 * l0r).sin()
            - 1.25 * e * e * (2.0 * mr).sin())
        .to_degrees();

    let local_minutes = local.num_seconds_from_midnight() as f64 / 60.0;
    let true_solar = (local_minutes + eq_time + 4.0 * site.longitude - 60.0 * site.utc_offset).rem_euclid(1440.0);
    let hour_angle = (true_solar / 4.0 - 180.0).to_radians();

    let lat = site.latitude.to_radians();
    let cos_zen = (lat.sin() * decl.sin() + lat.cos() * decl.cos() * hour_angle.cos()).clamp(-1.0, 1.0);
    let zen = cos_zen.acos();
    let altitude_deg = 90.0 - zen.to_degrees();

    let denom = lat.cos() * zen.sin();
    let azimuth_deg = if denom.abs() < 1e-12 {
        180.0
    } else {
        let a = ((lat.sin() * cos_zen - decl.sin()) / denom).clamp(-1.0, 1.0).acos().to_degrees();
        if hour_angle > 0.0 {
            (a + 180.0).rem_euclid(360.0)
        } else {
            (540.0 - a).rem_euclid(360.0)
        }
    };
    SunPosition { altitude_deg, azimuth_deg }
}

fn julian_day(d: NaiveDate) -> f64 {
    // days since 2000-01-01 00:00 UTC (JD 2451544.5)
    let epoch = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
    2451544.5 + (d - epoch).num_days() as f64
}

/// Clear-sky direct-normal and diffuse-horizontal illuminance, lux.
pub fn sky_illuminance(altitude_deg: f64) -> (f64, f64) {
    if altitude_deg <= 0.0 {
        return (0.0, 0.0);
    }
    let s = altitude_deg.min(90.0).to_radians().sin();
    (93000.0 * s.powf(0.8), 12000.0 * s.powf(0.6))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SunState {
    pub day: u32,
    pub hour: u32,
    pub altitude_deg: f64,
    pub azimuth_deg: f64,
    pub dni: f64,
    pub dhi: f64,
}

/// Occupied-hour schedule with the sun and sky state of every step.
#[derive(Debug, Clone, Serialize)]
pub struct SunSampler {
    pub site: Site,
    pub day_step: u32,
    pub steps: Vec<SunState>,
}

impl SunSampler {
    pub fn new(site: Site, day_step: u32) -> Self {
        assert!(day_step >= 1);
        let jan1 = NaiveDate::from_ymd_opt(SCHEDULE_YEAR, 1, 1).unwrap();
        let mut steps = Vec::new();
        let days = 365 / day_step;
        for day in (0..days).map(|k| k * day_step) {
            let date = jan1 + Duration::days(day as i64);
            debug_assert_eq!(date.year(), SCHEDULE_YEAR);
            for hour in FIRST_HOUR..=LAST_HOUR {
                let pos = sun_position(&site, date.and_hms_opt(hour, 0, 0).unwrap());
                let (dni, dhi) = sky_illuminance(pos.altitude_deg);
                steps.push(SunState {
                    day,
                    hour,
                    altitude_deg: pos.altitude_deg,
                    azimuth_deg: pos.azimuth_deg,
                    dni,
                    dhi,
                });
            }
        }
        SunSampler { site, day_step, steps }
    }

    /// Process-wide sampler for the reference site.
    pub fn shared(fidelity: Fidelity) -> &'static SunSampler {
        static COARSE: OnceLock<SunSampler> = OnceLock::new();
        static FULL: OnceLock<SunSampler> = OnceLock::new();
        let cell = match fidelity {
            Fidelity::Coarse => &COARSE,
            Fidelity::Full => &FULL,
        };
        cell.get_or_init(|| SunSampler::new(Site::TEHRAN, fidelity.day_step()))
    }

    /// Direct-sun step count a point must exceed to count towards ASE.
    pub fn ase_threshold(&self) -> f64 {
        ASE_HOURS / self.day_step as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SensorGrid {
    pub height: f64,
    pub points: Vec<Vec3>,
}

impl SensorGrid {
    pub fn new(room: &RoomSpec, height: f64) -> Self {
        let axis = |span: f64| -> Vec<f64> {
            let n = ((span - 2.0 * SENSOR_INSET) / SENSOR_PITCH + 1e-9).floor() as usize + 1;
            (0..n).map(|k| SENSOR_INSET + k as f64 * SENSOR_PITCH).collect()
        };
        let xs = axis(room.width_x);
        let ys = axis(room.length_y);
        let points = ys.iter().flat_map(|&y| xs.iter().map(move |&x| Vec3::new(x, y, height))).collect();
        SensorGrid { height, points }
    }

    pub fn daylight(room: &RoomSpec) -> Self {
        Self::new(room, WORKPLANE_HEIGHT)
    }

    pub fn view(room: &RoomSpec) -> Self {
        Self::new(room, EYE_HEIGHT)
    }
}

/// Centres of the 145 Tregenza sky patches as (altitude, azimuth) degrees.
pub fn sky_patches() -> &'static [(f64, f64)] {
    static PATCHES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    PATCHES.get_or_init(|| {
        const BANDS: [(f64, usize); 8] =
            [(6.0, 30), (18.0, 30), (30.0, 24), (42.0, 24), (54.0, 18), (66.0, 12), (78.0, 6), (90.0, 1)];
        BANDS
            .iter()
            .flat_map(|&(alt, n)| (0..n).map(move |k| (alt, k as f64 * 360.0 / n as f64)))
            .collect()
    })
}

/// Horizontal-band view directions in the room frame: azimuth 0..358° by 2°,
/// elevation −30..30° by 5°.
pub fn view_directions() -> &'static [Vec3] {
    static DIRS: OnceLock<Vec<Vec3>> = OnceLock::new();
    DIRS.get_or_init(|| {
        let mut v = Vec::with_capacity(180 * 13);
        for az in (0..360).step_by(2) {
            for el in (-30..=30).step_by(5) {
                v.push(local_direction(el as f64, az as f64, 0.0));
            }
        }
        v
    })
}

/// Fraction of sky patches visible from `point`.
pub fn sky_view_fraction(scene: &BlockerScene, wall_azimuth: f64, point: Vec3) -> f64 {
    let patches = sky_patches();
    let clear = patches
        .iter()
        .filter(|&&(alt, az)| ray_blocked(scene, point, local_direction(alt, az, wall_azimuth)) == RayClass::Clear)
        .count();
    clear as f64 / patches.len() as f64
}

/// Area-weighted reflectance of the interior surfaces, glazing counted as 0.
pub fn mean_reflectance(alt: &DesignAlternative) -> f64 {
    let r = &alt.room;
    let footprint = r.width_x * r.length_y;
    let walls = 2.0 * (r.width_x + r.length_y) * r.height;
    let glazing = window_layout(r, &alt.opening).windows.iter().map(|w| w.width() * w.height()).sum::<f64>();
    let total = 2.0 * footprint + walls;
    (footprint * r.refl_floor + footprint * r.refl_ceiling + (walls - glazing) * r.refl_walls) / total
}

fn interreflection_gain(rho: f64) -> f64 {
    1.0 + INTERREFLECTION_FACTOR * rho / (1.0 - rho)
}

/// Work-plane illuminance at `point` for one sun state, lux. `glass_vt` is in
/// percent; `svf` is the point's sky view fraction.
pub fn point_illuminance(
    scene: &BlockerScene,
    wall_azimuth: f64,
    point: Vec3,
    sun: &SunState,
    svf: f64,
    rho: f64,
    glass_vt: f64,
) -> f64 {
    if sun.altitude_deg <= 0.0 {
        return 0.0;
    }
    let vt = glass_vt / 100.0;
    let dir = local_direction(sun.altitude_deg, sun.azimuth_deg, wall_azimuth);
    let direct = if ray_blocked(scene, point, dir) == RayClass::Clear {
        sun.dni * sun.altitude_deg.to_radians().sin()
    } else {
        0.0
    };
    (direct + sun.dhi * svf * interreflection_gain(rho)) * vt
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub sda: f64,
    pub ase: f64,
    pub mda: f64,
    pub avg_ill: f64,
    pub hvc60: f64,
    pub area: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    Sda,
    Ase,
    Mda,
    AvgIll,
    Hvc60,
    Area,
}

impl Output {
    pub const ALL: [Output; 6] = [Output::Sda, Output::Ase, Output::Mda, Output::AvgIll, Output::Hvc60, Output::Area];

    pub fn name(self) -> &'static str {
        match self {
            Output::Sda => "sda",
            Output::Ase => "ase",
            Output::Mda => "mda",
            Output::AvgIll => "avg_ill",
            Output::Hvc60 => "hvc60",
            Output::Area => "area",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Output {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Output {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Output::ALL.into_iter().find(|o| o.name() == s).ok_or_else(|| Error::UnknownOutput(s.into()))
    }
}

impl MetricVector {
    pub fn get(&self, output: Output) -> f64 {
        match output {
            Output::Sda => self.sda,
            Output::Ase => self.ase,
            Output::Mda => self.mda,
            Output::AvgIll => self.avg_ill,
            Output::Hvc60 => self.hvc60,
            Output::Area => self.area,
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        Output::ALL.map(|o| self.get(o))
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        MetricVector { sda: v[0], ase: v[1], mda: v[2], avg_ill: v[3], hvc60: v[4], area: v[5] }
    }
}

/// Mean share of clear view directions over the eye-height grid, percent.
pub fn view_fraction(scene: &BlockerScene, grid: &SensorGrid) -> f64 {
    let dirs = view_directions();
    if grid.points.is_empty() {
        return 0.0;
    }
    let total: usize = grid
        .points
        .iter()
        .map(|&p| dirs.iter().filter(|&&d| ray_blocked(scene, p, d) == RayClass::Clear).count())
        .sum();
    100.0 * total as f64 / (dirs.len() * grid.points.len()) as f64
}

pub fn view_metric(alt: &DesignAlternative) -> Result<f64> {
    let scene = build_scene(alt)?;
    Ok(view_fraction(&scene, &SensorGrid::view(&alt.room)))
}

/// The part of a simulation that depends only on geometry: glazing
/// transmittance scales every illuminance linearly and the shading material
/// has no optical effect, so one exposure serves every glass/material variant.
#[derive(Debug, Clone)]
pub struct Exposure {
    /// Illuminance per point and step at unit transmittance, row-major by point.
    base: Vec<f64>,
    steps: usize,
    /// Direct-sun step count per point.
    sun_counts: Vec<u32>,
    ase_threshold: f64,
    hvc60: f64,
}

impl Exposure {
    pub fn compute(alt: &DesignAlternative, sampler: &SunSampler) -> Result<Self> {
        let scene = build_scene(alt)?;
        let wall_az = alt.room.win_side.azimuth_deg();
        let grid = SensorGrid::daylight(&alt.room);
        let gain = interreflection_gain(mean_reflectance(alt));
        let n_steps = sampler.steps.len();

        let sun_dirs: Vec<Option<(Vec3, f64)>> = sampler
            .steps
            .iter()
            .map(|s| {
                (s.altitude_deg > 0.0).then(|| {
                    let dir = local_direction(s.altitude_deg, s.azimuth_deg, wall_az);
                    (dir, s.dni * s.altitude_deg.to_radians().sin())
                })
            })
            .collect();

        let mut base = Vec::with_capacity(grid.points.len() * n_steps);
        let mut sun_counts = Vec::with_capacity(grid.points.len());
        for &p in &grid.points {
            let svf = sky_view_fraction(&scene, wall_az, p);
            let mut count = 0;
            for (s, sd) in sampler.steps.iter().zip(&sun_dirs) {
                let Some((dir, horizontal_direct)) = *sd else {
                    base.push(0.0);
                    continue;
                };
                let direct = if ray_blocked(&scene, p, dir) == RayClass::Clear {
                    if s.dni > 0.0 {
                        count += 1;
                    }
                    horizontal_direct
                } else {
                    0.0
                };
                base.push(direct + s.dhi * svf * gain);
            }
            sun_counts.push(count);
        }
        let hvc60 = view_fraction(&scene, &SensorGrid::view(&alt.room));
        Ok(Exposure { base, steps: n_steps, sun_counts, ase_threshold: sampler.ase_threshold(), hvc60 })
    }

    /// Metrics for a glass transmittance (percent); `area` is taken as given.
    pub fn metrics(&self, glass_vt: f64, area: f64) -> MetricVector {
        let vt = glass_vt / 100.0;
        let n_points = self.sun_counts.len();
        if n_points == 0 || self.steps == 0 {
            return MetricVector { sda: 0.0, ase: 0.0, mda: 0.0, avg_ill: 0.0, hvc60: self.hvc60, area };
        }
        let mut da_sum = 0.0;
        let mut sda_points = 0usize;
        let mut ill_sum = 0.0;
        for row in self.base.chunks_exact(self.steps) {
            let mut lit = 0usize;
            for &b in row {
                let e = b * vt;
                ill_sum += e;
                if e >= DA_THRESHOLD_LUX {
                    lit += 1;
                }
            }
            let da = 100.0 * lit as f64 / self.steps as f64;
            da_sum += da;
            if da >= 50.0 {
                sda_points += 1;
            }
        }
        let ase_points = self.sun_counts.iter().filter(|&&c| c as f64 > self.ase_threshold).count();
        MetricVector {
            sda: 100.0 * sda_points as f64 / n_points as f64,
            ase: 100.0 * ase_points as f64 / n_points as f64,
            mda: da_sum / n_points as f64,
            avg_ill: ill_sum / (n_points * self.steps) as f64,
            hvc60: self.hvc60,
            area,
        }
    }
}

/// Full metric vector of one feasible alternative.
pub fn simulate(alt: &DesignAlternative, fidelity: Fidelity) -> Result<MetricVector> {
    simulate_with(alt, SunSampler::shared(fidelity))
}

pub fn simulate_with(alt: &DesignAlternative, sampler: &SunSampler) -> Result<MetricVector> {
    let exposure = Exposure::compute(alt, sampler)?;
    Ok(exposure.metrics(alt.opening.glass_vt, shading_area(alt)))
}
