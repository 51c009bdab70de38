//! Synthetic sky and field scenes with exact ground truth.
//!
//! Sky frames are rendered through an equidistant fisheye: advected cloud discs
//! composited over a blue-sky gradient. The true irradiance integrates cloud
//! opacity over the solar disc directly from the scene geometry, so it is exact
//! up to quadrature. Field tiles are binary berry masks built from discs with
//! known instance counts.

use chrono::{DateTime, Duration, Utc};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{IrradianceSeries, DEFAULT_ATTENUATION};
use crate::imaging::{FisheyeCamera, Pixel, Raster};
use crate::rng::{derive, rng};
use crate::solar::{sun_pixel, sun_position, ClearSkyModel, Site, SunPixel};
use crate::temp::WeatherRecord;

/// Apparent angular radius of the sun, radians.
const SUN_RADIUS_RAD: f64 = 0.004_65;
/// Quadrature rings and spokes over the solar disc.
const SUN_RINGS: usize = 4;
const SUN_SPOKES: usize = 12;

/// A cloud disc in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudDisc {
    /// Centre at the scenario start time.
    pub centre: Pixel,
    pub radius_px: f64,
    /// Pixels per second.
    pub velocity: (f64, f64),
    /// Fraction of light blocked, in [0, 1].
    pub opacity: f64,
    /// Seconds after the start at which the cloud forms; absent before that.
    #[serde(default)]
    pub appears_after_s: f64,
}

impl CloudDisc {
    pub fn centre_at(&self, elapsed_s: f64) -> Pixel {
        Pixel::new(
            self.centre.x + self.velocity.0 * elapsed_s,
            self.centre.y + self.velocity.1 * elapsed_s,
        )
    }

    fn present(&self, elapsed_s: f64) -> bool {
        elapsed_s >= self.appears_after_s
    }
}

/// A sky scene: camera, site, start time and clouds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkyScenario {
    pub name: String,
    pub seed: u64,
    pub site: Site,
    pub start: DateTime<Utc>,
    pub image_size: usize,
    pub focal_px: f64,
    pub theta_max_rad: f64,
    /// RGB at the zenith and at the edge of the field.
    pub sky_zenith: [f32; 3],
    pub sky_horizon: [f32; 3],
    pub clouds: Vec<CloudDisc>,
    pub attenuation: f64,
    pub clear_sky: ClearSkyModel,
}

/// Frames with their timestamps and the exact irradiance at each frame.
#[derive(Debug, Clone)]
pub struct SkySequence {
    pub timestamps: Vec<DateTime<Utc>>,
    pub frames: Vec<Raster>,
    pub irradiance: IrradianceSeries,
}

pub const DEFAULT_SIM_SITE: (f64, f64) = (39.9, -74.5);

fn default_start() -> DateTime<Utc> {
    DateTime::parse_from_rfc3339("2024-07-15T16:30:00Z")
        .expect("valid literal")
        .with_timezone(&Utc)
}

impl SkyScenario {
    /// Cloudless scene at the default site, camera and start time.
    pub fn clear(name: &str, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            seed,
            site: Site::new(DEFAULT_SIM_SITE.0, DEFAULT_SIM_SITE.1).expect("valid site"),
            start: default_start(),
            image_size: 256,
            focal_px: 120.0,
            theta_max_rad: 1.6,
            sky_zenith: [0.22, 0.42, 0.86],
            sky_horizon: [0.42, 0.58, 0.88],
            clouds: Vec::new(),
            attenuation: DEFAULT_ATTENUATION,
            clear_sky: ClearSkyModel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.clouds {
            if !(0.0..=1.0).contains(&c.opacity) {
                return Err(Error::InvalidParameter(format!("cloud opacity {} outside [0, 1]", c.opacity)));
            }
            if !(c.radius_px > 0.0) {
                return Err(Error::InvalidParameter(format!("cloud radius {} must be positive", c.radius_px)));
            }
        }
        if self.image_size < 16 {
            return Err(Error::InvalidParameter("simulated image must be at least 16 px".into()));
        }
        self.clear_sky.validate()
    }

    pub fn camera(&self) -> Result<FisheyeCamera> {
        FisheyeCamera::equidistant(self.image_size, self.image_size, self.focal_px, self.theta_max_rad)
    }

    fn elapsed(&self, t: DateTime<Utc>) -> f64 {
        (t - self.start).num_milliseconds() as f64 / 1000.0
    }

    pub fn sun_pixel(&self, t: DateTime<Utc>) -> Result<SunPixel> {
        Ok(sun_pixel(&self.camera()?, &sun_position(t, self.site.lat, self.site.lon)))
    }

    /// Sun pixel at the start time; scenes are laid out around it.
    pub fn start_sun(&self) -> Result<Pixel> {
        self.sun_pixel(self.start)?.require()
    }

    /// Total cloud opacity at an image point, compositing every present cloud.
    fn opacity_at(&self, p: Pixel, elapsed_s: f64) -> f64 {
        let clear = self
            .clouds
            .iter()
            .filter(|c| c.present(elapsed_s) && c.centre_at(elapsed_s).distance(p) <= c.radius_px)
            .fold(1.0, |acc, c| acc * (1.0 - c.opacity));
        1.0 - clear
    }

    /// Exact fraction of the solar disc's light blocked at time `t`.
    pub fn occlusion(&self, t: DateTime<Utc>) -> Result<f64> {
        let sun = match self.sun_pixel(t)? {
            SunPixel::Visible(p) => p,
            _ => return Ok(0.0),
        };
        let elapsed = self.elapsed(t);
        let r = (self.focal_px * SUN_RADIUS_RAD).max(0.5);
        // Equal-area rings with the centre sample weighted as one ring.
        let mut sum = self.opacity_at(sun, elapsed);
        let mut n = 1.0;
        for ring in 1..=SUN_RINGS {
            let rr = r * (ring as f64 / SUN_RINGS as f64).sqrt();
            for k in 0..SUN_SPOKES {
                let a = std::f64::consts::TAU * (k as f64 + 0.5 * (ring % 2) as f64) / SUN_SPOKES as f64;
                sum += self.opacity_at(Pixel::new(sun.x + rr * a.cos(), sun.y + rr * a.sin()), elapsed);
                n += 1.0;
            }
        }
        Ok(sum / n)
    }

    pub fn clear_sky_irradiance(&self, t: DateTime<Utc>) -> Result<f64> {
        self.clear_sky
            .irradiance_at(sun_position(t, self.site.lat, self.site.lon).elevation_deg)
    }

    /// Clear-sky irradiance attenuated by the true occlusion.
    pub fn exact_irradiance(&self, t: DateTime<Utc>) -> Result<f64> {
        Ok(self.clear_sky_irradiance(t)? * (1.0 - self.attenuation * self.occlusion(t)?))
    }

    /// Texture phases for cloud `i`.
    fn phases(&self, i: usize) -> [f64; 4] {
        let mut r = rng(self.seed, derive(0x5C1E, i as u64));
        [0; 4].map(|_| r.random::<f64>() * std::f64::consts::TAU)
    }

    /// Renders the RGB frame at time `t`.
    pub fn render(&self, t: DateTime<Utc>) -> Result<Raster> {
        let cam = self.camera()?;
        let elapsed = self.elapsed(t);
        let n = self.image_size;
        let centre = cam.principal_point();
        let r_edge = cam.max_radius();
        let clouds: Vec<(Pixel, &CloudDisc, [f64; 4])> = self
            .clouds
            .iter()
            .enumerate()
            .filter(|(_, c)| c.present(elapsed))
            .map(|(i, c)| (c.centre_at(elapsed), c, self.phases(i)))
            .collect();
        let mut data = Vec::with_capacity(n * n * 3);
        for y in 0..n {
            for x in 0..n {
                let p = Pixel::new(x as f64, y as f64);
                let s = (p.distance(centre) / r_edge).min(1.0) as f32;
                let mut rgb = [0usize, 1, 2].map(|c| self.sky_zenith[c] * (1.0 - s) + self.sky_horizon[c] * s);
                for (c_now, cloud, ph) in &clouds {
                    let coverage = (cloud.radius_px - c_now.distance(p) + 0.5).clamp(0.0, 1.0);
                    if coverage <= 0.0 {
                        continue;
                    }
                    let a = (cloud.opacity * coverage) as f32;
                    // Texture is fixed to the cloud so it advects rigidly.
                    let (u, v) = (p.x - c_now.x, p.y - c_now.y);
                    let g = 0.80
                        + 0.07 * ((u / 4.7 + ph[0]).sin() * (v / 5.9 + ph[1]).sin())
                        + 0.05 * ((u + 0.6 * v) / 3.3 + ph[2]).sin()
                        + 0.04 * ((v - 0.4 * u) / 7.1 + ph[3]).sin();
                    for ch in &mut rgb {
                        *ch = *ch * (1.0 - a) + g as f32 * a;
                    }
                }
                data.extend_from_slice(&rgb);
            }
        }
        Raster::new(n, n, 3, data)
    }
}

/// Renders `frames` frames `dt_s` apart from the scenario start, with exact irradiance.
pub fn simulate_sky(sc: &SkyScenario, frames: usize, dt_s: f64) -> Result<SkySequence> {
    sc.validate()?;
    if frames < 2 || !(dt_s > 0.0) {
        return Err(Error::InvalidParameter("simulate_sky needs at least 2 frames and dt > 0".into()));
    }
    let timestamps: Vec<DateTime<Utc>> = (0..frames)
        .map(|i| sc.start + Duration::milliseconds((i as f64 * dt_s * 1000.0).round() as i64))
        .collect();
    let frames = timestamps.iter().map(|&t| sc.render(t)).collect::<Result<Vec<_>>>()?;
    let values = timestamps.iter().map(|&t| sc.exact_irradiance(t)).collect::<Result<Vec<_>>>()?;
    Ok(SkySequence {
        irradiance: IrradianceSeries::new(timestamps.clone(), values)?,
        timestamps,
        frames,
    })
}

/// Unit vector at `deg` degrees clockwise from image-up.
fn heading(deg: f64) -> (f64, f64) {
    let a = deg.to_radians();
    (a.sin(), -a.cos())
}

/// A cloud that starts `distance` px upstream of `sun` and moves towards it.
fn approaching(sun: Pixel, heading_deg: f64, distance: f64, radius: f64, speed: f64, opacity: f64) -> CloudDisc {
    let (hx, hy) = heading(heading_deg);
    CloudDisc {
        centre: Pixel::new(sun.x - hx * distance, sun.y - hy * distance),
        radius_px: radius,
        velocity: (hx * speed, hy * speed),
        opacity,
        appears_after_s: 0.0,
    }
}

/// Cloud drift speed in the scenario suite, px/s.
pub const SUITE_SPEED: f64 = 0.24;
/// Heading of the suite's wind, degrees clockwise from image-up.
pub const SUITE_HEADING: f64 = 160.0;

/// The six named scenarios: clear, thin cloud, opaque crossing, pop-up cloud,
/// static overcast and multi-cloud.
pub fn scenario_suite(seed: u64) -> Result<Vec<SkyScenario>> {
    let base = SkyScenario::clear("clear", seed);
    let sun = base.start_sun()?;
    let (s, h) = (SUITE_SPEED, SUITE_HEADING);
    let with = |name: &str, clouds: Vec<CloudDisc>| SkyScenario {
        name: name.to_string(),
        clouds,
        ..base.clone()
    };
    let popup = {
        let mut c = approaching(sun, h, 95.0, 34.0, s, 1.0);
        c.appears_after_s = 150.0;
        let (hx, hy) = heading(h);
        // A distant drifting cloud that is visible throughout.
        let far = CloudDisc {
            centre: Pixel::new(sun.x - hx * 40.0 + hy * 70.0, sun.y - hy * 40.0 - hx * 70.0),
            radius_px: 22.0,
            velocity: (hx * s, hy * s),
            opacity: 1.0,
            appears_after_s: 0.0,
        };
        vec![far, c]
    };
    Ok(vec![
        base.clone(),
        with("thin-cloud", vec![approaching(sun, h, 80.0, 45.0, s, 0.9)]),
        with("opaque-crossing", vec![approaching(sun, h, 85.0, 45.0, s, 1.0)]),
        with("pop-up", popup),
        with(
            "static-overcast",
            vec![CloudDisc {
                centre: sun,
                radius_px: 400.0,
                velocity: (0.0, 0.0),
                opacity: 1.0,
                appears_after_s: 0.0,
            }],
        ),
        with(
            "multi-cloud",
            vec![
                approaching(sun, h, 70.0, 28.0, s, 1.0),
                approaching(sun, h, 150.0, 34.0, s, 0.9),
                {
                    let mut c = approaching(sun, h, 120.0, 24.0, s, 1.0);
                    c.centre.x += 45.0;
                    c
                },
            ],
        ),
    ])
}

/// One berry instance in a field tile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerryDisc {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

/// A simulated down-facing tile.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTile {
    pub filename: String,
    pub easting: f64,
    pub northing: f64,
    pub width: usize,
    pub height: usize,
    pub berries: Vec<BerryDisc>,
}

impl FieldTile {
    pub fn true_count(&self) -> usize {
        self.berries.len()
    }

    pub fn mask(&self) -> Raster {
        Raster::mask_from_fn(self.width, self.height, |x, y| {
            self.berries
                .iter()
                .any(|b| (x as f64 - b.x).hypot(y as f64 - b.y) <= b.radius)
        })
    }
}

/// Field layout: tiles on a regular grid, each with random berries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldScenario {
    pub seed: u64,
    pub tiles: usize,
    pub grid_cols: usize,
    pub tile_px: usize,
    /// Ground spacing between tile centres, metres.
    pub spacing_m: f64,
    pub origin_easting: f64,
    pub origin_northing: f64,
    pub min_radius: f64,
    pub max_radius: f64,
    /// Inclusive range of isolated berries per tile.
    pub berries: (usize, usize),
    /// Inclusive range of overlapping pairs per tile.
    pub overlapping_pairs: (usize, usize),
    /// Overlap depth as a fraction of the radius, at most this value.
    pub max_overlap_frac: f64,
    /// Tile index given `dense_berries` isolated berries instead.
    pub dense_tile: Option<usize>,
    pub dense_berries: usize,
}

impl Default for FieldScenario {
    fn default() -> Self {
        Self {
            seed: 0,
            tiles: 16,
            grid_cols: 4,
            tile_px: 128,
            spacing_m: 10.0,
            origin_easting: 500_000.0,
            origin_northing: 4_400_000.0,
            min_radius: 6.0,
            max_radius: 9.0,
            berries: (2, 7),
            overlapping_pairs: (0, 2),
            max_overlap_frac: 0.4,
            dense_tile: None,
            dense_berries: 24,
        }
    }
}

/// Clear pixels kept between separate berries so they never touch.
const BERRY_GAP: f64 = 3.0;
const PLACEMENT_ATTEMPTS: usize = 400;

fn place(
    placed: &mut Vec<BerryDisc>,
    candidate: &[BerryDisc],
    size: f64,
) -> bool {
    let fits = candidate.iter().all(|b| {
        b.x - b.radius >= 1.0
            && b.y - b.radius >= 1.0
            && b.x + b.radius <= size - 2.0
            && b.y + b.radius <= size - 2.0
            && placed
                .iter()
                .all(|o| (b.x - o.x).hypot(b.y - o.y) >= b.radius + o.radius + BERRY_GAP)
    });
    if fits {
        placed.extend_from_slice(candidate);
    }
    fits
}

/// Tiles with known berry counts. Tile `i` sits at grid column `i % grid_cols`
/// and row `i / grid_cols` counted northwards from the origin.
pub fn simulate_field(sc: &FieldScenario) -> Result<Vec<FieldTile>> {
    if !(sc.min_radius > 0.0 && sc.max_radius >= sc.min_radius) || sc.grid_cols == 0 {
        return Err(Error::InvalidParameter("field radii must be positive and grid_cols non-zero".into()));
    }
    if !(0.0..1.0).contains(&sc.max_overlap_frac) || sc.berries.0 > sc.berries.1 || sc.overlapping_pairs.0 > sc.overlapping_pairs.1 {
        return Err(Error::InvalidParameter("invalid berry or overlap ranges".into()));
    }
    let size = sc.tile_px as f64;
    (0..sc.tiles)
        .map(|i| {
            let mut r = rng(sc.seed, derive(0xF1E1D, i as u64));
            let mut berries = Vec::new();
            let dense = sc.dense_tile == Some(i);
            let pairs = if dense { 0 } else { r.random_range(sc.overlapping_pairs.0..=sc.overlapping_pairs.1) };
            let singles = if dense { sc.dense_berries } else { r.random_range(sc.berries.0..=sc.berries.1) };
            for _ in 0..pairs {
                for _ in 0..PLACEMENT_ATTEMPTS {
                    let radius = r.random_range(sc.min_radius.max(6.0)..=sc.max_radius.max(6.0));
                    let depth = r.random_range(0.1..=sc.max_overlap_frac.max(0.1)) * radius;
                    let sep = 2.0 * radius - depth;
                    let a = r.random::<f64>() * std::f64::consts::TAU;
                    let (x, y) = (r.random_range(0.0..size), r.random_range(0.0..size));
                    let pair = [
                        BerryDisc { x, y, radius },
                        BerryDisc {
                            x: x + sep * a.cos(),
                            y: y + sep * a.sin(),
                            radius,
                        },
                    ];
                    if place(&mut berries, &pair, size) {
                        break;
                    }
                }
            }
            for _ in 0..singles {
                for _ in 0..PLACEMENT_ATTEMPTS {
                    let b = BerryDisc {
                        x: r.random_range(0.0..size),
                        y: r.random_range(0.0..size),
                        radius: r.random_range(sc.min_radius..=sc.max_radius),
                    };
                    if place(&mut berries, &[b], size) {
                        break;
                    }
                }
            }
            Ok(FieldTile {
                filename: format!("tile_{i:03}.png"),
                easting: sc.origin_easting + (i % sc.grid_cols) as f64 * sc.spacing_m,
                northing: sc.origin_northing + (i / sc.grid_cols) as f64 * sc.spacing_m,
                width: sc.tile_px,
                height: sc.tile_px,
                berries,
            })
        })
        .collect()
}

/// Linear berry-temperature generator `y = offset + a·irradiance + b·humidity + c·dew_point + noise`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TempCoefficients {
    pub offset: f64,
    pub irradiance: f64,
    pub humidity: f64,
    pub dew_point: f64,
    pub noise_sd: f64,
}

impl Default for TempCoefficients {
    fn default() -> Self {
        Self {
            offset: 78.0,
            irradiance: 0.03,
            humidity: -0.06,
            dew_point: 0.2,
            noise_sd: 1.0,
        }
    }
}

impl TempCoefficients {
    pub fn noiseless(&self, w: &WeatherRecord) -> f64 {
        self.offset + self.irradiance * w.irradiance + self.humidity * w.rel_humidity + self.dew_point * w.dew_point
    }
}

fn dew_point_f(temp_f: f64, rh: f64) -> f64 {
    let t = (temp_f - 32.0) / 1.8;
    let (b, c) = (17.62, 243.12);
    let gamma = (rh / 100.0).ln() + b * t / (c + t);
    (c * gamma / (b - gamma)) * 1.8 + 32.0
}

/// Weather rows every `step_s` seconds from `start` with diurnal temperature,
/// anticorrelated humidity, drifting wind and intermittent cloud cover; berry
/// temperatures follow `coef`.
pub fn simulate_weather(
    seed: u64,
    site: &Site,
    start: DateTime<Utc>,
    rows: usize,
    step_s: i64,
    clear_sky: &ClearSkyModel,
    coef: &TempCoefficients,
) -> Result<(Vec<WeatherRecord>, Vec<f64>)> {
    let mut r = rng(seed, 0x3EA7);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let (mut cloud, mut wind, mut dir, mut wet, mut day_offset, mut hum_noise) = (0.0f64, 4.0f64, 200.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut weather = Vec::with_capacity(rows);
    let mut temps = Vec::with_capacity(rows);
    for i in 0..rows {
        let t = start + Duration::seconds(step_s * i as i64);
        let el = sun_position(t, site.lat, site.lon).elevation_deg;
        if i % (86_400 / step_s.max(1)) as usize == 0 {
            day_offset = 4.0 * unit.sample(&mut r);
        }
        cloud = (0.97 * cloud + 0.12 * unit.sample(&mut r)).clamp(-1.0, 1.0);
        let cover = cloud.max(0.0);
        let irradiance = clear_sky.irradiance_at(el)? * (1.0 - DEFAULT_ATTENUATION * cover);
        let ambient = 70.0 + day_offset + 16.0 * (el / 75.0).clamp(-0.3, 1.0) - 4.0 * cover + 0.5 * unit.sample(&mut r);
        hum_noise = 0.95 * hum_noise + 1.2 * unit.sample(&mut r);
        let rel_humidity = (95.0 - 1.3 * (ambient - 60.0) + 10.0 * cover + hum_noise).clamp(20.0, 100.0);
        wind = (0.95 * wind + 0.05 * 5.0 + 0.6 * unit.sample(&mut r)).clamp(0.0, 30.0);
        dir = (dir + 8.0 * unit.sample(&mut r)).rem_euclid(360.0);
        let rain = if rel_humidity > 92.0 && r.random::<f64>() < 0.05 {
            0.01 * r.random_range(1..=5) as f64
        } else {
            0.0
        };
        wet = if rain > 0.0 { 100.0 } else { (wet * 0.9 + if rel_humidity > 90.0 { 5.0 } else { 0.0 }).min(100.0) };
        let rec = WeatherRecord {
            timestamp: t,
            ambient_temp: ambient,
            wind_speed: wind,
            gust_speed: wind * (1.3 + 0.4 * r.random::<f64>()),
            wind_dir: dir,
            rel_humidity,
            dew_point: dew_point_f(ambient, rel_humidity),
            rain,
            wetness: wet,
            irradiance,
        };
        temps.push(coef.noiseless(&rec) + coef.noise_sd * unit.sample(&mut r));
        weather.push(rec);
    }
    Ok((weather, temps))
}
