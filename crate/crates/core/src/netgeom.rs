//! Seven-cell hexagonal layout with wrap-around, device drops and
//! large-scale fading.
//!
//! Cells are flat-topped hexagons with circumradius `cell_radius_m` and a
//! base station at each center. The center cell sits at the origin and its
//! six neighbors at distance `sqrt(3) * radius`. Wrap-around places the
//! 7-cell cluster on a torus: the six translations `2 u_k + u_{k+1}` (with
//! `u_k` the neighbor-center vectors) tile the plane with copies of the
//! cluster, and every distance is measured to the nearest image of a base
//! station.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn polar(r: f64, angle: f64) -> Self {
        Self::new(r * angle.cos(), r * angle.sin())
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Distance and direction from a base station to a device, measured to
/// the nearest wrap-around image of the base station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub distance: f64,
    /// Direction of the device as seen from the base station (radians).
    pub angle: f64,
    /// Index into [`CellLayout::wrap_offsets`] of the image used.
    pub image: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellLayout {
    pub radius: f64,
    pub bs_positions: Vec<Point>,
    /// Translations of the whole cluster; the first entry is zero.
    pub wrap_offsets: Vec<Point>,
}

/// Number of cells in the supported layout.
pub const LAYOUT_CELLS: usize = 7;

pub fn build_layout(cfg: &NetworkConfig) -> Result<CellLayout> {
    cfg.validate()?;
    if cfg.cells != LAYOUT_CELLS {
        return Err(Error::UnsupportedLayout { cells: cfg.cells });
    }
    let r = cfg.cell_radius_m;
    let spacing = 3f64.sqrt() * r;
    let neighbor =
        |k: usize| Point::polar(spacing, std::f64::consts::FRAC_PI_6 + k as f64 * std::f64::consts::FRAC_PI_3);

    let mut bs_positions = vec![Point::ORIGIN];
    bs_positions.extend((0..6).map(neighbor));

    let mut wrap_offsets = vec![Point::ORIGIN];
    wrap_offsets.extend((0..6).map(|k| neighbor(k) * 2.0 + neighbor((k + 1) % 6)));

    Ok(CellLayout {
        radius: r,
        bs_positions,
        wrap_offsets,
    })
}

impl CellLayout {
    pub fn cells(&self) -> usize {
        self.bs_positions.len()
    }

    /// Link from base station `bs` to the point `p`, through the nearest image.
    pub fn link(&self, bs: usize, p: Point) -> Link {
        let base = self.bs_positions[bs];
        let mut best = Link {
            distance: f64::INFINITY,
            angle: 0.0,
            image: 0,
        };
        for (image, off) in self.wrap_offsets.iter().enumerate() {
            let d = p - (base + *off);
            let distance = d.norm();
            if distance < best.distance {
                best = Link {
                    distance,
                    angle: d.y.atan2(d.x),
                    image,
                };
            }
        }
        best
    }

    pub fn wrapped_distance(&self, bs: usize, p: Point) -> f64 {
        self.link(bs, p).distance
    }

    /// Torus distance between two arbitrary points.
    pub fn torus_distance(&self, a: Point, b: Point) -> f64 {
        self.wrap_offsets
            .iter()
            .flat_map(|o| [(a - (b + *o)).norm(), (b - (a + *o)).norm()])
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether `p` (relative to a cell center) lies inside a flat-topped
    /// hexagon of this layout's radius.
    pub fn in_hexagon(&self, p: Point) -> bool {
        let s3 = 3f64.sqrt();
        p.y.abs() <= 0.5 * s3 * self.radius && s3 * p.x.abs() + p.y.abs() <= s3 * self.radius
    }

    /// Uniform point in a hexagon centered at the origin, at least
    /// `min_distance` from the center.
    pub fn sample_in_cell<R: Rng + ?Sized>(&self, rng: &mut R, min_distance: f64) -> Point {
        let half_h = 0.5 * 3f64.sqrt() * self.radius;
        loop {
            let p = Point::new(
                rng.random_range(-self.radius..=self.radius),
                rng.random_range(-half_h..=half_h),
            );
            if self.in_hexagon(p) && p.norm() >= min_distance {
                return p;
            }
        }
    }
}

/// Large-scale fading gain (linear) at `distance_m` with shadowing `shadow_db`.
pub fn large_scale_fading(distance_m: f64, shadow_db: f64, cfg: &NetworkConfig) -> Result<f64> {
    if !(distance_m >= cfg.min_distance_m) {
        return Err(Error::domain(format!(
            "distance {distance_m} m below the {} m minimum",
            cfg.min_distance_m
        )));
    }
    Ok(10f64.powf(gain_db(distance_m, shadow_db, cfg) / 10.0))
}

pub fn gain_db(distance_m: f64, shadow_db: f64, cfg: &NetworkConfig) -> f64 {
    cfg.pathloss_intercept_db - 10.0 * cfg.pathloss_exponent * distance_m.log10() + shadow_db
}

/// One random placement of every device, with per-link gains.
///
/// All per-link tables are indexed `[cell][device][bs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceDrop {
    pub positions: Vec<Vec<Point>>,
    pub betas: Vec<Vec<Vec<f64>>>,
    pub shadow_db: Vec<Vec<Vec<f64>>>,
    pub links: Vec<Vec<Vec<Link>>>,
}

impl DeviceDrop {
    pub fn cells(&self) -> usize {
        self.positions.len()
    }

    pub fn devices_per_cell(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    pub fn beta(&self, cell: usize, device: usize, bs: usize) -> f64 {
        self.betas[cell][device][bs]
    }
}

pub fn drop_devices(layout: &CellLayout, cfg: &NetworkConfig, stream: &RandomStream) -> Result<DeviceDrop> {
    cfg.validate()?;
    let cells = layout.cells();
    let k = cfg.devices_per_cell;
    let mut pos_rng = stream.named("positions").rng();
    let mut shadow_rng = stream.named("shadowing").rng();
    let shadow = Normal::new(0.0, cfg.shadow_sigma_db)
        .map_err(|e| Error::config("network.shadow_sigma_db", e.to_string()))?;

    let positions: Vec<Vec<Point>> = (0..cells)
        .map(|c| {
            (0..k)
                .map(|_| layout.bs_positions[c] + layout.sample_in_cell(&mut pos_rng, cfg.min_distance_m))
                .collect()
        })
        .collect();

    let mut betas = Vec::with_capacity(cells);
    let mut shadows = Vec::with_capacity(cells);
    let mut links = Vec::with_capacity(cells);
    for cell_pos in &positions {
        let mut cb = Vec::with_capacity(k);
        let mut cs = Vec::with_capacity(k);
        let mut cl = Vec::with_capacity(k);
        for &p in cell_pos {
            let l: Vec<Link> = (0..cells).map(|j| layout.link(j, p)).collect();
            let s: Vec<f64> = (0..cells).map(|_| shadow.sample(&mut shadow_rng)).collect();
            let b = l
                .iter()
                .zip(&s)
                .map(|(l, &s)| large_scale_fading(l.distance, s, cfg))
                .collect::<Result<Vec<f64>>>()?;
            cb.push(b);
            cs.push(s);
            cl.push(l);
        }
        betas.push(cb);
        shadows.push(cs);
        links.push(cl);
    }
    Ok(DeviceDrop {
        positions,
        betas,
        shadow_db: shadows,
        links,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layout() -> CellLayout {
        build_layout(&NetworkConfig::default()).unwrap()
    }

    #[test]
    fn seven_cells_with_hexagonal_spacing() {
        let l = layout();
        assert_eq!(l.cells(), 7);
        let expected = 2.0 * 125.0 * 30f64.to_radians().cos();
        assert!((expected - 216.506).abs() < 1e-3);
        for j in 1..7 {
            assert!((l.bs_positions[0].dist(l.bs_positions[j]) - expected).abs() < 1e-9);
            let next = 1 + j % 6;
            assert!((l.bs_positions[j].dist(l.bs_positions[next]) - expected).abs() < 1e-9);
        }
        assert!(l.wrap_offsets.contains(&Point::ORIGIN));
        assert_eq!(l.wrap_offsets.len(), 7);
    }

    #[test]
    fn other_cell_counts_are_rejected() {
        let cfg = NetworkConfig {
            cells: 3,
            ..Default::default()
        };
        assert!(matches!(build_layout(&cfg), Err(Error::UnsupportedLayout { cells: 3 })));
    }

    #[test]
    fn path_loss_matches_hand_evaluation() {
        let cfg = NetworkConfig::default();
        let db = 10.0 * large_scale_fading(1000.0, 0.0, &cfg).unwrap().log10();
        assert!((db - -148.1).abs() < 1e-9, "{db}");
        let a = 10.0 * large_scale_fading(50.0, 0.0, &cfg).unwrap().log10();
        let b = 10.0 * large_scale_fading(100.0, 0.0, &cfg).unwrap().log10();
        assert!((a - b - 37.6 * 2f64.log10()).abs() < 1e-9);
        assert!((a - b - 11.318).abs() < 1e-3);
        assert!(large_scale_fading(9.99, 0.0, &cfg).is_err());
        assert!(large_scale_fading(f64::NAN, 0.0, &cfg).is_err());
        assert!(large_scale_fading(120.0, -80.0, &cfg).unwrap() > 0.0);
    }

    #[test]
    fn drop_without_devices_is_a_config_error() {
        let cfg = NetworkConfig {
            devices_per_cell: 0,
            clusters_per_cell: 0,
            ..Default::default()
        };
        let err = drop_devices(&layout(), &cfg, &RandomStream::new(1)).unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn drops_are_reproducible() {
        let cfg = NetworkConfig {
            devices_per_cell: 20,
            clusters_per_cell: 4,
            ..Default::default()
        };
        let l = build_layout(&cfg).unwrap();
        let s = RandomStream::new(42).child(3);
        let a = drop_devices(&l, &cfg, &s).unwrap();
        let b = drop_devices(&l, &cfg, &s).unwrap();
        assert_eq!(a, b);
        let c = drop_devices(&l, &cfg, &RandomStream::new(42).child(4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn drop_respects_cells_and_min_distance() {
        let cfg = NetworkConfig {
            devices_per_cell: 50,
            clusters_per_cell: 5,
            ..Default::default()
        };
        let l = build_layout(&cfg).unwrap();
        let d = drop_devices(&l, &cfg, &RandomStream::new(5)).unwrap();
        for (c, cell) in d.positions.iter().enumerate() {
            for (k, &p) in cell.iter().enumerate() {
                let rel = p - l.bs_positions[c];
                assert!(l.in_hexagon(rel));
                assert!(rel.norm() >= 10.0);
                assert!((d.links[c][k][c].distance - rel.norm()).abs() < 1e-9);
                for j in 0..7 {
                    let unwrapped = p.dist(l.bs_positions[j]);
                    assert!(d.links[c][k][j].distance <= unwrapped + 1e-9);
                    assert!(d.betas[c][k][j] > 0.0);
                    let direct =
                        large_scale_fading(d.links[c][k][j].distance, d.shadow_db[c][k][j], &cfg).unwrap();
                    assert_eq!(direct, d.betas[c][k][j]);
                }
            }
        }
    }

    /// Nearest image over a large patch of the periodic lattice.
    fn brute_wrapped(l: &CellLayout, bs: usize, p: Point) -> f64 {
        let t0 = l.wrap_offsets[1];
        let t1 = l.wrap_offsets[2];
        let mut best = f64::INFINITY;
        for a in -4i32..=4 {
            for b in -4i32..=4 {
                let img = l.bs_positions[bs] + t0 * a as f64 + t1 * b as f64;
                best = best.min(p.dist(img));
            }
        }
        best
    }

    #[test]
    fn wrap_offsets_give_true_torus_distance() {
        let l = layout();
        let r = l.radius;
        // 10 x 10 grid over the bounding box of every cell, kept if inside
        // the cell, plus all corners
        for c in 0..7 {
            let mut pts = Vec::new();
            for i in 0..10 {
                for j in 0..10 {
                    let p = Point::new(-r + 2.0 * r * i as f64 / 9.0, (-0.5 + j as f64 / 9.0) * 3f64.sqrt() * r);
                    if l.in_hexagon(p) {
                        pts.push(p);
                    }
                }
            }
            for v in 0..6 {
                pts.push(Point::polar(r * (1.0 - 1e-12), v as f64 * std::f64::consts::FRAC_PI_3));
            }
            for p in pts {
                let abs = l.bs_positions[c] + p;
                for j in 0..7 {
                    let w = l.wrapped_distance(j, abs);
                    let b = brute_wrapped(&l, j, abs);
                    assert!((w - b).abs() < 1e-9, "cell {c} bs {j}: {w} vs {b}");
                    assert!(w <= 3.0 * r + 1e-9);
                }
            }
        }
    }

    #[test]
    fn corner_device_is_within_three_radii_of_every_bs() {
        let l = layout();
        for c in 0..7 {
            for v in 0..6 {
                let corner = l.bs_positions[c] + Point::polar(l.radius, v as f64 * std::f64::consts::FRAC_PI_3);
                for j in 0..7 {
                    assert!(l.wrapped_distance(j, corner) <= 3.0 * l.radius + 1e-9);
                }
            }
        }
    }

    /// Hex-norm: fraction of the apothem, in [0, 1] inside the cell.
    fn hex_norm(p: Point, r: f64) -> (usize, f64) {
        let apothem = 0.5 * 3f64.sqrt() * r;
        let ang = p.y.atan2(p.x).rem_euclid(std::f64::consts::TAU);
        let sector = ((ang / std::f64::consts::FRAC_PI_3) as usize).min(5);
        let normal = std::f64::consts::FRAC_PI_6 + sector as f64 * std::f64::consts::FRAC_PI_3;
        let h = (p.x * normal.cos() + p.y * normal.sin()) / apothem;
        (sector, h)
    }

    #[test]
    fn positions_are_uniform_over_the_hexagon() {
        let cfg = NetworkConfig {
            devices_per_cell: 1,
            clusters_per_cell: 1,
            ..Default::default()
        };
        let l = build_layout(&cfg).unwrap();
        let r = l.radius;
        let bands = [0.0, 0.25, 0.5, 0.75, 1.0];
        let mut counts = vec![0usize; 6 * 4];
        let root = RandomStream::new(2024);
        let drops = 10_000;
        for d in 0..drops {
            let drop = drop_devices(&l, &cfg, &root.child(d)).unwrap();
            for c in 0..7 {
                let (s, h) = hex_norm(drop.positions[c][0] - l.bs_positions[c], r);
                let band = bands.windows(2).position(|w| h >= w[0] && h < w[1]).unwrap_or(3);
                counts[s * 4 + band] += 1;
            }
        }
        let hex_area = 1.5 * 3f64.sqrt() * r * r;
        let hole = std::f64::consts::PI * cfg.min_distance_m.powi(2);
        let total = hex_area - hole;
        let n = (drops as usize * 7) as f64;
        let mut chi2 = 0.0;
        for s in 0..6 {
            for b in 0..4 {
                let mut mass = hex_area / 6.0 * (bands[b + 1].powi(2) - bands[b].powi(2));
                if b == 0 {
                    mass -= hole / 6.0;
                }
                let expected = n * mass / total;
                let o = counts[s * 4 + b] as f64;
                chi2 += (o - expected).powi(2) / expected;
            }
        }
        // chi-square 99% quantile, 23 degrees of freedom
        assert!(chi2 < 41.638, "chi2 = {chi2}");
    }

    proptest! {
        #[test]
        fn wrapped_distance_never_exceeds_direct(x in -400.0f64..400.0, y in -400.0f64..400.0, bs in 0usize..7) {
            let l = layout();
            let p = Point::new(x, y);
            prop_assert!(l.wrapped_distance(bs, p) <= p.dist(l.bs_positions[bs]) + 1e-9);
        }

        #[test]
        fn torus_distance_is_symmetric(ax in -300.0f64..300.0, ay in -300.0f64..300.0,
                                       bx in -300.0f64..300.0, by in -300.0f64..300.0) {
            let l = layout();
            let a = Point::new(ax, ay);
            let b = Point::new(bx, by);
            prop_assert!((l.torus_distance(a, b) - l.torus_distance(b, a)).abs() < 1e-9);
            prop_assert!(l.torus_distance(a, b) <= a.dist(b) + 1e-9);
        }

        #[test]
        fn gain_decreases_with_distance(d1 in 10.0f64..1000.0, extra in 0.001f64..500.0, s in -30.0f64..30.0) {
            let cfg = NetworkConfig::default();
            let near = large_scale_fading(d1, s, &cfg).unwrap();
            let far = large_scale_fading(d1 + extra, s, &cfg).unwrap();
            prop_assert!(far < near);
        }
    }
}
