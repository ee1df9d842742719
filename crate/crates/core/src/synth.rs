//! Synthetic marker scenes under analytic gel deformations.
//!
//! A scene is a continuous intensity function on the plane. The first image
//! samples it directly; the second samples it at the preimage of each pixel
//! under the deformation, so the forward flow `F(p) − p` is exact ground
//! truth. Both images are rendered with 4×4 supersampling per pixel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::image::Image;

const SUBSAMPLES: usize = 4;
const MIN_SIZE: usize = 32;
const BUMP_MAX_ITERS: usize = 50;
const BUMP_TOL: f64 = 1e-12;

/// A jittered grid of dark dots with smooth edges on a bright background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DotGrid {
    /// Grid spacing in pixels. The grid is anchored at the image centre.
    pub pitch: f64,
    /// Dot radius in pixels; `0` renders no dots.
    pub radius: f64,
    /// Maximum per-axis offset of each dot from its grid site.
    pub jitter: f64,
    /// Width of the smooth intensity transition across the dot boundary.
    pub edge: f64,
    pub background: f64,
    pub foreground: f64,
}

impl Default for DotGrid {
    fn default() -> Self {
        DotGrid {
            pitch: 10.0,
            radius: 3.0,
            jitter: 1.5,
            edge: 2.0,
            background: 0.85,
            foreground: 0.15,
        }
    }
}

/// Smooth random colour pattern: Gaussian colour blobs squashed into (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorPattern {
    /// Blobs per 100×100 pixel area.
    pub density: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl Default for ColorPattern {
    fn default() -> Self {
        ColorPattern {
            density: 60.0,
            sigma_min: 2.0,
            sigma_max: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Pattern {
    Dots(DotGrid),
    Color(ColorPattern),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub pattern: Pattern,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            pattern: Pattern::Dots(DotGrid::default()),
            seed: 7,
        }
    }
}

impl SceneSpec {
    fn validate(&self) -> Result<()> {
        match &self.pattern {
            Pattern::Dots(d) => {
                let vals = [d.pitch, d.radius, d.jitter, d.edge, d.background, d.foreground];
                if vals.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("dot grid parameters must be finite"));
                }
                if d.pitch <= 0.0 || d.radius < 0.0 || d.jitter < 0.0 || d.edge <= 0.0 {
                    return Err(Error::invalid(
                        "dot grid needs pitch > 0, edge > 0, radius >= 0, jitter >= 0",
                    ));
                }
                if !(0.0..=1.0).contains(&d.background) || !(0.0..=1.0).contains(&d.foreground) {
                    return Err(Error::invalid("dot intensities must lie in [0, 1]"));
                }
            }
            Pattern::Color(c) => {
                if !(c.density >= 0.0 && c.sigma_min > 0.0 && c.sigma_max >= c.sigma_min) {
                    return Err(Error::invalid(
                        "colour pattern needs density >= 0 and 0 < sigma_min <= sigma_max",
                    ));
                }
            }
        }
        Ok(())
    }
}

struct Dot {
    x: f64,
    y: f64,
}

struct Blob {
    x: f64,
    y: f64,
    inv_two_sigma2: f64,
    amp: [f64; 3],
}

/// The continuous scene a [`SceneSpec`] describes for a given image extent.
enum Scene {
    Dots {
        grid: DotGrid,
        center: (f64, f64),
        i_min: i64,
        j_min: i64,
        cols: usize,
        rows: usize,
        dots: Vec<Dot>,
        reach: i64,
    },
    Color {
        blobs: Vec<Blob>,
        cell: f64,
        origin: (f64, f64),
        cols: usize,
        rows: usize,
        buckets: Vec<Vec<usize>>,
        reach: i64,
    },
}

/// Scenes extend this far beyond the image so deformed views stay covered.
fn margin(width: usize, height: usize) -> f64 {
    0.5 * width.max(height) as f64 + 16.0
}

impl Scene {
    fn new(width: usize, height: usize, spec: &SceneSpec) -> Scene {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let m = margin(width, height);
        match &spec.pattern {
            Pattern::Dots(grid) => {
                let center = (width as f64 / 2.0, height as f64 / 2.0);
                let i_min = ((-m - center.0) / grid.pitch).floor() as i64;
                let i_max = ((width as f64 + m - center.0) / grid.pitch).ceil() as i64;
                let j_min = ((-m - center.1) / grid.pitch).floor() as i64;
                let j_max = ((height as f64 + m - center.1) / grid.pitch).ceil() as i64;
                let cols = (i_max - i_min + 1) as usize;
                let rows = (j_max - j_min + 1) as usize;
                let mut dots = Vec::with_capacity(cols * rows);
                for j in 0..rows {
                    for i in 0..cols {
                        let (ox, oy) = if grid.jitter > 0.0 {
                            (
                                rng.gen_range(-grid.jitter..=grid.jitter),
                                rng.gen_range(-grid.jitter..=grid.jitter),
                            )
                        } else {
                            (0.0, 0.0)
                        };
                        dots.push(Dot {
                            x: center.0 + (i_min + i as i64) as f64 * grid.pitch + ox,
                            y: center.1 + (j_min + j as i64) as f64 * grid.pitch + oy,
                        });
                    }
                }
                let extent = grid.radius + grid.edge / 2.0 + grid.jitter;
                let reach = (extent / grid.pitch).ceil() as i64 + 1;
                Scene::Dots {
                    grid: grid.clone(),
                    center,
                    i_min,
                    j_min,
                    cols,
                    rows,
                    dots,
                    reach,
                }
            }
            Pattern::Color(p) => {
                let (x0, y0) = (-m, -m);
                let (ew, eh) = (width as f64 + 2.0 * m, height as f64 + 2.0 * m);
                let count = (p.density * ew * eh / 1e4).round() as usize;
                let mut blobs = Vec::with_capacity(count);
                for _ in 0..count {
                    let sigma = if p.sigma_max > p.sigma_min {
                        rng.gen_range(p.sigma_min..p.sigma_max)
                    } else {
                        p.sigma_min
                    };
                    blobs.push(Blob {
                        x: x0 + rng.gen::<f64>() * ew,
                        y: y0 + rng.gen::<f64>() * eh,
                        inv_two_sigma2: 1.0 / (2.0 * sigma * sigma),
                        amp: [
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                        ],
                    });
                }
                // blobs are truncated at 4 sigma
                let cell = 4.0 * p.sigma_max;
                let cols = (ew / cell).ceil() as usize + 1;
                let rows = (eh / cell).ceil() as usize + 1;
                let mut buckets = vec![Vec::new(); cols * rows];
                for (k, b) in blobs.iter().enumerate() {
                    let bi = (((b.x - x0) / cell) as usize).min(cols - 1);
                    let bj = (((b.y - y0) / cell) as usize).min(rows - 1);
                    buckets[bj * cols + bi].push(k);
                }
                Scene::Color {
                    blobs,
                    cell,
                    origin: (x0, y0),
                    cols,
                    rows,
                    buckets,
                    reach: 1,
                }
            }
        }
    }

    fn channels(&self) -> usize {
        match self {
            Scene::Dots { .. } => 1,
            Scene::Color { .. } => 3,
        }
    }

    /// Maps a pixel's mean sample value to intensity. Dot scenes sample
    /// coverage, so the background stays exact.
    fn shade(&self, v: f64) -> f64 {
        match self {
            Scene::Dots { grid, .. } => grid.background + (grid.foreground - grid.background) * v,
            Scene::Color { .. } => v,
        }
    }

    fn eval(&self, x: f64, y: f64, out: &mut [f64]) {
        match self {
            Scene::Dots {
                grid,
                center,
                i_min,
                j_min,
                cols,
                rows,
                dots,
                reach,
            } => {
                let mut coverage: f64 = 0.0;
                if grid.radius > 0.0 {
                    let gi = ((x - center.0) / grid.pitch).round() as i64 - i_min;
                    let gj = ((y - center.1) / grid.pitch).round() as i64 - j_min;
                    for j in (gj - reach).max(0)..=(gj + reach).min(*rows as i64 - 1) {
                        for i in (gi - reach).max(0)..=(gi + reach).min(*cols as i64 - 1) {
                            let d = &dots[j as usize * cols + i as usize];
                            let dist = (x - d.x).hypot(y - d.y);
                            coverage = coverage.max(dot_profile(dist, grid.radius, grid.edge));
                        }
                    }
                }
                out[0] = coverage;
            }
            Scene::Color {
                blobs,
                cell,
                origin,
                cols,
                rows,
                buckets,
                reach,
            } => {
                let mut acc = [0.0; 3];
                let bi = ((x - origin.0) / cell).floor() as i64;
                let bj = ((y - origin.1) / cell).floor() as i64;
                for j in (bj - reach).max(0)..=(bj + reach).min(*rows as i64 - 1) {
                    for i in (bi - reach).max(0)..=(bi + reach).min(*cols as i64 - 1) {
                        for &k in &buckets[j as usize * cols + i as usize] {
                            let b = &blobs[k];
                            let d2 = (x - b.x).powi(2) + (y - b.y).powi(2);
                            let g = (-d2 * b.inv_two_sigma2).exp();
                            for (a, amp) in acc.iter_mut().zip(&b.amp) {
                                *a += amp * g;
                            }
                        }
                    }
                }
                for (o, a) in out.iter_mut().zip(acc) {
                    *o = 0.5 + 0.5 * (0.8 * a).tanh();
                }
            }
        }
    }
}

/// 1 inside the dot, 0 outside, smoothstep across `[r − e/2, r + e/2]`.
fn dot_profile(dist: f64, radius: f64, edge: f64) -> f64 {
    let t = ((radius + edge / 2.0 - dist) / edge).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn render(
    width: usize,
    height: usize,
    scene: &Scene,
    map: impl Fn(f64, f64) -> (f64, f64) + Sync,
) -> Result<Image> {
    let c = scene.channels();
    let mut data = vec![0.0; width * height * c];
    let n = (SUBSAMPLES * SUBSAMPLES) as f64;
    data.par_chunks_mut(width * c).enumerate().for_each(|(y, row)| {
        let mut buf = [0.0; 3];
        for x in 0..width {
            let px = &mut row[x * c..(x + 1) * c];
            for sj in 0..SUBSAMPLES {
                for si in 0..SUBSAMPLES {
                    let ox = (si as f64 + 0.5) / SUBSAMPLES as f64 - 0.5;
                    let oy = (sj as f64 + 0.5) / SUBSAMPLES as f64 - 0.5;
                    let (sx, sy) = map(x as f64 + ox, y as f64 + oy);
                    scene.eval(sx, sy, &mut buf[..c]);
                    for k in 0..c {
                        px[k] += buf[k];
                    }
                }
            }
            for v in px.iter_mut() {
                *v = scene.shade(*v / n).clamp(0.0, 1.0);
            }
        }
    });
    Image::new(width, height, c, data)
}

fn check_size(height: usize, width: usize) -> Result<()> {
    if height < MIN_SIZE || width < MIN_SIZE {
        return Err(Error::invalid(format!(
            "synthetic images must be at least {MIN_SIZE}x{MIN_SIZE}, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Renders the undeformed scene.
pub fn render_marker_image(height: usize, width: usize, spec: &SceneSpec) -> Result<Image> {
    check_size(height, width)?;
    spec.validate()?;
    let scene = Scene::new(width, height, spec);
    render(width, height, &scene, |x, y| (x, y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeformationKind {
    Translation,
    Rotation,
    Shrink,
    Stretch,
    Bump,
}

impl DeformationKind {
    pub const ALL: [DeformationKind; 5] = [
        DeformationKind::Translation,
        DeformationKind::Rotation,
        DeformationKind::Shrink,
        DeformationKind::Stretch,
        DeformationKind::Bump,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DeformationKind::Translation => "translation",
            DeformationKind::Rotation => "rotation",
            DeformationKind::Shrink => "shrink",
            DeformationKind::Stretch => "stretch",
            DeformationKind::Bump => "bump",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// An analytic, invertible map of the plane. Centres are in pixel
/// coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Deformation {
    Translation { tx: f64, ty: f64 },
    Rotation { theta: f64, cx: f64, cy: f64 },
    /// Uniform scaling by `factor < 1` about the centre.
    Shrink { factor: f64, cx: f64, cy: f64 },
    /// Uniform scaling by `factor > 1` about the centre.
    Stretch { factor: f64, cx: f64, cy: f64 },
    /// Radial push `d(p) = A (p − c)/σ · exp(1/2 − |p − c|²/(2σ²))`, which
    /// peaks at `A` pixels on the circle `|p − c| = σ`.
    Bump { amplitude: f64, sigma: f64, cx: f64, cy: f64 },
}

impl Deformation {
    /// The default magnitude of `kind`, centred in a `width × height` image.
    pub fn default_for(kind: DeformationKind, width: usize, height: usize) -> Self {
        let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
        match kind {
            DeformationKind::Translation => Deformation::Translation { tx: 3.0, ty: -2.0 },
            DeformationKind::Rotation => Deformation::Rotation { theta: 0.03, cx, cy },
            DeformationKind::Shrink => Deformation::Shrink { factor: 0.95, cx, cy },
            DeformationKind::Stretch => Deformation::Stretch { factor: 1.05, cx, cy },
            DeformationKind::Bump => Deformation::Bump {
                amplitude: 4.0,
                sigma: 20.0,
                cx,
                cy,
            },
        }
    }

    pub fn kind(&self) -> DeformationKind {
        match self {
            Deformation::Translation { .. } => DeformationKind::Translation,
            Deformation::Rotation { .. } => DeformationKind::Rotation,
            Deformation::Shrink { .. } => DeformationKind::Shrink,
            Deformation::Stretch { .. } => DeformationKind::Stretch,
            Deformation::Bump { .. } => DeformationKind::Bump,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Deformation::Translation { tx, ty } => tx.is_finite() && ty.is_finite(),
            Deformation::Rotation { theta, cx, cy } => theta.abs() <= 0.3 && cx.is_finite() && cy.is_finite(),
            Deformation::Shrink { factor, cx, cy } => {
                factor > 0.5 && factor < 1.0 && cx.is_finite() && cy.is_finite()
            }
            Deformation::Stretch { factor, cx, cy } => {
                factor > 1.0 && factor < 1.5 && cx.is_finite() && cy.is_finite()
            }
            Deformation::Bump {
                amplitude,
                sigma,
                cx,
                cy,
            } => sigma > 0.0 && amplitude > 0.0 && amplitude < sigma && cx.is_finite() && cy.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "deformation parameters out of range: {self:?} \
                 (|theta| <= 0.3, shrink in (0.5, 1), stretch in (1, 1.5), 0 < amplitude < sigma)"
            )))
        }
    }

    /// `F(p)`.
    pub fn forward(&self, x: f64, y: f64) -> (f64, f64) {
        match *self {
            Deformation::Translation { tx, ty } => (x + tx, y + ty),
            Deformation::Rotation { theta, cx, cy } => {
                let (s, c) = theta.sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                (cx + c * dx - s * dy, cy + s * dx + c * dy)
            }
            Deformation::Shrink { factor, cx, cy } | Deformation::Stretch { factor, cx, cy } => {
                (cx + factor * (x - cx), cy + factor * (y - cy))
            }
            Deformation::Bump { .. } => {
                let (dx, dy) = self.bump_displacement(x, y);
                (x + dx, y + dy)
            }
        }
    }

    /// `F⁻¹(q)`; the bump is inverted by fixed-point iteration.
    pub fn inverse(&self, x: f64, y: f64) -> (f64, f64) {
        match *self {
            Deformation::Translation { tx, ty } => (x - tx, y - ty),
            Deformation::Rotation { theta, cx, cy } => {
                let (s, c) = theta.sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                (cx + c * dx + s * dy, cy - s * dx + c * dy)
            }
            Deformation::Shrink { factor, cx, cy } | Deformation::Stretch { factor, cx, cy } => {
                (cx + (x - cx) / factor, cy + (y - cy) / factor)
            }
            Deformation::Bump { .. } => {
                let (mut px, mut py) = (x, y);
                for _ in 0..BUMP_MAX_ITERS {
                    let (dx, dy) = self.bump_displacement(px, py);
                    let (nx, ny) = (x - dx, y - dy);
                    let delta = (nx - px).abs().max((ny - py).abs());
                    px = nx;
                    py = ny;
                    if delta < BUMP_TOL {
                        break;
                    }
                }
                (px, py)
            }
        }
    }

    fn bump_displacement(&self, x: f64, y: f64) -> (f64, f64) {
        let Deformation::Bump {
            amplitude,
            sigma,
            cx,
            cy,
        } = *self
        else {
            return (0.0, 0.0);
        };
        let (dx, dy) = (x - cx, y - cy);
        let r2 = dx * dx + dy * dy;
        let k = amplitude / sigma * (0.5 - r2 / (2.0 * sigma * sigma)).exp();
        (k * dx, k * dy)
    }

    /// Ground-truth forward flow `F(p) − p` at every pixel.
    pub fn flow(&self, width: usize, height: usize) -> FlowField {
        FlowField::from_fn(width, height, |x, y| {
            let (fx, fy) = self.forward(x as f64, y as f64);
            (fx - x as f64, fy - y as f64)
        })
    }
}

/// An image pair with exact ground-truth flow.
#[derive(Debug, Clone)]
pub struct SyntheticCase {
    pub i1: Image,
    pub i2: Image,
    pub gt_flow: FlowField,
    pub deformation: Deformation,
    pub scene: SceneSpec,
}

impl SyntheticCase {
    pub fn kind(&self) -> DeformationKind {
        self.deformation.kind()
    }
}

/// Renders `i1` from the scene and `i2` from the scene pulled back through
/// the inverse deformation.
pub fn make_case(
    deformation: &Deformation,
    height: usize,
    width: usize,
    scene: &SceneSpec,
) -> Result<SyntheticCase> {
    check_size(height, width)?;
    scene.validate()?;
    deformation.validate()?;
    let sc = Scene::new(width, height, scene);
    let i1 = render(width, height, &sc, |x, y| (x, y))?;
    let i2 = render(width, height, &sc, |x, y| deformation.inverse(x, y))?;
    Ok(SyntheticCase {
        i1,
        i2,
        gt_flow: deformation.flow(width, height),
        deformation: deformation.clone(),
        scene: scene.clone(),
    })
}

/// [`make_case`] with the default magnitude of `kind` on the default scene.
pub fn default_case(kind: DeformationKind, height: usize, width: usize) -> Result<SyntheticCase> {
    make_case(
        &Deformation::default_for(kind, width, height),
        height,
        width,
        &SceneSpec::default(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::deformation_ratio;

    #[test]
    fn no_dots_is_constant() {
        let spec = SceneSpec {
            pattern: Pattern::Dots(DotGrid {
                radius: 0.0,
                ..DotGrid::default()
            }),
            seed: 1,
        };
        let img = render_marker_image(32, 40, &spec).unwrap();
        assert!(img.data().iter().all(|&v| (v - 0.85).abs() < 1e-15));
    }

    #[test]
    fn rendering_is_deterministic() {
        for spec in [
            SceneSpec::default(),
            SceneSpec {
                pattern: Pattern::Color(ColorPattern::default()),
                seed: 3,
            },
        ] {
            let a = render_marker_image(48, 40, &spec).unwrap();
            let b = render_marker_image(48, 40, &spec).unwrap();
            assert_eq!(a, b);
        }
        let other = SceneSpec { seed: 8, ..SceneSpec::default() };
        assert_ne!(
            render_marker_image(48, 40, &SceneSpec::default()).unwrap(),
            render_marker_image(48, 40, &other).unwrap()
        );
    }

    #[test]
    fn single_centered_dot() {
        let spec = SceneSpec {
            pattern: Pattern::Dots(DotGrid {
                pitch: 100.0,
                radius: 3.0,
                jitter: 0.0,
                edge: 1.0,
                ..DotGrid::default()
            }),
            seed: 0,
        };
        let img = render_marker_image(40, 40, &spec).unwrap();
        assert!(img.get(20, 20, 0) < 0.85);
        assert!((img.get(20, 20, 0) - 0.15).abs() < 1e-12);
        let dark = img.data().iter().filter(|&&v| v < 0.85).count();
        // anything touching the disc of radius 3.5
        assert!((30..70).contains(&dark), "{dark}");
        assert_eq!(img.get(0, 0, 0), 0.85);
    }

    #[test]
    fn rejects_small_and_bad_params() {
        assert!(render_marker_image(16, 40, &SceneSpec::default()).is_err());
        let bad = Deformation::Stretch { factor: 1.6, cx: 0.0, cy: 0.0 };
        assert!(make_case(&bad, 32, 32, &SceneSpec::default()).is_err());
        let bad = Deformation::Rotation { theta: 0.4, cx: 0.0, cy: 0.0 };
        assert!(make_case(&bad, 32, 32, &SceneSpec::default()).is_err());
        let bad = Deformation::Bump { amplitude: 5.0, sigma: 4.0, cx: 0.0, cy: 0.0 };
        assert!(make_case(&bad, 32, 32, &SceneSpec::default()).is_err());
    }

    #[test]
    fn translation_and_stretch_fields() {
        let c = default_case(DeformationKind::Translation, 32, 48).unwrap();
        assert!(c.gt_flow.u().iter().all(|&u| u == 3.0));
        assert!(c.gt_flow.v().iter().all(|&v| v == -2.0));

        let d = Deformation::default_for(DeformationKind::Stretch, 48, 32);
        let f = d.flow(48, 32);
        for (x, y) in [(0usize, 0usize), (10, 20), (47, 31)] {
            let (u, v) = f.get(x, y);
            assert!((u - 0.05 * (x as f64 - 24.0)).abs() < 1e-12);
            assert!((v - 0.05 * (y as f64 - 16.0)).abs() < 1e-12);
        }
        let r = deformation_ratio(&f);
        for y in 1..31 {
            for x in 1..47 {
                assert!((r.r[y * 48 + x] - 1.1025).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inverses_round_trip() {
        for kind in DeformationKind::ALL {
            let d = Deformation::default_for(kind, 64, 64);
            for &(x, y) in &[(0.0, 0.0), (13.2, 40.7), (32.0, 32.0), (63.0, 5.5), (44.0, 19.0)] {
                let (fx, fy) = d.forward(x, y);
                let (bx, by) = d.inverse(fx, fy);
                assert!((bx - x).abs() < 1e-8 && (by - y).abs() < 1e-8, "{kind:?}");
            }
        }
    }

    #[test]
    fn bump_peaks_at_sigma() {
        let d = Deformation::default_for(DeformationKind::Bump, 100, 100);
        let (fx, fy) = d.forward(70.0, 50.0);
        assert!((fx - 74.0).abs() < 1e-12);
        assert!((fy - 50.0).abs() < 1e-12);
    }
}
