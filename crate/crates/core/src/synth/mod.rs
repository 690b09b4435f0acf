//! Seeded synthetic water scenes with per-frame ground truth.

pub mod rng;

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::Label;
use crate::imaging::{BoundingBox, Frame, PixelFormat};
use crate::ingest::{write_pnm, Y4mWriter};
use rng::NoiseRng;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("bad scenario: {0}")]
    BadScenario(String),
    #[error("frame index {t} outside 0..{frame_count}")]
    FrameOutOfRange { t: u32, frame_count: u32 },
    #[error("truth line {line}: {message}")]
    BadTruth { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Rect,
    Ellipse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Background {
    pub base: u8,
    pub ripple_amplitude: f64,
    pub ripple_wavelength: f64,
    /// Phase advance per frame, radians.
    pub ripple_speed: f64,
    pub noise_sigma: f64,
}

impl Default for Background {
    fn default() -> Self {
        Background {
            base: 110,
            ripple_amplitude: 3.0,
            ripple_wavelength: 48.0,
            ripple_speed: 0.15,
            noise_sigma: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub shape: Shape,
    pub size: [u32; 2],
    pub color: [u8; 3],
    /// Top-left corner at frame 0; may lie outside the frame.
    pub start: [f64; 2],
    pub velocity: [f64; 2],
    #[serde(default)]
    pub enter_frame: u32,
    #[serde(default = "never")]
    pub exit_frame: u32,
    pub label: Label,
    #[serde(default = "opaque")]
    pub alpha: f64,
}

fn never() -> u32 {
    u32::MAX
}

fn opaque() -> f64 {
    1.0
}

impl SceneObject {
    /// Top-left corner at frame `t`.
    pub fn position(&self, t: u32) -> (i64, i64) {
        let t = t as f64;
        (
            (self.start[0] + t * self.velocity[0]).floor() as i64,
            (self.start[1] + t * self.velocity[1]).floor() as i64,
        )
    }

    fn covers(&self, dx: u32, dy: u32) -> bool {
        match self.shape {
            Shape::Rect => true,
            Shape::Ellipse => {
                let (a, b) = (self.size[0] as f64 / 2.0, self.size[1] as f64 / 2.0);
                let u = (dx as f64 + 0.5 - a) / a;
                let v = (dy as f64 + 0.5 - b) / b;
                u * u + v * v <= 1.0
            }
        }
    }

    fn alive(&self, t: u32) -> bool {
        (self.enter_frame..self.exit_frame).contains(&t)
    }

    /// Frame pixels covered at `t`, clipped to `dims`.
    fn pixels(&self, t: u32, dims: (u32, u32)) -> impl Iterator<Item = (u32, u32)> + '_ {
        let (px, py) = self.position(t);
        let (w, h) = (self.size[0] as i64, self.size[1] as i64);
        let x0 = px.max(0);
        let y0 = py.max(0);
        let x1 = (px + w).min(dims.0 as i64);
        let y1 = (py + h).min(dims.1 as i64);
        (y0..y1.max(y0))
            .flat_map(move |y| (x0..x1.max(x0)).map(move |x| (x, y)))
            .filter(move |&(x, y)| self.covers((x - px) as u32, (y - py) as u32))
            .map(|(x, y)| (x as u32, y as u32))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub width: u32,
    pub height: u32,
    pub frame_count: u32,
    pub seed: u64,
    #[serde(default = "default_fps")]
    pub fps: u32,
    #[serde(default)]
    pub background: Background,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
}

fn default_fps() -> u32 {
    30
}

/// One object's box in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub seq: u64,
    pub id: u32,
    pub label: Label,
    #[serde(flatten)]
    pub bbox: BoundingBox,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::BadScenario(m));
        if self.width == 0 || self.height == 0 {
            return bad(format!("zero dimension {}x{}", self.width, self.height));
        }
        if self.frame_count == 0 {
            return bad("frame_count must be positive".into());
        }
        if self.fps == 0 {
            return bad("fps must be positive".into());
        }
        let bg = &self.background;
        if !(bg.noise_sigma >= 0.0 && bg.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be >= 0, got {}", bg.noise_sigma));
        }
        if bg.ripple_wavelength.is_nan()
            || bg.ripple_wavelength <= 0.0
            || !bg.ripple_amplitude.is_finite()
            || !bg.ripple_speed.is_finite()
        {
            return bad("ripple parameters must be finite with a positive wavelength".into());
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.size[0] == 0 || o.size[1] == 0 {
                return bad(format!("object {i} has zero size"));
            }
            if !(0.0..=1.0).contains(&o.alpha) {
                return bad(format!("object {i} alpha {} outside [0, 1]", o.alpha));
            }
            if o.enter_frame >= o.exit_frame {
                return bad(format!("object {i} exits before it enters"));
            }
            if !o.start.iter().chain(&o.velocity).all(|v| v.is_finite()) {
                return bad(format!("object {i} has a non-finite trajectory"));
            }
        }
        Ok(())
    }

    /// Timestamp of frame `t`, matching what a file source reports.
    pub fn timestamp_us(&self, t: u32) -> u64 {
        crate::ingest::synthetic_ts(t as u64, self.fps as f64)
    }

    pub fn from_toml(text: &str) -> Result<Scenario, SynthError> {
        let s: Scenario =
            toml::from_str(text).map_err(|e| SynthError::BadScenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}

/// The reference scene: 200 frames of 320x240 water with a vessel, a
/// vegetation mat and a piece of debris on diagonal paths.
pub fn standard_scenario() -> Scenario {
    Scenario {
        width: 320,
        height: 240,
        frame_count: 200,
        seed: 0x5EED_F10A,
        fps: 30,
        background: Background::default(),
        objects: vec![
            SceneObject {
                shape: Shape::Rect,
                size: [36, 18],
                color: [215, 215, 220],
                start: [10.0, 10.0],
                velocity: [1.0, 1.0],
                enter_frame: 0,
                exit_frame: 110,
                label: Label::Vessel,
                alpha: 1.0,
            },
            SceneObject {
                shape: Shape::Ellipse,
                size: [28, 22],
                color: [30, 240, 30],
                start: [290.0, 230.0],
                velocity: [-1.0, -1.0],
                enter_frame: 20,
                exit_frame: 200,
                label: Label::Vegetation,
                alpha: 1.0,
            },
            SceneObject {
                shape: Shape::Rect,
                size: [14, 10],
                color: [60, 40, 20],
                start: [-20.0, 265.0],
                velocity: [1.0, -1.0],
                enter_frame: 40,
                exit_frame: 190,
                label: Label::Debris,
                alpha: 1.0,
            },
        ],
    }
}

/// Renders frame `t` as RGB and returns the truth for it, ordered by id.
pub fn render_frame(sc: &Scenario, t: u32) -> Result<(Frame, Vec<TruthEntry>), SynthError> {
    sc.validate()?;
    if t >= sc.frame_count {
        return Err(SynthError::FrameOutOfRange {
            t,
            frame_count: sc.frame_count,
        });
    }
    let (w, h) = (sc.width as usize, sc.height as usize);
    let bg = &sc.background;

    // Background as f64 so objects blend before the final rounding.
    let mut water = vec![0f64; w * h];
    let k = std::f64::consts::TAU / bg.ripple_wavelength;
    let phase_t = bg.ripple_speed * t as f64;
    let mut rng = NoiseRng::for_frame(sc.seed, t as u64);
    for y in 0..h {
        for x in 0..w {
            let mut v = bg.base as f64;
            if bg.ripple_amplitude != 0.0 {
                v += bg.ripple_amplitude * (k * (0.8 * x as f64 + 0.6 * y as f64) - phase_t).sin();
            }
            if bg.noise_sigma > 0.0 {
                v += bg.noise_sigma * rng.gaussian();
            }
            water[y * w + x] = v.round().clamp(0.0, 255.0);
        }
    }
    let mut rgb: Vec<[f64; 3]> = water.iter().map(|&v| [v; 3]).collect();

    let mut truth = Vec::new();
    for (i, obj) in sc.objects.iter().enumerate() {
        if !obj.alive(t) {
            continue;
        }
        let mut extent: Option<(u32, u32, u32, u32)> = None;
        for (x, y) in obj.pixels(t, (sc.width, sc.height)) {
            let px = &mut rgb[y as usize * w + x as usize];
            for (v, &c) in px.iter_mut().zip(&obj.color) {
                *v = obj.alpha * c as f64 + (1.0 - obj.alpha) * *v;
            }
            extent = Some(match extent {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
        if let Some((x0, y0, x1, y1)) = extent {
            truth.push(TruthEntry {
                seq: t as u64,
                id: i as u32 + 1,
                label: obj.label,
                bbox: BoundingBox::from_extent(x0, y0, x1, y1),
            });
        }
    }

    let data = rgb
        .iter()
        .flat_map(|p| p.map(|c| c.round().clamp(0.0, 255.0) as u8))
        .collect();
    let frame = Frame::rgb(sc.width, sc.height, data)
        .expect("sized from scenario")
        .with_timing(t as u64, sc.timestamp_us(t));
    Ok((frame, truth))
}

/// Every frame and its truth, in order.
pub fn render_all(sc: &Scenario) -> Result<Vec<(Frame, Vec<TruthEntry>)>, SynthError> {
    sc.validate()?;
    (0..sc.frame_count).map(|t| render_frame(sc, t)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneFormat {
    /// Single `.y4m` file (4:2:0, lossy chroma).
    Y4m,
    /// Directory of `frame_NNNNNN.ppm` files, sample-exact.
    Ppm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScene {
    /// The `.y4m` file or the PPM directory.
    pub frames: PathBuf,
    pub truth: PathBuf,
    pub frame_count: u32,
}

/// Writes the scenario's frames and `truth.jsonl` under `out_dir`.
pub fn generate_scene(
    sc: &Scenario,
    out_dir: &Path,
    format: SceneFormat,
) -> Result<GeneratedScene, SynthError> {
    sc.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let truth_path = out_dir.join("truth.jsonl");
    let mut truth_out = BufWriter::new(File::create(&truth_path)?);
    let frames_path = match format {
        SceneFormat::Y4m => out_dir.join("scene.y4m"),
        SceneFormat::Ppm => out_dir.join("frames"),
    };
    let mut y4m = match format {
        SceneFormat::Y4m => Some(Y4mWriter::new(
            BufWriter::new(File::create(&frames_path)?),
            sc.width,
            sc.height,
            PixelFormat::Rgb,
            (sc.fps, 1),
        )?),
        SceneFormat::Ppm => {
            std::fs::create_dir_all(&frames_path)?;
            None
        }
    };
    for t in 0..sc.frame_count {
        let (frame, truth) = render_frame(sc, t)?;
        match &mut y4m {
            Some(w) => w.write_frame(&frame)?,
            None => std::fs::write(
                frames_path.join(format!("frame_{t:06}.ppm")),
                write_pnm(&frame),
            )?,
        }
        write_truth(&mut truth_out, &truth)?;
    }
    if let Some(w) = y4m {
        w.finish()?;
    }
    truth_out.flush()?;
    Ok(GeneratedScene {
        frames: frames_path,
        truth: truth_path,
        frame_count: sc.frame_count,
    })
}

pub fn write_truth<W: Write>(out: &mut W, entries: &[TruthEntry]) -> io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut *out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_truth<R: BufRead>(r: R) -> Result<Vec<TruthEntry>, SynthError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| SynthError::BadTruth {
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

pub fn read_truth_file(path: &Path) -> Result<Vec<TruthEntry>, SynthError> {
    read_truth(BufReader::new(File::open(path)?))
}

/// Buckets entries by frame; frames beyond the last entry are empty up to
/// `frame_count`.
pub fn truth_by_frame(entries: &[TruthEntry], frame_count: usize) -> Vec<Vec<TruthEntry>> {
    let n = entries
        .iter()
        .map(|e| e.seq as usize + 1)
        .max()
        .unwrap_or(0)
        .max(frame_count);
    let mut frames = vec![Vec::new(); n];
    for e in entries {
        frames[e.seq as usize].push(*e);
    }
    frames
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::to_grayscale;
    use crate::motion::frame_difference;

    fn still(objects: Vec<SceneObject>) -> Scenario {
        Scenario {
            width: 40,
            height: 30,
            frame_count: 10,
            seed: 3,
            fps: 30,
            background: Background {
                ripple_amplitude: 0.0,
                noise_sigma: 0.0,
                ..Background::default()
            },
            objects,
        }
    }

    fn rect(start: [f64; 2], velocity: [f64; 2]) -> SceneObject {
        SceneObject {
            shape: Shape::Rect,
            size: [6, 4],
            color: [250, 250, 250],
            start,
            velocity,
            enter_frame: 0,
            exit_frame: u32::MAX,
            label: Label::Vessel,
            alpha: 1.0,
        }
    }

    #[test]
    fn empty_scene_has_no_truth() {
        for t in 0..10 {
            assert!(render_frame(&still(vec![]), t).unwrap().1.is_empty());
        }
    }

    #[test]
    fn static_scene_is_fixed_point() {
        let sc = still(vec![rect([5.0, 5.0], [0.0, 0.0])]);
        let a = to_grayscale(&render_frame(&sc, 3).unwrap().0).unwrap();
        let b = to_grayscale(&render_frame(&sc, 4).unwrap().0).unwrap();
        assert_eq!(a.data(), b.data());
        assert!(frame_difference(&b, &a)
            .unwrap()
            .values
            .iter()
            .all(|&d| d == 0));
    }

    #[test]
    fn truth_advances_with_velocity() {
        let sc = still(vec![rect([1.0, 3.0], [2.0, 0.0])]);
        let xs: Vec<u32> = (0..8)
            .map(|t| render_frame(&sc, t).unwrap().1[0].bbox.x)
            .collect();
        assert_eq!(xs, vec![1, 3, 5, 7, 9, 11, 13, 15]);
    }

    #[test]
    fn clipping_and_lifetime() {
        let mut o = rect([-3.0, -1.0], [0.0, 0.0]);
        o.exit_frame = 5;
        let sc = still(vec![o, rect([100.0, 0.0], [0.0, 0.0])]);
        let (_, truth) = render_frame(&sc, 0).unwrap();
        assert_eq!(truth.len(), 1);
        assert_eq!(truth[0].bbox, BoundingBox::new(0, 0, 3, 3).unwrap());
        assert!(render_frame(&sc, 5).unwrap().1.is_empty());
    }

    #[test]
    fn ellipse_truth_is_pixel_extent() {
        let mut o = rect([10.0, 8.0], [0.0, 0.0]);
        o.shape = Shape::Ellipse;
        o.size = [9, 7];
        let sc = still(vec![o]);
        let (frame, truth) = render_frame(&sc, 0).unwrap();
        let lit: Vec<(u32, u32)> = (0..30)
            .flat_map(|y| (0..40).map(move |x| (x, y)))
            .filter(|&(x, y)| frame.pixel(x, y)[0] == 250)
            .collect();
        let x0 = lit.iter().map(|p| p.0).min().unwrap();
        let x1 = lit.iter().map(|p| p.0).max().unwrap();
        let y0 = lit.iter().map(|p| p.1).min().unwrap();
        let y1 = lit.iter().map(|p| p.1).max().unwrap();
        assert_eq!(truth[0].bbox, BoundingBox::from_extent(x0, y0, x1, y1));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let sc = standard_scenario();
        assert_eq!(render_frame(&sc, 7).unwrap(), render_frame(&sc, 7).unwrap());
        let other = Scenario {
            seed: sc.seed + 1,
            ..sc.clone()
        };
        assert_ne!(
            render_frame(&sc, 7).unwrap().0,
            render_frame(&other, 7).unwrap().0
        );
    }

    #[test]
    fn rejects_bad_scenarios() {
        let mut sc = still(vec![]);
        sc.frame_count = 0;
        assert!(matches!(
            render_frame(&sc, 0),
            Err(SynthError::BadScenario(_))
        ));
        let mut sc = still(vec![]);
        sc.width = 0;
        assert!(matches!(sc.validate(), Err(SynthError::BadScenario(_))));
        assert!(matches!(
            render_frame(&still(vec![]), 10),
            Err(SynthError::FrameOutOfRange { .. })
        ));
    }

    #[test]
    fn toml_round_trip() {
        let sc = standard_scenario();
        assert_eq!(Scenario::from_toml(&sc.to_toml()).unwrap(), sc);
        assert!(
            Scenario::from_toml("width = 1\nheight = 1\nframe_count = 1\nseed = 0\nbogus = 2")
                .is_err()
        );
    }

    #[test]
    fn truth_lines_round_trip() {
        let (_, truth) = render_frame(&standard_scenario(), 50).unwrap();
        assert_eq!(truth.len(), 3);
        let mut buf = Vec::new();
        write_truth(&mut buf, &truth).unwrap();
        let first = std::str::from_utf8(&buf)
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string();
        assert_eq!(
            first,
            r#"{"seq":50,"id":1,"label":"vessel","x":60,"y":60,"w":36,"h":18}"#
        );
        assert_eq!(read_truth(buf.as_slice()).unwrap(), truth);
    }
}
