//! Binary scene file.
//!
//! ```text
//! magic        b"SLGS"
//! version      u32
//! flags        u32            bit 0: gaussians are pixel-aligned
//! view_count   u32
//! views        view_count × { width u32, height u32, fx fy cx cy f64, world_to_camera 16 × f64 }
//! name         u32 length + UTF-8 bytes
//! seed         u64
//! count        u64
//! gaussians    count × 17 × f32 { mean 3, scale 3, quat 4, opacity 1, rgb 3, feature 3 }
//! ```
//!
//! All integers and floats are little-endian. Pixel-aligned Gaussians are
//! ordered view-major, then row-major within each view.

use std::io::{self, Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use semsplat::{validate_scene, PinholeCamera, SceneError, SemanticGaussian};
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"SLGS";
pub const VERSION: u32 = 1;
pub const RECORD_FLOATS: usize = 17;
const FLAG_PIXEL_ALIGNED: u32 = 1;
const VIEW_HEADER_BYTES: usize = 8 + 4 * 8 + 16 * 8;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}, expected \"SLGS\"")]
    Magic([u8; 4]),
    #[error("unsupported version {found}, expected {VERSION}")]
    Version { found: u32 },
    #[error("file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("{0} trailing bytes after last record")]
    Trailing(usize),
    #[error("unknown flags {0:#x}")]
    Flags(u32),
    #[error("scene name is not UTF-8")]
    Name,
    #[error("pixel-aligned scene has {actual} gaussians, views need {expected}")]
    PixelCount { expected: u64, actual: u64 },
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Everything stored in a scene file.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFile {
    pub name: String,
    pub seed: u64,
    pub cameras: Vec<PinholeCamera>,
    pub pixel_aligned: bool,
    pub gaussians: Vec<SemanticGaussian>,
}

impl SceneFile {
    pub fn pixel_total(&self) -> u64 {
        self.cameras.iter().map(|c| c.width as u64 * c.height as u64).sum()
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        for cam in &self.cameras {
            cam.check()?;
        }
        if self.pixel_aligned && self.gaussians.len() as u64 != self.pixel_total() {
            return Err(FormatError::PixelCount {
                expected: self.pixel_total(),
                actual: self.gaussians.len() as u64,
            });
        }
        validate_scene(&self.gaussians)?;
        Ok(())
    }
}

pub fn encode_scene<W: Write>(scene: &SceneFile, mut w: W) -> Result<(), FormatError> {
    scene.validate()?;
    w.write_all(&MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_u32::<LE>(if scene.pixel_aligned { FLAG_PIXEL_ALIGNED } else { 0 })?;
    w.write_u32::<LE>(scene.cameras.len() as u32)?;
    for cam in &scene.cameras {
        w.write_u32::<LE>(cam.width)?;
        w.write_u32::<LE>(cam.height)?;
        for v in [cam.fx, cam.fy, cam.cx, cam.cy].iter().chain(&cam.world_to_camera) {
            w.write_f64::<LE>(*v)?;
        }
    }
    w.write_u32::<LE>(scene.name.len() as u32)?;
    w.write_all(scene.name.as_bytes())?;
    w.write_u64::<LE>(scene.seed)?;
    w.write_u64::<LE>(scene.gaussians.len() as u64)?;
    let mut buf = Vec::with_capacity(scene.gaussians.len() * RECORD_FLOATS * 4);
    for g in &scene.gaussians {
        for v in record(g) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn record(g: &SemanticGaussian) -> [f32; RECORD_FLOATS] {
    let mut r = [0.0; RECORD_FLOATS];
    r[0..3].copy_from_slice(&g.mean);
    r[3..6].copy_from_slice(&g.scale);
    r[6..10].copy_from_slice(&g.rotation);
    r[10] = g.opacity;
    r[11..14].copy_from_slice(&g.color);
    r[14..17].copy_from_slice(&g.feature);
    r
}

fn from_record(r: &[f32]) -> SemanticGaussian {
    SemanticGaussian {
        mean: [r[0], r[1], r[2]],
        scale: [r[3], r[4], r[5]],
        rotation: [r[6], r[7], r[8], r[9]],
        opacity: r[10],
        color: [r[11], r[12], r[13]],
        feature: [r[14], r[15], r[16]],
    }
}

/// Parses a complete scene file. Nothing is returned unless the whole
/// buffer is consumed and every invariant holds.
pub fn decode_scene(bytes: &[u8]) -> Result<SceneFile, FormatError> {
    let mut c = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    c.read_exact(&mut magic).map_err(|_| FormatError::Truncated("magic"))?;
    if magic != MAGIC {
        return Err(FormatError::Magic(magic));
    }
    let version = c.read_u32::<LE>().map_err(|_| FormatError::Truncated("version"))?;
    if version != VERSION {
        return Err(FormatError::Version { found: version });
    }
    let flags = c.read_u32::<LE>().map_err(|_| FormatError::Truncated("flags"))?;
    if flags & !FLAG_PIXEL_ALIGNED != 0 {
        return Err(FormatError::Flags(flags));
    }
    let views = c.read_u32::<LE>().map_err(|_| FormatError::Truncated("view count"))? as usize;
    if remaining(&c) < views.saturating_mul(VIEW_HEADER_BYTES) {
        return Err(FormatError::Truncated("view headers"));
    }
    let mut cameras = Vec::with_capacity(views);
    for _ in 0..views {
        let t = |_| FormatError::Truncated("view header");
        let width = c.read_u32::<LE>().map_err(t)?;
        let height = c.read_u32::<LE>().map_err(t)?;
        let mut f = [0.0f64; 20];
        c.read_f64_into::<LE>(&mut f).map_err(t)?;
        let mut pose = [0.0; 16];
        pose.copy_from_slice(&f[4..]);
        cameras.push(PinholeCamera::new(f[0], f[1], f[2], f[3], width, height, pose)?);
    }
    let name_len = c.read_u32::<LE>().map_err(|_| FormatError::Truncated("name length"))? as usize;
    if remaining(&c) < name_len {
        return Err(FormatError::Truncated("name"));
    }
    let mut name = vec![0u8; name_len];
    c.read_exact(&mut name)?;
    let name = String::from_utf8(name).map_err(|_| FormatError::Name)?;
    let seed = c.read_u64::<LE>().map_err(|_| FormatError::Truncated("seed"))?;
    let count = c.read_u64::<LE>().map_err(|_| FormatError::Truncated("gaussian count"))?;
    let need = count.checked_mul((RECORD_FLOATS * 4) as u64);
    let rest = remaining(&c) as u64;
    match need {
        Some(n) if n <= rest => {
            if n < rest {
                return Err(FormatError::Trailing((rest - n) as usize));
            }
        }
        _ => return Err(FormatError::Truncated("gaussian records")),
    }
    let mut floats = vec![0.0f32; count as usize * RECORD_FLOATS];
    c.read_f32_into::<LE>(&mut floats)?;
    let scene = SceneFile {
        name,
        seed,
        cameras,
        pixel_aligned: flags & FLAG_PIXEL_ALIGNED != 0,
        gaussians: floats.chunks_exact(RECORD_FLOATS).map(from_record).collect(),
    };
    scene.validate()?;
    Ok(scene)
}

fn remaining(c: &Cursor<&[u8]>) -> usize {
    c.get_ref().len() - c.position() as usize
}

pub fn write_scene(path: &Path, scene: &SceneFile) -> Result<(), FormatError> {
    let mut buf = Vec::new();
    encode_scene(scene, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_scene(path: &Path) -> Result<SceneFile, FormatError> {
    decode_scene(&std::fs::read(path)?)
}
