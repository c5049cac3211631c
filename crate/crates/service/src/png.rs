//! PNG encoding for label maps, renders, masks and class maps.

use std::io::Cursor;
use std::path::Path;

use image::{ImageBuffer, ImageFormat, Luma, Rgb};
use semsplat::{ClassMap, FeatureMap, LabelMap, Mask, SceneError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PngError {
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("label maps must be 16-bit grayscale, found {0:?}")]
    ColorType(image::ColorType),
    #[error(transparent)]
    Map(#[from] SceneError),
}

fn encode<P: image::Pixel<Subpixel = S> + image::PixelWithColorType, S: image::Primitive>(
    img: &ImageBuffer<P, Vec<S>>,
) -> Vec<u8>
where
    [S]: image::EncodableLayout,
{
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("in-memory png encode");
    out.into_inner()
}

/// 16-bit grayscale, pixel value = label.
pub fn encode_labels(map: &LabelMap) -> Vec<u8> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(map.width, map.height, map.labels.clone()).expect("label map shape");
    encode(&img)
}

pub fn decode_labels(bytes: &[u8]) -> Result<LabelMap, PngError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    match img {
        image::DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            Ok(LabelMap::new(w, h, buf.into_raw())?)
        }
        other => Err(PngError::ColorType(other.color())),
    }
}

pub fn write_labels(path: &Path, map: &LabelMap) -> Result<(), PngError> {
    std::fs::write(path, encode_labels(map)).map_err(image::ImageError::IoError)?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<LabelMap, PngError> {
    decode_labels(&std::fs::read(path).map_err(image::ImageError::IoError)?)
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// 8-bit RGB of a rendered color map.
pub fn encode_rgb(map: &FeatureMap) -> Vec<u8> {
    let raw: Vec<u8> = map.values.iter().flat_map(|p| p.map(to_u8)).collect();
    let img: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_raw(map.width, map.height, raw).expect("rgb shape");
    encode(&img)
}

/// 8-bit grayscale, 255 inside the mask.
pub fn encode_mask(mask: &Mask) -> Vec<u8> {
    let raw = mask.values.iter().map(|&v| if v { 255 } else { 0 }).collect();
    let img: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(mask.width, mask.height, raw).expect("mask shape");
    encode(&img)
}

/// Class indices as grayscale: 8-bit when they fit, 16-bit otherwise.
pub fn encode_classes(map: &ClassMap) -> Vec<u8> {
    if map.classes.iter().all(|&c| c <= 255) {
        let raw = map.classes.iter().map(|&c| c as u8).collect();
        let img: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(map.width, map.height, raw).expect("class shape");
        encode(&img)
    } else {
        let img: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(map.width, map.height, map.classes.clone()).expect("class shape");
        encode(&img)
    }
}
