//! Sketch canonicalization: SVG or PNG/JPEG in, 1024-px-wide JPEG out.

use std::io::Cursor;
use std::sync::{Arc, OnceLock};

use image::{ImageFormat, RgbImage, RgbaImage};
use resvg::{tiny_skia, usvg};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::ContentDigest;

pub const CANONICAL_WIDTH_PX: u32 = 1024;
const JPEG_QUALITY: u8 = 90;
/// Upper bound on the canonical height, guarding against absurd aspect ratios.
const MAX_HEIGHT_PX: u32 = 16_384;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RasterError {
    #[error("sketch is empty")]
    EmptySketch,
    #[error("malformed SVG: {0}")]
    MalformedSvg(String),
    #[error("unsupported raster format: {0}")]
    UnsupportedRasterFormat(String),
    #[error("sketch has no drawable area")]
    ZeroAreaSketch,
    #[error("sketch aspect ratio is out of range ({0}x{1})")]
    AspectOutOfRange(u32, u32),
    #[error("JPEG encoding failed: {0}")]
    Encode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SketchFormat {
    Svg,
    Raster,
}

#[derive(Clone, PartialEq, Eq)]
pub struct SketchInput {
    pub format: SketchFormat,
    pub bytes: Vec<u8>,
    pub declared_width_px: Option<u32>,
    pub declared_height_px: Option<u32>,
}

impl std::fmt::Debug for SketchInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SketchInput")
            .field("format", &self.format)
            .field("len", &self.bytes.len())
            .field("declared_width_px", &self.declared_width_px)
            .field("declared_height_px", &self.declared_height_px)
            .finish()
    }
}

impl SketchInput {
    pub fn new(format: SketchFormat, bytes: Vec<u8>) -> Self {
        Self { format, bytes, declared_width_px: None, declared_height_px: None }
    }

    /// Guess the format from magic bytes: PNG and JPEG signatures are
    /// raster, everything else is treated as SVG.
    pub fn sniff(bytes: Vec<u8>) -> Self {
        let format = if bytes.starts_with(b"\x89PNG\r\n\x1a\n") || bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
            SketchFormat::Raster
        } else {
            SketchFormat::Svg
        };
        Self::new(format, bytes)
    }

    /// Format from an upload media type.
    pub fn from_media_type(media_type: &str, bytes: Vec<u8>) -> Result<Self, RasterError> {
        match media_type {
            "image/svg+xml" => Ok(Self::new(SketchFormat::Svg, bytes)),
            "image/png" | "image/jpeg" => Ok(Self::new(SketchFormat::Raster, bytes)),
            other => Err(RasterError::UnsupportedRasterFormat(other.to_string())),
        }
    }

    pub fn media_type(&self) -> &'static str {
        match self.format {
            SketchFormat::Svg => "image/svg+xml",
            SketchFormat::Raster if self.bytes.starts_with(b"\x89PNG") => "image/png",
            SketchFormat::Raster => "image/jpeg",
        }
    }

    fn declared_size(&self) -> Option<(f32, f32)> {
        match (self.declared_width_px, self.declared_height_px) {
            (Some(w), Some(h)) if w > 0 && h > 0 => Some((w as f32, h as f32)),
            _ => None,
        }
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct RasterSketch {
    /// JPEG encoding.
    pub bytes: Vec<u8>,
    pub width_px: u32,
    pub height_px: u32,
}

impl std::fmt::Debug for RasterSketch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RasterSketch({}x{}, {} bytes)", self.width_px, self.height_px, self.bytes.len())
    }
}

impl RasterSketch {
    pub fn digest(&self) -> ContentDigest {
        ContentDigest::of(&self.bytes)
    }
}

/// Canonical height for a source of the given size at 1024 px width.
pub fn canonical_height(src_width: f32, src_height: f32) -> Result<u32, RasterError> {
    if !(src_width > 0.0 && src_height > 0.0) {
        return Err(RasterError::ZeroAreaSketch);
    }
    let h = (CANONICAL_WIDTH_PX as f64 * src_height as f64 / src_width as f64).round();
    if h < 1.0 || h > MAX_HEIGHT_PX as f64 {
        return Err(RasterError::AspectOutOfRange(src_width as u32, src_height as u32));
    }
    Ok(h as u32)
}

pub fn rasterize_sketch(input: &SketchInput) -> Result<RasterSketch, RasterError> {
    if input.bytes.is_empty() {
        return Err(RasterError::EmptySketch);
    }
    let rgb = match input.format {
        SketchFormat::Svg => render_svg(input)?,
        SketchFormat::Raster => normalize_raster(input)?,
    };
    encode_jpeg(&rgb)
}

/// Parse options with the host's fonts, loaded once, so sketch text labels
/// render. Output is stable for a given machine.
fn svg_options() -> &'static usvg::Options<'static> {
    static OPTIONS: OnceLock<usvg::Options<'static>> = OnceLock::new();
    OPTIONS.get_or_init(|| {
        let mut fonts = usvg::fontdb::Database::new();
        fonts.load_system_fonts();
        // Generic families default to names (Arial, Times New Roman, ...)
        // that many hosts lack; point them at installed faces instead.
        let families: Vec<String> =
            fonts.faces().filter_map(|f| f.families.first().map(|(name, _)| name.clone())).collect();
        let pick = |want: &str, avoid: &[&str]| {
            families
                .iter()
                .find(|f| f.contains(want) && !avoid.iter().any(|a| f.contains(a)))
                .or(families.first())
                .cloned()
        };
        if let Some(sans) = pick("Sans", &["Mono", "Serif"]) {
            fonts.set_sans_serif_family(sans);
        }
        if let Some(serif) = pick("Serif", &["Sans"]) {
            fonts.set_serif_family(serif);
        }
        if let Some(mono) = pick("Mono", &[]) {
            fonts.set_monospace_family(mono);
        }
        usvg::Options { fontdb: Arc::new(fonts), ..usvg::Options::default() }
    })
}

fn render_svg(input: &SketchInput) -> Result<RgbImage, RasterError> {
    let tree = usvg::Tree::from_data(&input.bytes, svg_options()).map_err(|e| match e {
        usvg::Error::InvalidSize => RasterError::ZeroAreaSketch,
        other => RasterError::MalformedSvg(other.to_string()),
    })?;
    if !tree.root().has_children() {
        return Err(RasterError::ZeroAreaSketch);
    }
    let (src_w, src_h) = input
        .declared_size()
        .unwrap_or((tree.size().width(), tree.size().height()));
    let height = canonical_height(src_w, src_h)?;
    let mut pixmap = tiny_skia::Pixmap::new(CANONICAL_WIDTH_PX, height).ok_or(RasterError::ZeroAreaSketch)?;
    pixmap.fill(tiny_skia::Color::WHITE);
    let transform = tiny_skia::Transform::from_scale(
        CANONICAL_WIDTH_PX as f32 / tree.size().width(),
        height as f32 / tree.size().height(),
    );
    resvg::render(&tree, transform, &mut pixmap.as_mut());
    // Opaque after the white fill, so premultiplied == straight RGB.
    let rgb = pixmap
        .data()
        .chunks_exact(4)
        .flat_map(|px| [px[0], px[1], px[2]])
        .collect();
    Ok(RgbImage::from_raw(CANONICAL_WIDTH_PX, height, rgb).expect("buffer matches dimensions"))
}

fn normalize_raster(input: &SketchInput) -> Result<RgbImage, RasterError> {
    let format = image::guess_format(&input.bytes)
        .map_err(|_| RasterError::UnsupportedRasterFormat("unrecognized image data".into()))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(RasterError::UnsupportedRasterFormat(format!("{format:?}")));
    }
    let decoded = image::load_from_memory_with_format(&input.bytes, format)
        .map_err(|e| RasterError::UnsupportedRasterFormat(e.to_string()))?;
    if decoded.width() == 0 || decoded.height() == 0 {
        return Err(RasterError::ZeroAreaSketch);
    }
    let flat = flatten_on_white(&decoded.to_rgba8());
    let (src_w, src_h) = input
        .declared_size()
        .unwrap_or((flat.width() as f32, flat.height() as f32));
    let height = canonical_height(src_w, src_h)?;
    if flat.width() == CANONICAL_WIDTH_PX && flat.height() == height {
        return Ok(flat);
    }
    Ok(image::imageops::resize(&flat, CANONICAL_WIDTH_PX, height, image::imageops::FilterType::Triangle))
}

fn flatten_on_white(rgba: &RgbaImage) -> RgbImage {
    RgbImage::from_fn(rgba.width(), rgba.height(), |x, y| {
        let [r, g, b, a] = rgba.get_pixel(x, y).0;
        let blend = |c: u8| ((c as u32 * a as u32 + 255 * (255 - a as u32) + 127) / 255) as u8;
        image::Rgb([blend(r), blend(g), blend(b)])
    })
}

fn encode_jpeg(rgb: &RgbImage) -> Result<RasterSketch, RasterError> {
    let mut out = Cursor::new(Vec::new());
    image::codecs::jpeg::JpegEncoder::new_with_quality(&mut out, JPEG_QUALITY)
        .encode_image(rgb)
        .map_err(|e| RasterError::Encode(e.to_string()))?;
    Ok(RasterSketch { bytes: out.into_inner(), width_px: rgb.width(), height_px: rgb.height() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn svg(body: &str, w: u32, h: u32) -> SketchInput {
        SketchInput::new(
            SketchFormat::Svg,
            format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">{body}</svg>"#).into_bytes(),
        )
    }

    fn decode(r: &RasterSketch) -> RgbImage {
        image::load_from_memory_with_format(&r.bytes, ImageFormat::Jpeg).unwrap().to_rgb8()
    }

    fn dark(px: &image::Rgb<u8>) -> bool {
        px.0.iter().map(|&c| c as u32).sum::<u32>() < 3 * 128
    }

    #[test]
    fn single_rectangle_scales_to_canonical_width() {
        let out = rasterize_sketch(&svg(r##"<rect width="200" height="100" fill="#222"/>"##, 200, 100)).unwrap();
        assert_eq!((out.width_px, out.height_px), (1024, 512));
        let img = decode(&out);
        assert_eq!(img.dimensions(), (1024, 512));
        let coverage = img.pixels().filter(|p| dark(p)).count() as f64 / (1024.0 * 512.0);
        assert!(coverage > 0.99, "coverage {coverage}");
    }

    #[test]
    fn coverage_matches_geometry() {
        // A 200x100 rectangle centered on a 400x200 canvas maps to the pixel
        // box [256, 768) x [128, 384) of the 1024x512 output: a quarter.
        let out = rasterize_sketch(&svg(r##"<rect x="100" y="50" width="200" height="100" fill="#000"/>"##, 400, 200)).unwrap();
        let img = decode(&out);
        let mut mismatches = 0usize;
        for (x, y, px) in img.enumerate_pixels() {
            let inside = (256..768).contains(&x) && (128..384).contains(&y);
            let near_edge = [256i64, 768].iter().any(|e| (x as i64 - e).abs() <= 2)
                || [128i64, 384].iter().any(|e| (y as i64 - e).abs() <= 2);
            if !near_edge && inside != dark(px) {
                mismatches += 1;
            }
        }
        assert_eq!(mismatches, 0);
        let coverage = img.pixels().filter(|p| dark(p)).count() as f64 / (1024.0 * 512.0);
        assert!((coverage - 0.25).abs() < 0.01, "coverage {coverage}");
    }

    #[test]
    fn transparent_background_becomes_white() {
        let out = rasterize_sketch(&svg(r##"<line x1="0" y1="0" x2="10" y2="10" stroke="#000"/>"##, 100, 100)).unwrap();
        let img = decode(&out);
        assert!(img.get_pixel(1000, 10).0.iter().all(|&c| c > 240));
    }

    #[test]
    fn empty_svg_has_no_area() {
        assert_eq!(rasterize_sketch(&svg("", 200, 100)), Err(RasterError::ZeroAreaSketch));
        assert_eq!(
            rasterize_sketch(&svg(r#"<rect width="0" height="10"/>"#, 200, 100)),
            Err(RasterError::ZeroAreaSketch)
        );
    }

    #[test]
    fn malformed_svg_is_rejected() {
        let input = SketchInput::new(SketchFormat::Svg, b"<svg><rect></svg".to_vec());
        assert!(matches!(rasterize_sketch(&input), Err(RasterError::MalformedSvg(_))));
        let input = SketchInput::new(SketchFormat::Svg, b"not xml at all".to_vec());
        assert!(matches!(rasterize_sketch(&input), Err(RasterError::MalformedSvg(_))));
    }

    #[test]
    fn canonical_raster_is_a_fixed_point_of_dimensions() {
        let first = rasterize_sketch(&svg(r##"<rect width="40" height="30" fill="#555"/>"##, 1024, 768)).unwrap();
        assert_eq!((first.width_px, first.height_px), (1024, 768));
        let again = rasterize_sketch(&SketchInput::sniff(first.bytes.clone())).unwrap();
        assert_eq!((again.width_px, again.height_px), (1024, 768));
    }

    #[test]
    fn png_is_scaled_and_flattened() {
        let mut png = Vec::new();
        let img = RgbaImage::from_pixel(300, 150, image::Rgba([0, 0, 0, 0]));
        img.write_to(&mut Cursor::new(&mut png), ImageFormat::Png).unwrap();
        let out = rasterize_sketch(&SketchInput::sniff(png)).unwrap();
        assert_eq!((out.width_px, out.height_px), (1024, 512));
        assert!(decode(&out).pixels().all(|p| p.0.iter().all(|&c| c > 240)));
    }

    #[test]
    fn unsupported_raster_format() {
        let input = SketchInput::new(SketchFormat::Raster, b"GIF89a......".to_vec());
        assert!(matches!(rasterize_sketch(&input), Err(RasterError::UnsupportedRasterFormat(_))));
        assert!(SketchInput::from_media_type("image/gif", vec![1]).is_err());
    }

    #[test]
    fn deterministic() {
        let input = svg(r##"<circle cx="50" cy="50" r="30" fill="#0a0"/>"##, 120, 90);
        assert_eq!(rasterize_sketch(&input).unwrap().digest(), rasterize_sketch(&input).unwrap().digest());
    }

    #[test]
    fn declared_size_sets_aspect() {
        let mut input = svg(r##"<rect width="10" height="10" fill="#000"/>"##, 100, 100);
        input.declared_width_px = Some(400);
        input.declared_height_px = Some(100);
        let out = rasterize_sketch(&input).unwrap();
        assert_eq!((out.width_px, out.height_px), (1024, 256));
    }
}
