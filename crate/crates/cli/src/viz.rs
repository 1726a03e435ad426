//! Keep/drop overlays: dropped patches are dimmed, kept patches get an
//! outline along every edge they share with a dropped patch.

use evstu_core::{PatchLayout, TokenMask};
use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{CliError, CliResult};

pub const DEFAULT_DIM: f32 = 0.25;

const OUTLINE_GRAY: [u8; 1] = [255];
const OUTLINE_RGB: [u8; 3] = [0, 255, 0];

#[derive(Debug, Clone, Copy)]
pub struct OverlayStyle {
    pub dim: f32,
    pub outline: bool,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            outline: true,
        }
    }
}

/// Overlay for 8-bit gray or RGB images; anything else is converted to RGB.
pub fn render(
    image: &DynamicImage,
    layout: &PatchLayout,
    mask: &TokenMask,
    style: OverlayStyle,
) -> CliResult<DynamicImage> {
    if (image.width() as usize, image.height() as usize) != (layout.width, layout.height) {
        return Err(CliError::input(format!(
            "image is {}x{}, manifest expects {}x{}",
            image.width(),
            image.height(),
            layout.width,
            layout.height
        )));
    }
    if mask.keep.len() != layout.tokens() {
        return Err(CliError::input(format!(
            "mask for frame {} has {} tokens, grid has {}",
            mask.frame_index,
            mask.keep.len(),
            layout.tokens()
        )));
    }
    Ok(match image {
        DynamicImage::ImageLuma8(gray) => {
            let mut raw = gray.as_raw().clone();
            paint(&mut raw, 1, &OUTLINE_GRAY, layout, &mask.keep, style);
            DynamicImage::ImageLuma8(GrayImage::from_raw(gray.width(), gray.height(), raw).expect("same size"))
        }
        other => {
            let rgb = other.to_rgb8();
            let mut raw = rgb.as_raw().clone();
            paint(&mut raw, 3, &OUTLINE_RGB, layout, &mask.keep, style);
            DynamicImage::ImageRgb8(RgbImage::from_raw(rgb.width(), rgb.height(), raw).expect("same size"))
        }
    })
}

fn paint(raw: &mut [u8], channels: usize, outline: &[u8], layout: &PatchLayout, keep: &[bool], style: OverlayStyle) {
    let (w, h) = (layout.width, layout.height);
    let kept = |x: usize, y: usize| keep[layout.token_at(x, y)];
    for y in 0..h {
        for x in 0..w {
            let px = &mut raw[(y * w + x) * channels..][..channels];
            if !kept(x, y) {
                for v in px.iter_mut() {
                    *v = (f32::from(*v) * style.dim).round().clamp(0.0, 255.0) as u8;
                }
                continue;
            }
            if style.outline {
                let borders_dropped = (x > 0 && !kept(x - 1, y))
                    || (x + 1 < w && !kept(x + 1, y))
                    || (y > 0 && !kept(x, y - 1))
                    || (y + 1 < h && !kept(x, y + 1));
                if borders_dropped {
                    px.copy_from_slice(outline);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: u32, h: u32) -> DynamicImage {
        DynamicImage::ImageLuma8(GrayImage::from_fn(w, h, |x, y| {
            image::Luma([(x * 10 + y * 3 + 40) as u8])
        }))
    }

    fn mask(bits: &str) -> TokenMask {
        TokenMask::from_bit_string(0, bits).unwrap()
    }

    #[test]
    fn all_kept_is_identity() {
        let img = gray(8, 6);
        let layout = PatchLayout::new(8, 6, 2, 2).unwrap();
        let out = render(&img, &layout, &mask("1111"), OverlayStyle::default()).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn single_kept_quadrant() {
        let img = gray(8, 8);
        let layout = PatchLayout::new(8, 8, 2, 2).unwrap();
        let plain = OverlayStyle {
            outline: false,
            ..Default::default()
        };
        let out = render(&img, &layout, &mask("1000"), plain).unwrap().to_luma8();
        let src = img.to_luma8();
        for (x, y, p) in out.enumerate_pixels() {
            let v = src.get_pixel(x, y)[0];
            let want = if x < 4 && y < 4 {
                v
            } else {
                (f32::from(v) * 0.25).round() as u8
            };
            assert_eq!(p[0], want, "({x}, {y})");
        }

        let outlined = render(&img, &layout, &mask("1000"), OverlayStyle::default())
            .unwrap()
            .to_luma8();
        // Right column and bottom row of the kept quadrant face dropped patches.
        assert_eq!(outlined.get_pixel(3, 0)[0], 255);
        assert_eq!(outlined.get_pixel(0, 3)[0], 255);
        assert_eq!(outlined.get_pixel(0, 0)[0], src.get_pixel(0, 0)[0]);
        assert_eq!(outlined.get_pixel(2, 2)[0], src.get_pixel(2, 2)[0]);
    }

    #[test]
    fn rgb_outline_is_green() {
        let img = DynamicImage::ImageRgb8(RgbImage::from_pixel(4, 2, image::Rgb([100, 50, 10])));
        let layout = PatchLayout::new(4, 2, 1, 2).unwrap();
        let out = render(&img, &layout, &mask("10"), OverlayStyle::default())
            .unwrap()
            .to_rgb8();
        assert_eq!(out.get_pixel(0, 0).0, [100, 50, 10]);
        assert_eq!(out.get_pixel(1, 0).0, [0, 255, 0]);
        assert_eq!(out.get_pixel(2, 1).0, [25, 13, 3]);
    }

    #[test]
    fn size_mismatch_is_input_error() {
        let layout = PatchLayout::new(8, 8, 2, 2).unwrap();
        let err = render(&gray(8, 6), &layout, &mask("1111"), OverlayStyle::default()).unwrap_err();
        assert_eq!(err.exit, crate::error::Exit::Input);
    }
}
