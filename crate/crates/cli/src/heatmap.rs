//! PNG rendering of saliency maps: one row of cells per map, one cell per
//! subtoken, white for zero through red for the maximum.

use std::path::Path;

use aspect_ctx::evaluator::SaliencyMap;
use aspect_ctx::{Error, Result};
use image::{Rgb, RgbImage};

const CELL: u32 = 16;
const GAP: u32 = 4;

fn shade(score: f64) -> Rgb<u8> {
    let s = score.clamp(0.0, 1.0);
    let fade = (255.0 * (1.0 - s)).round() as u8;
    Rgb([255, fade, fade])
}

pub fn render(maps: &[SaliencyMap]) -> Result<RgbImage> {
    let cols = maps.iter().map(SaliencyMap::len).max().unwrap_or(0) as u32;
    if maps.is_empty() || cols == 0 {
        return Err(Error::Argument("no saliency scores to draw".into()));
    }
    let rows = maps.len() as u32;
    let width = cols * CELL + 2 * GAP;
    let height = rows * (CELL + GAP) + GAP;
    let mut img = RgbImage::from_pixel(width, height, Rgb([235, 235, 235]));
    for (r, map) in maps.iter().enumerate() {
        let top = GAP + r as u32 * (CELL + GAP);
        for (c, &score) in map.scores.iter().enumerate() {
            let left = GAP + c as u32 * CELL;
            let color = shade(score);
            for y in top..top + CELL {
                for x in left..left + CELL - 1 {
                    img.put_pixel(x, y, color);
                }
            }
        }
    }
    Ok(img)
}

pub fn write_png(maps: &[SaliencyMap], path: &Path) -> Result<()> {
    render(maps)?
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        })
}
