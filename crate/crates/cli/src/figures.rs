//! PNG rendering for recall grids, latent heatmaps and sweep curves. Every
//! file carries the config hash in a `config_hash` text chunk.

use std::io::BufWriter;
use std::path::Path;

use lshn::data::ImageGeometry;

use crate::CliError;

/// An 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Canvas {
    pub fn new(width: usize, height: usize, fill: [u8; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, c: [u8; 3]) {
        if x < self.width && y < self.height {
            self.pixels[y * self.width + x] = c;
        }
    }

    /// Bresenham line.
    pub fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: [u8; 3]) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            if x >= 0 && y >= 0 {
                self.set(x as usize, y as usize, c);
            }
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    pub fn save(&self, path: &Path, config_hash: &str) -> Result<(), CliError> {
        let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.add_text_chunk("config_hash".into(), config_hash.into())
            .map_err(|e| CliError::Png(e.to_string()))?;
        let mut w = enc.write_header().map_err(|e| CliError::Png(e.to_string()))?;
        let flat: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        w.write_image_data(&flat).map_err(|e| CliError::Png(e.to_string()))?;
        w.finish().map_err(|e| CliError::Png(e.to_string()))
    }
}

/// Reads back a PNG written by [`Canvas::save`] with its text chunks.
pub fn read_png(path: &Path) -> Result<(Canvas, Vec<(String, String)>), CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let dec = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = dec.read_info().map_err(|e| CliError::Png(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(|e| CliError::Png(e.to_string()))?;
    let text = reader
        .info()
        .uncompressed_latin1_text
        .iter()
        .map(|t| (t.keyword.clone(), t.text.clone()))
        .collect();
    let pixels = buf[..info.buffer_size()]
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    Ok((
        Canvas {
            width: info.width as usize,
            height: info.height as usize,
            pixels,
        },
        text,
    ))
}

pub const SEPARATOR: [u8; 3] = [255, 255, 0];

fn unit_to_byte(v: f64) -> u8 {
    (((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round()) as u8
}

/// Pixel color of a channel-major image at `(row, col)`.
fn image_color(img: &[f64], g: &ImageGeometry, row: usize, col: usize) -> [u8; 3] {
    let plane = g.height * g.width;
    let at = |c: usize| unit_to_byte(img[c * plane + row * g.width + col]);
    match g.channels {
        3 => [at(0), at(1), at(2)],
        _ => {
            let v = at(0);
            [v, v, v]
        }
    }
}

/// Tiles `cells[r][c]` into a grid with 1-pixel separators between cells.
pub fn image_grid(cells: &[Vec<Vec<f64>>], g: &ImageGeometry) -> Canvas {
    let rows = cells.len();
    let cols = cells.first().map_or(0, |r| r.len());
    let width = cols * g.width + cols.saturating_sub(1);
    let height = rows * g.height + rows.saturating_sub(1);
    let mut canvas = Canvas::new(width, height, SEPARATOR);
    for (r, row) in cells.iter().enumerate() {
        for (c, img) in row.iter().enumerate() {
            let (ox, oy) = (c * (g.width + 1), r * (g.height + 1));
            for y in 0..g.height {
                for x in 0..g.width {
                    canvas.set(ox + x, oy + y, image_color(img, g, y, x));
                }
            }
        }
    }
    canvas
}

pub const GRAY: [u8; 3] = [128, 128, 128];

/// Red above `+band`, blue below `-band`, gray in between. Saturation grows
/// with the deviation.
pub fn deviation_color(d: f64, band: f64) -> [u8; 3] {
    if d.abs() <= band {
        return GRAY;
    }
    let m = 0.35 + 0.65 * (d.abs() / 2.0).min(1.0);
    let hi = (128.0 + 127.0 * m).round() as u8;
    let lo = (128.0 * (1.0 - m)).round() as u8;
    if d > 0.0 {
        [hi, lo, lo]
    } else {
        [lo, lo, hi]
    }
}

/// One row per time step, one column per neuron.
pub fn heatmap(deviations: &[Vec<f64>], band: f64) -> Canvas {
    let height = deviations.len();
    let width = deviations.first().map_or(0, |r| r.len());
    let mut canvas = Canvas::new(width, height, GRAY);
    for (y, row) in deviations.iter().enumerate() {
        for (x, &d) in row.iter().enumerate() {
            canvas.set(x, y, deviation_color(d, band));
        }
    }
    canvas
}

/// Accuracy-versus-axis line plot on a fixed 320×240 frame with `y ∈ [0, 1]`.
pub fn line_plot(points: &[(f64, f64)]) -> Canvas {
    const W: usize = 320;
    const H: usize = 240;
    const M: i64 = 20;
    let mut c = Canvas::new(W, H, [255, 255, 255]);
    let black = [0, 0, 0];
    let (x0, y0, x1, y1) = (M, H as i64 - M, W as i64 - M, M);
    c.line((x0, y0), (x1, y0), black);
    c.line((x0, y0), (x0, y1), black);
    for k in 0..=4 {
        let y = y0 - (y0 - y1) * k / 4;
        c.line((x0 - 4, y), (x0, y), black);
    }
    if points.is_empty() {
        return c;
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let to_px = |(x, y): (f64, f64)| {
        let px = x0 as f64 + (x - lo) / span * (x1 - x0) as f64;
        let py = y0 as f64 - y.clamp(0.0, 1.0) * (y0 - y1) as f64;
        (px.round() as i64, py.round() as i64)
    };
    let blue = [31, 90, 200];
    for w in points.windows(2) {
        c.line(to_px(w[0]), to_px(w[1]), blue);
    }
    for &p in points {
        let (px, py) = to_px(p);
        for dy in -2..=2 {
            for dx in -2..=2 {
                if px + dx >= 0 && py + dy >= 0 {
                    c.set((px + dx) as usize, (py + dy) as usize, [200, 40, 40]);
                }
            }
        }
    }
    c
}
