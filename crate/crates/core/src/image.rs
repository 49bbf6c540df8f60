//! Dense floating-point images and the binary PGM/PPM codec.
//!
//! Pixels are stored row-major, channels interleaved (`H × W × C`), values in `[0, 1]`.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "image buffer has {} values, expected {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Image { height, width, channels, data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Image { height, width, channels, data: vec![0.0; height * width * channels] }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Image { height, width, channels, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Rec. 601 luma for colour images, the sole channel otherwise.
    pub fn luminance(&self, y: usize, x: usize) -> f64 {
        if self.channels == 3 {
            0.299 * self.get(y, x, 0) + 0.587 * self.get(y, x, 1) + 0.114 * self.get(y, x, 2)
        } else {
            self.get(y, x, 0)
        }
    }

    /// Green channel of RGB images, the sole channel of grayscale ones.
    pub fn texture_channel(&self) -> usize {
        if self.channels == 3 {
            1
        } else {
            0
        }
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Image {
        assert!(top + height <= self.height && left + width <= self.width);
        Image::from_fn(height, width, self.channels, |y, x, c| self.get(top + y, left + x, c))
    }

    /// Bilinear sample with zero outside the support.
    pub fn sample_zero_fill(&self, y: f64, x: f64, c: usize) -> f64 {
        let y0 = y.floor();
        let x0 = x.floor();
        let fy = y - y0;
        let fx = x - x0;
        let (y0, x0) = (y0 as i64, x0 as i64);
        let at = |yy: i64, xx: i64| -> f64 {
            if yy < 0 || xx < 0 || yy >= self.height as i64 || xx >= self.width as i64 {
                0.0
            } else {
                self.get(yy as usize, xx as usize, c)
            }
        };
        let top = if fx == 0.0 { at(y0, x0) } else { at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx };
        if fy == 0.0 {
            return top;
        }
        let bottom =
            if fx == 0.0 { at(y0 + 1, x0) } else { at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx };
        top * (1.0 - fy) + bottom * fy
    }

    /// Bilinear resize with corner-aligned sampling grids, so an equal-size resize is
    /// the identity and edge rows/columns are interpolated only along the edge.
    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> Image {
        let coords = |n_out: usize, n_in: usize| -> Vec<(usize, usize, f64)> {
            (0..n_out)
                .map(|i| {
                    let pos = if n_out == 1 || n_in == 1 {
                        0.0
                    } else {
                        i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
                    };
                    let lo = (pos.floor() as usize).min(n_in - 1);
                    let hi = (lo + 1).min(n_in - 1);
                    (lo, hi, pos - lo as f64)
                })
                .collect()
        };
        let ys = coords(out_h, self.height);
        let xs = coords(out_w, self.width);
        let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a * (1.0 - t) + b * t };
        Image::from_fn(out_h, out_w, self.channels, |y, x, c| {
            let (y0, y1, ty) = ys[y];
            let (x0, x1, tx) = xs[x];
            let top = lerp(self.get(y0, x0, c), self.get(y0, x1, c), tx);
            let bottom = lerp(self.get(y1, x0, c), self.get(y1, x1, c), tx);
            lerp(top, bottom, ty).clamp(0.0, 1.0)
        })
    }

    /// Rotate about the image centre by `degrees` (counter-clockwise), zero fill.
    pub fn rotate(&self, degrees: f64) -> Image {
        let (s, c) = degrees.to_radians().sin_cos();
        let cy = (self.height as f64 - 1.0) / 2.0;
        let cx = (self.width as f64 - 1.0) / 2.0;
        Image::from_fn(self.height, self.width, self.channels, |y, x, ch| {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            // inverse map: destination to source
            let sx = c * dx - s * dy + cx;
            let sy = s * dx + c * dy + cy;
            self.sample_zero_fill(sy, sx, ch).clamp(0.0, 1.0)
        })
    }
}

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "pgm" | "ppm" | "pnm" => decode_pnm(&bytes)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display()))),
        #[cfg(feature = "png")]
        "png" => decode_png(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display()))),
        _ => Err(Error::Format(format!("{}: unsupported image format", path.display()))),
    }
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    std::fs::write(path, encode_pnm(img)).map_err(|e| Error::io(path, e))
}

/// Binary P5/P6 with maxval 255.
pub fn encode_pnm(img: &Image) -> Vec<u8> {
    let magic = match img.channels {
        1 => "P5",
        3 => "P6",
        n => panic!("PNM supports 1 or 3 channels, got {n}"),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn decode_pnm(bytes: &[u8]) -> std::result::Result<Image, String> {
    let mut pos = 0usize;
    let mut next_token = || -> std::result::Result<String, String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let channels = match next_token()?.as_str() {
        "P5" => 1,
        "P6" => 3,
        m => return Err(format!("unsupported PNM magic {m:?}")),
    };
    let parse = |t: String| t.parse::<usize>().map_err(|_| format!("bad header field {t:?}"));
    let width = parse(next_token()?)?;
    let height = parse(next_token()?)?;
    let maxval = parse(next_token()?)?;
    if maxval != 255 {
        return Err(format!("maxval {maxval} unsupported (expected 255)"));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let n = width * height * channels;
    if bytes.len() < start + n {
        return Err("truncated raster".into());
    }
    let data = bytes[start..start + n].iter().map(|&b| b as f64 / 255.0).collect();
    Ok(Image { height, width, channels, data })
}

#[cfg(feature = "png")]
fn decode_png(bytes: &[u8]) -> std::result::Result<Image, String> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or("png too large")?];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err("only 8-bit PNG supported".into());
    }
    let (channels, src_ch) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (1, 2),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (3, 4),
        other => return Err(format!("unsupported PNG colour type {other:?}")),
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut data = Vec::with_capacity(w * h * channels);
    for px in buf[..info.buffer_size()].chunks_exact(src_ch) {
        data.extend(px[..channels].iter().map(|&b| b as f64 / 255.0));
    }
    Ok(Image { height: h, width: w, channels, data })
}
