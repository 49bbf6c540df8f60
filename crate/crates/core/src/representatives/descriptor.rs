use crate::dataset::LabeledImage;
use crate::image::Image;

pub const LBP_BINS: usize = 59;
pub const ORIENTATION_BINS: usize = 16;
pub const DESCRIPTOR_LEN: usize = LBP_BINS + ORIENTATION_BINS;

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorVector {
    pub values: Vec<f64>,
    pub source_id: String,
}

impl DescriptorVector {
    pub fn lbp(&self) -> &[f64] {
        &self.values[..LBP_BINS]
    }

    pub fn orientation(&self) -> &[f64] {
        &self.values[LBP_BINS..]
    }
}

/// Maps each 8-bit code to its uniform-pattern bin (58 uniform codes in increasing
/// order), with every non-uniform code in the last bin.
fn uniform_table() -> [u8; 256] {
    let mut table = [0u8; 256];
    let mut next = 0u8;
    for code in 0..256u32 {
        let rotated = (code >> 1) | ((code & 1) << 7);
        if (code ^ rotated).count_ones() <= 2 {
            table[code as usize] = next;
            next += 1;
        } else {
            table[code as usize] = (LBP_BINS - 1) as u8;
        }
    }
    debug_assert_eq!(next as usize, LBP_BINS - 1);
    table
}

// clockwise from the top-left neighbour
const NEIGHBOURS: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1)];

fn lbp_histogram(img: &Image, ch: usize) -> Vec<f64> {
    let table = uniform_table();
    let mut hist = vec![0.0; LBP_BINS];
    let (h, w) = (img.height(), img.width());
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let centre = img.get(y, x, ch);
            let mut code = 0usize;
            for (bit, (dy, dx)) in NEIGHBOURS.iter().enumerate() {
                let v = img.get((y as isize + dy) as usize, (x as isize + dx) as usize, ch);
                if v > centre {
                    code |= 1 << bit;
                }
            }
            hist[table[code] as usize] += 1.0;
        }
    }
    let total: f64 = hist.iter().sum();
    hist.iter_mut().for_each(|v| *v /= total);
    hist
}

fn orientation_histogram(img: &Image, ch: usize) -> Vec<f64> {
    let mut hist = vec![0.0; ORIENTATION_BINS];
    let (h, w) = (img.height(), img.width());
    let bin_width = 180.0 / ORIENTATION_BINS as f64;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = img.get(y, x + 1, ch) - img.get(y, x - 1, ch);
            let gy = img.get(y + 1, x, ch) - img.get(y - 1, x, ch);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            if angle >= 180.0 {
                angle -= 180.0;
            }
            let bin = ((angle / bin_width) as usize).min(ORIENTATION_BINS - 1);
            hist[bin] += mag;
        }
    }
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        hist.iter_mut().for_each(|v| *v /= total);
    } else {
        hist.fill(1.0 / ORIENTATION_BINS as f64);
    }
    hist
}

/// 59-bin uniform LBP(8,1) histogram followed by a 16-bin magnitude-weighted gradient
/// orientation histogram over `[0°, 180°)`, each L1-normalized. Computed on the green
/// channel of colour images.
pub fn compute_descriptor(img: &LabeledImage) -> DescriptorVector {
    let ch = img.pixels.texture_channel();
    let mut values = lbp_histogram(&img.pixels, ch);
    values.extend(orientation_histogram(&img.pixels, ch));
    DescriptorVector { values, source_id: img.id.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(img: Image) -> LabeledImage {
        LabeledImage::new(img, 0, "t").unwrap()
    }

    #[test]
    fn uniform_table_has_58_uniform_codes() {
        let t = uniform_table();
        assert_eq!(t[0], 0);
        assert_eq!(t[255], 57);
        assert_eq!(t.iter().filter(|&&b| b == 58).count(), 256 - 58);
    }

    #[test]
    fn constant_image() {
        let d = compute_descriptor(&labeled(Image::from_fn(16, 16, 1, |_, _, _| 0.4)));
        assert_eq!(d.values.len(), DESCRIPTOR_LEN);
        assert_eq!(d.lbp()[0], 1.0);
        assert!(d.orientation().iter().all(|&v| v == 1.0 / 16.0));
    }

    #[test]
    fn vertical_step_edge_is_zero_degrees() {
        // intensity changes along x only; gx > 0, gy = 0
        let d = compute_descriptor(&labeled(Image::from_fn(16, 16, 1, |_, x, _| if x < 8 { 0.2 } else { 0.9 })));
        assert_eq!(d.orientation()[0], 1.0);
        assert!(d.orientation()[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn segments_sum_to_one_and_deterministic() {
        let img = Image::from_fn(20, 20, 3, |y, x, c| ((y * 3 + x * 7 + c) % 11) as f64 / 10.0);
        let a = compute_descriptor(&labeled(img.clone()));
        let b = compute_descriptor(&labeled(img));
        assert_eq!(a, b);
        assert!((a.lbp().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((a.orientation().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
