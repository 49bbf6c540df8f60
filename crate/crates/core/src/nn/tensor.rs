use crate::dataset::LabeledImage;
use crate::error::{Error, Result};

/// Batch of feature maps in `N × H × W × C` order. Vectors are stored as `N × 1 × 1 × F`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::invalid(format!(
                "tensor of shape {shape:?} cannot hold {} values",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor { shape, data: vec![0.0; shape.iter().product()] }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new([rows, 1, 1, cols], data)
    }

    pub fn from_images<'a>(images: impl IntoIterator<Item = &'a LabeledImage>) -> Result<Self> {
        let mut data = Vec::new();
        let mut shape: Option<(usize, usize, usize)> = None;
        let mut n = 0;
        for img in images {
            let s = img.pixels.shape();
            match shape {
                None => shape = Some(s),
                Some(prev) if prev != s => {
                    return Err(Error::invalid(format!("batch mixes shapes {prev:?} and {s:?}")))
                }
                _ => {}
            }
            data.extend_from_slice(img.pixels.data());
            n += 1;
        }
        let (h, w, c) = shape.ok_or(Error::NoSamples)?;
        Ok(Tensor { shape: [n, h, w, c], data })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Elements per batch item.
    pub fn item_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn channels(&self) -> usize {
        self.shape[3]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn item(&self, n: usize) -> &[f64] {
        let len = self.item_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn row(&self, n: usize) -> &[f64] {
        self.item(n)
    }

    #[inline]
    pub fn at(&self, n: usize, y: usize, x: usize, c: usize) -> f64 {
        let [_, h, w, ch] = self.shape;
        self.data[((n * h + y) * w + x) * ch + c]
    }

    pub fn select(&self, indices: &[usize]) -> Tensor {
        let len = self.item_len();
        let mut data = Vec::with_capacity(indices.len() * len);
        for &i in indices {
            data.extend_from_slice(self.item(i));
        }
        Tensor { shape: [indices.len(), self.shape[1], self.shape[2], self.shape[3]], data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
