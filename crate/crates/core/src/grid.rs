use faer::{c64, Mat};

/// Grid shape used for `q` cells: square when `q` is a perfect square, a single row otherwise.
pub fn grid_shape(q: usize) -> (usize, usize) {
    let s = (q as f64).sqrt().round() as usize;
    if s * s == q {
        (s, s)
    } else {
        (1, q)
    }
}

/// One magnitude image per column of a `Q x N` coefficient matrix.
pub fn magnitude_images(coeffs: &Mat<c64>) -> Vec<Image> {
    let (rows, cols) = grid_shape(coeffs.nrows());
    (0..coeffs.ncols())
        .map(|n| {
            let data = (0..coeffs.nrows()).map(|i| coeffs[(i, n)].norm()).collect();
            Image::new(rows, cols, data)
        })
        .collect()
}

/// Real-valued image on the ROI grid, stored row-major from the top-left cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "image buffer size");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn square(side: usize, data: Vec<f64>) -> Self {
        Self::new(side, side, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Flat index of the largest pixel (first one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image::new(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }
}
