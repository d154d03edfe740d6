use num_complex::Complex64;

/// Dense complex matrix stored column by column (one OFDM symbol per column).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexGrid {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_columns(rows: usize, columns: impl IntoIterator<Item = Vec<Complex64>>) -> Self {
        let mut data = Vec::new();
        let mut cols = 0;
        for c in columns {
            assert_eq!(c.len(), rows, "column length mismatch");
            data.extend(c);
            cols += 1;
        }
        ComplexGrid { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for m in 0..cols {
            for k in 0..rows {
                data.push(f(k, m));
            }
        }
        ComplexGrid { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[col * self.rows + row]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: Complex64) {
        self.data[col * self.rows + row] = v;
    }

    #[inline]
    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut Complex64 {
        &mut self.data[col * self.rows + row]
    }

    pub fn column(&self, col: usize) -> &[Complex64] {
        &self.data[col * self.rows..(col + 1) * self.rows]
    }

    pub fn column_mut(&mut self, col: usize) -> &mut [Complex64] {
        &mut self.data[col * self.rows..(col + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[Complex64]> {
        self.data.chunks_exact(self.rows.max(1))
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// Columns `start..end` as a new grid.
    pub fn column_range(&self, start: usize, end: usize) -> ComplexGrid {
        ComplexGrid {
            rows: self.rows,
            cols: end - start,
            data: self.data[start * self.rows..end * self.rows].to_vec(),
        }
    }

    /// Largest element-wise distance to `other`, relative to the largest magnitude of `other`.
    pub fn max_relative_error(&self, other: &ComplexGrid) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let scale = other.data.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let err = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if scale == 0.0 {
            err
        } else {
            err / scale
        }
    }
}
