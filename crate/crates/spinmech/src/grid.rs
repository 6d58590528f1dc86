//! Regular 2D scan grids with per-pixel validity masks.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid must be at least 2x2, got {0}x{1}")]
    TooSmall(usize, usize),
    #[error("data/mask length {got} does not match {nx}x{ny}")]
    LengthMismatch { got: usize, nx: usize, ny: usize },
    #[error("pixel pitch must be positive, got {0}")]
    BadPitch(f64),
}

/// Row-major 2D grid (y outer, x inner) with a uniform pixel pitch shared by
/// both axes. `mask[i] == false` marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    nx: usize,
    ny: usize,
    pitch_m: f64,
    data: Vec<T>,
    mask: Vec<bool>,
}

/// Per-pixel axial field or gradient map.
pub type FieldMap = Grid<f64>;

impl<T: Copy> Grid<T> {
    pub fn new(
        nx: usize,
        ny: usize,
        pitch_m: f64,
        data: Vec<T>,
        mask: Vec<bool>,
    ) -> Result<Self, GridError> {
        if nx < 2 || ny < 2 {
            return Err(GridError::TooSmall(nx, ny));
        }
        if !(pitch_m > 0.0) {
            return Err(GridError::BadPitch(pitch_m));
        }
        if data.len() != nx * ny {
            return Err(GridError::LengthMismatch { got: data.len(), nx, ny });
        }
        if mask.len() != nx * ny {
            return Err(GridError::LengthMismatch { got: mask.len(), nx, ny });
        }
        Ok(Self { nx, ny, pitch_m, data, mask })
    }

    /// All-valid grid filled by evaluating `f` at each pixel index.
    pub fn from_fn(nx: usize, ny: usize, pitch_m: f64, mut f: impl FnMut(usize, usize) -> T) -> Result<Self, GridError> {
        let mut data = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                data.push(f(ix, iy));
            }
        }
        Grid::new(nx, ny, pitch_m, data, vec![true; nx * ny])
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn pitch_m(&self) -> f64 {
        self.pitch_m
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn idx(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.nx && iy < self.ny);
        iy * self.nx + ix
    }

    /// World (x, y) position of a pixel center, meters.
    pub fn pos_m(&self, ix: usize, iy: usize) -> (f64, f64) {
        (ix as f64 * self.pitch_m, iy as f64 * self.pitch_m)
    }

    pub fn value(&self, ix: usize, iy: usize) -> T {
        self.data[self.idx(ix, iy)]
    }

    pub fn is_valid(&self, ix: usize, iy: usize) -> bool {
        self.mask[self.idx(ix, iy)]
    }

    pub fn set(&mut self, ix: usize, iy: usize, value: T, valid: bool) {
        let i = self.idx(ix, iy);
        self.data[i] = value;
        self.mask[i] = valid;
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&v| v).count()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Row-major iteration over `(ix, iy, value, valid)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T, bool)> + '_ {
        let nx = self.nx;
        self.data
            .iter()
            .zip(&self.mask)
            .enumerate()
            .map(move |(i, (&v, &m))| (i % nx, i / nx, v, m))
    }

    /// Valid 8-neighborhood values of a pixel.
    pub fn valid_neighbors(&self, ix: usize, iy: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(8);
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let jx = ix as i64 + dx;
                let jy = iy as i64 + dy;
                if jx >= 0 && jy >= 0 && (jx as usize) < self.nx && (jy as usize) < self.ny {
                    let j = self.idx(jx as usize, jy as usize);
                    if self.mask[j] {
                        out.push(self.data[j]);
                    }
                }
            }
        }
        out
    }

    /// Same geometry, new payload type; validity is preserved.
    pub fn map_values<U: Copy>(&self, mut f: impl FnMut(T) -> U) -> Grid<U> {
        Grid {
            nx: self.nx,
            ny: self.ny,
            pitch_m: self.pitch_m,
            data: self.data.iter().map(|&v| f(v)).collect(),
            mask: self.mask.clone(),
        }
    }
}
