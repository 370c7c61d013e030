use super::GeometryError;

/// Binary `height x width` occupancy grid, one bit per pixel, row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PixelMask {
    height: usize,
    width: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for PixelMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PixelMask")
            .field("height", &self.height)
            .field("width", &self.width)
            .field("count", &self.count())
            .finish()
    }
}

impl PixelMask {
    pub fn new(height: usize, width: usize) -> Result<Self, GeometryError> {
        if height == 0 || width == 0 {
            return Err(GeometryError::EmptyGrid { height, width });
        }
        Ok(Self {
            height,
            width,
            words: vec![0; (height * width).div_ceil(64)],
        })
    }

    /// An empty mask with the same dimensions as `self`.
    pub fn empty_like(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            words: vec![0; self.words.len()],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self, GeometryError> {
        let mut m = Self::new(height, width)?;
        for row in 0..height {
            for col in 0..width {
                if f(row, col) {
                    m.set(row, col, true);
                }
            }
        }
        Ok(m)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.height && col < self.width);
        let i = row * self.width + col;
        (self.words[i >> 6] >> (i & 63)) & 1 == 1
    }

    /// Bounds-checked lookup with signed indices; out-of-grid is unset.
    #[inline]
    pub fn get_signed(&self, row: i64, col: i64) -> bool {
        row >= 0
            && col >= 0
            && (row as usize) < self.height
            && (col as usize) < self.width
            && self.get(row as usize, col as usize)
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        debug_assert!(row < self.height && col < self.width);
        let i = row * self.width + col;
        if value {
            self.words[i >> 6] |= 1 << (i & 63);
        } else {
            self.words[i >> 6] &= !(1 << (i & 63));
        }
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Row-major iterator over set pixels as `(row, col)`.
    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let width = self.width;
        self.words.iter().enumerate().flat_map(move |(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                let i = (wi << 6) | bit;
                Some((i / width, i % width))
            })
        })
    }

    fn check_dims(&self, other: &Self) -> Result<(), GeometryError> {
        if self.dims() != other.dims() {
            return Err(GeometryError::DimensionMismatch(
                self.height,
                self.width,
                other.height,
                other.width,
            ));
        }
        Ok(())
    }

    pub fn intersection(&self, other: &Self) -> Result<Self, GeometryError> {
        self.check_dims(other)?;
        Ok(self.zip_words(other, |a, b| a & b))
    }

    pub fn union(&self, other: &Self) -> Result<Self, GeometryError> {
        self.check_dims(other)?;
        Ok(self.zip_words(other, |a, b| a | b))
    }

    pub fn union_in_place(&mut self, other: &Self) -> Result<(), GeometryError> {
        self.check_dims(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= *b;
        }
        Ok(())
    }

    /// `true` iff every pixel set in `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Self) -> Result<bool, GeometryError> {
        self.check_dims(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0))
    }

    pub fn intersection_count(&self, other: &Self) -> Result<usize, GeometryError> {
        self.check_dims(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum())
    }

    fn zip_words(&self, other: &Self, f: impl Fn(u64, u64) -> u64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Chebyshev dilation by `radius` pixels (square structuring element).
    pub fn dilate(&self, radius: usize) -> Self {
        let mut out = self.empty_like();
        let (h, w) = self.dims();
        for (row, col) in self.iter_set() {
            let r0 = row.saturating_sub(radius);
            let r1 = (row + radius + 1).min(h);
            let c0 = col.saturating_sub(radius);
            let c1 = (col + radius + 1).min(w);
            for r in r0..r1 {
                for c in c0..c1 {
                    out.set(r, c, true);
                }
            }
        }
        out
    }

    /// Packed words, least significant bit first; the tail past `height * width` is zero.
    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

/// Intersection over union of two equally sized masks; 0 when both are empty.
pub fn mask_iou(a: &PixelMask, b: &PixelMask) -> Result<f64, GeometryError> {
    a.check_dims(b)?;
    let mut inter = 0usize;
    let mut uni = 0usize;
    for (x, y) in a.words.iter().zip(&b.words) {
        inter += (x & y).count_ones() as usize;
        uni += (x | y).count_ones() as usize;
    }
    if uni == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / uni as f64)
}
