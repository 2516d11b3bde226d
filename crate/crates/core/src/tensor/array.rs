//! Dense row-major n-dimensional array, the plain (non-differentiated)
//! counterpart of a graph tensor. Images, attribution grids, and predictor
//! weights are all `Array`s.

use crate::scalar::Scalar;

/// Dense array with row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Array<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Array<T> {
    /// Builds an array from a shape and matching data buffer.
    ///
    /// Panics if `product(shape) != data.len()`; callers construct arrays
    /// from sizes they computed themselves.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(numel, data.len(), "array shape {shape:?} needs {numel} elements, got {}", data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self { shape, data: vec![T::zero(); numel] }
    }

    pub fn filled(shape: Vec<usize>, value: T) -> Self {
        let numel = shape.iter().product();
        Self { shape, data: vec![value; numel] }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> T) -> Self {
        let numel: usize = shape.iter().product();
        Self { shape, data: (0..numel).map(|i| f(i)).collect() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Flat index of `(row, col)` in a 2-d array.
    pub fn idx2(&self, r: usize, c: usize) -> usize {
        debug_assert_eq!(self.shape.len(), 2);
        r * self.shape[1] + c
    }

    /// Flat index of `(channel, row, col)` in a 3-d array.
    pub fn idx3(&self, ch: usize, r: usize, c: usize) -> usize {
        debug_assert_eq!(self.shape.len(), 3);
        (ch * self.shape[1] + r) * self.shape[2] + c
    }

    pub fn at2(&self, r: usize, c: usize) -> T {
        self.data[self.idx2(r, c)]
    }

    pub fn at3(&self, ch: usize, r: usize, c: usize) -> T {
        self.data[self.idx3(ch, r, c)]
    }

    pub fn set2(&mut self, r: usize, c: usize, v: T) {
        let i = self.idx2(r, c);
        self.data[i] = v;
    }

    pub fn set3(&mut self, ch: usize, r: usize, c: usize, v: T) {
        let i = self.idx3(ch, r, c);
        self.data[i] = v;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        if self.data.is_empty() {
            T::zero()
        } else {
            self.sum() / T::of_usize(self.numel())
        }
    }

    /// Index of the first maximal element in row-major order.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }
}

/// First index of the maximal element of a slice (row-major tie-break).
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_row_major() {
        let a = Array::new(vec![2, 3], (0..6).map(|i| i as f64).collect());
        assert_eq!(a.at2(1, 2), 5.0);
        let b = Array::new(vec![2, 2, 2], (0..8).map(|i| i as f64).collect());
        assert_eq!(b.at3(1, 0, 1), 5.0);
    }

    #[test]
    fn argmax_breaks_ties_on_first() {
        assert_eq!(argmax(&[1.0, 5.0, 5.0, 2.0]), 1);
        assert_eq!(Array::new(vec![2, 2], vec![3.0, 3.0, 1.0, 0.0]).argmax(), 0);
    }

    #[test]
    #[should_panic]
    fn shape_must_match_data() {
        let _ = Array::new(vec![2, 2], vec![1.0f64; 3]);
    }
}
