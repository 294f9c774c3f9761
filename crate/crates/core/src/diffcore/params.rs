use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named sub-tensor of a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl Slice {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Named slices that tile a flat vector exactly, in order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    slices: Vec<Slice>,
    len: usize,
}

impl Layout {
    /// Builds a layout by laying the given `(name, shape)` pairs end to end.
    pub fn new<S: Into<String>>(entries: impl IntoIterator<Item = (S, Vec<usize>)>) -> Self {
        let mut slices = Vec::new();
        let mut offset = 0;
        for (name, shape) in entries {
            let slice = Slice {
                name: name.into(),
                offset,
                shape,
            };
            offset += slice.len();
            slices.push(slice);
        }
        Layout {
            slices,
            len: offset,
        }
    }

    pub fn empty() -> Self {
        Layout::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn slices(&self) -> &[Slice] {
        &self.slices
    }

    pub fn slice(&self, name: &str) -> Option<&Slice> {
        self.slices.iter().find(|s| s.name == name)
    }

    /// Name of the slice containing flat index `index`.
    pub fn slice_at(&self, index: usize) -> Option<&Slice> {
        self.slices.iter().find(|s| s.range().contains(&index))
    }
}

/// A flat real parameter vector with named sub-slices.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    layout: Arc<Layout>,
    values: Vec<f64>,
}

/// Derivative of a scalar loss with respect to a [`ParamVector`]; shares its layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    layout: Arc<Layout>,
    values: Vec<f64>,
}

fn first_non_finite(layout: &Layout, values: &[f64]) -> Option<String> {
    let index = values.iter().position(|v| !v.is_finite())?;
    Some(
        layout
            .slice_at(index)
            .map(|s| s.name.clone())
            .unwrap_or_else(|| format!("#{index}")),
    )
}

impl ParamVector {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        let values = vec![0.0; layout.len()];
        ParamVector { layout, values }
    }

    pub fn from_values(layout: Arc<Layout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::dims("parameter values", layout.len(), values.len()));
        }
        Ok(ParamVector { layout, values })
    }

    pub fn empty() -> Self {
        ParamVector::zeros(Arc::new(Layout::empty()))
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn slice(&self, name: &str) -> Option<&[f64]> {
        self.layout.slice(name).map(|s| &self.values[s.range()])
    }

    pub fn slice_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.layout.slice(name)?.range();
        Some(&mut self.values[range])
    }

    /// Name of the first slice holding a NaN or infinity, if any.
    pub fn first_non_finite(&self) -> Option<String> {
        first_non_finite(&self.layout, &self.values)
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.first_non_finite() {
            Some(slice) => Err(Error::NonFinite { slice }),
            None => Ok(()),
        }
    }

    pub(crate) fn same_layout(&self, other: &Layout) -> bool {
        *self.layout == *other
    }

    /// Order-sensitive hash of the exact parameter bits.
    pub fn fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        for v in &self.values {
            v.to_bits().hash(&mut hasher);
        }
        hasher.finish()
    }
}

impl Gradient {
    pub fn zeros_like(params: &ParamVector) -> Self {
        Gradient {
            layout: params.layout.clone(),
            values: vec![0.0; params.len()],
        }
    }

    pub fn zeros(layout: Arc<Layout>) -> Self {
        let values = vec![0.0; layout.len()];
        Gradient { layout, values }
    }

    pub fn from_values(layout: Arc<Layout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::dims("gradient values", layout.len(), values.len()));
        }
        Ok(Gradient { layout, values })
    }

    pub fn empty() -> Self {
        Gradient::zeros(Arc::new(Layout::empty()))
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn slice(&self, name: &str) -> Option<&[f64]> {
        self.layout.slice(name).map(|s| &self.values[s.range()])
    }

    pub fn first_non_finite(&self) -> Option<String> {
        first_non_finite(&self.layout, &self.values)
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.first_non_finite() {
            Some(slice) => Err(Error::NonFinite { slice }),
            None => Ok(()),
        }
    }

    pub fn add_assign(&mut self, other: &Gradient) -> Result<()> {
        if *self.layout != *other.layout {
            return Err(Error::dims("gradient accumulation", self.len(), other.len()));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let norm = self.norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
    }
}
