//! JSON exchange format for matrices and states.
//!
//! A matrix object is `{"shape": {"labels": [...], "dims": [...]}, "re": [[...]], "im": [[...]]}`
//! with row-major entries. Kraus operators whose input space differs from their output
//! space carry an extra `"in_shape"`; `shape` is then the output space.
//! Floats are written with 17 significant digits and parsed with correct rounding, so a
//! written matrix reads back bit for bit.

use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use super::linalg::{c, CMat};
use super::{DensityMatrix, SpaceShape};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixObject {
    pub shape: SpaceShape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_shape: Option<SpaceShape>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixObject {
    pub fn new(shape: SpaceShape, in_shape: Option<SpaceShape>, m: &CMat) -> Self {
        let re = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)].re).collect())
            .collect();
        let im = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)].im).collect())
            .collect();
        Self { shape, in_shape, re, im }
    }

    pub fn from_density(rho: &DensityMatrix) -> Self {
        Self::new(rho.shape().clone(), None, rho.matrix())
    }

    /// Input space: `in_shape` if given, else the output shape for a square matrix.
    pub fn input_shape(&self) -> SpaceShape {
        self.in_shape.clone().unwrap_or_else(|| self.shape.clone())
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        let rows = self.shape.total_dim();
        let cols = self.input_shape().total_dim();
        if self.re.len() != rows || self.im.len() != rows {
            return Err(Error::Parse(format!(
                "expected {rows} rows in re/im, found {} and {}",
                self.re.len(),
                self.im.len()
            )));
        }
        for (i, (a, b)) in self.re.iter().zip(&self.im).enumerate() {
            if a.len() != cols || b.len() != cols {
                return Err(Error::Parse(format!(
                    "row {i}: expected {cols} columns, found {} (re) and {} (im)",
                    a.len(),
                    b.len()
                )));
            }
        }
        Ok(CMat::from_fn(rows, cols, |i, j| c(self.re[i][j], self.im[i][j])))
    }

    pub fn to_density(&self) -> Result<DensityMatrix> {
        if self.in_shape.is_some() {
            return Err(Error::Parse("a state cannot carry an in_shape".into()));
        }
        DensityMatrix::new(self.shape.clone(), self.to_matrix()?)
    }
}

pub fn density_from_json(text: &str) -> Result<DensityMatrix> {
    let obj: MatrixObject = serde_json::from_str(text)?;
    obj.to_density()
}

pub fn density_to_json(rho: &DensityMatrix) -> String {
    to_json_string(&MatrixObject::from_density(rho))
}

/// JSON writer that prints every float with 17 significant digits.
pub struct Sig17Formatter {
    inner: PrettyFormatter<'static>,
}

impl Default for Sig17Formatter {
    fn default() -> Self {
        Self { inner: PrettyFormatter::with_indent(b"  ") }
    }
}

impl Formatter for Sig17Formatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(w, "{value:.16e}")
        } else {
            w.write_all(b"null")
        }
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Serialize with [`Sig17Formatter`].
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17Formatter::default());
    value.serialize(&mut ser).expect("serializing to memory cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// 17-significant-digit rendering used for CSV cells.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
