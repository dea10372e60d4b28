use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One tensor factor of a Hilbert space.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Factor {
    pub label: String,
    pub dim: usize,
}

/// Ordered tensor factorization `H_1 ⊗ H_2 ⊗ ...`, each factor labelled.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ShapeRepr", into = "ShapeRepr")]
pub struct SpaceShape {
    factors: Vec<Factor>,
}

#[derive(Serialize, Deserialize)]
struct ShapeRepr {
    labels: Vec<String>,
    dims: Vec<usize>,
}

impl TryFrom<ShapeRepr> for SpaceShape {
    type Error = Error;
    fn try_from(r: ShapeRepr) -> Result<Self> {
        if r.labels.len() != r.dims.len() {
            return Err(Error::Parse(format!(
                "shape has {} labels but {} dims",
                r.labels.len(),
                r.dims.len()
            )));
        }
        SpaceShape::new(r.labels.into_iter().zip(r.dims).collect())
    }
}

impl From<SpaceShape> for ShapeRepr {
    fn from(s: SpaceShape) -> Self {
        ShapeRepr {
            labels: s.factors.iter().map(|f| f.label.clone()).collect(),
            dims: s.factors.iter().map(|f| f.dim).collect(),
        }
    }
}

impl SpaceShape {
    pub fn new<S: Into<String>>(factors: Vec<(S, usize)>) -> Result<Self> {
        let factors: Vec<Factor> = factors
            .into_iter()
            .map(|(l, d)| Factor { label: l.into(), dim: d })
            .collect();
        if factors.is_empty() {
            return Err(Error::Shape("a shape needs at least one factor".into()));
        }
        for (i, f) in factors.iter().enumerate() {
            if f.dim == 0 {
                return Err(Error::Shape(format!("factor {} has dimension 0", f.label)));
            }
            if factors[..i].iter().any(|g| g.label == f.label) {
                return Err(Error::Shape(format!("duplicate factor label {}", f.label)));
            }
        }
        Ok(Self { factors })
    }

    pub fn single(label: &str, dim: usize) -> Self {
        Self::new(vec![(label, dim)]).expect("valid single-factor shape")
    }

    pub fn bipartite(a: &str, da: usize, b: &str, db: usize) -> Result<Self> {
        Self::new(vec![(a, da), (b, db)])
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn total_dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim).product()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.dim).collect()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.factors.iter().map(|f| f.label.as_str()).collect()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.label == label)
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        self.position(label)
            .map(|p| self.factors[p].dim)
            .ok_or_else(|| Error::Shape(format!("unknown label {label} in {self}")))
    }

    /// `self ⊗ other`; labels must stay unique.
    pub fn concat(&self, other: &SpaceShape) -> Result<Self> {
        let all = self
            .factors
            .iter()
            .chain(other.factors.iter())
            .map(|f| (f.label.clone(), f.dim))
            .collect();
        Self::new(all)
    }

    /// Collapse every factor into one factor of the total dimension.
    pub fn merged(&self, label: &str) -> Self {
        Self::single(label, self.total_dim())
    }

    pub fn with_labels(&self, labels: &[&str]) -> Result<Self> {
        if labels.len() != self.factors.len() {
            return Err(Error::Shape(format!(
                "relabel with {} labels on a {}-factor shape",
                labels.len(),
                self.factors.len()
            )));
        }
        Self::new(labels.iter().zip(&self.factors).map(|(l, f)| (*l, f.dim)).collect())
    }

    /// Label positions for `labels`, failing on the first unknown one.
    pub fn positions(&self, labels: &[&str]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|l| {
                self.position(l)
                    .ok_or_else(|| Error::Shape(format!("unknown label {l} in {self}")))
            })
            .collect()
    }
}

impl fmt::Display for SpaceShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .factors
            .iter()
            .map(|x| format!("{}:{}", x.label, x.dim))
            .collect();
        write!(f, "[{}]", parts.join(" ⊗ "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_labels_and_zero_dims() {
        assert!(SpaceShape::new(vec![("A", 2), ("A", 3)]).is_err());
        assert!(SpaceShape::new(vec![("A", 0)]).is_err());
        let s = SpaceShape::new(vec![("A", 2), ("B", 3)]).unwrap();
        assert_eq!(s.total_dim(), 6);
        assert!(s.concat(&SpaceShape::single("B", 2)).is_err());
    }

    #[test]
    fn serde_form() {
        let s = SpaceShape::new(vec![("A", 2), ("B", 3)]).unwrap();
        let txt = serde_json::to_string(&s).unwrap();
        assert_eq!(txt, r#"{"labels":["A","B"],"dims":[2,3]}"#);
        let back: SpaceShape = serde_json::from_str(&txt).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<SpaceShape>(r#"{"labels":["A"],"dims":[2,3]}"#).is_err());
    }
}
