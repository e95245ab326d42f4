//! Axis-aligned cell boxes and overlap measures.
//!
//! Coordinates are pixels with the origin at the top-left corner, `y`
//! growing downwards.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Whether a table cell carries text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BoxClass {
    #[default]
    Content,
    Empty,
}

impl fmt::Display for BoxClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoxClass::Content => f.write_str("content"),
            BoxClass::Empty => f.write_str("empty"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoxError {
    #[error("degenerate box [{0}, {1}, {2}, {3}]: need x0 < x1 and y0 < y1")]
    Degenerate(f64, f64, f64, f64),
    #[error("box [{0}, {1}, {2}, {3}] has a negative or non-finite coordinate")]
    OutOfRange(f64, f64, f64, f64),
}

/// A table cell rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub klass: BoxClass,
}

impl CellBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, BoxError> {
        Self::with_class(x0, y0, x1, y1, BoxClass::Content)
    }

    pub fn with_class(x0: f64, y0: f64, x1: f64, y1: f64, klass: BoxClass) -> Result<Self, BoxError> {
        let coords = [x0, y0, x1, y1];
        if coords.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(BoxError::OutOfRange(x0, y0, x1, y1));
        }
        if !(x0 < x1 && y0 < y1) {
            return Err(BoxError::Degenerate(x0, y0, x1, y1));
        }
        Ok(Self { x0, y0, x1, y1, klass })
    }

    pub fn from_array(coords: [f64; 4], klass: BoxClass) -> Result<Self, BoxError> {
        Self::with_class(coords[0], coords[1], coords[2], coords[3], klass)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center_x(&self) -> f64 {
        (self.x0 + self.x1) / 2.0
    }

    pub fn center_y(&self) -> f64 {
        (self.y0 + self.y1) / 2.0
    }

    pub fn intersection_area(&self, other: &CellBox) -> f64 {
        interval_overlap((self.x0, self.x1), (other.x0, other.x1))
            * interval_overlap((self.y0, self.y1), (other.y0, other.y1))
    }

    /// Same rectangle, different class.
    pub fn classed(mut self, klass: BoxClass) -> Self {
        self.klass = klass;
        self
    }
}

/// Length of the overlap of two closed intervals, 0 when disjoint.
pub fn interval_overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

/// Gap between two intervals, 0 when they touch or overlap.
pub fn interval_gap(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0.max(b.0) - a.1.min(b.1)).max(0.0)
}

/// Intersection over union. Zero for disjoint boxes.
pub fn iou(a: &CellBox, b: &CellBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Intersection normalised by the PDF cell's own area.
///
/// Prefers predictions that contain the PDF cell, which is what you want
/// when text boxes are much smaller than the cell boxes around them.
pub fn modified_iou(pred: &CellBox, pdf: &CellBox) -> f64 {
    let inter = pred.intersection_area(pdf);
    if inter <= 0.0 {
        return 0.0;
    }
    (inter / pdf.area()).min(1.0)
}
