use serde::{Deserialize, Serialize};

/// Axis-aligned box in continuous coordinates, `(x_min, y_min)` top-left.
///
/// Fields are public so that invalid boxes can be built for validation tests;
/// [`BBox::check`] reports the first broken invariant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub const fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    /// Box of the given size centered at `(cx, cy)`.
    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Self {
        Self::new(
            cx - width / 2.0,
            cy - height / 2.0,
            cx + width / 2.0,
            cy + height / 2.0,
        )
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn from_coords(c: [f64; 4]) -> Self {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self::new(
            self.x_min + dx,
            self.y_min + dy,
            self.x_max + dx,
            self.y_max + dy,
        )
    }

    pub fn scale(&self, sx: f64, sy: f64) -> Self {
        Self::new(
            self.x_min * sx,
            self.y_min * sy,
            self.x_max * sx,
            self.y_max * sy,
        )
    }

    /// Checks finiteness, non-negativity and strictly positive extent.
    pub fn check(&self) -> Result<(), String> {
        if !self.coords().iter().all(|c| c.is_finite()) {
            return Err(format!("non-finite coordinate in {self}"));
        }
        if self.coords().iter().any(|&c| c < 0.0) {
            return Err(format!("negative coordinate in {self}"));
        }
        if self.x_min >= self.x_max {
            return Err(format!("x_min {} >= x_max {}", self.x_min, self.x_max));
        }
        if self.y_min >= self.y_max {
            return Err(format!("y_min {} >= y_max {}", self.y_min, self.y_max));
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.check().is_ok()
    }

    /// True when the box lies within `[0, width] x [0, height]`.
    pub fn within(&self, width: f64, height: f64) -> bool {
        self.x_min >= 0.0 && self.y_min >= 0.0 && self.x_max <= width && self.y_max <= height
    }
}

impl std::fmt::Display for BBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.x_min, self.y_min, self.x_max, self.y_max
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_rejects_inverted_and_degenerate() {
        assert!(BBox::new(30.0, 0.0, 5.0, 10.0).check().is_err());
        assert!(BBox::new(0.0, 3.0, 1.0, 3.0).check().is_err());
        assert!(BBox::new(-1.0, 0.0, 1.0, 1.0).check().is_err());
        assert!(BBox::new(0.0, 0.0, f64::NAN, 1.0).check().is_err());
        assert!(BBox::new(0.0, 0.0, 1.0, 1.0).check().is_ok());
    }

    #[test]
    fn center_and_area() {
        let b = BBox::from_center(2.0, 3.0, 2.0, 4.0);
        assert_eq!(b, BBox::new(1.0, 1.0, 3.0, 5.0));
        assert_eq!(b.area(), 8.0);
        assert_eq!(b.center(), (2.0, 3.0));
    }
}
