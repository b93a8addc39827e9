use serde::{Deserialize, Serialize};

/// A point on the floor plan, in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Axis-aligned rectangle given by its min and max corners.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            min: Point::new(x0.min(x1), y0.min(y1)),
            max: Point::new(x0.max(x1), y0.max(y1)),
        }
    }

    pub fn centroid(&self) -> Point {
        Point::new(
            0.5 * (self.min.x + self.max.x),
            0.5 * (self.min.y + self.max.y),
        )
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    /// Closed containment: boundary points count as inside.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// True when the interiors intersect (touching edges do not count).
    pub fn interiors_overlap(&self, other: &Rect) -> bool {
        self.min.x < other.max.x
            && other.min.x < self.max.x
            && self.min.y < other.max.y
            && other.min.y < self.max.y
    }

    /// Midpoint of the wall segment two rectangles share, if they share one of
    /// positive length. Corner contact is not a shared wall.
    pub fn shared_wall_midpoint(&self, other: &Rect) -> Option<Point> {
        if self.interiors_overlap(other) {
            return None;
        }
        let x_lo = self.min.x.max(other.min.x);
        let x_hi = self.max.x.min(other.max.x);
        let y_lo = self.min.y.max(other.min.y);
        let y_hi = self.max.y.min(other.max.y);
        if x_lo == x_hi && y_hi > y_lo {
            Some(Point::new(x_lo, 0.5 * (y_lo + y_hi)))
        } else if y_lo == y_hi && x_hi > x_lo {
            Some(Point::new(0.5 * (x_lo + x_hi), y_lo))
        } else {
            None
        }
    }

    /// Moves a point lying on this rectangle's boundary `inset` meters
    /// inward, perpendicular to the wall it lies on. The inset is capped at
    /// half the rectangle's extent along that axis.
    pub fn inset_from_wall(&self, p: Point, inset: f64) -> Point {
        let dx = inset.min(0.5 * self.width());
        let dy = inset.min(0.5 * self.height());
        let mut q = p;
        if p.x == self.min.x {
            q.x += dx;
        } else if p.x == self.max.x {
            q.x -= dx;
        }
        if p.y == self.min.y {
            q.y += dy;
        } else if p.y == self.max.y {
            q.y -= dy;
        }
        q
    }

    pub fn distance_to(&self, p: Point) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        dx.hypot(dy)
    }
}
