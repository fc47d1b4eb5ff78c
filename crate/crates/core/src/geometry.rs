//! Pixel-space boxes and page dimensions shared by rendering, verification,
//! and element placement.

use serde::{Deserialize, Serialize};

/// Axis-aligned box in page pixel coordinates. `left <= right`, `top <= bottom`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PxBox {
    pub left: i64,
    pub top: i64,
    pub right: i64,
    pub bottom: i64,
}

impl PxBox {
    pub fn new(left: i64, top: i64, right: i64, bottom: i64) -> Self {
        debug_assert!(left <= right && top <= bottom, "degenerate box");
        PxBox { left, top, right, bottom }
    }

    pub fn width(&self) -> i64 {
        self.right - self.left
    }

    pub fn height(&self) -> i64 {
        self.bottom - self.top
    }

    pub fn area(&self) -> i64 {
        self.width() * self.height()
    }

    pub fn is_empty(&self) -> bool {
        self.width() == 0 || self.height() == 0
    }

    pub fn contains(&self, other: &PxBox) -> bool {
        self.left <= other.left
            && self.top <= other.top
            && self.right >= other.right
            && self.bottom >= other.bottom
    }

    pub fn contains_point(&self, x: i64, y: i64) -> bool {
        x >= self.left && x < self.right && y >= self.top && y < self.bottom
    }

    pub fn intersection(&self, other: &PxBox) -> Option<PxBox> {
        let left = self.left.max(other.left);
        let top = self.top.max(other.top);
        let right = self.right.min(other.right);
        let bottom = self.bottom.min(other.bottom);
        if left < right && top < bottom {
            Some(PxBox { left, top, right, bottom })
        } else {
            None
        }
    }

    pub fn union(&self, other: &PxBox) -> PxBox {
        PxBox {
            left: self.left.min(other.left),
            top: self.top.min(other.top),
            right: self.right.max(other.right),
            bottom: self.bottom.max(other.bottom),
        }
    }

    /// Intersection-over-union. Zero when either box is empty.
    pub fn iou(&self, other: &PxBox) -> f64 {
        let inter = match self.intersection(other) {
            Some(b) => b.area() as f64,
            None => return 0.0,
        };
        let union = (self.area() + other.area()) as f64 - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    pub fn translate(&self, dx: i64, dy: i64) -> PxBox {
        PxBox {
            left: self.left + dx,
            top: self.top + dy,
            right: self.right + dx,
            bottom: self.bottom + dy,
        }
    }
}

/// Page dimensions in pixels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageSize {
    pub width: u32,
    pub height: u32,
}

impl PageSize {
    pub fn new(width: u32, height: u32) -> Self {
        PageSize { width, height }
    }

    pub fn as_box(&self) -> PxBox {
        PxBox { left: 0, top: 0, right: self.width as i64, bottom: self.height as i64 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_of_identical_boxes_is_one() {
        let b = PxBox::new(10, 10, 30, 40);
        assert!((b.iou(&b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iou_of_disjoint_boxes_is_zero() {
        let a = PxBox::new(0, 0, 10, 10);
        let b = PxBox::new(20, 20, 30, 30);
        assert_eq!(a.iou(&b), 0.0);
    }

    #[test]
    fn iou_half_overlap() {
        // Two 10x10 boxes sharing a 5x10 strip: inter 50, union 150.
        let a = PxBox::new(0, 0, 10, 10);
        let b = PxBox::new(5, 0, 15, 10);
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
    }

    #[test]
    fn containment() {
        let outer = PxBox::new(0, 0, 100, 100);
        let inner = PxBox::new(10, 10, 90, 90);
        assert!(outer.contains(&inner));
        assert!(!inner.contains(&outer));
        assert!(outer.contains(&outer));
    }
}
