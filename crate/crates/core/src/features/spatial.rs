use serde::{Deserialize, Serialize};

use crate::imaging::BoundingBox;

/// Relation of box `to` as seen from box `from`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRelation {
    pub from: usize,
    pub to: usize,
    /// Centroid of `to` minus centroid of `from`, in pixels.
    pub offset: (f64, f64),
    /// Centroid distance divided by the frame diagonal.
    pub normalized_distance: f64,
    pub overlap: bool,
    /// `from` fully contains `to`.
    pub contains: bool,
}

/// Relations for every ordered pair `(i, j)`, `i != j`, in row-major order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpatialDescriptor {
    pub pairs: Vec<PairRelation>,
}

impl SpatialDescriptor {
    pub fn get(&self, from: usize, to: usize) -> Option<&PairRelation> {
        self.pairs.iter().find(|p| p.from == from && p.to == to)
    }
}

pub fn spatial_relations(boxes: &[BoundingBox], frame_dims: (u32, u32)) -> SpatialDescriptor {
    let diag = (frame_dims.0 as f64).hypot(frame_dims.1 as f64);
    let mut pairs = Vec::with_capacity(boxes.len() * boxes.len().saturating_sub(1));
    for (i, a) in boxes.iter().enumerate() {
        let ca = a.centroid();
        for (j, b) in boxes.iter().enumerate() {
            if i == j {
                continue;
            }
            let cb = b.centroid();
            let offset = (cb.0 - ca.0, cb.1 - ca.1);
            pairs.push(PairRelation {
                from: i,
                to: j,
                offset,
                normalized_distance: offset.0.hypot(offset.1) / diag,
                overlap: a.intersection(b).is_some(),
                contains: a.contains(b),
            });
        }
    }
    SpatialDescriptor { pairs }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x: u32, y: u32, w: u32, h: u32) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn single_box_has_no_pairs() {
        assert!(spatial_relations(&[bx(0, 0, 2, 2)], (10, 10))
            .pairs
            .is_empty());
        assert!(spatial_relations(&[], (10, 10)).pairs.is_empty());
    }

    #[test]
    fn disjoint_boxes() {
        let d = spatial_relations(&[bx(0, 0, 2, 2), bx(6, 8, 2, 2)], (10, 10));
        for p in &d.pairs {
            assert!(!p.overlap && !p.contains);
        }
        let ab = d.get(0, 1).unwrap();
        assert_eq!(ab.offset, (6.0, 8.0));
        assert!((ab.normalized_distance - 10.0 / 200f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn containment_is_one_way() {
        let d = spatial_relations(&[bx(0, 0, 10, 10), bx(2, 2, 3, 3)], (20, 20));
        assert!(d.get(0, 1).unwrap().contains);
        assert!(!d.get(1, 0).unwrap().contains);
        assert!(d.get(0, 1).unwrap().overlap && d.get(1, 0).unwrap().overlap);
    }
}
