//! Coarse motion vectors by exhaustive block matching.

use super::{check_dims, MotionError};
use crate::imaging::Frame;

/// One displacement per non-overlapping block, row-major over blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotionField {
    pub block: u32,
    pub cols: u32,
    pub rows: u32,
    pub vectors: Vec<(i32, i32)>,
}

impl MotionField {
    pub fn get(&self, col: u32, row: u32) -> (i32, i32) {
        self.vectors[(row * self.cols + col) as usize]
    }

    /// Speed in pixels per frame and direction in radians (image axes, y down).
    pub fn speed_direction(&self, col: u32, row: u32) -> (f64, f64) {
        let (dx, dy) = self.get(col, row);
        ((dx as f64).hypot(dy as f64), (dy as f64).atan2(dx as f64))
    }
}

/// SAD, tie-break key, displacement.
type Candidate = (u64, (i64, i64, i64), (i32, i32));

/// For each full `block x block` tile of `prev`, finds the displacement
/// `(dx, dy)` with `|dx|, |dy| <= radius` whose tile in `cur` has the least
/// sum of absolute differences. Displaced tiles must lie inside the frame.
/// Ties go to the smallest `|dx| + |dy|`, then smallest `dy`, then `dx`.
pub fn block_motion(
    prev: &Frame,
    cur: &Frame,
    block: u32,
    radius: u32,
) -> Result<MotionField, MotionError> {
    prev.require_gray()?;
    cur.require_gray()?;
    check_dims(prev.dims(), cur.dims())?;
    if block < 4 {
        return Err(MotionError::InvalidParameter(format!(
            "block must be >= 4, got {block}"
        )));
    }
    if radius < 1 {
        return Err(MotionError::InvalidParameter("radius must be >= 1".into()));
    }
    let (w, h) = (prev.width() as i64, prev.height() as i64);
    let (cols, rows) = (prev.width() / block, prev.height() / block);
    let (p, c) = (prev.data(), cur.data());
    let b = block as i64;
    let r = radius as i64;

    let mut vectors = Vec::with_capacity((cols * rows) as usize);
    for by in 0..rows as i64 {
        for bx in 0..cols as i64 {
            let (x0, y0) = (bx * b, by * b);
            let mut best: Option<Candidate> = None;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (cx, cy) = (x0 + dx, y0 + dy);
                    if cx < 0 || cy < 0 || cx + b > w || cy + b > h {
                        continue;
                    }
                    let mut sad = 0u64;
                    for yy in 0..b {
                        let pr = ((y0 + yy) * w + x0) as usize;
                        let cr = ((cy + yy) * w + cx) as usize;
                        sad += p[pr..pr + b as usize]
                            .iter()
                            .zip(&c[cr..cr + b as usize])
                            .map(|(&a, &q)| a.abs_diff(q) as u64)
                            .sum::<u64>();
                    }
                    let key = (dx.abs() + dy.abs(), dy, dx);
                    let better = match &best {
                        None => true,
                        Some((bs, bk, _)) => sad < *bs || (sad == *bs && key < *bk),
                    };
                    if better {
                        best = Some((sad, key, (dx as i32, dy as i32)));
                    }
                }
            }
            vectors.push(best.map_or((0, 0), |(_, _, v)| v));
        }
    }
    Ok(MotionField {
        block,
        cols,
        rows,
        vectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(shift: i64) -> Frame {
        Frame::from_fn_gray(32, 24, |x, y| {
            let sx = x as i64 - shift;
            (((sx * 7 + y as i64 * 13) ^ (sx * sx)).rem_euclid(251)) as u8
        })
        .unwrap()
    }

    #[test]
    fn identical_frames_give_zero_motion() {
        let f = pattern(0);
        let field = block_motion(&f, &f, 8, 2).unwrap();
        assert_eq!((field.cols, field.rows), (4, 3));
        assert!(field.vectors.iter().all(|&v| v == (0, 0)));
    }

    #[test]
    fn rightward_shift_is_recovered() {
        let field = block_motion(&pattern(0), &pattern(3), 8, 4).unwrap();
        for row in 0..field.rows {
            for col in 0..field.cols - 1 {
                assert_eq!(field.get(col, row), (3, 0), "block ({col},{row})");
            }
        }
        let (speed, dir) = field.speed_direction(0, 0);
        assert_eq!((speed, dir), (3.0, 0.0));
    }

    #[test]
    fn parameter_checks() {
        let f = pattern(0);
        assert!(block_motion(&f, &f, 3, 1).is_err());
        assert!(block_motion(&f, &f, 4, 0).is_err());
        let g = Frame::from_fn_gray(8, 8, |_, _| 0).unwrap();
        assert!(matches!(
            block_motion(&f, &g, 4, 1),
            Err(MotionError::DimensionMismatch { .. })
        ));
    }
}
