use super::{CodecKind, Plane};
use crate::error::{Error, Result};

/// One `B×B` patch cut from a plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    /// Grid row and column.
    pub row: usize,
    pub col: usize,
    /// Top-left pixel coordinate in the source plane.
    pub x: usize,
    pub y: usize,
    /// Row-major `B×B` samples.
    pub samples: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major over the grid.
    pub patches: Vec<Patch>,
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

/// Cuts non-overlapping `B×B` patches whose top-left corners sit at
/// `(B/2 + r·B, B/2 + c·B)`, so each patch is centered on a block corner of
/// the codec grid. Partial patches at the right and bottom edges are dropped.
pub fn partition(plane: &Plane, codec: CodecKind) -> Result<PatchGrid> {
    let b = codec.patch_size();
    let offset = codec.offset();
    let min = b + offset;
    if plane.width() < min || plane.height() < min {
        return Err(Error::precondition(format!(
            "{}x{} image is too small to partition for {codec} (need at least {min}x{min})",
            plane.width(),
            plane.height()
        )));
    }
    let cols = (plane.width() - offset) / b;
    let rows = (plane.height() - offset) / b;
    let mut patches = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        let y = offset + row * b;
        for col in 0..cols {
            let x = offset + col * b;
            let mut samples = Vec::with_capacity(b * b);
            for yy in y..y + b {
                samples.extend_from_slice(&plane.row(yy)[x..x + b]);
            }
            patches.push(Patch {
                row,
                col,
                x,
                y,
                samples,
            });
        }
    }
    Ok(PatchGrid {
        patch_size: b,
        offset,
        rows,
        cols,
        patches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn patch_counts() {
        let p = Plane::filled(512, 512, 0.3).unwrap();
        let g = partition(&p, CodecKind::Jpeg).unwrap();
        assert_eq!((g.rows, g.cols, g.len()), (63, 63, 3969));
        let g = partition(&p, CodecKind::HevcMsp).unwrap();
        assert_eq!((g.rows, g.cols, g.len()), (127, 127, 16129));
    }

    #[test]
    fn smallest_jpeg_grid() {
        let p = Plane::filled(16, 16, 0.0).unwrap();
        let g = partition(&p, CodecKind::Jpeg).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!((g.patches[0].x, g.patches[0].y), (4, 4));
    }

    #[test]
    fn too_small() {
        let p = Plane::filled(11, 40, 0.0).unwrap();
        assert!(matches!(
            partition(&p, CodecKind::Jpeg),
            Err(Error::Precondition(_))
        ));
        let p = Plane::filled(12, 12, 0.0).unwrap();
        assert_eq!(partition(&p, CodecKind::Jpeg).unwrap().len(), 1);
    }

    #[test]
    fn patch_contents_follow_coordinates() {
        let w = 20;
        let samples: Vec<f64> = (0..w * w).map(|i| i as f64 / (w * w) as f64).collect();
        let p = Plane::new(w, w, samples).unwrap();
        let g = partition(&p, CodecKind::HevcMsp).unwrap();
        for patch in &g.patches {
            for dy in 0..4 {
                for dx in 0..4 {
                    assert_eq!(
                        patch.samples[dy * 4 + dx],
                        p.get(patch.x + dx, patch.y + dy)
                    );
                }
            }
        }
    }

    proptest! {
        #[test]
        fn patches_disjoint_inside_and_straddle_block_lines(
            w in 6usize..70, h in 6usize..70, jpeg in any::<bool>()
        ) {
            let codec = if jpeg { CodecKind::Jpeg } else { CodecKind::HevcMsp };
            let plane = Plane::filled(w, h, 0.5).unwrap();
            let b = codec.patch_size();
            match partition(&plane, codec) {
                Err(_) => prop_assert!(w < 3 * b / 2 || h < 3 * b / 2),
                Ok(g) => {
                    let mut owner = vec![false; w * h];
                    for p in &g.patches {
                        prop_assert!(p.x + b <= w && p.y + b <= h);
                        prop_assert_eq!((p.x - b / 2) % b, 0);
                        prop_assert_eq!((p.y - b / 2) % b, 0);
                        // a multiple of B lies strictly inside each axis span
                        let gx = (p.x / b + 1) * b;
                        let gy = (p.y / b + 1) * b;
                        prop_assert!(gx > p.x && gx < p.x + b);
                        prop_assert!(gy > p.y && gy < p.y + b);
                        for yy in p.y..p.y + b {
                            for xx in p.x..p.x + b {
                                prop_assert!(!owner[yy * w + xx]);
                                owner[yy * w + xx] = true;
                            }
                        }
                    }
                    prop_assert_eq!(g.len(), ((w - b / 2) / b) * ((h - b / 2) / b));
                }
            }
        }
    }
}
