//! Brute-force MAC counter. The node set comes from walking the data
//! dependencies of the requested head, and every layer is counted one
//! multiply-add at a time by looping over output positions, channels and
//! kernel taps.

use std::collections::BTreeSet;

use rbqe_core::flopsmodel::ArchConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Feature {
    /// Output of node (i, k) after attention.
    F(usize, usize),
}

fn conv_taps(oh: u64, ow: u64, c_in: u64, c_out: u64, kernel: u64) -> u64 {
    let mut n = 0;
    for _y in 0..oh {
        for _x in 0..ow {
            for _o in 0..c_out {
                for _i in 0..c_in {
                    for _t in 0..kernel * kernel {
                        n += 1;
                    }
                }
            }
        }
    }
    n
}

fn depthwise_taps(h: u64, w: u64, c: u64) -> u64 {
    let mut n = 0;
    for _y in 0..h {
        for _x in 0..w {
            for _ch in 0..c {
                for _t in 0..9 {
                    n += 1;
                }
            }
        }
    }
    n
}

fn transposed_taps(ih: u64, iw: u64, c_in: u64, c_out: u64) -> u64 {
    // every input pixel scatters a 2x2 footprint into each output channel
    let mut n = 0;
    for _y in 0..ih {
        for _x in 0..iw {
            for _i in 0..c_in {
                for _o in 0..c_out {
                    for _t in 0..4 {
                        n += 1;
                    }
                }
            }
        }
    }
    n
}

fn attention_ops(h: u64, w: u64, c: u64, k: u64) -> u64 {
    let mut n = 0;
    // global average pool, one add per sample
    for _ in 0..h * w * c {
        n += 1;
    }
    // 1-D conv across the channel descriptor
    for _ in 0..c * k {
        n += 1;
    }
    // rescale, one multiply per sample
    for _ in 0..h * w * c {
        n += 1;
    }
    n
}

fn dims(h: u64, w: u64, level: usize) -> (u64, u64) {
    (h >> (level - 1), w >> (level - 1))
}

fn require(f: Feature, set: &mut BTreeSet<Feature>) {
    if !set.insert(f) {
        return;
    }
    let Feature::F(i, k) = f;
    if k == 1 {
        if i > 1 {
            require(Feature::F(i - 1, 1), set);
        }
    } else {
        for kk in 1..k {
            require(Feature::F(i, kk), set);
        }
        require(Feature::F(i + 1, k - 1), set);
    }
}

/// Total MACs to produce exit `j`, or `None` when the input size cannot be
/// halved often enough.
pub fn exit_macs(cfg: &ArchConfig, j: usize, h: u64, w: u64) -> Option<u64> {
    let mut set = BTreeSet::new();
    require(Feature::F(1, j), &mut set);
    if cfg.full_encoder {
        require(Feature::F(cfg.levels, 1), &mut set);
    }
    let deepest = set.iter().map(|Feature::F(i, _)| *i).max().unwrap();
    let div = 1u64 << (deepest - 1);
    if !h.is_multiple_of(div) || !w.is_multiple_of(div) {
        return None;
    }
    let c = cfg.base_channels;
    let mut total = 0;
    for &Feature::F(i, k) in &set {
        let (lh, lw) = dims(h, w, i);
        if k == 1 {
            let c_in = if i == 1 { cfg.input_channels } else { c };
            if i > 1 {
                // stride-2 conv from the level above
                total += conv_taps(lh, lw, c, c, 3);
            }
            total += conv_taps(lh, lw, c_in, c, 3) + conv_taps(lh, lw, c, c, 3);
        } else {
            let (uh, uw) = dims(h, w, i + 1);
            total += transposed_taps(uh, uw, c, c);
            let wide = c * k as u64;
            total += depthwise_taps(lh, lw, wide) + conv_taps(lh, lw, wide, c, 1);
            total += depthwise_taps(lh, lw, c) + conv_taps(lh, lw, c, c, 1);
        }
        total += attention_ops(lh, lw, c, cfg.eca_kernel);
    }
    // output head at full resolution
    total += conv_taps(h, w, c, 1, 3);
    Some(total)
}
