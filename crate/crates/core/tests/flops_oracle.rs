mod common;

use common::flops_oracle;
use rbqe_core::flopsmodel::{exit_cost, ArchConfig};

#[test]
fn toy_anchor() {
    let cfg = ArchConfig {
        levels: 2,
        base_channels: 2,
        ..ArchConfig::default()
    };
    assert_eq!(flops_oracle::exit_macs(&cfg, 2, 4, 4), Some(2866));
    assert_eq!(exit_cost(&cfg, 2, 4, 4).unwrap(), 2866);
}

#[test]
fn model_matches_tap_enumeration_on_small_configs() {
    let mut checked = 0;
    for levels in 2..=3 {
        for c in 1..=4 {
            for input_channels in [1, 3] {
                for full_encoder in [false, true] {
                    let cfg = ArchConfig {
                        levels,
                        base_channels: c,
                        input_channels,
                        full_encoder,
                        ..ArchConfig::default()
                    };
                    for j in cfg.exits() {
                        for h in 1..=8 {
                            for w in 1..=8 {
                                let model = exit_cost(&cfg, j, h, w).ok();
                                let oracle = flops_oracle::exit_macs(&cfg, j, h, w);
                                assert_eq!(model, oracle, "{cfg:?} exit {j} at {h}x{w}");
                                checked += oracle.is_some() as usize;
                            }
                        }
                    }
                }
            }
        }
    }
    assert!(checked > 100);
}
