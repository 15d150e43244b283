//! Analytical multiply-accumulate (MAC) accounting for the nested-UNet
//! early-exit backbone.
//!
//! Layout for `I` levels and base width `c`:
//!
//! * encoder node `C(i,1)`, `i = 1..I`: two full 3×3 convolutions at
//!   `h/2^(i-1)`; the first reads the input channels at level 1;
//! * downsampler into level `i ≥ 2`: one 3×3 stride-2 convolution `c → c`;
//! * decoder node `C(i,k)`, `k ≥ 2`: two separable convolutions (depthwise
//!   3×3 then pointwise to `c`) reading `c·k` concatenated channels, the
//!   `k-1` same-level predecessors plus one upsampled feed;
//! * upsampler into `C(i,k)`: transposed 2×2 stride-2 convolution from
//!   `F(i+1,k-1)`, `c → c`;
//! * channel attention on every feature group `F(i,k)`: `2·h·w·c + c·k_eca`;
//! * output head `C(0,j)`: one 3×3 convolution `c → 1` at full resolution.
//!
//! Biases are not counted and convolutions are same-padded. Exit `j` runs
//! the `j`-level sub-network: `C(1..j,1)`, its downsamplers, every decoder
//! node with `i + k ≤ j + 1`, their upsamplers and attention, and head `j`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Published averages for the default configuration at 512×512, in GMacs.
pub const REFERENCE_GMACS_EXIT2: f64 = 17.9;
pub const REFERENCE_GMACS_EXIT6: f64 = 27.5;
/// Published last-exit over first-exit cost ratio.
pub const REFERENCE_LAST_OVER_FIRST: f64 = 2.7;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub levels: usize,
    pub base_channels: u64,
    pub input_channels: u64,
    pub eca_kernel: u64,
    /// Run the whole encoder column before any exit instead of only the
    /// exit's own levels.
    pub full_encoder: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            levels: 6,
            base_channels: 32,
            input_channels: 1,
            eca_kernel: 3,
            full_encoder: false,
        }
    }
}

impl ArchConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ArchConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("architecture config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::Config(format!(
                "levels must be >= 2, got {}",
                self.levels
            )));
        }
        if self.base_channels == 0 || self.input_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        Ok(())
    }

    pub fn exits(&self) -> std::ops::RangeInclusive<usize> {
        2..=self.levels
    }
}

/// Primitive layer shapes understood by [`node_macs`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv3x3,
    Depthwise3x3,
    Pointwise,
    /// 3×3, stride 2; `h, w` are the input resolution.
    StridedConv3x3,
    /// 2×2, stride 2; `h, w` are the input resolution.
    Transposed2x2,
    /// Pooling plus rescale over `c_in` channels and a 1-D kernel across
    /// channels.
    Attention {
        kernel: u64,
    },
}

pub fn node_macs(kind: LayerKind, h: u64, w: u64, c_in: u64, c_out: u64) -> Result<u64> {
    if h == 0 || w == 0 || c_in == 0 || c_out == 0 {
        return Err(Error::precondition("layer dimensions must be positive"));
    }
    Ok(match kind {
        LayerKind::Conv3x3 => h * w * c_out * 9 * c_in,
        LayerKind::Depthwise3x3 => {
            if c_in != c_out {
                return Err(Error::precondition(format!(
                    "depthwise layer maps {c_in} channels to {c_out}"
                )));
            }
            h * w * c_in * 9
        }
        LayerKind::Pointwise => h * w * c_out * c_in,
        LayerKind::StridedConv3x3 => {
            if !h.is_multiple_of(2) || !w.is_multiple_of(2) {
                return Err(Error::precondition(format!(
                    "downsampling needs even dimensions, got {h}x{w}"
                )));
            }
            (h / 2) * (w / 2) * c_out * 9 * c_in
        }
        LayerKind::Transposed2x2 => h * w * c_in * c_out * 4,
        LayerKind::Attention { kernel } => 2 * h * w * c_in + c_in * kernel,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Encoder { level: usize },
    Down { level: usize },
    Decoder { level: usize, col: usize },
    Up { level: usize, col: usize },
    Attention { level: usize, col: usize },
    Head { exit: usize },
}

impl NodeId {
    pub fn is_encoder_side(&self) -> bool {
        matches!(
            self,
            NodeId::Encoder { .. } | NodeId::Down { .. } | NodeId::Attention { col: 1, .. }
        )
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            NodeId::Encoder { level } => write!(f, "C{level}_1"),
            NodeId::Down { level } => write!(f, "down{level}"),
            NodeId::Decoder { level, col } => write!(f, "C{level}_{col}"),
            NodeId::Up { level, col } => write!(f, "up{level}_{col}"),
            NodeId::Attention { level, col } => write!(f, "eca{level}_{col}"),
            NodeId::Head { exit } => write!(f, "C0_{exit}"),
        }
    }
}

fn level_dims(h: u64, w: u64, level: usize) -> (u64, u64) {
    (h >> (level - 1), w >> (level - 1))
}

fn check_exit(cfg: &ArchConfig, exit: usize) -> Result<()> {
    cfg.validate()?;
    if !cfg.exits().contains(&exit) {
        return Err(Error::precondition(format!(
            "exit {exit} outside 2..={}",
            cfg.levels
        )));
    }
    Ok(())
}

fn deepest_level(cfg: &ArchConfig, exit: usize) -> usize {
    if cfg.full_encoder {
        cfg.levels
    } else {
        exit
    }
}

fn check_dims(h: u64, w: u64, deepest: usize) -> Result<()> {
    let div = 1u64 << (deepest - 1);
    if h == 0 || w == 0 || !h.is_multiple_of(div) || !w.is_multiple_of(div) {
        return Err(Error::precondition(format!(
            "{h}x{w} input is not divisible by {div} as {deepest} levels require"
        )));
    }
    Ok(())
}

/// Node set of the exit-`j` sub-network, in execution order.
pub fn exit_nodes(cfg: &ArchConfig, exit: usize) -> Result<Vec<NodeId>> {
    check_exit(cfg, exit)?;
    let mut nodes = Vec::new();
    for level in 1..=deepest_level(cfg, exit) {
        if level > 1 {
            nodes.push(NodeId::Down { level });
        }
        nodes.push(NodeId::Encoder { level });
        nodes.push(NodeId::Attention { level, col: 1 });
    }
    for col in 2..=exit {
        for level in (1..=exit + 1 - col).rev() {
            nodes.push(NodeId::Up { level, col });
            nodes.push(NodeId::Decoder { level, col });
            nodes.push(NodeId::Attention { level, col });
        }
    }
    nodes.push(NodeId::Head { exit });
    Ok(nodes)
}

/// MACs of one node at input resolution `h×w`.
pub fn node_cost(cfg: &ArchConfig, node: NodeId, h: u64, w: u64) -> Result<u64> {
    let c = cfg.base_channels;
    let attention = LayerKind::Attention {
        kernel: cfg.eca_kernel,
    };
    match node {
        NodeId::Encoder { level } => {
            let (lh, lw) = level_dims(h, w, level);
            let c_in = if level == 1 { cfg.input_channels } else { c };
            Ok(node_macs(LayerKind::Conv3x3, lh, lw, c_in, c)?
                + node_macs(LayerKind::Conv3x3, lh, lw, c, c)?)
        }
        NodeId::Down { level } => {
            let (lh, lw) = level_dims(h, w, level - 1);
            node_macs(LayerKind::StridedConv3x3, lh, lw, c, c)
        }
        NodeId::Decoder { level, col } => {
            let (lh, lw) = level_dims(h, w, level);
            let wide = c * col as u64;
            Ok(node_macs(LayerKind::Depthwise3x3, lh, lw, wide, wide)?
                + node_macs(LayerKind::Pointwise, lh, lw, wide, c)?
                + node_macs(LayerKind::Depthwise3x3, lh, lw, c, c)?
                + node_macs(LayerKind::Pointwise, lh, lw, c, c)?)
        }
        NodeId::Up { level, .. } => {
            let (lh, lw) = level_dims(h, w, level + 1);
            node_macs(LayerKind::Transposed2x2, lh, lw, c, c)
        }
        NodeId::Attention { level, .. } => {
            let (lh, lw) = level_dims(h, w, level);
            node_macs(attention, lh, lw, c, c)
        }
        NodeId::Head { .. } => node_macs(LayerKind::Conv3x3, h, w, c, 1),
    }
}

pub fn exit_cost(cfg: &ArchConfig, exit: usize, h: u64, w: u64) -> Result<u64> {
    check_exit(cfg, exit)?;
    check_dims(h, w, deepest_level(cfg, exit))?;
    exit_nodes(cfg, exit)?
        .into_iter()
        .map(|n| node_cost(cfg, n, h, w))
        .sum()
}

/// Same as [`exit_cost`] without the encoder column, its downsamplers and
/// encoder-side attention.
pub fn decoder_only_cost(cfg: &ArchConfig, exit: usize, h: u64, w: u64) -> Result<u64> {
    check_exit(cfg, exit)?;
    check_dims(h, w, deepest_level(cfg, exit))?;
    exit_nodes(cfg, exit)?
        .into_iter()
        .filter(|n| !n.is_encoder_side())
        .map(|n| node_cost(cfg, n, h, w))
        .sum()
}

/// Extra MACs spent to produce exit `j` once exit `j-1` has been computed:
/// the nodes of the `j` sub-network not already run for earlier exits.
pub fn incremental_cost(cfg: &ArchConfig, exit: usize, h: u64, w: u64) -> Result<u64> {
    check_exit(cfg, exit)?;
    check_dims(h, w, deepest_level(cfg, exit))?;
    let mut seen = BTreeSet::new();
    for earlier in 2..exit {
        seen.extend(exit_nodes(cfg, earlier)?);
    }
    exit_nodes(cfg, exit)?
        .into_iter()
        .filter(|n| !seen.contains(n))
        .map(|n| node_cost(cfg, n, h, w))
        .sum()
}

pub fn decoder_path_ratio(cfg: &ArchConfig, h: u64, w: u64) -> Result<f64> {
    let last = decoder_only_cost(cfg, cfg.levels, h, w)?;
    let first = decoder_only_cost(cfg, 2, h, w)?;
    Ok(last as f64 / first as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeCost {
    pub node: String,
    pub macs: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitCost {
    pub exit: usize,
    pub cumulative_macs: u64,
    pub decoder_only_macs: u64,
    pub incremental_macs: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub schema_version: u32,
    pub arch: ArchConfig,
    pub height: u64,
    pub width: u64,
    /// Every node of the full network, including all heads.
    pub per_node: Vec<NodeCost>,
    pub exits: Vec<ExitCost>,
}

impl CostReport {
    pub fn build(cfg: &ArchConfig, h: u64, w: u64) -> Result<Self> {
        cfg.validate()?;
        check_dims(h, w, cfg.levels)?;
        let mut nodes: Vec<NodeId> = exit_nodes(cfg, cfg.levels)?;
        nodes.extend((2..cfg.levels).map(|exit| NodeId::Head { exit }));
        let per_node = nodes
            .into_iter()
            .map(|n| {
                Ok(NodeCost {
                    node: n.to_string(),
                    macs: node_cost(cfg, n, h, w)?,
                })
            })
            .collect::<Result<_>>()?;
        let exits = cfg
            .exits()
            .map(|j| {
                Ok(ExitCost {
                    exit: j,
                    cumulative_macs: exit_cost(cfg, j, h, w)?,
                    decoder_only_macs: decoder_only_cost(cfg, j, h, w)?,
                    incremental_macs: incremental_cost(cfg, j, h, w)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(CostReport {
            schema_version: SCHEMA_VERSION,
            arch: cfg.clone(),
            height: h,
            width: w,
            per_node,
            exits,
        })
    }

    pub fn exit(&self, j: usize) -> Option<&ExitCost> {
        self.exits.iter().find(|e| e.exit == j)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `schema_version,node,macs` rows.
    pub fn per_node_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["schema_version", "node", "macs"])
            .map_err(csv_err)?;
        for n in &self.per_node {
            wtr.write_record([
                SCHEMA_VERSION.to_string(),
                n.node.clone(),
                n.macs.to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish(wtr)
    }

    pub fn exits_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record([
            "schema_version",
            "exit",
            "cumulative_macs",
            "decoder_only_macs",
            "incremental_macs",
        ])
        .map_err(csv_err)?;
        for e in &self.exits {
            wtr.write_record([
                SCHEMA_VERSION.to_string(),
                e.exit.to_string(),
                e.cumulative_macs.to_string(),
                e.decoder_only_macs.to_string(),
                e.incremental_macs.to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish(wtr)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("CSV: {e}"))
}

fn finish(wtr: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = wtr
        .into_inner()
        .map_err(|e| Error::Format(format!("CSV: {e}")))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}
