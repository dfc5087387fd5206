//! Closed-form parameter and MAC counts.
//!
//! MACs count weight-application multiplies only (convolutions, linear maps and
//! depthwise kernels) for a single input. Bias adds, normalization, attention
//! score/value products, the state-space recurrence and phase scaling are not counted.

use std::iter::Sum;
use std::ops::{Add, AddAssign};

use super::{backbone_plan, BlockSpec, ComputeGraph, PlannedBlock};
use crate::error::Result;
use crate::events::DEFAULT_BINS;
use crate::genome::{derive_channels, DerivedChannels, Genome};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Cost {
    pub params: u64,
    pub macs: u64,
}

impl Add for Cost {
    type Output = Cost;
    fn add(self, o: Cost) -> Cost {
        Cost {
            params: self.params + o.params,
            macs: self.macs + o.macs,
        }
    }
}

impl AddAssign for Cost {
    fn add_assign(&mut self, o: Cost) {
        *self = *self + o;
    }
}

impl Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::default(), Add::add)
    }
}

fn conv_params(cin: u64, cout: u64, k: u64) -> u64 {
    k * k * cin * cout + cout
}

fn c2f_params(cin: u64, cout: u64, n: u64) -> u64 {
    let h = cout / 2;
    conv_params(cin, 2 * h, 1) + n * 2 * conv_params(h, h, 3) + conv_params((2 + n) * h, cout, 1)
}

impl BlockSpec {
    /// Number of weight elements the block materializes.
    pub fn params(&self) -> u64 {
        match *self {
            BlockSpec::Stem { cin, cout } | BlockSpec::Downsample { cin, cout } => {
                conv_params(cin as u64, cout as u64, 3)
            }
            BlockSpec::Conv { cin, cout, kernel, .. } => conv_params(cin as u64, cout as u64, kernel as u64),
            BlockSpec::C2f { cin, cout, repeats, .. } => c2f_params(cin as u64, cout as u64, repeats as u64),
            BlockSpec::MaxViT { channels, repeats, .. } => {
                let c = channels as u64;
                // qkv, proj, and the two MLP layers, for a window and a grid unit
                repeats as u64 * 2 * (12 * c * c + 9 * c)
            }
            BlockSpec::Mamba {
                channels, heads, state, ..
            } => {
                let (c, h, n) = (channels as u64, heads as u64, state as u64);
                let per_head = (2 * c * c + 2 * c) + 4 * c + (2 * n * c + 2 * n) + c * n + c + 1;
                h * per_head + h * c * c + c
            }
            BlockSpec::WaveMLP { channels, repeats } => {
                let c = channels as u64;
                let branches = 3 * (c * c + c) + 2 * c + 2 * 11 * c;
                repeats as u64 * (branches + (c * c + c) + 8 * c * c + 5 * c)
            }
            BlockSpec::ConvLstm { channels } => {
                let c = channels as u64;
                (18 * c + 2 * c) + (8 * c * c + 4 * c)
            }
            BlockSpec::Sppf { channels } => {
                let c = channels as u64;
                conv_params(c, c / 2, 1) + conv_params(2 * c, c, 1)
            }
        }
    }

    /// Weight multiplies for one `h x w` input.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let (oh, ow) = self.out_hw(h, w);
        let out_px = (oh * ow) as u64;
        let px = (h * w) as u64;
        match *self {
            BlockSpec::Stem { cin, cout } | BlockSpec::Downsample { cin, cout } => 9 * (cin * cout) as u64 * out_px,
            BlockSpec::Conv { cin, cout, kernel, .. } => (kernel * kernel * cin * cout) as u64 * out_px,
            BlockSpec::C2f { cin, cout, repeats, .. } => {
                let (ci, co, n) = (cin as u64, cout as u64, repeats as u64);
                let hd = co / 2;
                px * (ci * 2 * hd + n * 18 * hd * hd + (2 + n) * hd * co)
            }
            BlockSpec::MaxViT { channels, repeats, .. } => {
                let c = channels as u64;
                px * repeats as u64 * 24 * c * c
            }
            BlockSpec::Mamba {
                channels, heads, state, ..
            } => {
                let (c, h, n) = (channels as u64, heads as u64, state as u64);
                px * (h * (2 * c * c + 3 * c + 2 * n * c) + h * c * c)
            }
            BlockSpec::WaveMLP { channels, repeats } => {
                let c = channels as u64;
                px * repeats as u64 * (12 * c * c + 20 * c)
            }
            BlockSpec::ConvLstm { channels } => {
                let c = channels as u64;
                px * (18 * c + 8 * c * c)
            }
            BlockSpec::Sppf { channels } => {
                let c = channels as u64;
                px * (c * (c / 2) + 2 * c * c)
            }
        }
    }

    pub fn cost(&self, h: usize, w: usize) -> Cost {
        Cost {
            params: self.params(),
            macs: self.macs(h, w),
        }
    }
}

fn plan_cost(plan: &[PlannedBlock]) -> Cost {
    plan.iter().map(|b| b.spec.cost(b.in_hw.0, b.in_hw.1)).sum()
}

/// Analytic cost of a materialized graph, from its block specs alone.
pub fn cost(graph: &ComputeGraph) -> Cost {
    graph.blocks().map(|b| b.spec.cost(b.in_hw.0, b.in_hw.1)).sum()
}

/// Neck and detection head attached to the backbone, for costing only.
///
/// The neck fuses layers 2-4 (strides 8, 16, 32) through four C2f blocks with
/// outputs `{8, 4, 8, 16} * stem` and two stride-2 convs. The head has a box
/// branch (64 regression outputs) and a one-class branch per level.
pub fn head_plan(d: &DerivedChannels, h: usize, w: usize) -> Vec<PlannedBlock> {
    let [c2, c3, c4] = [d.layers[1].cout, d.layers[2].cout, d.layers[3].cout];
    let (p3, p4, p5) = ((h / 8, w / 8), (h / 16, w / 16), (h / 32, w / 32));
    let c2f = |cin, cout| BlockSpec::C2f {
        cin,
        cout,
        repeats: 1,
        shortcut: false,
    };
    let conv = |cin, cout, kernel, stride| BlockSpec::Conv {
        cin,
        cout,
        kernel,
        stride,
        bn: true,
        act: true,
    };
    let [n1, n2, n3, n4] = d.panet;
    let mut plan = vec![
        ("neck.c2f1", c2f(c4 + c3, n1), p4),
        ("neck.c2f2", c2f(n1 + c2, n2), p3),
        ("neck.down1", conv(n2, n2, 3, 2), p3),
        ("neck.c2f3", c2f(n2 + n1, n3), p4),
        ("neck.down2", conv(n3, n3, 3, 2), p4),
        ("neck.c2f4", c2f(n3 + c4, n4), p5),
    ];
    let levels = [(n2, p3), (n3, p4), (n4, p5)];
    let reg = 64;
    let box_ch = 16.max(n2 / 4).max(reg);
    let cls_ch = n2.max(1);
    for (x, hw) in levels {
        plan.push(("head.box1", conv(x, box_ch, 3, 1), hw));
        plan.push(("head.box2", conv(box_ch, box_ch, 3, 1), hw));
        plan.push(("head.box3", conv(box_ch, reg, 1, 1), hw));
        plan.push(("head.cls1", conv(x, cls_ch, 3, 1), hw));
        plan.push(("head.cls2", conv(cls_ch, cls_ch, 3, 1), hw));
        plan.push(("head.cls3", conv(cls_ch, 1, 1, 1), hw));
    }
    plan.into_iter()
        .map(|(name, spec, in_hw)| PlannedBlock {
            name: name.to_string(),
            spec,
            in_hw,
        })
        .collect()
}

/// Backbone plus neck and head, at an `h x w` input with the default bins.
pub fn cost_full_model(g: &Genome, h: usize, w: usize) -> Result<Cost> {
    cost_full_model_with_bins(g, DEFAULT_BINS, h, w)
}

pub fn cost_full_model_with_bins(g: &Genome, bins: usize, h: usize, w: usize) -> Result<Cost> {
    let backbone = backbone_plan(g, bins, h, w)?;
    let d = derive_channels(g, bins);
    Ok(plan_cost(&backbone) + plan_cost(&head_plan(&d, h, w)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_conv_closed_form() {
        let spec = BlockSpec::Conv {
            cin: 10,
            cout: 16,
            kernel: 3,
            stride: 2,
            bn: true,
            act: true,
        };
        assert_eq!(spec.params(), 1456);
        assert_eq!(spec.macs(64, 64), 1_474_560);
        let stem = BlockSpec::Stem { cin: 10, cout: 16 };
        assert_eq!(stem.cost(64, 64), spec.cost(64, 64));
    }

    #[test]
    fn cost_grows_with_width() {
        let specs = |c: usize| {
            [
                BlockSpec::Stem { cin: 10, cout: c },
                BlockSpec::Downsample { cin: c, cout: c },
                BlockSpec::C2f {
                    cin: c,
                    cout: c,
                    repeats: 2,
                    shortcut: true,
                },
                BlockSpec::MaxViT {
                    channels: c,
                    repeats: 1,
                    heads: 1,
                    window: 4,
                },
                BlockSpec::Mamba {
                    channels: c,
                    heads: 2,
                    state: 16,
                    window: 8,
                },
                BlockSpec::WaveMLP {
                    channels: c,
                    repeats: 2,
                },
                BlockSpec::ConvLstm { channels: c },
                BlockSpec::Sppf { channels: c },
            ]
        };
        for c in (8..256).step_by(8) {
            for (a, b) in specs(c).iter().zip(specs(c + 8).iter()) {
                assert!(b.params() > a.params(), "{a:?}");
                assert!(b.macs(16, 16) > a.macs(16, 16), "{a:?}");
            }
        }
    }
}
