//! Backbone construction and forward evaluation.
//!
//! A genome expands into a fixed layout: a stride-2 stem, four layers of
//! (stride-2 downsample, processing block, ConvLSTM memory cell), and an SPPF
//! block. Weights are Gaussian scaled by `1/sqrt(fan_in)` and fully determined by
//! the seed. Batch norms use batch statistics and carry no affine parameters.

mod cost;
mod layers;

use std::fmt::Write as _;

pub use cost::{cost, cost_full_model, cost_full_model_with_bins, head_plan, Cost};

use crate::error::{Error, Result};
use crate::events::DEFAULT_BINS;
use crate::genome::{derive_channels, BlockGene, Genome};
use crate::tensor::{Rng, Tensor};
use layers::{largest_divisor_at_most, C2f, ConvLstm, ConvUnit, Mamba, MaxVit, Params, Sppf, WaveMlp};

/// Largest attention window side; smaller feature maps use the largest divisor below it.
pub const MAXVIT_WINDOW: usize = 4;
/// Largest scan window side for Mamba blocks.
pub const MAMBA_WINDOW: usize = 8;
/// State dimension of each Mamba head.
pub const MAMBA_STATE: usize = 16;
/// Input height and width must be multiples of this (five stride-2 stages).
pub const INPUT_MULTIPLE: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockSpec {
    /// 3x3 stride-2 conv unit on the encoded input.
    Stem {
        cin: usize,
        cout: usize,
    },
    /// 3x3 stride-2 conv unit opening each layer.
    Downsample {
        cin: usize,
        cout: usize,
    },
    /// Generic square conv with optional batch norm and SiLU.
    Conv {
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        bn: bool,
        act: bool,
    },
    C2f {
        cin: usize,
        cout: usize,
        repeats: usize,
        shortcut: bool,
    },
    MaxViT {
        channels: usize,
        repeats: usize,
        heads: usize,
        window: usize,
    },
    Mamba {
        channels: usize,
        heads: usize,
        state: usize,
        window: usize,
    },
    WaveMLP {
        channels: usize,
        repeats: usize,
    },
    ConvLstm {
        channels: usize,
    },
    Sppf {
        channels: usize,
    },
}

impl BlockSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            BlockSpec::Stem { .. } => "Stem",
            BlockSpec::Downsample { .. } => "Downsample",
            BlockSpec::Conv { .. } => "Conv",
            BlockSpec::C2f { .. } => "C2f",
            BlockSpec::MaxViT { .. } => "MaxViT",
            BlockSpec::Mamba { .. } => "Mamba",
            BlockSpec::WaveMLP { .. } => "WaveMLP",
            BlockSpec::ConvLstm { .. } => "ConvLSTM",
            BlockSpec::Sppf { .. } => "SPPF",
        }
    }

    pub fn cin(&self) -> usize {
        match *self {
            BlockSpec::Stem { cin, .. }
            | BlockSpec::Downsample { cin, .. }
            | BlockSpec::Conv { cin, .. }
            | BlockSpec::C2f { cin, .. } => cin,
            BlockSpec::MaxViT { channels, .. }
            | BlockSpec::Mamba { channels, .. }
            | BlockSpec::WaveMLP { channels, .. }
            | BlockSpec::ConvLstm { channels }
            | BlockSpec::Sppf { channels } => channels,
        }
    }

    pub fn cout(&self) -> usize {
        match *self {
            BlockSpec::Stem { cout, .. }
            | BlockSpec::Downsample { cout, .. }
            | BlockSpec::Conv { cout, .. }
            | BlockSpec::C2f { cout, .. } => cout,
            _ => self.cin(),
        }
    }

    pub fn stride(&self) -> usize {
        match *self {
            BlockSpec::Stem { .. } | BlockSpec::Downsample { .. } => 2,
            BlockSpec::Conv { stride, .. } => stride,
            _ => 1,
        }
    }

    pub fn kernel(&self) -> usize {
        match *self {
            BlockSpec::Stem { .. } | BlockSpec::Downsample { .. } => 3,
            BlockSpec::Conv { kernel, .. } => kernel,
            _ => 1,
        }
    }

    /// Output spatial size for an `h x w` input.
    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let (k, s) = (self.kernel(), self.stride());
        let p = k / 2;
        ((h + 2 * p - k) / s + 1, (w + 2 * p - k) / s + 1)
    }
}

/// A block placed in a network, with the spatial size it receives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlannedBlock {
    pub name: String,
    pub spec: BlockSpec,
    pub in_hw: (usize, usize),
}

impl PlannedBlock {
    pub fn out_hw(&self) -> (usize, usize) {
        self.spec.out_hw(self.in_hw.0, self.in_hw.1)
    }
}

/// Heads for an attention block of width `c`: about one per 32 channels, dividing `c`.
pub fn maxvit_heads(c: usize) -> usize {
    largest_divisor_at_most(c, (c / 32).max(1))
}

fn check_geometry(h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 || !h.is_multiple_of(INPUT_MULTIPLE) || !w.is_multiple_of(INPUT_MULTIPLE) {
        return Err(Error::Config(format!(
            "input {h}x{w} must be a positive multiple of {INPUT_MULTIPLE}"
        )));
    }
    Ok(())
}

/// The block sequence a genome expands to at an `h x w` input with `bins` temporal bins.
pub fn backbone_plan(g: &Genome, bins: usize, h: usize, w: usize) -> Result<Vec<PlannedBlock>> {
    check_geometry(h, w)?;
    let d = derive_channels(g, bins);
    let mut plan = Vec::with_capacity(14);
    let mut hw = (h, w);
    let mut push = |name: String, spec: BlockSpec, hw: &mut (usize, usize)| {
        let b = PlannedBlock { name, spec, in_hw: *hw };
        *hw = b.out_hw();
        plan.push(b);
    };
    push(
        "stem".into(),
        BlockSpec::Stem {
            cin: d.input,
            cout: d.stem,
        },
        &mut hw,
    );
    for (i, (lc, gene)) in d.layers.iter().zip(g.layers()).enumerate() {
        let c = lc.cout;
        push(
            format!("layer{}.down", i + 1),
            BlockSpec::Downsample { cin: lc.cin, cout: c },
            &mut hw,
        );
        let spec = match gene.block {
            BlockGene::C2f { repeats } => BlockSpec::C2f {
                cin: c,
                cout: c,
                repeats: repeats as usize,
                shortcut: true,
            },
            BlockGene::MaxViT { repeats } => BlockSpec::MaxViT {
                channels: c,
                repeats: repeats as usize,
                heads: maxvit_heads(c),
                window: MAXVIT_WINDOW,
            },
            BlockGene::Mamba { .. } => BlockSpec::Mamba {
                channels: c,
                heads: lc.heads.expect("mamba layer has heads"),
                state: MAMBA_STATE,
                window: MAMBA_WINDOW,
            },
            BlockGene::WaveMLP { repeats } => BlockSpec::WaveMLP {
                channels: c,
                repeats: repeats as usize,
            },
        };
        push(format!("layer{}.{}", i + 1, gene.block.kind().token()), spec, &mut hw);
        push(
            format!("layer{}.lstm", i + 1),
            BlockSpec::ConvLstm { channels: c },
            &mut hw,
        );
    }
    let last = d.layers[d.layers.len() - 1].cout;
    push("sppf".into(), BlockSpec::Sppf { channels: last }, &mut hw);
    Ok(plan)
}

/// Per-forward instrumentation: weight multiplies and batch-norm spreads.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    macs: u64,
    batch: usize,
    bn_log_sigma: Vec<f64>,
    attention_rows: usize,
    attention_row_error: f64,
}

impl Trace {
    pub(crate) fn count(&mut self, multiplies: usize) {
        self.macs += multiplies as u64;
    }

    pub(crate) fn record_bn(&mut self, sigmas: &[f32]) {
        let mean = sigmas.iter().map(|&s| (s as f64).ln()).sum::<f64>() / sigmas.len() as f64;
        self.bn_log_sigma.push(mean);
    }

    pub(crate) fn record_attention_row(&mut self, sum: f64) {
        self.attention_rows += 1;
        self.attention_row_error = self.attention_row_error.max((sum - 1.0).abs());
    }

    /// Weight multiplies summed over the whole batch.
    pub fn macs_total(&self) -> u64 {
        self.macs
    }

    /// Weight multiplies for one input of the batch.
    pub fn macs_per_image(&self) -> u64 {
        self.macs / self.batch.max(1) as u64
    }

    /// Mean over channels of `ln(sigma)`, one entry per batch-norm layer in forward order.
    pub fn bn_log_sigmas(&self) -> &[f64] {
        &self.bn_log_sigma
    }

    pub fn attention_rows(&self) -> usize {
        self.attention_rows
    }

    /// Largest deviation of an attention row sum from 1.
    pub fn max_attention_row_error(&self) -> f64 {
        self.attention_row_error
    }
}

/// Hidden and cell tensors of every ConvLSTM, created as zeros on first use.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecurrentState {
    cells: Vec<Option<(Tensor, Tensor)>>,
}

impl RecurrentState {
    pub fn new() -> Self {
        Self::default()
    }

    /// `(h, c)` of the `i`-th ConvLSTM, if it has run.
    pub fn cell(&self, i: usize) -> Option<(&Tensor, &Tensor)> {
        self.cells.get(i).and_then(|c| c.as_ref()).map(|(h, c)| (h, c))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

#[derive(Clone, Debug)]
enum Layer {
    Conv(ConvUnit),
    C2f(C2f),
    MaxVit(MaxVit),
    Mamba(Mamba),
    Wave(WaveMlp),
    Lstm(ConvLstm),
    Sppf(Sppf),
}

impl Layer {
    fn build(spec: &BlockSpec, rng: &mut Rng) -> Layer {
        match *spec {
            BlockSpec::Stem { cin, cout } | BlockSpec::Downsample { cin, cout } => {
                Layer::Conv(ConvUnit::new(cin, cout, 3, 2, rng))
            }
            BlockSpec::Conv {
                cin,
                cout,
                kernel,
                stride,
                bn,
                act,
            } => {
                let mut u = ConvUnit::new(cin, cout, kernel, stride, rng);
                u.bn = bn;
                u.act = act;
                Layer::Conv(u)
            }
            BlockSpec::C2f {
                cin,
                cout,
                repeats,
                shortcut,
            } => Layer::C2f(C2f::new(cin, cout, repeats, shortcut, rng)),
            BlockSpec::MaxViT {
                channels,
                repeats,
                heads,
                window,
            } => Layer::MaxVit(MaxVit::new(channels, repeats, heads, window, rng)),
            BlockSpec::Mamba {
                channels,
                heads,
                state,
                window,
            } => Layer::Mamba(Mamba::new(channels, heads, state, window, rng)),
            BlockSpec::WaveMLP { channels, repeats } => Layer::Wave(WaveMlp::new(channels, repeats, rng)),
            BlockSpec::ConvLstm { channels } => Layer::Lstm(ConvLstm::new(channels, rng)),
            BlockSpec::Sppf { channels } => Layer::Sppf(Sppf::new(channels, rng)),
        }
    }

    fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv(l) => l.params(),
            Layer::C2f(l) => l.params(),
            Layer::MaxVit(l) => l.params(),
            Layer::Mamba(l) => l.params(),
            Layer::Wave(l) => l.params(),
            Layer::Lstm(l) => l.params(),
            Layer::Sppf(l) => l.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv(l) => l.params_mut(),
            Layer::C2f(l) => l.params_mut(),
            Layer::MaxVit(l) => l.params_mut(),
            Layer::Mamba(l) => l.params_mut(),
            Layer::Wave(l) => l.params_mut(),
            Layer::Lstm(l) => l.params_mut(),
            Layer::Sppf(l) => l.params_mut(),
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    block: PlannedBlock,
    layer: Layer,
}

/// A materialized network: an ordered block list with weights.
#[derive(Clone, Debug)]
pub struct ComputeGraph {
    input_channels: usize,
    height: usize,
    width: usize,
    nodes: Vec<Node>,
}

/// Build the backbone of `g` for `h x w` inputs with the default number of bins.
pub fn build_graph(g: &Genome, h: usize, w: usize, seed: u64) -> Result<ComputeGraph> {
    build_graph_with_bins(g, DEFAULT_BINS, h, w, seed)
}

pub fn build_graph_with_bins(g: &Genome, bins: usize, h: usize, w: usize, seed: u64) -> Result<ComputeGraph> {
    ComputeGraph::from_plan(backbone_plan(g, bins, h, w)?, h, w, seed)
}

impl ComputeGraph {
    /// Materialize weights for a block sequence. Adjacent blocks must agree on channels.
    pub fn from_plan(plan: Vec<PlannedBlock>, h: usize, w: usize, seed: u64) -> Result<Self> {
        let first = plan.first().ok_or_else(|| Error::Config("empty block plan".into()))?;
        let input_channels = first.spec.cin();
        let mut hw = (h, w);
        let mut c = input_channels;
        for b in &plan {
            if b.spec.cin() != c || b.in_hw != hw {
                return Err(Error::shape(
                    "graph",
                    b.name.clone(),
                    format!(
                        "expects {}x{:?}, previous block gives {c}x{hw:?}",
                        b.spec.cin(),
                        b.in_hw
                    ),
                ));
            }
            c = b.spec.cout();
            hw = b.out_hw();
            if hw.0 == 0 || hw.1 == 0 {
                return Err(Error::shape("graph", b.name.clone(), "spatial size collapsed to zero"));
            }
        }
        let mut rng = Rng::new(seed);
        let nodes = plan
            .into_iter()
            .map(|block| Node {
                layer: Layer::build(&block.spec, &mut rng),
                block,
            })
            .collect();
        Ok(ComputeGraph {
            input_channels,
            height: h,
            width: w,
            nodes,
        })
    }

    /// A plain stack of `depth` stride-2 3x3 convs of constant `width`.
    #[allow(clippy::too_many_arguments)]
    pub fn plain_conv(
        input_channels: usize,
        width: usize,
        depth: usize,
        h: usize,
        w: usize,
        bn: bool,
        act: bool,
        seed: u64,
    ) -> Result<Self> {
        let mut plan = Vec::with_capacity(depth);
        let (mut hw, mut c) = ((h, w), input_channels);
        for i in 0..depth {
            let b = PlannedBlock {
                name: format!("conv{}", i + 1),
                spec: BlockSpec::Conv {
                    cin: c,
                    cout: width,
                    kernel: 3,
                    stride: 2,
                    bn,
                    act,
                },
                in_hw: hw,
            };
            hw = b.out_hw();
            c = width;
            plan.push(b);
        }
        ComputeGraph::from_plan(plan, h, w, seed)
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn input_hw(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn output_channels(&self) -> usize {
        self.nodes.last().unwrap().block.spec.cout()
    }

    pub fn output_hw(&self) -> (usize, usize) {
        self.nodes.last().unwrap().block.out_hw()
    }

    pub fn blocks(&self) -> impl Iterator<Item = &PlannedBlock> {
        self.nodes.iter().map(|n| &n.block)
    }

    /// Every materialized weight tensor, in a fixed order.
    pub fn param_tensors(&self) -> Vec<&Tensor> {
        self.nodes.iter().flat_map(|n| n.layer.params()).collect()
    }

    pub(crate) fn param_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.nodes.iter_mut().flat_map(|n| n.layer.params_mut()).collect()
    }

    /// Total number of weight elements.
    pub fn num_params(&self) -> usize {
        self.param_tensors().iter().map(|t| t.len()).sum()
    }

    pub fn forward(&self, x: &Tensor, state: RecurrentState) -> Result<(Tensor, RecurrentState)> {
        self.forward_traced(x, state, &mut Trace::default())
    }

    pub fn forward_traced(
        &self,
        x: &Tensor,
        mut state: RecurrentState,
        trace: &mut Trace,
    ) -> Result<(Tensor, RecurrentState)> {
        if x.rank() != 4 || x.dim(1) != self.input_channels || (x.dim(2), x.dim(3)) != (self.height, self.width) {
            return Err(Error::shape(
                "forward",
                "input",
                format!(
                    "expected [B, {}, {}, {}], got {:?}",
                    self.input_channels,
                    self.height,
                    self.width,
                    x.shape()
                ),
            ));
        }
        trace.batch = x.dim(0);
        let mut y = x.clone();
        let mut lstm = 0;
        for node in &self.nodes {
            y = match &node.layer {
                Layer::Conv(l) => l.forward(&y, trace)?,
                Layer::C2f(l) => l.forward(&y, trace)?,
                Layer::MaxVit(l) => l.forward(&y, trace)?,
                Layer::Mamba(l) => l.forward(&y, trace)?,
                Layer::Wave(l) => l.forward(&y, trace)?,
                Layer::Sppf(l) => l.forward(&y, trace)?,
                Layer::Lstm(l) => {
                    if state.cells.len() <= lstm {
                        state.cells.resize(lstm + 1, None);
                    }
                    let (h, c) = match state.cells[lstm].take() {
                        Some((h, c)) if h.shape() == y.shape() => (h, c),
                        Some((h, _)) => {
                            return Err(Error::shape(
                                "forward",
                                node.block.name.clone(),
                                format!("recurrent state {:?} does not match input {:?}", h.shape(), y.shape()),
                            ))
                        }
                        None => (Tensor::zeros(y.shape()), Tensor::zeros(y.shape())),
                    };
                    let (h2, c2) = l.forward(&y, &h, &c, trace)?;
                    state.cells[lstm] = Some((h2.clone(), c2));
                    lstm += 1;
                    h2
                }
            };
            if !y.is_finite() {
                return Err(Error::Overflow {
                    block: node.block.name.clone(),
                });
            }
        }
        Ok((y, state))
    }

    /// Text table of blocks with their shapes, parameters and per-image MACs.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<16} {:<11} {:>16} {:>16} {:>12} {:>14}",
            "block", "kind", "input", "output", "params", "macs"
        );
        for n in &self.nodes {
            let b = &n.block;
            let (oh, ow) = b.out_hw();
            let _ = writeln!(
                s,
                "{:<16} {:<11} {:>16} {:>16} {:>12} {:>14}",
                b.name,
                b.spec.kind_name(),
                format!("{}x{}x{}", b.spec.cin(), b.in_hw.0, b.in_hw.1),
                format!("{}x{}x{}", b.spec.cout(), oh, ow),
                b.spec.params(),
                b.spec.macs(b.in_hw.0, b.in_hw.1),
            );
        }
        let total = cost(self);
        let _ = writeln!(s, "total params {} macs {}", total.params, total.macs);
        s
    }
}
