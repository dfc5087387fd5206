//! Backbone genomes: the searchable description of one network.
//!
//! A genome fixes the input encoding, the stem width and, for each of the four
//! backbone layers, a channel multiplier and a processing block with its
//! block-specific genes. Multipliers are stored in hundredths so that channel
//! derivation is exact integer arithmetic.
//!
//! String form:
//!
//! ```text
//! SHIST|Ch16|L1:maxvit,m2.00,r1|L2:mamba,m1.50,h1,hm1.0|L3:c2f,m1.75,r3|L4:wavemlp,m1.33,r3
//! ```

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::events::Encoding;
use crate::tensor::Rng;

pub const NUM_LAYERS: usize = 4;
pub const STEM_CHANNELS: [usize; 5] = [16, 24, 32, 40, 48];
/// Channel multipliers in hundredths.
pub const MULTIPLIERS: [u16; 7] = [100, 125, 133, 150, 166, 175, 200];
pub const REPEATS: [u8; 3] = [1, 2, 3];
pub const HEADS: [u8; 3] = [1, 2, 3];
/// Mamba head multipliers in hundredths.
pub const HEAD_MULTIPLIERS: [u16; 4] = [100, 125, 150, 200];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockKind {
    C2f,
    MaxViT,
    Mamba,
    WaveMLP,
}

impl BlockKind {
    pub const ALL: [BlockKind; 4] = [BlockKind::C2f, BlockKind::MaxViT, BlockKind::Mamba, BlockKind::WaveMLP];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn token(self) -> &'static str {
        match self {
            BlockKind::C2f => "c2f",
            BlockKind::MaxViT => "maxvit",
            BlockKind::Mamba => "mamba",
            BlockKind::WaveMLP => "wavemlp",
        }
    }

    fn from_token(s: &str) -> Option<Self> {
        BlockKind::ALL.into_iter().find(|k| k.token() == s)
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockKind::C2f => "C2f",
            BlockKind::MaxViT => "MaxViT",
            BlockKind::Mamba => "Mamba",
            BlockKind::WaveMLP => "WaveMLP",
        })
    }
}

/// The processing block of a layer together with the genes that only exist for it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockGene {
    C2f { repeats: u8 },
    MaxViT { repeats: u8 },
    Mamba { heads: u8, head_multiplier: u16 },
    WaveMLP { repeats: u8 },
}

impl BlockGene {
    pub fn kind(self) -> BlockKind {
        match self {
            BlockGene::C2f { .. } => BlockKind::C2f,
            BlockGene::MaxViT { .. } => BlockKind::MaxViT,
            BlockGene::Mamba { .. } => BlockKind::Mamba,
            BlockGene::WaveMLP { .. } => BlockKind::WaveMLP,
        }
    }

    pub fn repeats(self) -> Option<u8> {
        match self {
            BlockGene::C2f { repeats } | BlockGene::MaxViT { repeats } | BlockGene::WaveMLP { repeats } => {
                Some(repeats)
            }
            BlockGene::Mamba { .. } => None,
        }
    }

    fn with_repeats(kind: BlockKind, repeats: u8) -> Self {
        match kind {
            BlockKind::C2f => BlockGene::C2f { repeats },
            BlockKind::MaxViT => BlockGene::MaxViT { repeats },
            BlockKind::WaveMLP => BlockGene::WaveMLP { repeats },
            BlockKind::Mamba => unreachable!("mamba has no repeats gene"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LayerGene {
    /// Output/input channel ratio in hundredths.
    pub multiplier: u16,
    pub block: BlockGene,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Genome {
    encoding: Encoding,
    stem_ch: usize,
    layers: [LayerGene; NUM_LAYERS],
}

impl Genome {
    /// Build a genome, checking every gene against the full design space.
    pub fn new(encoding: Encoding, stem_ch: usize, layers: [LayerGene; NUM_LAYERS]) -> Result<Self> {
        let g = Genome {
            encoding,
            stem_ch,
            layers,
        };
        DesignSpace::default().check(&g)?;
        Ok(g)
    }

    pub fn encoding(&self) -> Encoding {
        self.encoding
    }

    pub fn stem_ch(&self) -> usize {
        self.stem_ch
    }

    pub fn layers(&self) -> &[LayerGene; NUM_LAYERS] {
        &self.layers
    }

    pub fn with_encoding(&self, encoding: Encoding) -> Genome {
        Genome {
            encoding,
            ..self.clone()
        }
    }

    /// Number of layers using each block kind, indexed by [`BlockKind::index`].
    pub fn block_counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for l in &self.layers {
            c[l.block.kind().index()] += 1;
        }
        c
    }
}

fn fmt_hundredths(v: u16, min_decimals: usize) -> String {
    let s = format!("{}.{:02}", v / 100, v % 100);
    if min_decimals == 1 && s.ends_with('0') {
        s[..s.len() - 1].to_string()
    } else {
        s
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|Ch{}", self.encoding, self.stem_ch)?;
        for (i, l) in self.layers.iter().enumerate() {
            write!(
                f,
                "|L{}:{},m{}",
                i + 1,
                l.block.kind().token(),
                fmt_hundredths(l.multiplier, 2)
            )?;
            match l.block {
                BlockGene::Mamba { heads, head_multiplier } => {
                    write!(f, ",h{heads},hm{}", fmt_hundredths(head_multiplier, 1))?
                }
                b => write!(f, ",r{}", b.repeats().unwrap())?,
            }
        }
        Ok(())
    }
}

/// A token of the genome string with its 1-based column.
#[derive(Clone, Copy)]
struct Tok<'a> {
    text: &'a str,
    col: usize,
}

impl<'a> Tok<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(
            format!("column {}", self.col),
            format!("{} in '{}'", msg.into(), self.text),
        )
    }

    fn split(&self, sep: char) -> Vec<Tok<'a>> {
        let mut out = Vec::new();
        let mut start = 0;
        for (i, c) in self.text.char_indices() {
            if c == sep {
                out.push(Tok {
                    text: &self.text[start..i],
                    col: self.col + start,
                });
                start = i + 1;
            }
        }
        out.push(Tok {
            text: &self.text[start..],
            col: self.col + start,
        });
        out
    }

    fn strip(&self, prefix: &str) -> Result<Tok<'a>> {
        match self.text.strip_prefix(prefix) {
            Some(rest) => Ok(Tok {
                text: rest,
                col: self.col + prefix.len(),
            }),
            None => Err(self.err(format!("expected prefix '{prefix}'"))),
        }
    }

    fn int<T: FromStr>(&self) -> Result<T> {
        if self.text.is_empty() || !self.text.bytes().all(|b| b.is_ascii_digit()) {
            return Err(self.err("expected an unsigned integer"));
        }
        self.text.parse().map_err(|_| self.err("integer out of range"))
    }

    /// A decimal with at most two fractional digits, in hundredths.
    fn hundredths(&self) -> Result<u16> {
        let (whole, frac) = self.text.split_once('.').unwrap_or((self.text, ""));
        let ok = !whole.is_empty()
            && whole.bytes().all(|b| b.is_ascii_digit())
            && frac.len() <= 2
            && frac.bytes().all(|b| b.is_ascii_digit());
        if !ok || whole.len() > 3 {
            return Err(self.err("expected a decimal with at most two fractional digits"));
        }
        let w: u16 = whole.parse().unwrap();
        let f: u16 = format!("{frac:0<2}").parse().unwrap();
        Ok(w * 100 + f)
    }
}

fn parse_layer(tok: Tok<'_>, index: usize) -> Result<LayerGene> {
    let label = format!("L{}", index + 1);
    let (head, body) = match tok.text.split_once(':') {
        Some((h, _)) => (
            h,
            Tok {
                text: &tok.text[h.len() + 1..],
                col: tok.col + h.len() + 1,
            },
        ),
        None => return Err(tok.err("expected 'L<n>:'")),
    };
    if head != label {
        return Err(tok.err(format!("expected layer label '{label}'")));
    }
    let fields = body.split(',');
    let kind = BlockKind::from_token(fields[0].text).ok_or_else(|| fields[0].err("unknown block"))?;
    let expected = if kind == BlockKind::Mamba { 4 } else { 3 };
    if fields.len() != expected {
        return Err(body.err(format!(
            "{} takes {} fields, got {}",
            kind.token(),
            expected,
            fields.len()
        )));
    }
    let multiplier = fields[1].strip("m")?.hundredths()?;
    if !MULTIPLIERS.contains(&multiplier) {
        return Err(fields[1].err("multiplier outside the design space"));
    }
    let block = if kind == BlockKind::Mamba {
        let heads: u8 = fields[2].strip("h")?.int()?;
        if !HEADS.contains(&heads) {
            return Err(fields[2].err("heads outside the design space"));
        }
        let head_multiplier = fields[3].strip("hm")?.hundredths()?;
        if !HEAD_MULTIPLIERS.contains(&head_multiplier) {
            return Err(fields[3].err("head multiplier outside the design space"));
        }
        BlockGene::Mamba { heads, head_multiplier }
    } else {
        let repeats: u8 = fields[2].strip("r")?.int()?;
        if !REPEATS.contains(&repeats) {
            return Err(fields[2].err("repeats outside the design space"));
        }
        BlockGene::with_repeats(kind, repeats)
    };
    Ok(LayerGene { multiplier, block })
}

impl FromStr for Genome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let root = Tok {
            text: s.trim_end(),
            col: 1,
        };
        let parts = root.split('|');
        if parts.len() != 2 + NUM_LAYERS {
            return Err(root.err(format!(
                "expected encoding, stem and {NUM_LAYERS} layers, got {} fields",
                parts.len()
            )));
        }
        let encoding: Encoding = parts[0].text.parse().map_err(|_| parts[0].err("unknown encoding"))?;
        if parts[0].text != encoding.as_str() {
            return Err(parts[0].err("encoding must be upper case"));
        }
        let stem_ch: usize = parts[1].strip("Ch")?.int()?;
        if !STEM_CHANNELS.contains(&stem_ch) {
            return Err(parts[1].err("stem channels outside the design space"));
        }
        let mut layers = [LayerGene {
            multiplier: 100,
            block: BlockGene::C2f { repeats: 1 },
        }; NUM_LAYERS];
        for (i, l) in layers.iter_mut().enumerate() {
            *l = parse_layer(parts[2 + i], i)?;
        }
        Ok(Genome {
            encoding,
            stem_ch,
            layers,
        })
    }
}

/// The domains sampling and mutation draw from. Restricting a domain to one value
/// freezes that gene; the default is the full space with the encoding frozen to SHIST.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignSpace {
    pub encodings: Vec<Encoding>,
    pub stem_channels: Vec<usize>,
    pub multipliers: Vec<u16>,
    pub blocks: Vec<BlockKind>,
    pub repeats: Vec<u8>,
    pub heads: Vec<u8>,
    pub head_multipliers: Vec<u16>,
    /// Only consulted by [`design_space_size`]; genomes always have four layers.
    pub num_layers: usize,
}

impl Default for DesignSpace {
    fn default() -> Self {
        DesignSpace {
            encodings: Encoding::ALL.to_vec(),
            stem_channels: STEM_CHANNELS.to_vec(),
            multipliers: MULTIPLIERS.to_vec(),
            blocks: BlockKind::ALL.to_vec(),
            repeats: REPEATS.to_vec(),
            heads: HEADS.to_vec(),
            head_multipliers: HEAD_MULTIPLIERS.to_vec(),
            num_layers: NUM_LAYERS,
        }
    }
}

fn pick_other<T: Copy + PartialEq>(rng: &mut Rng, domain: &[T], current: T) -> T {
    let others: Vec<T> = domain.iter().copied().filter(|&v| v != current).collect();
    *rng.choose(&others)
}

fn alternatives<T: PartialEq>(domain: &[T], current: &T) -> bool {
    domain.iter().any(|v| v != current)
}

/// One mutable gene group.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Gene {
    Encoding,
    Stem,
    Multiplier(usize),
    Block(usize),
    Repeats(usize),
    Heads(usize),
    HeadMultiplier(usize),
}

impl DesignSpace {
    /// The full space with the encoding gene frozen.
    pub fn frozen(encoding: Encoding) -> Self {
        DesignSpace {
            encodings: vec![encoding],
            ..Default::default()
        }
    }

    fn check_domains(&self) -> Result<()> {
        let empty = self.encodings.is_empty()
            || self.stem_channels.is_empty()
            || self.multipliers.is_empty()
            || self.blocks.is_empty()
            || (self.blocks.iter().any(|&b| b != BlockKind::Mamba) && self.repeats.is_empty())
            || (self.blocks.contains(&BlockKind::Mamba) && (self.heads.is_empty() || self.head_multipliers.is_empty()));
        if empty {
            return Err(Error::Config("design space has an empty domain".into()));
        }
        let full = DesignSpace::default();
        let within = self.stem_channels.iter().all(|v| full.stem_channels.contains(v))
            && self.multipliers.iter().all(|v| full.multipliers.contains(v))
            && self.repeats.iter().all(|v| full.repeats.contains(v))
            && self.heads.iter().all(|v| full.heads.contains(v))
            && self.head_multipliers.iter().all(|v| full.head_multipliers.contains(v));
        if !within {
            return Err(Error::Config(
                "design space domain value outside the supported set".into(),
            ));
        }
        Ok(())
    }

    /// Error unless every gene of `g` lies in this space.
    pub fn check(&self, g: &Genome) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("{what} of {g} outside the design space")));
        if !self.encodings.contains(&g.encoding) {
            return bad("encoding");
        }
        if !self.stem_channels.contains(&g.stem_ch) {
            return bad("stem channels");
        }
        for l in &g.layers {
            if !self.multipliers.contains(&l.multiplier) || !self.blocks.contains(&l.block.kind()) {
                return bad("a layer");
            }
            let ok = match l.block {
                BlockGene::Mamba { heads, head_multiplier } => {
                    self.heads.contains(&heads) && self.head_multipliers.contains(&head_multiplier)
                }
                b => self.repeats.contains(&b.repeats().unwrap()),
            };
            if !ok {
                return bad("a block gene");
            }
        }
        Ok(())
    }

    fn sample_block(&self, kind: BlockKind, rng: &mut Rng) -> BlockGene {
        match kind {
            BlockKind::Mamba => BlockGene::Mamba {
                heads: *rng.choose(&self.heads),
                head_multiplier: *rng.choose(&self.head_multipliers),
            },
            k => BlockGene::with_repeats(k, *rng.choose(&self.repeats)),
        }
    }

    /// Draw every gene uniformly from its domain.
    pub fn sample(&self, rng: &mut Rng) -> Result<Genome> {
        self.check_domains()?;
        let encoding = *rng.choose(&self.encodings);
        let stem_ch = *rng.choose(&self.stem_channels);
        let mut layers = [LayerGene {
            multiplier: 100,
            block: BlockGene::C2f { repeats: 1 },
        }; NUM_LAYERS];
        for l in layers.iter_mut() {
            let multiplier = *rng.choose(&self.multipliers);
            let kind = *rng.choose(&self.blocks);
            *l = LayerGene {
                multiplier,
                block: self.sample_block(kind, rng),
            };
        }
        Ok(Genome {
            encoding,
            stem_ch,
            layers,
        })
    }

    fn mutable_genes(&self, g: &Genome) -> Vec<Gene> {
        let mut genes = Vec::new();
        if alternatives(&self.encodings, &g.encoding) {
            genes.push(Gene::Encoding);
        }
        if alternatives(&self.stem_channels, &g.stem_ch) {
            genes.push(Gene::Stem);
        }
        for (i, l) in g.layers.iter().enumerate() {
            if alternatives(&self.multipliers, &l.multiplier) {
                genes.push(Gene::Multiplier(i));
            }
            if alternatives(&self.blocks, &l.block.kind()) {
                genes.push(Gene::Block(i));
            }
            match l.block {
                BlockGene::Mamba { heads, head_multiplier } => {
                    if alternatives(&self.heads, &heads) {
                        genes.push(Gene::Heads(i));
                    }
                    if alternatives(&self.head_multipliers, &head_multiplier) {
                        genes.push(Gene::HeadMultiplier(i));
                    }
                }
                b => {
                    if alternatives(&self.repeats, &b.repeats().unwrap()) {
                        genes.push(Gene::Repeats(i));
                    }
                }
            }
        }
        genes
    }

    /// Change exactly one gene group to a different legal value. A block change
    /// resamples the genes that belong to the new block. Returns the input unchanged
    /// only when the space has a single point.
    pub fn mutate(&self, g: &Genome, rng: &mut Rng) -> Genome {
        let genes = self.mutable_genes(g);
        let mut out = g.clone();
        if genes.is_empty() {
            return out;
        }
        match *rng.choose(&genes) {
            Gene::Encoding => out.encoding = pick_other(rng, &self.encodings, g.encoding),
            Gene::Stem => out.stem_ch = pick_other(rng, &self.stem_channels, g.stem_ch),
            Gene::Multiplier(i) => {
                out.layers[i].multiplier = pick_other(rng, &self.multipliers, g.layers[i].multiplier)
            }
            Gene::Block(i) => {
                let kind = pick_other(rng, &self.blocks, g.layers[i].block.kind());
                out.layers[i].block = self.sample_block(kind, rng);
            }
            Gene::Repeats(i) => {
                let b = g.layers[i].block;
                out.layers[i].block =
                    BlockGene::with_repeats(b.kind(), pick_other(rng, &self.repeats, b.repeats().unwrap()));
            }
            Gene::Heads(i) => {
                if let BlockGene::Mamba { heads, head_multiplier } = g.layers[i].block {
                    out.layers[i].block = BlockGene::Mamba {
                        heads: pick_other(rng, &self.heads, heads),
                        head_multiplier,
                    };
                }
            }
            Gene::HeadMultiplier(i) => {
                if let BlockGene::Mamba { heads, head_multiplier } = g.layers[i].block {
                    out.layers[i].block = BlockGene::Mamba {
                        heads,
                        head_multiplier: pick_other(rng, &self.head_multipliers, head_multiplier),
                    };
                }
            }
        }
        out
    }

    /// Number of distinct (multiplier, block, block genes) choices for one layer.
    pub fn layer_choices(&self) -> u128 {
        let per_block: u128 = self
            .blocks
            .iter()
            .map(|&b| match b {
                BlockKind::Mamba => (self.heads.len() * self.head_multipliers.len()) as u128,
                _ => self.repeats.len() as u128,
            })
            .sum();
        self.multipliers.len() as u128 * per_block
    }
}

/// Exact size of the combinatorial product the sampler draws from, saturating at `u128::MAX`.
pub fn design_space_size(space: &DesignSpace) -> u128 {
    let layers = space
        .layer_choices()
        .checked_pow(space.num_layers as u32)
        .unwrap_or(u128::MAX);
    (space.encodings.len() as u128 * space.stem_channels.len() as u128).saturating_mul(layers)
}

/// `round(cin * multiplier)` to the nearest multiple of 8 with ties rounding up, at least 8.
pub fn scale_channels(cin: usize, multiplier: u16) -> usize {
    let v = cin * multiplier as usize;
    let mut q = v / 800;
    if 2 * (v % 800) >= 800 {
        q += 1;
    }
    8 * q.max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerChannels {
    pub cin: usize,
    pub cout: usize,
    /// Effective head count, for Mamba layers only.
    pub heads: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivedChannels {
    /// Channels of the encoded input tensor.
    pub input: usize,
    pub stem: usize,
    pub layers: [LayerChannels; NUM_LAYERS],
    /// Output channels of the four neck C2f blocks.
    pub panet: [usize; 4],
}

impl DerivedChannels {
    pub fn ladder(&self) -> Vec<usize> {
        std::iter::once(self.stem)
            .chain(self.layers.iter().map(|l| l.cout))
            .collect()
    }
}

/// Channel ladder of a genome for encodings with `bins` temporal bins.
///
/// The first Mamba layer takes its heads gene directly; each later Mamba layer uses
/// `round(head_multiplier * heads of the previous Mamba layer)`, halves up, at least 1.
pub fn derive_channels(g: &Genome, bins: usize) -> DerivedChannels {
    let mut layers = [LayerChannels {
        cin: 0,
        cout: 0,
        heads: None,
    }; NUM_LAYERS];
    let mut cin = g.stem_ch;
    let mut prev_heads: Option<usize> = None;
    for (slot, l) in layers.iter_mut().zip(&g.layers) {
        let cout = scale_channels(cin, l.multiplier);
        let heads = match l.block {
            BlockGene::Mamba { heads, head_multiplier } => {
                let h = match prev_heads {
                    None => heads as usize,
                    Some(p) => ((p * head_multiplier as usize + 50) / 100).max(1),
                };
                prev_heads = Some(h);
                Some(h)
            }
            _ => None,
        };
        *slot = LayerChannels { cin, cout, heads };
        cin = cout;
    }
    let s = g.stem_ch;
    DerivedChannels {
        input: g.encoding.channels(bins),
        stem: s,
        layers,
        panet: [8 * s, 4 * s, 8 * s, 16 * s],
    }
}
