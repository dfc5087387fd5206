use super::{EncodedTensor, Encoding, EventWindow, Polarity};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check_bins(bins: usize) -> Result<()> {
    if bins == 0 {
        return Err(Error::Config("bins must be at least 1".into()));
    }
    Ok(())
}

/// Encode a window with one of the stateless encoders, or a fresh TAF encoder.
pub fn encode(w: &EventWindow, format: Encoding, bins: usize) -> Result<EncodedTensor> {
    match format {
        Encoding::Vtei => encode_vtei(w, bins),
        Encoding::Mdes => encode_mdes(w, bins),
        Encoding::Shist => encode_shist(w, bins),
        Encoding::Taf => TafEncoder::new(w.width(), w.height(), bins)?.push_window(w),
    }
}

/// Volume of ternary event images: `[B, H, W]`, each cell holding the polarity of
/// the last event that landed in it, or 0.
pub fn encode_vtei(w: &EventWindow, bins: usize) -> Result<EncodedTensor> {
    check_bins(bins)?;
    let (h, wd) = (w.height(), w.width());
    let mut data = vec![0.0f32; bins * h * wd];
    for e in w.events() {
        let b = w.bin_of(e.t_us, bins);
        data[(b * h + e.y as usize) * wd + e.x as usize] = e.p.sign() as f32;
    }
    Ok(EncodedTensor {
        format: Encoding::Vtei,
        bins,
        tensor: Tensor::from_parts(vec![bins, h, wd], data),
    })
}

/// Number of trailing events each mixed-density stack sees: `floor(N / 2^(b-1))`.
pub fn mdes_stack_lengths(n_events: usize, bins: usize) -> Vec<usize> {
    (0..bins)
        .map(|b| if b >= usize::BITS as usize { 0 } else { n_events >> b })
        .collect()
}

/// Mixed-density event stacks: `[B, H, W]`. Stack `b` replays the last
/// `floor(N / 2^(b-1))` events, keeping the last event per pixel
/// (255 positive, 127 negative, 0 absent).
pub fn encode_mdes(w: &EventWindow, bins: usize) -> Result<EncodedTensor> {
    check_bins(bins)?;
    let (h, wd) = (w.height(), w.width());
    let plane = h * wd;
    let events = w.events();
    let mut data = vec![0.0f32; bins * plane];
    for (b, n) in mdes_stack_lengths(events.len(), bins).into_iter().enumerate() {
        let stack = &mut data[b * plane..(b + 1) * plane];
        for e in &events[events.len() - n..] {
            stack[e.y as usize * wd + e.x as usize] = match e.p {
                Polarity::Positive => 255.0,
                Polarity::Negative => 127.0,
            };
        }
    }
    Ok(EncodedTensor {
        format: Encoding::Mdes,
        bins,
        tensor: Tensor::from_parts(vec![bins, h, wd], data),
    })
}

/// Stacked histogram: `[2T, H, W]` event counts per (polarity, time bin, pixel),
/// saturating at 255. Channel index is `polarity_index * T + bin`.
pub fn encode_shist(w: &EventWindow, bins: usize) -> Result<EncodedTensor> {
    check_bins(bins)?;
    let (h, wd) = (w.height(), w.width());
    let mut counts = vec![0u8; 2 * bins * h * wd];
    for e in w.events() {
        let ch = e.p.index() * bins + w.bin_of(e.t_us, bins);
        let c = &mut counts[(ch * h + e.y as usize) * wd + e.x as usize];
        *c = c.saturating_add(1);
    }
    Ok(EncodedTensor {
        format: Encoding::Shist,
        bins,
        tensor: Tensor::from_parts(vec![2 * bins, h, wd], counts.into_iter().map(f32::from).collect()),
    })
}

/// Temporal active focus: a FIFO of the `K` most recent event timestamps per
/// (polarity, pixel), carried across consecutive windows.
///
/// Output channel `polarity_index * K + j` holds the normalized age of the
/// `j`-th most recent stored event (`j = 0` newest):
/// `(t_b - t_j) / (t_b - t_a + 1)`, which lies in `(0, 1)` for events inside the
/// current window. Slots that are empty, or whose event predates the window, read `-1`.
#[derive(Clone, Debug)]
pub struct TafEncoder {
    width: usize,
    height: usize,
    depth: usize,
    /// `[2, H, W, K]` timestamps, newest first; `len` tracks occupancy.
    stamps: Vec<u64>,
    len: Vec<u8>,
    last_t_b: Option<u64>,
}

impl TafEncoder {
    pub fn new(width: usize, height: usize, depth: usize) -> Result<Self> {
        check_bins(depth)?;
        if depth > u8::MAX as usize {
            return Err(Error::Config(format!("TAF depth {depth} exceeds 255")));
        }
        let cells = 2 * width * height;
        Ok(TafEncoder {
            width,
            height,
            depth,
            stamps: vec![0; cells * depth],
            len: vec![0; cells],
            last_t_b: None,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Number of timestamps currently queued for one (polarity, pixel).
    pub fn queue_len(&self, p: Polarity, x: usize, y: usize) -> usize {
        self.len[(p.index() * self.height + y) * self.width + x] as usize
    }

    pub fn push_window(&mut self, w: &EventWindow) -> Result<EncodedTensor> {
        if w.width() != self.width || w.height() != self.height {
            return Err(Error::Config(format!(
                "window geometry {}x{} differs from encoder {}x{}",
                w.width(),
                w.height(),
                self.width,
                self.height
            )));
        }
        if let Some(prev) = self.last_t_b {
            if w.t_a() < prev {
                return Err(Error::OutOfOrder(format!(
                    "window starts at {}us before previous end {prev}us",
                    w.t_a()
                )));
            }
        }
        let k = self.depth;
        for e in w.events() {
            let cell = (e.p.index() * self.height + e.y as usize) * self.width + e.x as usize;
            let q = &mut self.stamps[cell * k..(cell + 1) * k];
            q.copy_within(0..k - 1, 1);
            q[0] = e.t_us;
            let l = &mut self.len[cell];
            *l = (*l + 1).min(k as u8);
        }
        self.last_t_b = Some(w.t_b());

        let plane = self.height * self.width;
        let span = (w.t_b() - w.t_a() + 1) as f64;
        let mut data = vec![-1.0f32; 2 * k * plane];
        for p in 0..2 {
            for pix in 0..plane {
                let cell = p * plane + pix;
                let q = &self.stamps[cell * k..(cell + 1) * k];
                for (j, &t) in q.iter().take(self.len[cell] as usize).enumerate() {
                    if t < w.t_a() {
                        break;
                    }
                    data[(p * k + j) * plane + pix] = ((w.t_b() - t) as f64 / span) as f32;
                }
            }
        }
        Ok(EncodedTensor {
            format: Encoding::Taf,
            bins: k,
            tensor: Tensor::from_parts(vec![2 * k, self.height, self.width], data),
        })
    }
}
