use super::{EventRecord, EventWindow};
use crate::error::{Error, Result};

/// Groups a time-ordered event stream into consecutive half-open windows of fixed
/// length. The first window starts at the largest multiple of the window length
/// not after the first event; windows with no events in between are still emitted.
pub struct WindowSplitter<I> {
    events: I,
    window_us: u64,
    width: usize,
    height: usize,
    pending: Option<EventRecord>,
    next_start: Option<u64>,
    done: bool,
}

impl<I> WindowSplitter<I>
where
    I: Iterator<Item = Result<EventRecord>>,
{
    pub fn new(events: I, window_us: u64, width: usize, height: usize) -> Result<Self> {
        if window_us == 0 {
            return Err(Error::Config("window length must be positive".into()));
        }
        Ok(WindowSplitter {
            events,
            window_us,
            width,
            height,
            pending: None,
            next_start: None,
            done: false,
        })
    }

    fn pull(&mut self) -> Result<Option<EventRecord>> {
        if let Some(e) = self.pending.take() {
            return Ok(Some(e));
        }
        if self.done {
            return Ok(None);
        }
        match self.events.next().transpose()? {
            Some(e) => Ok(Some(e)),
            None => {
                self.done = true;
                Ok(None)
            }
        }
    }

    fn next_window(&mut self) -> Result<Option<EventWindow>> {
        let first = match self.pull()? {
            Some(e) => e,
            None => return Ok(None),
        };
        let t_a = match self.next_start {
            Some(t) => t,
            None => first.t_us - first.t_us % self.window_us,
        };
        if first.t_us < t_a {
            return Err(Error::OutOfOrder(format!(
                "event at {}us precedes window start {t_a}us",
                first.t_us
            )));
        }
        let t_b = t_a + self.window_us;
        self.next_start = Some(t_b);
        let mut events = Vec::new();
        let mut cur = Some(first);
        while let Some(e) = cur {
            if e.t_us >= t_b {
                self.pending = Some(e);
                break;
            }
            events.push(e);
            cur = self.pull()?;
        }
        EventWindow::new(events, t_a, t_b, self.width, self.height).map(Some)
    }
}

impl<I> Iterator for WindowSplitter<I>
where
    I: Iterator<Item = Result<EventRecord>>,
{
    type Item = Result<EventWindow>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.next_window() {
            Ok(w) => w.map(Ok),
            Err(e) => {
                self.done = true;
                self.pending = None;
                Some(Err(e))
            }
        }
    }
}

/// Split an in-memory, time-ordered event list into windows.
pub fn window_split(events: &[EventRecord], window_us: u64, width: usize, height: usize) -> Result<Vec<EventWindow>> {
    WindowSplitter::new(events.iter().copied().map(Ok), window_us, width, height)?.collect()
}
