use super::stats::StatsTracker;
use super::{Chunk, StreamHeader, StreamStats, TransportError};
use crate::clock;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq)]
pub struct OutletOptions {
    /// Samples held between outlet and inlet before the oldest chunk is
    /// evicted.
    pub capacity_samples: usize,
    /// Fault injection: discard every n-th pushed chunk.
    pub drop_every: Option<u64>,
    /// Lossy-link simulation: discard each chunk with this probability.
    pub drop_prob: f64,
    pub seed: u64,
}

impl Default for OutletOptions {
    fn default() -> Self {
        Self { capacity_samples: 1 << 17, drop_every: None, drop_prob: 0.0, seed: 0 }
    }
}

pub(crate) struct Shared {
    pub(crate) header: StreamHeader,
    state: Mutex<BufState>,
    cv: Condvar,
    pub(crate) reader_attached: AtomicBool,
}

struct BufState {
    chunks: VecDeque<(Chunk, Instant)>,
    buffered: usize,
    capacity: usize,
    closed: bool,
}

impl Shared {
    pub(crate) fn new(header: StreamHeader, capacity: usize) -> Arc<Self> {
        Arc::new(Self {
            header,
            state: Mutex::new(BufState {
                chunks: VecDeque::new(),
                buffered: 0,
                capacity: capacity.max(1),
                closed: false,
            }),
            cv: Condvar::new(),
            reader_attached: AtomicBool::new(false),
        })
    }

    fn push(&self, chunk: Chunk) {
        let mut st = self.state.lock().unwrap();
        st.buffered += chunk.len();
        st.chunks.push_back((chunk, Instant::now()));
        while st.buffered > st.capacity && st.chunks.len() > 1 {
            let (old, _) = st.chunks.pop_front().unwrap();
            st.buffered -= old.len();
        }
        drop(st);
        self.cv.notify_all();
    }

    pub(crate) fn close(&self) {
        self.state.lock().unwrap().closed = true;
        self.cv.notify_all();
    }
}

/// Writing end of a stream. Validates ordering and shape of every chunk.
pub struct Outlet {
    header: StreamHeader,
    shared: Arc<Shared>,
    opts: OutletOptions,
    last_end: Option<u64>,
    last_t0: Option<f64>,
    nominal_end: Option<f64>,
    pushed: u64,
    discarded_chunks: u64,
    discarded_samples: u64,
    rng: ChaCha8Rng,
    on_close: Option<Box<dyn FnOnce() + Send>>,
}

impl std::fmt::Debug for Outlet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Outlet").field("header", &self.header).field("pushed", &self.pushed).finish()
    }
}

impl Outlet {
    pub(crate) fn new(shared: Arc<Shared>, opts: OutletOptions) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(opts.seed);
        Self {
            header: shared.header.clone(),
            shared,
            opts,
            last_end: None,
            last_t0: None,
            nominal_end: None,
            pushed: 0,
            discarded_chunks: 0,
            discarded_samples: 0,
            rng,
            on_close: None,
        }
    }

    pub(crate) fn set_on_close(&mut self, f: Box<dyn FnOnce() + Send>) {
        self.on_close = Some(f);
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    /// Sequence number the next contiguous chunk should carry.
    pub fn next_seq(&self) -> u64 {
        self.last_end.unwrap_or(0)
    }

    pub fn discarded_chunks(&self) -> u64 {
        self.discarded_chunks
    }

    pub fn discarded_samples(&self) -> u64 {
        self.discarded_samples
    }

    pub fn push_chunk(&mut self, chunk: Chunk) -> Result<(), TransportError> {
        if chunk.samples.nrows() != self.header.n_channels {
            return Err(TransportError::Shape { expected: self.header.n_channels, found: chunk.samples.nrows() });
        }
        if let Some(end) = self.last_end {
            if chunk.seq < end {
                return Err(TransportError::NonMonotonicSeq { expected_at_least: end, got: chunk.seq });
            }
        }
        if let Some(last) = self.last_t0 {
            if !(chunk.t0 >= last) {
                return Err(TransportError::NonMonotonicTime { last, got: chunk.t0 });
            }
        }
        self.last_end = Some(chunk.seq + chunk.len() as u64);
        self.last_t0 = Some(chunk.t0);
        self.nominal_end = Some(chunk.t0 + chunk.len() as f64 / self.header.fs_nominal);
        self.pushed += 1;

        let forced = self.opts.drop_every.is_some_and(|n| n > 0 && self.pushed % n == 0);
        let random = self.opts.drop_prob > 0.0 && self.rng.gen::<f64>() < self.opts.drop_prob;
        if forced || random {
            self.discarded_chunks += 1;
            self.discarded_samples += chunk.len() as u64;
            return Ok(());
        }
        self.shared.push(chunk);
        Ok(())
    }

    /// Pushes a block stamped with the next sequence number and the current
    /// clock, or the nominal end of the previous block if that is later, so
    /// per-sample timestamps never run backwards.
    pub fn push_samples(&mut self, samples: DMatrix<f32>) -> Result<(), TransportError> {
        let t0 = self.nominal_end.map_or(clock::now_s(), |e| e.max(clock::now_s()));
        let chunk = Chunk { t0, seq: self.next_seq(), samples };
        self.push_chunk(chunk)
    }
}

impl Drop for Outlet {
    fn drop(&mut self) {
        self.shared.close();
        if let Some(f) = self.on_close.take() {
            f();
        }
    }
}

/// A pulled block of contiguous samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub samples: DMatrix<f32>,
    /// Timestamp of the first sample.
    pub t0: f64,
    /// Sequence number of the first sample.
    pub seq: u64,
    /// When the last sample of the window reached the inlet's buffer.
    pub last_arrival: Instant,
}

/// Reading end of a stream.
pub struct Inlet {
    header: StreamHeader,
    shared: Arc<Shared>,
    pending: VecDeque<(Chunk, Instant)>,
    front_offset: usize,
    pending_len: usize,
    tracker: StatsTracker,
    window: Option<StatsTracker>,
    opened_at: Instant,
    _worker: Option<JoinHandle<()>>,
}

impl std::fmt::Debug for Inlet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Inlet").field("header", &self.header).finish()
    }
}

impl Inlet {
    pub(crate) fn new(shared: Arc<Shared>) -> Result<Self, TransportError> {
        if shared.reader_attached.swap(true, Ordering::SeqCst) {
            return Err(TransportError::AlreadyConnected(shared.header.name.clone()));
        }
        Ok(Self {
            header: shared.header.clone(),
            shared,
            pending: VecDeque::new(),
            front_offset: 0,
            pending_len: 0,
            tracker: StatsTracker::default(),
            window: None,
            opened_at: Instant::now(),
            _worker: None,
        })
    }

    pub(crate) fn attach_worker(&mut self, h: JoinHandle<()>) {
        self._worker = Some(h);
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    /// Cumulative statistics since the inlet was opened.
    pub fn stats(&self) -> StreamStats {
        self.tracker.stats(self.opened_at.elapsed().as_secs_f64())
    }

    pub(crate) fn begin_window(&mut self) {
        self.window = Some(self.tracker.continuing());
    }

    pub(crate) fn end_window(&mut self) -> StatsTracker {
        self.window.take().unwrap_or_default()
    }

    /// Moves everything the outlet has published into the local queue.
    /// Returns whether the stream is closed.
    fn ingest(&mut self, st: &mut BufState) -> bool {
        while let Some((chunk, at)) = st.chunks.pop_front() {
            st.buffered -= chunk.len();
            self.tracker.record(&chunk, at);
            if let Some(w) = self.window.as_mut() {
                w.record(&chunk, at);
            }
            self.pending_len += chunk.len();
            self.pending.push_back((chunk, at));
        }
        st.closed
    }

    /// Blocks until `predicate(pending_len, closed)` holds or `timeout`
    /// passes; returns the final closed flag.
    fn wait_for(&mut self, n: usize, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let shared = Arc::clone(&self.shared);
        let mut st = shared.state.lock().unwrap();
        loop {
            let closed = self.ingest(&mut st);
            if self.pending_len >= n || closed {
                return closed;
            }
            let now = Instant::now();
            if now >= deadline {
                return closed;
            }
            st = shared.cv.wait_timeout(st, deadline - now).unwrap().0;
        }
    }

    /// Pulls exactly `n` samples, waiting up to `timeout`. On timeout nothing
    /// is consumed.
    pub fn pull_window(&mut self, n: usize, timeout: Duration) -> Result<Window, TransportError> {
        if n == 0 {
            return Err(TransportError::InvalidRequest("window length must be >= 1".into()));
        }
        let closed = self.wait_for(n, timeout);
        if self.pending_len < n {
            return if closed {
                Err(TransportError::Closed)
            } else {
                Err(TransportError::Timeout { requested: n, available: self.pending_len })
            };
        }
        Ok(self.take(n))
    }

    /// Pulls whatever is buffered (at least one sample), waiting up to
    /// `timeout` for the first. `Ok(None)` means nothing arrived in time.
    pub fn pull_available(&mut self, timeout: Duration) -> Result<Option<Window>, TransportError> {
        let closed = self.wait_for(1, timeout);
        if self.pending_len == 0 {
            return if closed { Err(TransportError::Closed) } else { Ok(None) };
        }
        let n = self.pending_len;
        Ok(Some(self.take(n)))
    }

    /// Pulls the next chunk as it was pushed (or its unconsumed tail),
    /// preserving sequence gaps. `Ok(None)` means nothing arrived in time.
    pub fn pull_chunk(&mut self, timeout: Duration) -> Result<Option<Chunk>, TransportError> {
        let closed = self.wait_for(1, timeout);
        if self.pending_len == 0 {
            return if closed { Err(TransportError::Closed) } else { Ok(None) };
        }
        let (chunk, _) = self.pending.front().unwrap();
        let n = chunk.len() - self.front_offset;
        let w = self.take(n);
        Ok(Some(Chunk { t0: w.t0, seq: w.seq, samples: w.samples }))
    }

    fn take(&mut self, n: usize) -> Window {
        let ch = self.header.n_channels;
        let mut samples = DMatrix::<f32>::zeros(ch, n);
        let (first, _) = self.pending.front().expect("pending data");
        let fs = self.header.fs_nominal;
        let t0 = first.t0 + self.front_offset as f64 / fs;
        let seq = first.seq + self.front_offset as u64;
        let mut filled = 0;
        let mut last_arrival = Instant::now();
        while filled < n {
            let (chunk, at) = self.pending.front().unwrap();
            let avail = chunk.len() - self.front_offset;
            let take = avail.min(n - filled);
            samples
                .columns_mut(filled, take)
                .copy_from(&chunk.samples.columns(self.front_offset, take));
            filled += take;
            last_arrival = *at;
            if take == avail {
                self.pending.pop_front();
                self.front_offset = 0;
            } else {
                self.front_offset += take;
            }
        }
        self.pending_len -= n;
        Window { samples, t0, seq, last_arrival }
    }
}

/// Connected outlet/inlet pair that is not registered under any name.
pub fn stream_pair(header: StreamHeader, opts: OutletOptions) -> Result<(Outlet, Inlet), TransportError> {
    header.validate()?;
    let shared = Shared::new(header, opts.capacity_samples);
    let inlet = Inlet::new(Arc::clone(&shared))?;
    Ok((Outlet::new(shared, opts), inlet))
}
