//! Seeded randomness and homogeneous Poisson point processes.
//!
//! Every random draw in the crate goes through [`SimRng`], a ChaCha8 stream
//! cipher generator. ChaCha8 output for a given key is fixed by its published
//! definition, so identical seeds give identical draws everywhere.
//!
//! Independent streams ("lanes") are derived from a master seed with
//! [`derive_seed`]: the words `(master, replication, lane tag, lane index)` are
//! folded through the SplitMix64 finalizer
//!
//! ```text
//! h = master
//! for w in [replication, tag, index]:
//!     h = splitmix64(h ^ splitmix64(w + 0x9E3779B97F4A7C15))
//! ```
//!
//! and the result seeds the generator via `SeedableRng::seed_from_u64`.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Named random streams used by one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lane {
    /// Arrival times and lifetimes of one agent type.
    Arrivals(usize),
    /// Policy randomness (type orders and Bernoulli checks).
    Decisions,
    /// Instrumentation-only Poisson clocks for one agent type.
    Diagnostics(usize),
    /// Free-form lane for tests and tools.
    Custom(u64),
}

impl Lane {
    fn words(self) -> (u64, u64) {
        match self {
            Lane::Arrivals(x) => (1, x as u64),
            Lane::Decisions => (2, 0),
            Lane::Diagnostics(x) => (3, x as u64),
            Lane::Custom(k) => (4, k),
        }
    }
}

pub fn derive_seed(master: u64, replication: u64, lane: Lane) -> u64 {
    let (tag, index) = lane.words();
    [replication, tag, index]
        .into_iter()
        .fold(master, |h, w| splitmix64(h ^ splitmix64(w.wrapping_add(GOLDEN))))
}

/// The seed for replication `r` of an experiment with master seed `m`.
pub fn replication_seed(master: u64, replication: u64) -> u64 {
    derive_seed(master, replication, Lane::Custom(0))
}

#[derive(Debug, Clone)]
pub struct SimRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn lane(master: u64, replication: u64, lane: Lane) -> Self {
        Self::new(derive_seed(master, replication, lane))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform on (0, 1].
    pub fn uniform_open_closed(&mut self) -> f64 {
        1.0 - self.inner.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn exponential(&mut self, rate: f64) -> Result<f64> {
        let u = self.uniform_open_closed();
        exponential_from_uniform(rate, u)
    }
}

impl RngCore for SimRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Inverse-CDF exponential draw `-ln(u) / rate` for `u` in (0, 1].
pub fn exponential_from_uniform(rate: f64, u: f64) -> Result<f64> {
    if !(rate > 0.0) || rate.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "exponential rate must be positive, got {rate}"
        )));
    }
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "uniform draw must lie in (0, 1], got {u}"
        )));
    }
    // -ln(1) is -0.0; normalize so the duration is a clean zero
    Ok((-u.ln() / rate).max(0.0))
}

pub fn sample_exponential(rate: f64, rng: &mut SimRng) -> Result<f64> {
    rng.exponential(rate)
}

/// A realized point process: strictly increasing nonnegative times.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub label: String,
    pub times: Vec<f64>,
}

impl EventStream {
    pub fn new(label: impl Into<String>, times: Vec<f64>) -> Result<Self> {
        let s = Self {
            label: label.into(),
            times,
        };
        s.check_sorted()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn check_sorted(&self) -> Result<()> {
        let bad = |position| Error::UnsortedStream {
            label: self.label.clone(),
            position,
        };
        if let Some(&t0) = self.times.first() {
            if !(t0 >= 0.0) {
                return Err(bad(0));
            }
        }
        for (i, w) in self.times.windows(2).enumerate() {
            if !(w[0] < w[1]) {
                return Err(bad(i + 1));
            }
        }
        Ok(())
    }

    /// `time,label` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "label"])?;
        for t in &self.times {
            w.write_record([t.to_string(), self.label.clone()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Homogeneous Poisson process on [0, horizon] built from exponential gaps.
pub fn sample_homogeneous_stream(
    rate: f64,
    horizon: f64,
    rng: &mut SimRng,
) -> Result<EventStream> {
    if !(rate >= 0.0) || !(horizon >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rate and horizon must be nonnegative, got rate={rate}, horizon={horizon}"
        )));
    }
    let mut times = Vec::new();
    if rate > 0.0 && horizon > 0.0 {
        let mut t = 0.0;
        loop {
            t += rng.exponential(rate)?;
            if t > horizon {
                break;
            }
            // a zero gap would break strict ordering; it has probability ~2^-53
            if times.last().is_some_and(|&last| t <= last) {
                continue;
            }
            times.push(t);
        }
    }
    Ok(EventStream {
        label: format!("poisson({rate})"),
        times,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergedEvent {
    pub time: f64,
    pub source: usize,
}

/// Sorted union of several streams, each event tagged with the index of its
/// source. Equal times are ordered by source index.
pub fn merge_streams(streams: &[EventStream]) -> Result<Vec<MergedEvent>> {
    for s in streams {
        s.check_sorted()?;
    }
    let mut out: Vec<MergedEvent> = streams
        .iter()
        .enumerate()
        .flat_map(|(source, s)| s.times.iter().map(move |&time| MergedEvent { time, source }))
        .collect();
    out.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.source.cmp(&b.source)));
    Ok(out)
}

/// Keeps each event independently with probability `keep(t)`.
pub fn thin_stream(
    stream: &EventStream,
    keep: impl Fn(f64) -> f64,
    rng: &mut SimRng,
) -> Result<EventStream> {
    stream.check_sorted()?;
    let mut times = Vec::with_capacity(stream.len());
    for &t in &stream.times {
        let p = keep(t);
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "keep probability {p} at t={t} is outside [0, 1]"
            )));
        }
        if rng.bernoulli(p) {
            times.push(t);
        }
    }
    Ok(EventStream {
        label: format!("{}|thinned", stream.label),
        times,
    })
}
