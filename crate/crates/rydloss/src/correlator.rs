//! Photon time-tag correlation analysis for the three-channel Hanbury
//! Brown-Twiss setup.
//!
//! g²(τ) and g³(τ₁, τ₂) are estimated from coincidence histograms
//! normalized by block-shifted coincidences: the same counting engine is
//! rerun with one channel offset by ±mT (m = 1..4, block period T), which
//! cancels slow drifts that a plain N₁N₂Δτ/T_exp product would not. The
//! connected correlation η₃ = g²(τ₁) + g²(τ₂) + g²(τ₂−τ₁) − g³ − 2 flags
//! excess three-body loss when positive.
//!
//! Synthetic tag generators (Poisson, bunched pairs, triplets) provide
//! ground-truth streams for testing and the `synth` CLI subcommand.

use std::io::{BufRead, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Histogram bin width matching the experimental analysis, ns.
pub const DEFAULT_BIN_NS: i64 = 20;
/// Normalization block period T, ns (100 µs).
pub const DEFAULT_BLOCK_NS: i64 = 100_000;
/// Magic header of the packed binary tag format.
pub const TTAG_MAGIC: &[u8; 5] = b"TTAG1";
/// Refuse synthetic streams above this expected event count.
const SYNTH_EVENT_BUDGET: f64 = 5e7;

/// One detector channel's sorted arrival times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeTagStream {
    /// Detector channel, 1..=3.
    pub channel: u8,
    /// Arrival times in ns, nondecreasing, all < `duration_ns`.
    pub timestamps: Vec<i64>,
    /// Total experiment time T_exp, ns.
    pub duration_ns: i64,
}

impl TimeTagStream {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.channel) {
            return Err(Error::validation("channel", "must be 1, 2, or 3"));
        }
        if self.duration_ns <= 0 {
            return Err(Error::validation("duration_ns", "must be positive"));
        }
        if self.timestamps.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::validation("timestamps", "must be nondecreasing"));
        }
        if self.timestamps.iter().any(|&t| t < 0 || t >= self.duration_ns) {
            return Err(Error::validation("timestamps", "must lie in [0, duration_ns)"));
        }
        Ok(())
    }
}

/// Coincidence counts over half-open delay bins [kΔτ, (k+1)Δτ) covering
/// [−τ_max, τ_max).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairHistogram {
    pub bin_ns: i64,
    pub tau_max_ns: i64,
    pub counts: Vec<u64>,
}

impl PairHistogram {
    pub fn new(bin_ns: i64, tau_max_ns: i64) -> Result<Self> {
        if bin_ns <= 0 || tau_max_ns <= 0 || tau_max_ns % bin_ns != 0 {
            return Err(Error::validation(
                "bin_ns/tau_max_ns",
                "bin must be positive and divide the window",
            ));
        }
        let n = 2 * (tau_max_ns / bin_ns) as usize;
        Ok(PairHistogram { bin_ns, tau_max_ns, counts: vec![0; n] })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    /// Bin index of delay τ, or None outside the window.
    pub fn bin_index(&self, tau_ns: i64) -> Option<usize> {
        if tau_ns < -self.tau_max_ns || tau_ns >= self.tau_max_ns {
            return None;
        }
        Some(((tau_ns + self.tau_max_ns) / self.bin_ns) as usize)
    }

    /// Left edge of bin k, ns.
    pub fn bin_edge(&self, k: usize) -> i64 {
        -self.tau_max_ns + k as i64 * self.bin_ns
    }

    /// Exact merge for time-disjoint stream partitions (no cross-partition
    /// pairs within the window).
    pub fn merge(&mut self, other: &PairHistogram) -> Result<()> {
        if self.bin_ns != other.bin_ns || self.tau_max_ns != other.tau_max_ns {
            return Err(Error::ShapeMismatch("pair histogram bin layout".into()));
        }
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        Ok(())
    }
}

/// Streaming pair coincidence count: for every (t₁, t₂) with t₁ from `a`
/// and t₂ from `b`, histogram τ = t₂ − t₁ − shift. Single pass with two
/// monotone pointers into `b`.
pub fn count_pairs(a: &[i64], b: &[i64], shift_ns: i64, hist: &mut PairHistogram) {
    let (mut lo, mut hi) = (0usize, 0usize);
    for &t1 in a {
        let w_lo = t1 + shift_ns - hist.tau_max_ns;
        let w_hi = t1 + shift_ns + hist.tau_max_ns;
        while lo < b.len() && b[lo] < w_lo {
            lo += 1;
        }
        if hi < lo {
            hi = lo;
        }
        while hi < b.len() && b[hi] < w_hi {
            hi += 1;
        }
        for &t2 in &b[lo..hi] {
            if let Some(k) = hist.bin_index(t2 - t1 - shift_ns) {
                hist.counts[k] += 1;
            }
        }
    }
}

/// Two-dimensional coincidence counts over (τ₁, τ₂) bins with the same
/// half-open layout on each axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleHistogram {
    pub bin_ns: i64,
    pub tau_max_ns: i64,
    /// Row-major [bin(τ₁)][bin(τ₂)].
    pub counts: Vec<u64>,
}

impl TripleHistogram {
    pub fn new(bin_ns: i64, tau_max_ns: i64) -> Result<Self> {
        let template = PairHistogram::new(bin_ns, tau_max_ns)?;
        let n = template.n_bins();
        Ok(TripleHistogram { bin_ns, tau_max_ns, counts: vec![0; n * n] })
    }

    pub fn n_bins(&self) -> usize {
        (2 * self.tau_max_ns / self.bin_ns) as usize
    }

    fn axis_index(&self, tau_ns: i64) -> Option<usize> {
        if tau_ns < -self.tau_max_ns || tau_ns >= self.tau_max_ns {
            return None;
        }
        Some(((tau_ns + self.tau_max_ns) / self.bin_ns) as usize)
    }

    pub fn merge(&mut self, other: &TripleHistogram) -> Result<()> {
        if self.bin_ns != other.bin_ns || self.tau_max_ns != other.tau_max_ns {
            return Err(Error::ShapeMismatch("triple histogram bin layout".into()));
        }
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        Ok(())
    }
}

/// Streaming triple coincidence count: τ₁ = t₂ − t₁ − shift₁,
/// τ₂ = t₃ − t₁ − shift₂.
pub fn count_triples(
    a: &[i64],
    b: &[i64],
    c: &[i64],
    shift1_ns: i64,
    shift2_ns: i64,
    hist: &mut TripleHistogram,
) {
    let n = hist.n_bins();
    let (mut b_lo, mut b_hi) = (0usize, 0usize);
    let (mut c_lo, mut c_hi) = (0usize, 0usize);
    for &t1 in a {
        let b_wlo = t1 + shift1_ns - hist.tau_max_ns;
        let b_whi = t1 + shift1_ns + hist.tau_max_ns;
        while b_lo < b.len() && b[b_lo] < b_wlo {
            b_lo += 1;
        }
        if b_hi < b_lo {
            b_hi = b_lo;
        }
        while b_hi < b.len() && b[b_hi] < b_whi {
            b_hi += 1;
        }
        let c_wlo = t1 + shift2_ns - hist.tau_max_ns;
        let c_whi = t1 + shift2_ns + hist.tau_max_ns;
        while c_lo < c.len() && c[c_lo] < c_wlo {
            c_lo += 1;
        }
        if c_hi < c_lo {
            c_hi = c_lo;
        }
        while c_hi < c.len() && c[c_hi] < c_whi {
            c_hi += 1;
        }
        for &t2 in &b[b_lo..b_hi] {
            let Some(k1) = hist.axis_index(t2 - t1 - shift1_ns) else { continue };
            for &t3 in &c[c_lo..c_hi] {
                if let Some(k2) = hist.axis_index(t3 - t1 - shift2_ns) {
                    hist.counts[k1 * n + k2] += 1;
                }
            }
        }
    }
}

/// Signed block offsets (m, n) entering the g³ normalization: m, n range
/// over {±1..±4} with the signed diagonal m = n excluded, 56 terms total.
pub fn triple_offset_pairs() -> Vec<(i64, i64)> {
    let signed: Vec<i64> = (1..=4).flat_map(|m| [m, -m]).collect();
    let mut out = Vec::with_capacity(56);
    for &m in &signed {
        for &n in &signed {
            if m != n {
                out.push((m, n));
            }
        }
    }
    out
}

fn stream_for(streams: &[TimeTagStream], channel: u8) -> Result<&TimeTagStream> {
    streams
        .iter()
        .find(|s| s.channel == channel)
        .ok_or_else(|| Error::validation("streams", format!("channel {channel} missing")))
}

/// g²(τ) estimate with block-offset normalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct G2Result {
    pub bin_ns: i64,
    pub tau_max_ns: i64,
    /// Left bin edges, ns.
    pub tau_ns: Vec<i64>,
    /// g²(τ) per bin; NaN where the normalization bin was empty.
    pub g2: Vec<f64>,
    /// Indices of withheld (empty-denominator) bins.
    pub flagged: Vec<usize>,
    pub numerator: Vec<u64>,
    /// ⅛ Σ_{m=1..4} N₁₂(τ ± mT) per bin.
    pub denominator: Vec<f64>,
    /// The analytic product N₁N₂Δτ/T_exp, exposed for cross-checks only.
    pub analytic_denominator: f64,
}

impl G2Result {
    /// g² at delay τ (ns); error if τ is outside the histogram window.
    pub fn at(&self, tau_ns: i64) -> Result<f64> {
        if tau_ns < -self.tau_max_ns || tau_ns >= self.tau_max_ns {
            return Err(Error::ShapeMismatch(format!("τ = {tau_ns} ns outside g² window")));
        }
        Ok(self.g2[((tau_ns + self.tau_max_ns) / self.bin_ns) as usize])
    }

    /// Value at τ = 0 (the bin starting at zero delay).
    pub fn at_zero(&self) -> f64 {
        self.g2[(self.tau_max_ns / self.bin_ns) as usize]
    }
}

/// Compute g²(τ) = N₁₂(τ) / [⅛ Σ_{m=1..4} N₁₂(τ ± mT)] from the channel-1
/// and channel-2 streams.
pub fn g2_from_tags(
    streams: &[TimeTagStream],
    bin_ns: i64,
    tau_max_ns: i64,
    block_ns: i64,
) -> Result<G2Result> {
    for s in streams {
        s.validate()?;
    }
    if block_ns <= tau_max_ns {
        return Err(Error::validation("block_ns", "block period must exceed the window"));
    }
    let s1 = stream_for(streams, 1)?;
    let s2 = stream_for(streams, 2)?;
    let mut numerator = PairHistogram::new(bin_ns, tau_max_ns)?;
    count_pairs(&s1.timestamps, &s2.timestamps, 0, &mut numerator);

    let shifts: Vec<i64> = (1..=4).flat_map(|m| [m * block_ns, -m * block_ns]).collect();
    let shifted: Vec<PairHistogram> = shifts
        .par_iter()
        .map(|&shift| {
            let mut h = PairHistogram::new(bin_ns, tau_max_ns).expect("layout validated");
            count_pairs(&s1.timestamps, &s2.timestamps, shift, &mut h);
            h
        })
        .collect();

    let n = numerator.n_bins();
    let mut denominator = vec![0.0f64; n];
    for h in &shifted {
        for (d, &c) in denominator.iter_mut().zip(&h.counts) {
            *d += c as f64;
        }
    }
    for d in &mut denominator {
        *d /= 8.0;
    }
    let mut g2 = Vec::with_capacity(n);
    let mut flagged = Vec::new();
    for k in 0..n {
        if denominator[k] > 0.0 {
            g2.push(numerator.counts[k] as f64 / denominator[k]);
        } else {
            flagged.push(k);
            g2.push(f64::NAN);
        }
    }
    let analytic = s1.timestamps.len() as f64 * s2.timestamps.len() as f64 * bin_ns as f64
        / s1.duration_ns as f64;
    Ok(G2Result {
        bin_ns,
        tau_max_ns,
        tau_ns: (0..n).map(|k| numerator.bin_edge(k)).collect(),
        g2,
        flagged,
        numerator: numerator.counts,
        denominator,
        analytic_denominator: analytic,
    })
}

/// g³(τ₁, τ₂) estimate with the 56-term block-offset normalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct G3Result {
    pub bin_ns: i64,
    pub tau_max_ns: i64,
    pub tau_ns: Vec<i64>,
    /// Row-major g³[bin(τ₁)][bin(τ₂)]; NaN where withheld.
    pub g3: Vec<Vec<f64>>,
    pub flagged: Vec<(usize, usize)>,
    pub numerator: Vec<u64>,
    pub denominator: Vec<f64>,
}

impl G3Result {
    pub fn at_zero(&self) -> f64 {
        let k = (self.tau_max_ns / self.bin_ns) as usize;
        self.g3[k][k]
    }
}

/// Compute g³(τ₁, τ₂) = N₁₂₃ / [(1/56) Σ_{m≠n,±} N₁₂₃(τ₁ ± mT, τ₂ ± nT)].
pub fn g3_from_tags(
    streams: &[TimeTagStream],
    bin_ns: i64,
    tau_max_ns: i64,
    block_ns: i64,
) -> Result<G3Result> {
    for s in streams {
        s.validate()?;
    }
    if block_ns <= tau_max_ns {
        return Err(Error::validation("block_ns", "block period must exceed the window"));
    }
    let s1 = stream_for(streams, 1)?;
    let s2 = stream_for(streams, 2)?;
    let s3 = stream_for(streams, 3)?;
    let mut numerator = TripleHistogram::new(bin_ns, tau_max_ns)?;
    count_triples(&s1.timestamps, &s2.timestamps, &s3.timestamps, 0, 0, &mut numerator);

    let offsets = triple_offset_pairs();
    let shifted: Vec<TripleHistogram> = offsets
        .par_iter()
        .map(|&(m, n)| {
            let mut h = TripleHistogram::new(bin_ns, tau_max_ns).expect("layout validated");
            count_triples(
                &s1.timestamps,
                &s2.timestamps,
                &s3.timestamps,
                m * block_ns,
                n * block_ns,
                &mut h,
            );
            h
        })
        .collect();

    let n = numerator.n_bins();
    let mut denominator = vec![0.0f64; n * n];
    for h in &shifted {
        for (d, &c) in denominator.iter_mut().zip(&h.counts) {
            *d += c as f64;
        }
    }
    for d in &mut denominator {
        *d /= 56.0;
    }
    let mut g3 = vec![vec![f64::NAN; n]; n];
    let mut flagged = Vec::new();
    for k1 in 0..n {
        for k2 in 0..n {
            let idx = k1 * n + k2;
            if denominator[idx] > 0.0 {
                g3[k1][k2] = numerator.counts[idx] as f64 / denominator[idx];
            } else {
                flagged.push((k1, k2));
            }
        }
    }
    let edges: Vec<i64> = (0..n).map(|k| -tau_max_ns + k as i64 * bin_ns).collect();
    Ok(G3Result {
        bin_ns,
        tau_max_ns,
        tau_ns: edges,
        g3,
        flagged,
        numerator: numerator.counts,
        denominator,
    })
}

/// η₃ from scalar correlation values at (τ₁, τ₂):
/// g²(τ₁) + g²(τ₂) + g²(τ₂ − τ₁) − g³ − 2.
pub fn eta3_scalar(g2_tau1: f64, g2_tau2: f64, g2_diff: f64, g3: f64) -> f64 {
    g2_tau1 + g2_tau2 + g2_diff - g3 - 2.0
}

/// η₃(τ₁, τ₂) surface from a g² profile and a g³ matrix on the same bin
/// layout. The g² window must cover all differences τ₂ − τ₁.
pub fn eta3_matrix(g2: &G2Result, g3: &G3Result) -> Result<Vec<Vec<f64>>> {
    if g2.bin_ns != g3.bin_ns {
        return Err(Error::ShapeMismatch("g² and g³ bin widths differ".into()));
    }
    let n = g3.tau_ns.len();
    if 2 * g3.tau_max_ns > g2.tau_max_ns {
        return Err(Error::ShapeMismatch(
            "g² window must span twice the g³ window to cover τ₂ − τ₁".into(),
        ));
    }
    let mut out = vec![vec![f64::NAN; n]; n];
    for k1 in 0..n {
        for k2 in 0..n {
            let t1 = g3.tau_ns[k1];
            let t2 = g3.tau_ns[k2];
            out[k1][k2] =
                eta3_scalar(g2.at(t1)?, g2.at(t2)?, g2.at(t2 - t1)?, g3.g3[k1][k2]);
        }
    }
    Ok(out)
}

/// Generator model for synthetic tag streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum SynthModel {
    /// Coherent light: exponential inter-arrivals at `rate_per_us`, split
    /// uniformly over the three channels.
    Poisson { rate_per_us: f64 },
    /// Photon pairs at `pair_rate_per_us`; partner delayed by an
    /// exponential jitter with mean `jitter_ns`, channels drawn uniformly.
    BunchedPairs { pair_rate_per_us: f64, jitter_ns: f64 },
    /// Photon triplets at `rate_per_us`, one photon per channel, each
    /// jittered independently.
    Triplets { rate_per_us: f64, jitter_ns: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    #[serde(flatten)]
    pub model: SynthModel,
    pub seed: u64,
}

/// Generate the three channel streams for `config` over `t_exp_ns`.
/// Deterministic: a fixed seed yields identical output.
pub fn synth_tags(config: &SynthConfig, t_exp_ns: i64) -> Result<[TimeTagStream; 3]> {
    if t_exp_ns <= 0 {
        return Err(Error::validation("t_exp_ns", "must be positive"));
    }
    let t_exp_us = t_exp_ns as f64 * 1e-3;
    let (event_rate, multiplicity) = match config.model {
        SynthModel::Poisson { rate_per_us } => (rate_per_us, 1.0),
        SynthModel::BunchedPairs { pair_rate_per_us, .. } => (pair_rate_per_us, 2.0),
        SynthModel::Triplets { rate_per_us, .. } => (rate_per_us, 3.0),
    };
    if event_rate <= 0.0 {
        return Err(Error::validation("rate", "must be positive"));
    }
    let expected = event_rate * t_exp_us * multiplicity;
    if expected > SYNTH_EVENT_BUDGET {
        return Err(Error::MemoryBudget {
            estimate_mb: (expected * 16.0 / (1 << 20) as f64) as usize,
            budget_mb: (SYNTH_EVENT_BUDGET * 16.0 / (1 << 20) as f64) as usize,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut channels: [Vec<i64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let push = |channels: &mut [Vec<i64>; 3], ch: usize, t_ns: i64| {
        if (0..t_exp_ns).contains(&t_ns) {
            channels[ch].push(t_ns);
        }
    };
    // exponential waiting time in ns at a per-µs rate
    let exp_ns = |rng: &mut ChaCha8Rng, rate_per_us: f64| -> f64 {
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        -u.ln() / rate_per_us * 1e3
    };

    let mut t = 0.0f64;
    loop {
        t += exp_ns(&mut rng, event_rate);
        if t >= t_exp_ns as f64 {
            break;
        }
        let base = t.round() as i64;
        match config.model {
            SynthModel::Poisson { .. } => {
                let ch = rng.gen_range(0..3usize);
                push(&mut channels, ch, base);
            }
            SynthModel::BunchedPairs { jitter_ns, .. } => {
                let ch1 = rng.gen_range(0..3usize);
                let ch2 = rng.gen_range(0..3usize);
                let delay = if jitter_ns > 0.0 { exp_ns(&mut rng, 1e3 / jitter_ns) } else { 0.0 };
                push(&mut channels, ch1, base);
                push(&mut channels, ch2, base + delay.round() as i64);
            }
            SynthModel::Triplets { jitter_ns, .. } => {
                for ch in 0..3usize {
                    let delay =
                        if jitter_ns > 0.0 { exp_ns(&mut rng, 1e3 / jitter_ns) } else { 0.0 };
                    push(&mut channels, ch, base + delay.round() as i64);
                }
            }
        }
    }
    let mut out = channels.into_iter().enumerate().map(|(i, mut ts)| {
        ts.sort_unstable();
        TimeTagStream { channel: i as u8 + 1, timestamps: ts, duration_ns: t_exp_ns }
    });
    Ok([
        out.next().expect("three channels"),
        out.next().expect("three channels"),
        out.next().expect("three channels"),
    ])
}

/// Write streams as CSV `channel,timestamp_ns`, interleaved in global time
/// order (ties by channel).
pub fn write_tags_csv<W: Write>(streams: &[TimeTagStream], mut w: W) -> Result<()> {
    let mut rows: Vec<(i64, u8)> = streams
        .iter()
        .flat_map(|s| s.timestamps.iter().map(move |&t| (t, s.channel)))
        .collect();
    rows.sort_unstable();
    writeln!(w, "channel,timestamp_ns")?;
    for (t, ch) in rows {
        writeln!(w, "{ch},{t}")?;
    }
    Ok(())
}

/// Read CSV tags; `duration_ns` is taken as (max timestamp + 1) since the
/// text format carries no explicit experiment length.
pub fn read_tags_csv<R: BufRead>(r: R) -> Result<Vec<TimeTagStream>> {
    let mut channels: [Vec<i64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut max_t = 0i64;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("channel")) {
            continue;
        }
        let (ch_s, t_s) = line
            .split_once(',')
            .ok_or_else(|| Error::Config(format!("tag CSV line {}: expected channel,timestamp_ns", lineno + 1)))?;
        let ch: usize = ch_s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("tag CSV line {}: bad channel", lineno + 1)))?;
        let t: i64 = t_s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("tag CSV line {}: bad timestamp", lineno + 1)))?;
        if !(1..=3).contains(&ch) {
            return Err(Error::Config(format!("tag CSV line {}: channel {ch} out of range", lineno + 1)));
        }
        channels[ch - 1].push(t);
        max_t = max_t.max(t);
    }
    let duration = max_t + 1;
    let streams: Vec<TimeTagStream> = channels
        .into_iter()
        .enumerate()
        .map(|(i, mut ts)| {
            ts.sort_unstable();
            TimeTagStream { channel: i as u8 + 1, timestamps: ts, duration_ns: duration }
        })
        .collect();
    for s in &streams {
        s.validate()?;
    }
    Ok(streams)
}

/// Write the packed binary format: "TTAG1" magic, u64 duration, then one
/// record per tag (u8 channel + u64 timestamp, little-endian), in global
/// time order.
pub fn write_tags_binary<W: Write>(streams: &[TimeTagStream], mut w: W) -> Result<()> {
    w.write_all(TTAG_MAGIC)?;
    let duration = streams.iter().map(|s| s.duration_ns).max().unwrap_or(0);
    w.write_all(&(duration as u64).to_le_bytes())?;
    let mut rows: Vec<(i64, u8)> = streams
        .iter()
        .flat_map(|s| s.timestamps.iter().map(move |&t| (t, s.channel)))
        .collect();
    rows.sort_unstable();
    for (t, ch) in rows {
        w.write_all(&[ch])?;
        w.write_all(&(t as u64).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tags_binary<R: Read>(mut r: R) -> Result<Vec<TimeTagStream>> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != TTAG_MAGIC {
        return Err(Error::Config("bad tag-file magic (expected TTAG1)".into()));
    }
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    let duration = u64::from_le_bytes(buf8) as i64;
    let mut channels: [Vec<i64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut rec = [0u8; 9];
    loop {
        match r.read_exact(&mut rec) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let ch = rec[0] as usize;
        if !(1..=3).contains(&ch) {
            return Err(Error::Config(format!("binary tag record: channel {ch} out of range")));
        }
        let t = u64::from_le_bytes(rec[1..9].try_into().expect("8 bytes")) as i64;
        channels[ch - 1].push(t);
    }
    let streams: Vec<TimeTagStream> = channels
        .into_iter()
        .enumerate()
        .map(|(i, mut ts)| {
            ts.sort_unstable();
            TimeTagStream { channel: i as u8 + 1, timestamps: ts, duration_ns: duration }
        })
        .collect();
    for s in &streams {
        s.validate()?;
    }
    Ok(streams)
}
