//! Privatization channels, the composition ledger and reproducible RNG streams.

use std::ops::Range;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{norm, SymMatrix};

#[derive(Debug, Error)]
pub enum PrivacyError {
    #[error("privacy budget out of range: alpha={alpha}, beta={beta} (both must lie in (0, 1])")]
    BadBudget { alpha: f64, beta: f64 },
    #[error("sensitivity must be non-negative and finite, got {0}")]
    BadDelta(f64),
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("input has norm {0} > 1")]
    OutsideBall(f64),
}

pub type Result<T> = std::result::Result<T, PrivacyError>;

/// An (α, β) pair. The Gaussian noise multiplier is always recomputed from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BudgetRepr", into = "BudgetRepr")]
pub struct PrivacyBudget {
    alpha: f64,
    beta: f64,
}

#[derive(Serialize, Deserialize)]
struct BudgetRepr {
    alpha: f64,
    beta: f64,
    #[serde(default, skip_deserializing)]
    sigma: f64,
}

impl TryFrom<BudgetRepr> for PrivacyBudget {
    type Error = PrivacyError;
    fn try_from(r: BudgetRepr) -> Result<Self> {
        PrivacyBudget::new(r.alpha, r.beta)
    }
}

impl From<PrivacyBudget> for BudgetRepr {
    fn from(b: PrivacyBudget) -> Self {
        BudgetRepr { alpha: b.alpha, beta: b.beta, sigma: b.sigma() }
    }
}

impl PrivacyBudget {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let ok = |v: f64| v > 0.0 && v <= 1.0;
        if !ok(alpha) || !ok(beta) {
            return Err(PrivacyError::BadBudget { alpha, beta });
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// σ_{α,β} = 4·√(log(2.5/β))/α.
    pub fn sigma(&self) -> f64 {
        4.0 * (2.5 / self.beta).ln().sqrt() / self.alpha
    }

    /// The budget with α divided by `k`; used when `k` channels touch the same record.
    pub fn share(&self, k: u32) -> Self {
        Self { alpha: self.alpha / k as f64, beta: self.beta }
    }
}

/// Whether channels actually add noise. `ZeroNoise` exists for oracle
/// comparisons only; ledger entries are still recorded but flagged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    #[default]
    Private,
    ZeroNoise,
}

/// One mechanism applied to every record in `records`, `invocations` times in total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub mechanism: String,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub records: (usize, usize),
    pub invocations: u64,
}

/// Per-record composition ledger. Entries covering the same record compose
/// additively; disjoint records compose in parallel.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLedger {
    pub entries: Vec<LedgerEntry>,
    pub noise_free: bool,
}

impl PrivacyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry, merging it into the previous one when it is the same
    /// mechanism continuing over the next contiguous records.
    pub fn record(&mut self, mechanism: &str, alpha: f64, beta: f64, delta: f64, records: Range<usize>) {
        if let Some(last) = self.entries.last_mut() {
            if last.mechanism == mechanism
                && last.alpha == alpha
                && last.beta == beta
                && last.delta == delta
                && last.records.1 == records.start
            {
                last.records.1 = records.end;
                last.invocations += 1;
                return;
            }
        }
        self.entries.push(LedgerEntry {
            mechanism: mechanism.to_string(),
            alpha,
            beta,
            delta,
            records: (records.start, records.end),
            invocations: 1,
        });
    }

    /// Folds another ledger in, shifting its record indices by `offset`.
    pub fn absorb(&mut self, other: &PrivacyLedger, offset: usize) {
        self.noise_free |= other.noise_free;
        for e in &other.entries {
            let mut e = e.clone();
            e.records = (e.records.0 + offset, e.records.1 + offset);
            self.entries.push(e);
        }
    }

    /// Composed guarantee: the largest per-record sum of (α, β), taken
    /// componentwise over records.
    pub fn totals(&self) -> (f64, f64) {
        let mut events: Vec<(usize, f64, f64)> = Vec::with_capacity(2 * self.entries.len());
        for e in &self.entries {
            if e.records.0 < e.records.1 {
                events.push((e.records.0, e.alpha, e.beta));
                events.push((e.records.1, -e.alpha, -e.beta));
            }
        }
        events.sort_by_key(|a| a.0);
        let (mut a, mut b, mut max_a, mut max_b) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut i = 0;
        while i < events.len() {
            let pos = events[i].0;
            while i < events.len() && events[i].0 == pos {
                a += events[i].1;
                b += events[i].2;
                i += 1;
            }
            max_a = max_a.max(a);
            max_b = max_b.max(b);
        }
        (max_a, max_b)
    }

    /// Sum of α and β over all entries, ignoring record scopes.
    pub fn entry_sums(&self) -> (f64, f64) {
        self.entries.iter().fold((0.0, 0.0), |(a, b), e| (a + e.alpha, b + e.beta))
    }

    /// Number of channel invocations touching record `t`.
    pub fn touches(&self, t: usize) -> usize {
        self.entries.iter().filter(|e| e.records.0 <= t && t < e.records.1).count()
    }

    /// True when the composed totals do not exceed `(alpha, beta)` up to roundoff.
    pub fn within(&self, alpha: f64, beta: f64) -> bool {
        let (a, b) = self.totals();
        a <= alpha * (1.0 + 1e-12) && b <= beta * (1.0 + 1e-12)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic random stream addressed by (seed, counter).
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// A stream positioned at word `counter` of the keystream for `seed`.
    pub fn at(seed: u64, counter: u128) -> Self {
        let mut s = Self::new(seed);
        s.rng.set_word_pos(counter);
        s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// An independent child stream for task `index`. Depends only on this
    /// stream's seed, not on how much of it has been consumed.
    pub fn split(&self, index: u64) -> RngStream {
        RngStream::new(splitmix64(self.seed ^ splitmix64(index.wrapping_add(0xA076_1D64_78BD_642F))))
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Index drawn from a cumulative distribution (last entry ≈ 1).
    pub fn categorical(&mut self, cdf: &[f64]) -> usize {
        let u = self.uniform() * cdf[cdf.len() - 1];
        cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn laplace(&mut self, scale: f64) -> f64 {
        let u = self.uniform() - 0.5;
        -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(PrivacyError::BadDelta(delta));
    }
    Ok(())
}

/// `v + z`, z ~ N(0, σ²δ² I). The channel is (α, β/2)-DP when δ bounds half
/// the ℓ₂ diameter of the statistic.
pub fn gauss_priv(v: &[f64], delta: f64, budget: &PrivacyBudget, rng: &mut RngStream) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    gauss_in_place(&mut out, delta, budget, rng)?;
    Ok(out)
}

pub fn gauss_in_place(v: &mut [f64], delta: f64, budget: &PrivacyBudget, rng: &mut RngStream) -> Result<()> {
    check_delta(delta)?;
    if delta == 0.0 {
        return Ok(());
    }
    let s = budget.sigma() * delta;
    for x in v.iter_mut() {
        *x += s * rng.normal();
    }
    Ok(())
}

/// `m + Z` with Z symmetric, Z_ij = Z_ji ~ N(0, σ²δ²) independent for i ≤ j.
pub fn sym_gauss_priv(m: &SymMatrix, delta: f64, budget: &PrivacyBudget, rng: &mut RngStream) -> Result<SymMatrix> {
    let mut out = m.clone();
    sym_gauss_in_place(&mut out, delta, budget, rng)?;
    Ok(out)
}

pub fn sym_gauss_in_place(m: &mut SymMatrix, delta: f64, budget: &PrivacyBudget, rng: &mut RngStream) -> Result<()> {
    check_delta(delta)?;
    if delta == 0.0 {
        return Ok(());
    }
    let s = budget.sigma() * delta;
    let d = m.dim();
    for i in 0..d {
        for j in i..d {
            let v = m.get(i, j) + s * rng.normal();
            m.set_sym(i, j, v);
        }
    }
    Ok(())
}

/// `v + Laplace(sensitivity/eps)`.
pub fn laplace_priv(v: f64, sensitivity: f64, eps: f64, rng: &mut RngStream) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(PrivacyError::BadEpsilon(eps));
    }
    check_delta(sensitivity)?;
    if sensitivity == 0.0 {
        return Ok(v);
    }
    Ok(v + rng.laplace(sensitivity / eps))
}

/// E|Z₁| for Z uniform on the unit sphere in R^d: Γ(d/2)/(√π Γ((d+1)/2)).
pub fn sphere_abs_coordinate_mean(d: usize) -> f64 {
    let (mut c, mut k) = if d % 2 == 1 { (1.0, 1usize) } else { (2.0 / std::f64::consts::PI, 2usize) };
    while k < d {
        c *= k as f64 / (k as f64 + 1.0);
        k += 2;
    }
    c
}

/// Output radius of the sphere mechanism, chosen so the output is unbiased.
pub fn djw_radius(d: usize, alpha: f64) -> f64 {
    let ea = alpha.exp();
    (ea + 1.0) / (ea - 1.0) / sphere_abs_coordinate_mean(d)
}

/// Pure α-LDP unbiased channel on the unit ball (sphere mechanism).
///
/// First `v` is rounded to ±v/‖v‖ with the sign chosen so the mean is `v`;
/// then a uniform sphere point is drawn in the hemisphere toward that
/// direction with probability e^α/(e^α+1), otherwise in the opposite one,
/// and scaled by [`djw_radius`].
pub fn djw_l2_priv(v: &[f64], alpha: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    if !(alpha > 0.0) {
        return Err(PrivacyError::BadEpsilon(alpha));
    }
    let n = norm(v);
    if n > 1.0 + 1e-9 {
        return Err(PrivacyError::OutsideBall(n));
    }
    let d = v.len();
    let mut dir = vec![0.0; d];
    if n > 0.0 {
        for (o, x) in dir.iter_mut().zip(v) {
            *o = x / n;
        }
    } else {
        dir[0] = 1.0;
    }
    if !rng.bernoulli(0.5 + 0.5 * n.min(1.0)) {
        dir.iter_mut().for_each(|x| *x = -*x);
    }
    let mut z: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let zn = norm(&z);
    let toward = rng.bernoulli(alpha.exp() / (alpha.exp() + 1.0));
    let side: f64 = z.iter().zip(&dir).map(|(a, b)| a * b).sum();
    let flip = (side > 0.0) != toward;
    let r = djw_radius(d, alpha) / zn * if flip { -1.0 } else { 1.0 };
    z.iter_mut().for_each(|x| *x *= r);
    Ok(z)
}

/// Channels bound to a ledger. Each call records the (α, β) it spends on
/// the records in `records`.
#[derive(Debug, Clone, Default)]
pub struct Privatizer {
    pub mode: NoiseMode,
    pub ledger: PrivacyLedger,
}

impl Privatizer {
    pub fn new(mode: NoiseMode) -> Self {
        Self { mode, ledger: PrivacyLedger { entries: Vec::new(), noise_free: mode == NoiseMode::ZeroNoise } }
    }

    fn noisy(&self) -> bool {
        self.mode == NoiseMode::Private
    }

    /// Gaussian channel, recorded as (α, β/2).
    pub fn gauss(
        &mut self,
        mechanism: &str,
        v: &mut [f64],
        delta: f64,
        budget: &PrivacyBudget,
        records: Range<usize>,
        rng: &mut RngStream,
    ) -> Result<()> {
        check_delta(delta)?;
        if self.noisy() {
            gauss_in_place(v, delta, budget, rng)?;
        }
        self.ledger.record(mechanism, budget.alpha(), budget.beta() / 2.0, delta, records);
        Ok(())
    }

    /// Symmetric Gaussian channel, recorded as (α, β/2).
    pub fn sym_gauss(
        &mut self,
        mechanism: &str,
        m: &mut SymMatrix,
        delta: f64,
        budget: &PrivacyBudget,
        records: Range<usize>,
        rng: &mut RngStream,
    ) -> Result<()> {
        check_delta(delta)?;
        if self.noisy() {
            sym_gauss_in_place(m, delta, budget, rng)?;
        }
        self.ledger.record(mechanism, budget.alpha(), budget.beta() / 2.0, delta, records);
        Ok(())
    }

    /// Laplace channel, recorded as (eps, 0).
    pub fn laplace(
        &mut self,
        mechanism: &str,
        v: f64,
        sensitivity: f64,
        eps: f64,
        records: Range<usize>,
        rng: &mut RngStream,
    ) -> Result<f64> {
        let out = if self.noisy() { laplace_priv(v, sensitivity, eps, rng)? } else { laplace_priv(v, 0.0, eps, rng)? };
        self.ledger.record(mechanism, eps, 0.0, sensitivity, records);
        Ok(out)
    }

    /// Sphere mechanism, recorded as (α, 0). In zero-noise mode returns `v`.
    pub fn djw(
        &mut self,
        mechanism: &str,
        v: &[f64],
        alpha: f64,
        records: Range<usize>,
        rng: &mut RngStream,
    ) -> Result<Vec<f64>> {
        let out = if self.noisy() {
            djw_l2_priv(v, alpha, rng)?
        } else {
            let n = norm(v);
            if n > 1.0 + 1e-9 {
                return Err(PrivacyError::OutsideBall(n));
            }
            v.to_vec()
        };
        self.ledger.record(mechanism, alpha, 0.0, 1.0, records);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_std(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v.sqrt())
    }

    #[test]
    fn sigma_formula() {
        let b = PrivacyBudget::new(1.0, 0.05).unwrap();
        assert!((b.sigma() - 7.9115).abs() < 1e-4);
        assert!((b.sigma() - 4.0 * 50f64.ln().sqrt()).abs() < 1e-15);
        assert!(PrivacyBudget::new(0.0, 0.5).is_err());
        assert!(PrivacyBudget::new(1.5, 0.5).is_err());
        assert!(PrivacyBudget::new(0.5, 0.0).is_err());
    }

    #[test]
    fn budget_serializes_sigma_and_rejects_bad_input() {
        let b = PrivacyBudget::new(0.5, 0.1).unwrap();
        let js = serde_json::to_value(b).unwrap();
        assert!((js["sigma"].as_f64().unwrap() - b.sigma()).abs() < 1e-15);
        let back: PrivacyBudget = serde_json::from_value(js).unwrap();
        assert_eq!(back, b);
        assert!(serde_json::from_str::<PrivacyBudget>(r#"{"alpha":2.0,"beta":0.1}"#).is_err());
    }

    #[test]
    fn zero_delta_is_identity() {
        let b = PrivacyBudget::new(1.0, 0.05).unwrap();
        let mut rng = RngStream::new(1);
        assert_eq!(gauss_priv(&[1.0, -2.0], 0.0, &b, &mut rng).unwrap(), vec![1.0, -2.0]);
        let m = SymMatrix::diag(&[1.0, 2.0]);
        assert_eq!(sym_gauss_priv(&m, 0.0, &b, &mut rng).unwrap(), m);
        assert_eq!(laplace_priv(0.3, 0.0, 1.0, &mut rng).unwrap(), 0.3);
        assert!(gauss_priv(&[1.0], -1.0, &b, &mut rng).is_err());
        assert!(laplace_priv(0.3, 1.0, 0.0, &mut rng).is_err());
    }

    #[test]
    fn gauss_calibration() {
        let b = PrivacyBudget::new(0.5, 0.1).unwrap();
        let mut rng = RngStream::new(11);
        let draws: Vec<f64> = (0..100_000).map(|_| gauss_priv(&[0.0], 1.0, &b, &mut rng).unwrap()[0]).collect();
        let (m, s) = mean_std(&draws);
        assert!((s / b.sigma() - 1.0).abs() < 0.02, "std {s} vs {}", b.sigma());
        assert!(m.abs() < 4.0 * b.sigma() / 316.0);
    }

    #[test]
    fn sym_gauss_is_symmetric_and_calibrated() {
        let b = PrivacyBudget::new(1.0, 0.05).unwrap();
        let mut rng = RngStream::new(5);
        let mut off = Vec::new();
        let mut diag = Vec::new();
        for _ in 0..50_000 {
            let z = sym_gauss_priv(&SymMatrix::zeros(2), 0.5, &b, &mut rng).unwrap();
            assert_eq!(z.get(0, 1).to_bits(), z.get(1, 0).to_bits());
            off.push(z.get(0, 1));
            diag.push(z.get(0, 0));
            diag.push(z.get(1, 1));
        }
        let target = 0.5 * b.sigma();
        assert!((mean_std(&off).1 / target - 1.0).abs() < 0.02);
        assert!((mean_std(&diag).1 / target - 1.0).abs() < 0.02);
    }

    #[test]
    fn laplace_variance() {
        let mut rng = RngStream::new(3);
        let scale = 4.0;
        let draws: Vec<f64> = (0..100_000).map(|_| laplace_priv(0.0, 2.0, 0.5, &mut rng).unwrap()).collect();
        let (_, s) = mean_std(&draws);
        assert!((s * s / (2.0 * scale * scale) - 1.0).abs() < 0.03);
    }

    #[test]
    fn sphere_constant() {
        assert!((sphere_abs_coordinate_mean(1) - 1.0).abs() < 1e-15);
        assert!((sphere_abs_coordinate_mean(2) - 2.0 / std::f64::consts::PI).abs() < 1e-15);
        assert!((sphere_abs_coordinate_mean(3) - 0.5).abs() < 1e-15);
        assert!((sphere_abs_coordinate_mean(4) - 4.0 / (3.0 * std::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn djw_unbiased() {
        let mut rng = RngStream::new(9);
        let n = 100_000;
        let mut acc = [0.0; 3];
        let mut acc0 = [0.0; 3];
        for _ in 0..n {
            let o = djw_l2_priv(&[1.0, 0.0, 0.0], 1.0, &mut rng).unwrap();
            let o0 = djw_l2_priv(&[0.0, 0.0, 0.0], 1.0, &mut rng).unwrap();
            for i in 0..3 {
                acc[i] += o[i] / n as f64;
                acc0[i] += o0[i] / n as f64;
            }
        }
        assert!((acc[0] - 1.0).abs() < 0.02 && acc[1].abs() < 0.02 && acc[2].abs() < 0.02, "{acc:?}");
        assert!(acc0.iter().all(|v| v.abs() < 0.03), "{acc0:?}");
    }

    #[test]
    fn djw_output_norm_and_domain() {
        let mut rng = RngStream::new(2);
        let o = djw_l2_priv(&[0.3, 0.4], 0.7, &mut rng).unwrap();
        assert!((norm(&o) - djw_radius(2, 0.7)).abs() < 1e-12);
        assert!(djw_l2_priv(&[1.0, 1.0], 1.0, &mut rng).is_err());
    }

    #[test]
    fn streams_are_reproducible() {
        let mut a = RngStream::new(42);
        let mut b = RngStream::new(42);
        let xa: Vec<f64> = (0..10).map(|_| a.normal()).collect();
        let xb: Vec<f64> = (0..10).map(|_| b.normal()).collect();
        assert_eq!(xa, xb);
        let c = a.counter();
        let mut resumed = RngStream::at(42, c);
        assert_eq!(a.next_u64(), resumed.next_u64());
        let s1 = RngStream::new(42).split(3);
        let s2 = a.split(3);
        assert_eq!(s1.seed(), s2.seed());
        assert_ne!(RngStream::new(42).split(4).seed(), s1.seed());
    }

    #[test]
    fn ledger_merges_and_composes() {
        let b = PrivacyBudget::new(1.0, 0.1).unwrap();
        let mut p = Privatizer::new(NoiseMode::Private);
        let mut rng = RngStream::new(0);
        for t in 0..10 {
            let mut v = [0.0];
            p.gauss("psi", &mut v, 1.0, &b.share(2), t..t + 1, &mut rng).unwrap();
            p.gauss("Psi", &mut v, 1.0, &b.share(2), t..t + 1, &mut rng).unwrap();
        }
        // Interleaved mechanisms do not merge.
        assert_eq!(p.ledger.entries.len(), 20);
        let (a, bt) = p.ledger.totals();
        assert!((a - 1.0).abs() < 1e-15 && (bt - 0.1).abs() < 1e-15);
        let mut q = Privatizer::new(NoiseMode::Private);
        for t in 0..10 {
            let mut v = [0.0];
            q.gauss("psi", &mut v, 1.0, &b, t..t + 1, &mut rng).unwrap();
        }
        assert_eq!(q.ledger.entries.len(), 1);
        assert_eq!(q.ledger.entries[0].invocations, 10);
        assert_eq!(q.ledger.entries[0].records, (0, 10));
        assert_eq!(q.ledger.totals(), (1.0, 0.05));
        assert_eq!(q.ledger.touches(3), 1);
    }

    #[test]
    fn ledger_parallel_and_sequential() {
        let mut l = PrivacyLedger::new();
        l.record("a", 0.5, 0.1, 1.0, 0..5);
        l.record("b", 0.5, 0.1, 1.0, 5..10);
        assert_eq!(l.totals(), (0.5, 0.1));
        l.record("c", 0.25, 0.0, 1.0, 3..7);
        assert_eq!(l.totals(), (0.75, 0.1));
        assert_eq!(l.entry_sums(), (1.25, 0.2));
        let mut m = PrivacyLedger::new();
        m.absorb(&l, 100);
        assert_eq!(m.entries[0].records, (100, 105));
        assert_eq!(m.totals(), l.totals());
    }

    #[test]
    fn zero_noise_mode_records_but_does_not_perturb() {
        let b = PrivacyBudget::new(1.0, 0.1).unwrap();
        let mut p = Privatizer::new(NoiseMode::ZeroNoise);
        let mut rng = RngStream::new(0);
        let mut v = [0.25, 0.5];
        p.gauss("x", &mut v, 3.0, &b, 0..1, &mut rng).unwrap();
        assert_eq!(v, [0.25, 0.5]);
        assert!(p.ledger.noise_free);
        assert_eq!(p.ledger.totals(), (1.0, 0.05));
    }
}
